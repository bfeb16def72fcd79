// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

using namespace testing;

namespace {

VectorXd feasible_sample(const QcqpProblem &p, std::mt19937_64 &rng, double spread) {
    std::normal_distribution<double> g;
    const Eigen::JacobiSVD<MatrixXd> svd(p.affine.a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const VectorXd c0 = svd.solve(p.affine.b);
    const MatrixXd basis = svd.matrixV().rightCols(p.size - 2);
    VectorXd t(basis.cols());
    for (auto &x : t)
        x = spread * g(rng);
    return c0 + basis * t;
}

} // namespace

TEST_CASE("relaxation without power constraints reproduces the loss QP", "[sdr]") {
    for (auto p : all_presets) {
        const auto z = preset_system(p, 0.1, 18.0);
        const auto cf = solve_closed_form(z);
        const auto qp = solve_min_loss_qp(z, cf.load_resistance);
        for (auto form : {SdrForm::conic, SdrForm::affine}) {
            SdrOptions o;
            o.form = form;
            const auto relax = solve_relaxation(build_qcqp(z, cf.load_resistance, {ConstraintMode::none, {}}), o);
            REQUIRE(relax.solution.optimal());
            CHECK(rel(relax.p_l_relax, qp.p_loss) < 1e-8);
        }
    }
}

TEST_CASE("relaxation matches an admissible closed form", "[sdr]") {
    const auto z = preset_system(Preset::miso_2p, 0.1, 0.0);
    const auto cf = solve_closed_form(z);
    REQUIRE(cf.p_t.minCoeff() >= 0.0);
    const auto relax = solve_relaxation(build_qcqp(z, cf.load_resistance));
    REQUIRE(relax.solution.optimal());
    CHECK(rel(relax.p_l_relax, cf.p_loss_min) < 1e-8);
    const auto r = full_pipeline(z);
    CHECK(r.skipped);
    CHECK(r.eta() == Catch::Approx(cf.eta_res).epsilon(1e-12));
}

TEST_CASE("relaxed optimum bounds every feasible point from below", "[sdr]") {
    const auto z = preset_system(Preset::miso_2p, 0.1, 30.0);
    const auto cf = solve_closed_form(z);
    const auto problem = build_qcqp(z, cf.load_resistance);
    SdrOptions o;
    o.scaling = equilibration_from(real_from_currents(cf.currents()));
    const auto relax = solve_relaxation(problem, o);
    REQUIRE(relax.solution.optimal());
    std::mt19937_64 rng(8);
    const double spread = real_from_currents(cf.currents()).norm();
    int found = 0;
    for (int k = 0; k < 200000 && found < 20; ++k) {
        const VectorXd c = feasible_sample(problem, rng, spread);
        const auto e = evaluate(c, problem);
        if (e.power_residuals.maxCoeff() > 0.0)
            continue;
        ++found;
        CHECK(e.objective >= relax.p_l_relax * (1.0 - 1e-9));
    }
    CHECK(found == 20);
}

TEST_CASE("tightness error arithmetic", "[sdr]") {
    VectorXd c(3);
    c << 1.0, -2.0, 0.5;
    CHECK(tightness_error(c * c.transpose(), c) == 0.0);
    VectorXd e(2);
    e << 1.0, 0.0;
    CHECK(tightness_error(MatrixXd::Identity(2, 2), e) == Catch::Approx(1.0));
    CHECK_THROWS_AS(tightness_error(MatrixXd::Identity(2, 2), VectorXd::Zero(2)), ValidationError);
}

TEST_CASE("rank-one extraction", "[sdr]") {
    const auto z = preset_system(Preset::miso_3c, 0.1, 18.0);
    const auto cf = solve_closed_form(z);
    const VectorXd c = real_from_currents(cf.currents());
    for (double sign : {1.0, -1.0}) {
        const VectorXd s = sign * c;
        const auto ex = extract_solution(s * s.transpose(), z.n_ports(), cf.load_resistance);
        CHECK((ex.c - c).norm() <= 1e-12 * c.norm());
        CHECK(ex.c(z.n_ports() - 1) > 0.0);
        CHECK(ex.eigen_ratio < 1e-12);
        CHECK_FALSE(ex.rank_warning);
    }
    const auto ex = extract_solution(MatrixXd::Identity(7, 7) + c * c.transpose(), z.n_ports(), cf.load_resistance);
    CHECK(ex.rank_warning);
}

TEST_CASE("extracted drive on MISO-3c satisfies the affine constraints", "[sdr]") {
    for (double th : {-40.0, 18.0, 60.0}) {
        const auto z = preset_system(Preset::miso_3c, 0.1, th);
        const auto r = full_pipeline(z);
        REQUIRE(r.ok());
        const auto problem = build_qcqp(z, r.load_resistance);
        CHECK((problem.affine.a * r.c - problem.affine.b).norm() <= 1e-8 * problem.affine.b.norm());
        if (!r.skipped) {
            CHECK(r.epsilon <= 1e-8);
            CHECK(r.tight);
        }
    }
}

TEST_CASE("operating point recovery", "[sdr]") {
    const auto z = preset_system(Preset::miso_2c, 0.1, 25.0);
    const auto cf = solve_closed_form(z);
    const auto op = recover_operating_point(real_from_currents(cf.currents()), z, cf.load_resistance);
    CHECK(std::abs(op.x_r + output_impedance(z).imag()) <= 1e-9 * std::abs(output_impedance(z).imag()));
    CHECK(op.eta == Catch::Approx(cf.eta_res).epsilon(1e-10));
    CHECK(op.kvl_residual < 1e-10);
    CHECK(op.p_load == Catch::Approx(1.0).epsilon(1e-14));
    VectorXd bad = real_from_currents(cf.currents());
    bad(0) += 1.0;
    CHECK_THROWS_AS(recover_operating_point(bad, z, cf.load_resistance), SolverError);
}

TEST_CASE("pipeline enforces nonnegative powers at a small efficiency cost", "[sdr]") {
    for (auto p : {Preset::miso_2p, Preset::miso_3p, Preset::miso_2c, Preset::miso_3c})
        for (double th : {-70.0, -30.0, 10.0, 50.0}) {
            const auto z = preset_system(p, 0.1, th);
            for (auto form : {SdrForm::conic, SdrForm::affine}) {
                PipelineOptions o;
                o.sdr.form = form;
                const auto r = full_pipeline(z, o);
                REQUIRE(r.ok());
                CHECK(r.point.transmit_powers.minCoeff() >= -1e-9);
                CHECK(r.eta() <= r.eta_cf + 1e-12);
                if (!r.skipped) {
                    CHECK(r.delta_eta_db <= 0.0);
                    CHECK(r.eta_cf - r.eta() <= 0.05);
                    CHECK(std::isfinite(r.delta_c_r_rel));
                }
            }
        }
}

TEST_CASE("conic and affine forms agree", "[sdr]") {
    const auto z = preset_system(Preset::miso_3p, 0.1, -36.0);
    PipelineOptions conic, affine;
    affine.sdr.form = SdrForm::affine;
    const auto a = full_pipeline(z, conic), b = full_pipeline(z, affine);
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    REQUIRE_FALSE(a.skipped);
    CHECK(rel(a.eta(), b.eta()) < 1e-8);
    CHECK(rel(a.p_l_relax, b.p_l_relax) < 1e-8);
}

TEST_CASE("some coaxial sweep points need no relaxation", "[sdr]") {
    int skipped = 0, solved = 0;
    for (double th = -90.0; th <= 90.0; th += 6.0) {
        const auto r = full_pipeline(preset_system(Preset::miso_2c, 0.1, th));
        (r.skipped ? skipped : solved) += 1;
    }
    CHECK(skipped > 0);
    CHECK(solved > 0);
}

TEST_CASE("infeasible power caps are reported, not thrown", "[sdr]") {
    const auto z = preset_system(Preset::miso_2p, 0.1, 30.0);
    PipelineOptions o;
    o.constraints = {ConstraintMode::caps, VectorXd::Zero(2)};
    const auto r = full_pipeline(z, o);
    CHECK_FALSE(r.ok());
    CHECK(r.status == sdp::Status::infeasible);
    CHECK_FALSE(r.diagnostics.empty());
    const auto j = to_json(r);
    CHECK(j.at("status") == "infeasible");

    o.constraints.caps = VectorXd::Constant(2, 50.0);
    const auto loose = full_pipeline(z, o);
    REQUIRE(loose.ok());
    CHECK(loose.point.transmit_powers.maxCoeff() <= 50.0 + 1e-9);
}

TEST_CASE("pipeline is deterministic", "[sdr]") {
    const auto z = preset_system(Preset::miso_3c, 0.1, 44.0);
    const auto a = full_pipeline(z), b = full_pipeline(z);
    CHECK(a.c == b.c);
    CHECK(to_json(a).dump() == to_json(b).dump());
}

TEST_CASE("outer load search", "[sdr]") {
    SECTION("unconstrained search recovers the closed-form optimum") {
        PipelineOptions o;
        o.constraints = {ConstraintMode::none, {}};
        for (auto p : {Preset::siso, Preset::miso_3p}) {
            const auto z = preset_system(p, 0.1, 20.0);
            const auto lo = optimize_load(z, o);
            CHECK(rel(lo.load_resistance, solve_closed_form(z).r_l_opt) < 1e-3);
            CHECK_FALSE(lo.grid_fallback);
            for (double f : {0.9, 1.1}) {
                auto oo = o;
                oo.load_resistance = f * lo.load_resistance;
                CHECK(full_pipeline(z, oo).eta() >= 0.99 * lo.result.eta());
            }
        }
    }
    SECTION("constrained search does not lose efficiency") {
        const auto z = preset_system(Preset::miso_2p, 0.1, -60.0);
        const auto at_star = full_pipeline(z);
        REQUIRE_FALSE(at_star.skipped);
        const auto lo = optimize_load(z);
        CHECK(lo.result.eta() >= at_star.eta() - 1e-12);
        CHECK(lo.result.point.transmit_powers.minCoeff() >= -1e-9);
    }
    SECTION("invalid bounds") {
        const auto z = preset_system(Preset::siso);
        CHECK_THROWS_AS(optimize_load(z, {}, std::pair{2.0, 1.0}), ValidationError);
    }
}

TEST_CASE("golden-section maximiser", "[sdr][golden]") {
    SECTION("interior maximum of a concave function") {
        auto f = [](double x) { return std::pair{-(std::log(x) - 1.0) * (std::log(x) - 1.0), 0}; };
        const auto r = golden_section_maximize<int>(f, 0.5, 20.0, 1e-6);
        CHECK(r.x == Catch::Approx(std::exp(1.0)).epsilon(1e-5));
        CHECK_FALSE(r.grid_fallback);
    }
    SECTION("linear scale") {
        auto f = [](double x) { return std::pair{-(x - 3.0) * (x - 3.0), x}; };
        const auto r = golden_section_maximize<double>(f, 0.0, 10.0, 1e-8, false);
        CHECK(r.x == Catch::Approx(3.0).epsilon(1e-6));
        CHECK(r.payload == r.x);
    }
    SECTION("maximum on the boundary triggers the grid fallback") {
        auto f = [](double x) { return std::pair{x, 0}; };
        const auto r = golden_section_maximize<int>(f, 1.0, 2.0);
        CHECK(r.grid_fallback);
        CHECK(r.x == Catch::Approx(2.0));
        CHECK_FALSE(r.warnings.empty());
    }
}
