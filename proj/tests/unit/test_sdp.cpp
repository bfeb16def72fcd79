// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

using namespace testing;
using namespace wpt::sdp;

namespace {

MatrixXd random_symmetric(int n, std::mt19937_64 &rng) {
    std::normal_distribution<double> g;
    MatrixXd m(n, n);
    for (auto &x : m.reshaped())
        x = g(rng);
    return 0.5 * (m + m.transpose());
}

MatrixXd random_pd(int n, std::mt19937_64 &rng) {
    const MatrixXd b = random_symmetric(n, rng);
    return b * b.transpose() + 0.5 * MatrixXd::Identity(n, n);
}

// Primal strictly feasible (b from a PD point) and dual strictly feasible
// (cost = sum y_i A_i + PD slack).
SdpInstance random_instance(int n, int m, std::mt19937_64 &rng) {
    const MatrixXd x0 = random_pd(n, rng);
    SdpInstance inst;
    inst.cost = random_pd(n, rng);
    std::normal_distribution<double> g;
    for (int i = 0; i < m; ++i) {
        Constraint c;
        c.matrix = random_symmetric(n, rng);
        c.rhs = c.matrix.cwiseProduct(x0).sum();
        inst.cost += g(rng) * c.matrix;
        inst.constraints.push_back(std::move(c));
    }
    return inst;
}

SdpInstance trace_instance(const MatrixXd &cost) {
    SdpInstance inst;
    inst.cost = cost;
    inst.constraints.push_back({MatrixXd::Identity(cost.rows(), cost.rows()), Sense::equal, 1.0, Role::generic, "trace"});
    return inst;
}

} // namespace

TEST_CASE("one-dimensional trace problem", "[sdp]") {
    const auto inst = trace_instance(MatrixXd::Identity(1, 1));
    const auto sol = solve(inst);
    REQUIRE(sol.optimal());
    CHECK(sol.primal(0, 0) == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(sol.primal_objective == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("smallest eigenvalue problem", "[sdp]") {
    MatrixXd c = MatrixXd::Zero(2, 2);
    c.diagonal() << 1.0, 2.0;
    const auto sol = solve(trace_instance(c));
    REQUIRE(sol.optimal());
    CHECK(sol.primal_objective == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(sol.primal(0, 0) == Catch::Approx(1.0).epsilon(1e-8));
    CHECK(std::abs(sol.primal(1, 1)) < 1e-8);
    CHECK(std::abs(sol.primal(0, 1)) < 1e-8);
}

TEST_CASE("random strictly feasible instances satisfy strong duality", "[sdp]") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const auto inst = random_instance(6, 5, rng);
        std::vector<IterationLog> trace;
        Options o;
        o.on_iteration = [&](const IterationLog &l) { trace.push_back(l); };
        const auto sol = solve(inst, o);
        REQUIRE(sol.optimal());
        CHECK(rel(sol.primal_objective, sol.dual_objective) <= 1e-9);
        const auto kkt = check_kkt(inst, sol);
        CHECK(kkt.max() <= 1e-8);
        CHECK(kkt.dual_slack_mismatch <= 1e-10);
        CHECK(sol.iterations <= 60);
        CHECK(static_cast<int>(trace.size()) == sol.iterations);
        for (const auto &l : trace) {
            CHECK(l.complementarity >= 0.0);
            CHECK_FALSE(l.to_line().empty());
        }
        // Primal objective of every strictly feasible X bounds the dual from above.
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(sol.dual_slack);
        CHECK(es.eigenvalues().minCoeff() >= -1e-9 * sol.dual_slack.norm());
    }
}

TEST_CASE("inequality constraints and multiplier signs", "[sdp]") {
    // min tr(diag(1,2) X), tr X = 1, X_22 >= 0.25: the bound is active.
    MatrixXd c = MatrixXd::Zero(2, 2);
    c.diagonal() << 1.0, 2.0;
    auto inst = trace_instance(c);
    MatrixXd e22 = MatrixXd::Zero(2, 2);
    e22(1, 1) = 1.0;
    inst.constraints.push_back({e22, Sense::greater_equal, 0.25, Role::power, "x22"});
    const auto sol = solve(inst);
    REQUIRE(sol.optimal());
    CHECK(sol.primal_objective == Catch::Approx(1.25).epsilon(1e-8));
    CHECK(sol.multipliers(1) == Catch::Approx(1.0).epsilon(1e-6));
    CHECK(check_kkt(inst, sol).max() <= 1e-8);

    // Same bound written as -X_22 <= -0.25: multiplier flips sign.
    inst.constraints[1] = {-e22, Sense::less_equal, -0.25, Role::power, "x22"};
    const auto sol2 = solve(inst);
    REQUIRE(sol2.optimal());
    CHECK(sol2.primal_objective == Catch::Approx(1.25).epsilon(1e-8));
    CHECK(sol2.multipliers(1) == Catch::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("KKT report on hand-built and perturbed pairs", "[sdp]") {
    SECTION("exact optimal pair") {
        const auto inst = trace_instance(MatrixXd::Identity(1, 1));
        SdpSolution s;
        s.status = Status::optimal;
        s.primal = MatrixXd::Ones(1, 1);
        s.multipliers = VectorXd::Ones(1);
        s.dual_slack = MatrixXd::Zero(1, 1);
        const auto r = check_kkt(inst, s);
        CHECK(r.max() == 0.0);
        CHECK(r.dual_slack_mismatch == 0.0);
    }
    SECTION("perturbing the primal raises complementarity") {
        MatrixXd c = MatrixXd::Zero(2, 2);
        c.diagonal() << 1.0, 2.0;
        const auto inst = trace_instance(c);
        auto sol = solve(inst);
        REQUIRE(sol.optimal());
        const double before = check_kkt(inst, sol).complementarity;
        sol.primal(1, 1) += 1e-3;
        const double after = check_kkt(inst, sol).complementarity;
        CHECK(before < 1e-9);
        CHECK(after > 1e-4);
        CHECK(after < 1e-2);
    }
}

TEST_CASE("scaling invariance and determinism", "[sdp]") {
    std::mt19937_64 rng(9);
    const auto inst = random_instance(5, 4, rng);
    const auto base = solve(inst);
    REQUIRE(base.optimal());

    auto scaled = inst;
    scaled.cost *= 1e3;
    for (auto &c : scaled.constraints) {
        c.matrix *= 1e-2;
        c.rhs *= 1e-2;
    }
    const auto s = solve(scaled);
    REQUIRE(s.optimal());
    CHECK(rel(s.primal_objective, 1e3 * base.primal_objective) < 1e-8);
    CHECK((s.primal - base.primal).norm() <= 1e-6 * base.primal.norm());

    const auto again = solve(inst);
    CHECK(again.primal == base.primal);
    CHECK(again.iterations == base.iterations);
}

TEST_CASE("infeasible and invalid instances", "[sdp]") {
    SECTION("contradictory trace constraints") {
        auto inst = trace_instance(MatrixXd::Identity(2, 2));
        inst.constraints.push_back({MatrixXd::Identity(2, 2), Sense::less_equal, 0.5, Role::generic, "cap"});
        const auto sol = solve(inst);
        CHECK_FALSE(sol.optimal());
        CHECK(sol.status == Status::infeasible);
        CHECK_FALSE(sol.diagnostics.empty());
    }
    SECTION("dimension cap") {
        CHECK_THROWS_AS(solve(trace_instance(MatrixXd::Identity(65, 65))), ValidationError);
    }
    SECTION("asymmetric data") {
        MatrixXd c = MatrixXd::Identity(2, 2);
        c(0, 1) = 1.0;
        CHECK_THROWS_AS(solve(trace_instance(c)), ValidationError);
    }
}

TEST_CASE("relaxation of a MISO-2p instance passes the KKT suite", "[sdp][sdr]") {
    const auto z = preset_system(Preset::miso_2p, 0.1, 30.0);
    const auto cf = solve_closed_form(z);
    const auto problem = build_qcqp(z, cf.load_resistance);
    for (auto form : {SdrForm::conic, SdrForm::affine}) {
        SdrOptions o;
        o.form = form;
        o.scaling = equilibration_from(real_from_currents(cf.currents()));
        const auto relax = solve_relaxation(problem, o);
        REQUIRE(relax.solution.optimal());
        CHECK(relax.kkt.max() < 1e-8);
        CHECK(relax.kkt.dual_slack_mismatch < 1e-10);
        CHECK(relax.solution.relative_gap <= 1e-9);
        CHECK(relax.solution.iterations <= 60);
    }
}
