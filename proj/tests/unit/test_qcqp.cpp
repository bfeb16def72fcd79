// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

using namespace testing;

TEST_CASE("realification of a real symmetric matrix is block diagonal", "[qcqp]") {
    MatrixXd t(3, 3);
    t << 2, 1, 0, 1, 3, -1, 0, -1, 4;
    const MatrixXd q = realify(t.cast<cdouble>());
    REQUIRE(q.rows() == 5);
    CHECK((q.topLeftCorner(3, 3) - 0.5 * t).norm() == 0.0);
    CHECK((q.bottomRightCorner(2, 2) - 0.5 * t.topLeftCorner(2, 2)).norm() == 0.0);
    CHECK(q.topRightCorner(3, 2).norm() == 0.0);
}

TEST_CASE("realified quadratic form equals the complex power form", "[qcqp]") {
    std::mt19937_64 rng(17);
    const auto z = random_passive(4, rng);
    const auto pims = port_impedance_matrices(z);
    for (int k = 0; k < 100; ++k) {
        VectorXcd i = random_currents(4, rng);
        i(3) = i(3).real();
        const VectorXd c = real_from_currents(i);
        CHECK((currents_from_real(c) - i).norm() == 0.0);
        for (const auto &t : pims) {
            const double direct = port_power(t, i);
            CHECK(std::abs(c.dot(realify(t.matrix) * c) - direct) <= 1e-12 * std::max(1.0, i.squaredNorm() * t.matrix.norm()));
        }
    }
    MatrixXcd not_hermitian = MatrixXcd::Identity(2, 2);
    not_hermitian(0, 1) = 1.0;
    CHECK_THROWS_AS(realify(not_hermitian), ValidationError);
}

TEST_CASE("power matrices carry the PIM eigenvalues", "[qcqp]") {
    const auto z = preset_system(Preset::miso_3p, 0.1, 25.0);
    const auto p = build_qcqp(z, 0.05);
    for (int n = 0; n < z.n_tx(); ++n) {
        const auto es = pim_eigensystem(z, n);
        Eigen::SelfAdjointEigenSolver<MatrixXd> num(p.q[static_cast<std::size_t>(n)]);
        const VectorXd ev = num.eigenvalues();
        // The real lift doubles every eigenvalue; removing one row and column
        // cannot move a double eigenvalue, so the extremes survive.
        CHECK(rel(ev.maxCoeff(), 0.5 * es.lambda_pos) < 1e-10);
        CHECK(rel(-ev.minCoeff(), 0.5 * es.lambda_neg) < 1e-10);
        const double tol = 1e-12 * ev.cwiseAbs().maxCoeff();
        CHECK((ev.array().abs() > tol).count() <= 4);
    }
}

TEST_CASE("affine data", "[qcqp]") {
    const auto z = preset_system(Preset::siso, 0.1, 10.0);
    const auto cf = solve_closed_form(z);
    const auto p = build_qcqp(z, cf.load_resistance);
    CHECK(p.affine.a.rows() == 2);
    CHECK(p.affine.a.cols() == 3);
    const VectorXd c = real_from_currents(cf.currents());
    CHECK((p.affine.a * c - p.affine.b).norm() < 1e-9 * p.affine.b.norm());
    const auto e = evaluate(c, p);
    CHECK(e.received_power == Catch::Approx(1.0).epsilon(1e-14));
    CHECK(0.5 * cf.load_resistance * c(1) * c(1) == Catch::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(build_affine(z, -1.0), ValidationError);

    const auto z3 = preset_system(Preset::miso_3c, 0.1, 18.0);
    const auto cf3 = solve_closed_form(z3);
    const auto p3 = build_qcqp(z3, cf3.load_resistance);
    const VectorXd c3 = real_from_currents(cf3.currents());
    CHECK((p3.affine.a * c3 - p3.affine.b).norm() < 1e-9 * p3.affine.b.norm());
}

TEST_CASE("conic data identities", "[qcqp]") {
    const auto z = preset_system(Preset::miso_2p, 0.1, 40.0);
    const auto cf = solve_closed_form(z);
    const auto p = build_qcqp(z, cf.load_resistance);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    for (int k = 0; k < 20; ++k) {
        VectorXd c(p.size);
        for (auto &x : c)
            x = g(rng);
        const MatrixXd cc = c * c.transpose();
        const double kc = p.conic.k.dot(c);
        CHECK((p.conic.k0.cwiseProduct(cc)).sum() == Catch::Approx(kc * kc).epsilon(1e-12));
        CHECK((p.conic.r.cwiseProduct(cc)).sum() == Catch::Approx(0.5 * p.load_resistance * c(2) * c(2)).epsilon(1e-14));
    }
    const VectorXd c = real_from_currents(cf.currents());
    const MatrixXd cc = c * c.transpose();
    for (const auto &km : p.conic.km)
        CHECK(std::abs(km.cwiseProduct(cc).sum()) <= 1e-9 * km.norm() * cc.norm());
}

TEST_CASE("constraint evaluation and validation", "[qcqp]") {
    const auto z = preset_system(Preset::miso_2p, 0.1, 60.0);
    const auto cf = solve_closed_form(z);
    CHECK_THROWS_AS(build_qcqp(z, cf.load_resistance, {ConstraintMode::caps, VectorXd::Ones(3)}), ValidationError);
    const auto p = build_qcqp(z, cf.load_resistance);
    const auto e = evaluate(real_from_currents(cf.currents()), p);
    CHECK((e.powers - cf.p_t).norm() <= 1e-9 * cf.p_t.norm());
    for (Eigen::Index n = 0; n < e.powers.size(); ++n)
        CHECK(e.power_residuals(n) == std::max(0.0, -e.powers(n)));
    CHECK(e.objective == Catch::Approx(cf.p_loss_min).epsilon(1e-9));
}

TEST_CASE("QCQP JSON round trip", "[qcqp][io]") {
    const auto z = preset_system(Preset::miso_3c, 0.1, 18.0);
    VectorXd caps(3);
    caps << 1.0, 2.0, 3.0;
    const auto p = build_qcqp(z, 0.04, {ConstraintMode::caps, caps});
    const auto back = qcqp_from_json(nlohmann::json::parse(to_json(p).dump()));
    CHECK(back.q0 == p.q0);
    REQUIRE(back.q.size() == p.q.size());
    for (std::size_t n = 0; n < p.q.size(); ++n)
        CHECK(back.q[n] == p.q[n]);
    CHECK(back.affine.a == p.affine.a);
    CHECK(back.affine.b == p.affine.b);
    CHECK(back.conic.r == p.conic.r);
    CHECK(back.constraints.mode == ConstraintMode::caps);
    CHECK(back.constraints.caps == caps);
    CHECK(back.matrix_hash == p.matrix_hash);
}
