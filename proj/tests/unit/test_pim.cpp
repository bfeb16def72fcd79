// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

using namespace testing;

namespace {

MatrixXcd symmetric_2x2(cdouble a, cdouble b, cdouble c) {
    MatrixXcd m(2, 2);
    m << a, b, b, c;
    return m;
}

} // namespace

TEST_CASE("PIM of a small hand example", "[pim]") {
    const MatrixXcd z = symmetric_2x2(1.0, cdouble(0, 2), 3.0);
    const auto t = port_impedance_matrix(z, 0, false);
    MatrixXcd expected(2, 2);
    expected << 1.0, cdouble(0, 1), cdouble(0, -1), 0.0;
    CHECK((t.matrix - expected).norm() < 1e-15);

    // Brute-force port power Re(v_1 conj(i_1)) / 2 over random currents.
    std::mt19937_64 rng(3);
    for (int k = 0; k < 50; ++k) {
        const VectorXcd i = random_currents(2, rng);
        const VectorXcd v = z * i;
        const double direct = 0.5 * (v(0) * std::conj(i(0))).real();
        CHECK(std::abs(port_power(t, i) - direct) <= 1e-12 * std::max(1.0, std::abs(direct)));
    }
}

TEST_CASE("PIMs sum to the Hermitian part and powers sum to the total", "[pim]") {
    std::mt19937_64 rng(11);
    for (int n : {2, 3, 5}) {
        const auto z = random_passive(n, rng);
        const auto loaded = apply_receiver_loading(z, 0.7, -1.3);
        const auto pims = port_impedance_matrices(loaded);
        MatrixXcd sum = MatrixXcd::Zero(n, n);
        for (const auto &t : pims)
            sum += t.matrix;
        CHECK((sum - hermitian_part(loaded.entries())).norm() <= 1e-14 * loaded.entries().norm());
        const VectorXcd i = random_currents(n, rng);
        double p = 0.0;
        for (const auto &t : pims)
            p += port_power(t, i);
        const double total = 0.5 * i.dot(loaded.entries().real().cast<cdouble>() * i).real();
        CHECK(std::abs(p - total) <= 1e-12 * std::abs(total));
    }
}

TEST_CASE("zero currents give zero port powers", "[pim]") {
    const auto z = preset_system(Preset::miso_3c);
    for (const auto &t : port_impedance_matrices(z))
        CHECK(port_power(t, VectorXcd::Zero(4)) == 0.0);
}

TEST_CASE("eigenvalue signature is one positive, one negative, rest zero", "[pim]") {
    std::mt19937_64 rng(5);
    const auto z = random_passive(5, rng);
    for (const auto &t : port_impedance_matrices(z)) {
        Eigen::SelfAdjointEigenSolver<MatrixXcd> es(t.matrix);
        const VectorXd ev = es.eigenvalues();
        const double tol = 1e-12 * ev.cwiseAbs().maxCoeff();
        CHECK(ev(0) < -tol);
        CHECK(ev(4) > tol);
        for (int k = 1; k < 4; ++k)
            CHECK(std::abs(ev(k)) <= tol);
    }
}

TEST_CASE("closed-form eigenvalues on hand cases", "[pim]") {
    SECTION("zero port resistance gives symmetric eigenvalues") {
        MatrixXcd z(2, 2);
        z << cdouble(0, 5), cdouble(0.3, 2), cdouble(0.3, 2), cdouble(1, 5);
        const auto es = pim_eigensystem(port_impedance_matrix(z, 0, false));
        const double s = std::abs(cdouble(0.3, 2));
        CHECK(es.lambda_pos == Catch::Approx(s / 2).epsilon(1e-14));
        CHECK(es.lambda_neg == Catch::Approx(s / 2).epsilon(1e-14));
    }
    SECTION("R = 1, coupling 2") {
        const auto es = pim_eigensystem(port_impedance_matrix(symmetric_2x2(cdouble(1, 3), cdouble(0, 2), 1.0), 0, false));
        CHECK(es.lambda_pos == Catch::Approx((1 + std::sqrt(5.0)) / 2).epsilon(1e-14));
        CHECK(es.lambda_neg == Catch::Approx((std::sqrt(5.0) - 1) / 2).epsilon(1e-14));
    }
    SECTION("uncoupled port is rank one") {
        MatrixXcd z = MatrixXcd::Identity(3, 3);
        z(1, 2) = z(2, 1) = cdouble(0, 1);
        const auto es = pim_eigensystem(port_impedance_matrix(z, 0, false));
        CHECK(es.rank_one);
        CHECK(es.lambda_neg == 0.0);
        CHECK(es.lambda_pos == 1.0);
    }
}

TEST_CASE("analytic eigenpairs match a numerical eigensolver on MISO-3c", "[pim]") {
    for (double th : {0.0, 18.0, 45.0, 90.0}) {
        const auto z = preset_system(Preset::miso_3c, 0.1, th);
        for (const auto &t : port_impedance_matrices(z)) {
            const auto es = pim_eigensystem(t);
            Eigen::SelfAdjointEigenSolver<MatrixXcd> num(t.matrix);
            const VectorXd ev = num.eigenvalues();
            CHECK(rel(ev(3), es.lambda_pos) < 1e-10);
            CHECK(rel(-ev(0), es.lambda_neg) < 1e-10);
            for (const auto &[v, lam] : {std::pair{es.v_pos, es.lambda_pos}, std::pair{es.v_neg, -es.lambda_neg}}) {
                const VectorXcd residual = t.matrix * v - lam * v;
                CHECK(residual.norm() <= 1e-12 * t.matrix.norm() * v.norm());
                // Quadratic form with respect to the eigenvalue.
                CHECK(std::abs(v.dot(t.matrix * v).real() - lam * v.squaredNorm()) <=
                      1e-12 * t.matrix.norm() * v.squaredNorm());
            }
            const auto p_pos = MatrixXcd(es.v_pos * es.v_pos.adjoint() / es.v_pos.squaredNorm());
            const VectorXcd num_pos = num.eigenvectors().col(3);
            CHECK((p_pos - num_pos * num_pos.adjoint()).norm() < 1e-10);
        }
    }
}

TEST_CASE("semidefinite split reassembles the PIM", "[pim]") {
    const auto z = preset_system(Preset::miso_2p, 0.1, 30.0);
    const auto loaded = apply_receiver_loading(z, solve_closed_form(z).r_l_opt);
    for (const auto &t : port_impedance_matrices(loaded)) {
        const auto es = pim_eigensystem(t);
        const auto sp = pim_split(es);
        const double tn = t.matrix.norm();
        CHECK((t.matrix - (sp.positive - sp.negative)).norm() <= 1e-12 * tn);
        CHECK(std::abs(sp.positive.trace().real() - sp.negative.trace().real() - es.resistance) <= 1e-12 * tn);
        Eigen::SelfAdjointEigenSolver<MatrixXcd> pos(sp.positive), neg(sp.negative);
        CHECK(pos.eigenvalues().minCoeff() >= -1e-12 * tn);
        CHECK(neg.eigenvalues().minCoeff() >= -1e-12 * tn);
    }
}

TEST_CASE("port index out of range is rejected", "[pim]") {
    const auto z = preset_system(Preset::siso);
    CHECK_THROWS_AS(pim_eigensystem(z, 2), ValidationError);
}
