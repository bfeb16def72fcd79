// SPDX-License-Identifier: Apache-2.0
//
// Closed-form optimum of the unconstrained problem: minimum-loss output
// impedance, mutual coupling quality factor, optimal currents, receiver
// reactance, load resistance and efficiency, plus the equality-constrained
// loss QP they derive from.

#pragma once

#include "wpt/pim.hpp"

#include <optional>

namespace wpt {

/// z_o = z_r - z_tr^T (Z_t')^{-1} z_tr'.
inline cdouble output_impedance(const ImpedanceMatrix &z) {
    const auto b = partition(z);
    const MatrixXd zt_re = b.z_t.real();
    const VectorXd ztr_re = b.z_tr.real();
    const VectorXd w = zt_re.llt().solve(ztr_re);
    return b.z_r - (b.z_tr.array() * w.cast<cdouble>().array()).sum();
}

/// U = sqrt(z_tr^H (Z_t')^{-1} z_tr / z_o'). Zero when the receiver is uncoupled.
inline double mutual_q(const ImpedanceMatrix &z) {
    const auto b = partition(z);
    if (b.z_tr.cwiseAbs().maxCoeff() == 0.0)
        return 0.0;
    const MatrixXd zt_re = b.z_t.real();
    Eigen::LLT<MatrixXd> llt(zt_re);
    const VectorXd re = llt.solve(VectorXd(b.z_tr.real()));
    const VectorXd im = llt.solve(VectorXd(b.z_tr.imag()));
    const double g = b.z_tr.real().dot(re) + b.z_tr.imag().dot(im);
    return std::sqrt(g / output_impedance(z).real());
}

inline double max_pte(double u) {
    const double r = 1.0 + std::sqrt(1.0 + u * u);
    return u * u / (r * r);
}

inline double optimal_load(cdouble z_o, double u) { return z_o.real() * std::sqrt(1.0 + u * u); }

inline double resonant_pte(cdouble z_o, double u, double load_resistance) {
    const double ro = z_o.real();
    return u * u / (1.0 + load_resistance / ro + u * u) * load_resistance / (load_resistance + ro);
}

/// Transmitter currents at x_r = -z_o'' for unit received power
/// (i_r = sqrt(2/R_L)).
inline VectorXcd optimal_currents(const ImpedanceMatrix &z, double load_resistance) {
    if (!(load_resistance > 0.0))
        throw ValidationError("optimal_currents: load resistance must be positive");
    const double u = mutual_q(z);
    if (u == 0.0)
        throw NoTransferError("optimal_currents: receiver is uncoupled (U = 0), no power transferable");
    const auto b = partition(z);
    const cdouble zo = output_impedance(z);
    const double i_r = std::sqrt(2.0 / load_resistance);
    const double gain = (zo.real() + load_resistance) / (zo.real() * u * u);
    const VectorXcd rhs = b.z_tr.real().cast<cdouble>() + gain * b.z_tr.conjugate();
    const MatrixXd zt_re = b.z_t.real();
    Eigen::LLT<MatrixXd> llt(zt_re);
    VectorXcd out(rhs.size());
    out.real() = llt.solve(VectorXd(rhs.real()));
    out.imag() = llt.solve(VectorXd(rhs.imag()));
    return -i_r * out;
}

/// Receiver reactance that zeroes Im(v_r) for the given transmitter currents.
inline double receiver_reactance_for(const ImpedanceMatrix &z, const VectorXcd &i_t, double i_r) {
    const auto b = partition(z);
    const cdouble coupled = b.z_tr.transpose() * i_t;
    return -b.z_r.imag() - coupled.imag() / i_r;
}

struct MinLossQp {
    VectorXd c_t;       ///< [i_t'; i_t'']
    double multiplier;  ///< Lagrange multiplier of the KVL row
    double p_loss;      ///< minimum loss for unit received power
    double eta;         ///< 1 / (P_l + 1)
    double constraint_residual;
};

/// Equality-constrained loss QP over the real transmitter currents,
///   min 1/2 c^T blkdiag(Z_t', Z_t') c + sqrt(2/R_L) [z_tr'; 0]^T c + z_r'/R_L
///   s.t. [z_tr'; -z_tr'']^T c = -sqrt(2/R_L) (z_r' + R_L),
/// solved exactly through its KKT system.
inline MinLossQp solve_min_loss_qp(const ImpedanceMatrix &z, double load_resistance) {
    if (!(load_resistance > 0.0))
        throw ValidationError("solve_min_loss_qp: load resistance must be positive");
    const auto b = partition(z);
    const auto nt = b.z_t.rows();
    const double rho = std::sqrt(2.0 / load_resistance);
    VectorXd a(2 * nt);
    a << b.z_tr.real(), -b.z_tr.imag();
    if (a.lpNorm<Eigen::Infinity>() == 0.0)
        throw NoTransferError("solve_min_loss_qp: no feasible transfer (z_tr = 0)");
    VectorXd g = VectorXd::Zero(2 * nt);
    g.head(nt) = rho * b.z_tr.real();
    const double beta = -rho * (b.z_r.real() + load_resistance);

    MatrixXd kkt = MatrixXd::Zero(2 * nt + 1, 2 * nt + 1);
    kkt.topLeftCorner(nt, nt) = b.z_t.real();
    kkt.block(nt, nt, nt, nt) = b.z_t.real();
    kkt.col(2 * nt).head(2 * nt) = a;
    kkt.row(2 * nt).head(2 * nt) = a.transpose();
    VectorXd rhs(2 * nt + 1);
    rhs << -g, beta;
    const VectorXd sol = kkt.fullPivLu().solve(rhs);

    MinLossQp out;
    out.c_t = sol.head(2 * nt);
    out.multiplier = sol(2 * nt);
    const MatrixXd h = kkt.topLeftCorner(2 * nt, 2 * nt);
    out.p_loss = 0.5 * out.c_t.dot(h * out.c_t) + g.dot(out.c_t) + b.z_r.real() / load_resistance;
    out.eta = 1.0 / (out.p_loss + 1.0);
    out.constraint_residual = std::abs(a.dot(out.c_t) - beta);
    return out;
}

/// Per-port powers 1/2 i^H T_n i, one per supplied PIM.
inline VectorXd transmit_powers(const VectorXcd &currents, const std::vector<PortImpedanceMatrix> &pims) {
    VectorXd out(static_cast<Eigen::Index>(pims.size()));
    for (std::size_t n = 0; n < pims.size(); ++n) {
        if (pims[n].matrix.rows() != currents.size())
            throw ValidationError("transmit_powers: dimension mismatch");
        out(static_cast<Eigen::Index>(n)) = port_power(pims[n], currents);
    }
    return out;
}

struct ClosedFormSolution {
    cdouble z_o;
    double u = 0.0;
    double load_resistance = 0.0;   ///< R_L the currents were evaluated at
    VectorXcd i_t;
    double i_r = 0.0;
    double x_r_opt = 0.0;
    double r_l_opt = 0.0;
    double eta_res = 0.0;           ///< efficiency at load_resistance
    double eta_max = 0.0;
    double p_loss_min = 0.0;
    VectorXd p_t;                   ///< transmitter port powers
    std::optional<double> c_r;      ///< receiver capacitance when x_r_opt < 0
    std::optional<double> l_r;      ///< receiver inductance otherwise
    double qp_mismatch = 0.0;       ///< |eta(formula) - eta(QP)|
    bool qp_authoritative = false;  ///< formulas disagreed with the QP and were replaced

    VectorXcd currents() const {
        VectorXcd i(i_t.size() + 1);
        i << i_t, cdouble(i_r, 0.0);
        return i;
    }
};

inline constexpr double closed_form_qp_tolerance = 1e-8;

/// Receiver tuning element for a reactance x: capacitance for x < 0.
inline void set_receiver_element(double x, double omega, std::optional<double> &c, std::optional<double> &l) {
    c.reset();
    l.reset();
    if (x < 0.0)
        c = -1.0 / (omega * x);
    else
        l = x / omega;
}

/// Full closed-form optimum. When `load_resistance` is empty the optimal
/// load R_L* is used.
inline ClosedFormSolution solve_closed_form(const ImpedanceMatrix &z, std::optional<double> load_resistance = {}) {
    ClosedFormSolution s;
    s.z_o = output_impedance(z);
    s.u = mutual_q(z);
    if (s.u == 0.0)
        throw NoTransferError("closed form: receiver is uncoupled (U = 0)");
    s.r_l_opt = optimal_load(s.z_o, s.u);
    s.load_resistance = load_resistance.value_or(s.r_l_opt);
    s.eta_max = max_pte(s.u);
    s.eta_res = resonant_pte(s.z_o, s.u, s.load_resistance);
    s.i_r = std::sqrt(2.0 / s.load_resistance);
    s.i_t = optimal_currents(z, s.load_resistance);
    s.x_r_opt = -s.z_o.imag();

    const auto qp = solve_min_loss_qp(z, s.load_resistance);
    s.qp_mismatch = std::abs(qp.eta - s.eta_res);
    s.p_loss_min = 1.0 / s.eta_res - 1.0;
    if (s.qp_mismatch > closed_form_qp_tolerance) {
        // Trust the QP; recover z_o' from P_l R_L = z_o' + (z_o' + R_L)^2 / G, G = z_o' U^2.
        s.qp_authoritative = true;
        const auto nt = z.n_tx();
        s.i_t.real() = qp.c_t.head(nt);
        s.i_t.imag() = qp.c_t.tail(nt);
        s.x_r_opt = receiver_reactance_for(z, s.i_t, s.i_r);
        s.eta_res = qp.eta;
        s.p_loss_min = qp.p_loss;
        const double rl = s.load_resistance;
        const double g = s.z_o.real() * s.u * s.u;
        const double bq = 2.0 * rl + g;
        const double zo_re = 0.5 * (-bq + std::sqrt(bq * bq - 4.0 * (rl * rl - qp.p_loss * rl * g)));
        s.z_o = cdouble(zo_re, -s.x_r_opt);
        s.u = std::sqrt(g / zo_re);
        s.r_l_opt = optimal_load(s.z_o, s.u);
        s.eta_max = max_pte(s.u);
    }

    const auto pims = port_impedance_matrices(z);
    const VectorXd all = transmit_powers(s.currents(), pims);
    s.p_t = all.head(z.n_tx());
    set_receiver_element(s.x_r_opt, z.omega(), s.c_r, s.l_r);
    return s;
}

} // namespace wpt
