// SPDX-License-Identifier: Apache-2.0
//
// Port impedance matrices (PIMs): Hermitian matrices whose quadratic forms
// give the real power entering each port, with their closed-form rank-2
// eigensystems and positive/negative semidefinite splits.

#pragma once

#include "wpt/circuit_model.hpp"

#include <vector>

namespace wpt {

struct PortImpedanceMatrix {
    int port = 0;         ///< zero-based port index
    MatrixXcd matrix;     ///< Hermitian N x N
    bool loaded = false;  ///< true when built from the loaded matrix
};

/// T_n = (e_n e_n^T Z + Z^H e_n e_n^T) / 2, so that i^H T_n i / 2 = Re(v_n conj(i_n)) / 2.
inline PortImpedanceMatrix port_impedance_matrix(const MatrixXcd &z, int n, bool loaded) {
    const auto size = z.rows();
    MatrixXcd t = MatrixXcd::Zero(size, size);
    t.row(n) = 0.5 * z.row(n);
    t.col(n) += 0.5 * z.row(n).adjoint();
    t(n, n) = z(n, n).real();
    return {n, std::move(t), loaded};
}

inline std::vector<PortImpedanceMatrix> port_impedance_matrices(const LoadedImpedanceMatrix &z) {
    std::vector<PortImpedanceMatrix> out;
    for (int n = 0; n < z.n_ports(); ++n)
        out.push_back(port_impedance_matrix(z.entries(), n, true));
    return out;
}

inline std::vector<PortImpedanceMatrix> port_impedance_matrices(const ImpedanceMatrix &z) {
    std::vector<PortImpedanceMatrix> out;
    for (int n = 0; n < z.n_ports(); ++n)
        out.push_back(port_impedance_matrix(z.entries(), n, false));
    return out;
}

/// Nonzero eigenpairs of a PIM. The eigenvalues are -lambda_neg < 0 < lambda_pos.
struct PimEigensystem {
    int port = 0;
    double lambda_pos = 0.0;
    double lambda_neg = 0.0;
    double s = 0.0;           ///< sqrt(sum_m |Z_nm|^2), m != n
    double resistance = 0.0;  ///< Re Z_nn (plus R_L for a loaded receiver)
    VectorXcd v_pos;
    VectorXcd v_neg;          ///< zero when the port is uncoupled
    bool rank_one = false;    ///< S_n == 0: no negative part
};

/// Analytic eigensystem. For a signed eigenvalue l the eigenvector is
/// 2 l e_n + conj(z_n,offdiag), scaled so that its last entry is one.
inline PimEigensystem pim_eigensystem(const PortImpedanceMatrix &t) {
    const int n = t.port;
    const auto size = t.matrix.rows();
    PimEigensystem es;
    es.port = n;
    es.resistance = t.matrix(n, n).real();
    VectorXcd off = 2.0 * t.matrix.col(n); // conj(Z_nm) for m != n
    off(n) = 0.0;
    es.s = off.norm();
    const double root = std::hypot(es.s, es.resistance);
    es.lambda_pos = 0.5 * (es.resistance + root);
    // R - sqrt(S^2 + R^2) cancels badly for weak coupling.
    es.lambda_neg = es.s == 0.0 ? 0.0 : 0.25 * es.s * es.s / es.lambda_pos;

    auto normalise = [&](VectorXcd v) {
        const cdouble last = v(size - 1);
        if (std::abs(last) > 1e-14 * v.norm())
            return VectorXcd(v / last);
        Eigen::Index k = 0;
        v.cwiseAbs().maxCoeff(&k);
        return VectorXcd(v / v(k));
    };
    if (es.s == 0.0) {
        es.rank_one = true;
        es.v_pos = VectorXcd::Unit(size, n);
        es.v_neg = VectorXcd::Zero(size);
        return es;
    }
    VectorXcd vp = off, vn = off;
    vp(n) = 2.0 * es.lambda_pos;
    vn(n) = -2.0 * es.lambda_neg;
    es.v_pos = normalise(vp);
    es.v_neg = normalise(vn);
    return es;
}

inline PimEigensystem pim_eigensystem(const ImpedanceMatrix &z, int n) {
    if (n < 0 || n >= z.n_ports())
        throw ValidationError("pim_eigensystem: port index out of range");
    return pim_eigensystem(port_impedance_matrix(z.entries(), n, false));
}

struct PimSplit {
    MatrixXcd positive;
    MatrixXcd negative;
};

/// T = T+ - T-, each lambda v v^H / (v^H v).
inline PimSplit pim_split(const PimEigensystem &es) {
    const auto size = es.v_pos.size();
    PimSplit out;
    out.positive = es.lambda_pos * es.v_pos * es.v_pos.adjoint() / es.v_pos.squaredNorm();
    if (es.rank_one)
        out.negative = MatrixXcd::Zero(size, size);
    else
        out.negative = es.lambda_neg * es.v_neg * es.v_neg.adjoint() / es.v_neg.squaredNorm();
    return out;
}

inline PimSplit pim_split(const PortImpedanceMatrix &t) { return pim_split(pim_eigensystem(t)); }

/// Real power 1/2 i^H T i entering the port.
inline double port_power(const PortImpedanceMatrix &t, const VectorXcd &currents) {
    return 0.5 * currents.dot(t.matrix * currents).real();
}

} // namespace wpt
