// SPDX-License-Identifier: Apache-2.0
//
// Real-valued QCQP over c = [i_t'; i_r'; i_t''] (size M = 2N - 1):
//
//   min  c^T Q0 c
//   s.t. c^T Q_n c >= 0        (or <= cap_n)   n = 1..N-1
//        A c = b               (Re v_r = 0, i_r' = sqrt(2/R_L))
//
// together with the homogeneous (conic) data K0, K_m, R used by the purely
// quadratic relaxation.

#pragma once

#include "wpt/closed_form.hpp"

#include <json.hpp>

#include <vector>

namespace wpt {

enum class ConstraintMode { none, nonnegative, caps };

inline std::string_view constraint_mode_name(ConstraintMode m) {
    switch (m) {
    case ConstraintMode::none: return "none";
    case ConstraintMode::nonnegative: return "nonneg";
    case ConstraintMode::caps: return "caps";
    }
    return "?";
}

struct PowerConstraints {
    ConstraintMode mode = ConstraintMode::nonnegative;
    VectorXd caps; ///< upper bounds in watts, one per transmitter (caps mode only)
};

inline constexpr double hermitian_tolerance = 1e-10;

/// Leading M x M block of 1/2 [[T', -T''], [T'', T']] with M = 2N - 1, i.e.
/// the row and column of i_r'' removed.
inline MatrixXd realify(const MatrixXcd &t) {
    const auto n = t.rows();
    if (t.cols() != n || n < 1)
        throw ValidationError("realify: square input required");
    const double scale = std::max(1e-300, t.cwiseAbs().maxCoeff());
    if ((t - t.adjoint()).cwiseAbs().maxCoeff() > hermitian_tolerance * scale)
        throw ValidationError("realify: input is not Hermitian");
    MatrixXd full(2 * n, 2 * n);
    full << t.real(), -t.imag(), t.imag(), t.real();
    full *= 0.5;
    const auto m = 2 * n - 1;
    MatrixXd out = full.topLeftCorner(m, m);
    return 0.5 * (out + out.transpose());
}

inline VectorXd real_from_currents(const VectorXcd &i) {
    const auto n = i.size();
    VectorXd c(2 * n - 1);
    c.head(n) = i.real();
    c.tail(n - 1) = i.head(n - 1).imag();
    return c;
}

inline VectorXcd currents_from_real(const VectorXd &c) {
    const auto m = c.size();
    const auto n = (m + 1) / 2;
    VectorXcd i(n);
    i.real() = c.head(n);
    i.imag().head(n - 1) = c.tail(n - 1);
    i.imag()(n - 1) = 0.0;
    return i;
}

struct AffineData {
    MatrixXd a; ///< 2 x M
    VectorXd b; ///< 2
};

/// Rows: Re(v_r) = 0 and i_r' = sqrt(2/R_L). Im(v_r) = 0 is left to x_r.
inline AffineData build_affine(const ImpedanceMatrix &z, double load_resistance) {
    if (!(load_resistance > 0.0))
        throw ValidationError("build_affine: load resistance must be positive");
    const auto b = partition(z);
    const auto nt = b.z_t.rows();
    const auto m = 2 * nt + 1;
    AffineData out{MatrixXd::Zero(2, m), VectorXd::Zero(2)};
    out.a.row(0).head(nt) = b.z_tr.real().transpose();
    out.a(0, nt) = b.z_r.real() + load_resistance;
    out.a.row(0).tail(nt) = -b.z_tr.imag().transpose();
    out.a(1, nt) = 1.0;
    out.b(1) = std::sqrt(2.0 / load_resistance);
    return out;
}

struct ConicData {
    VectorXd k;               ///< KVL row [z_tr', z_r' + R_L, -z_tr'']
    MatrixXd k0;              ///< k k^T
    std::vector<MatrixXd> km; ///< u_m k^T + k u_m^T, m = 1..M
    MatrixXd r;               ///< R_L/2 at the i_r' diagonal entry
};

inline ConicData build_conic(const ImpedanceMatrix &z, double load_resistance) {
    const auto affine = build_affine(z, load_resistance);
    const auto m = affine.a.cols();
    const auto nt = z.n_tx();
    ConicData out;
    out.k = affine.a.row(0).transpose();
    out.k0 = out.k * out.k.transpose();
    for (Eigen::Index j = 0; j < m; ++j) {
        MatrixXd km = MatrixXd::Zero(m, m);
        km.row(j) += out.k.transpose();
        km.col(j) += out.k;
        out.km.push_back(std::move(km));
    }
    out.r = MatrixXd::Zero(m, m);
    out.r(nt, nt) = 0.5 * load_resistance;
    return out;
}

struct QcqpProblem {
    int n_ports = 0;
    int size = 0; ///< M
    double load_resistance = 0.0;
    MatrixXd q0;
    std::vector<MatrixXd> q; ///< one per transmitter
    AffineData affine;
    ConicData conic;
    PowerConstraints constraints;
    bool redundant_kvl = true; ///< emit tr(K_m C) = 0 for m = 1..M in the relaxation
    std::string matrix_hash;

    double receiver_current() const { return affine.b(1); }
};

inline QcqpProblem build_qcqp(const ImpedanceMatrix &z, double load_resistance, PowerConstraints constraints = {},
                              bool redundant_kvl = true) {
    if (z.n_ports() < 2)
        throw ValidationError("build_qcqp: need at least one transmitter");
    if (constraints.mode == ConstraintMode::caps) {
        if (constraints.caps.size() != z.n_tx())
            throw ValidationError("build_qcqp: need one power cap per transmitter");
        if (!constraints.caps.allFinite())
            throw ValidationError("build_qcqp: power caps must be finite");
    }
    QcqpProblem p;
    p.n_ports = z.n_ports();
    p.size = 2 * z.n_ports() - 1;
    p.load_resistance = load_resistance;
    p.q0 = realify(z.resistance().cast<cdouble>());
    for (int n = 0; n < z.n_tx(); ++n)
        p.q.push_back(realify(port_impedance_matrix(z.entries(), n, false).matrix));
    p.affine = build_affine(z, load_resistance);
    p.conic = build_conic(z, load_resistance);
    p.constraints = std::move(constraints);
    p.redundant_kvl = redundant_kvl;
    p.matrix_hash = z.hash();
    return p;
}

struct QcqpEvaluation {
    double objective = 0.0;       ///< c^T Q0 c = P_l
    VectorXd powers;              ///< c^T Q_n c
    VectorXd power_residuals;     ///< constraint violation per transmitter (>= 0, zero when satisfied)
    double kvl_residual = 0.0;    ///< (A c - b)_0
    double pl_residual = 0.0;     ///< (A c - b)_1
    double received_power = 0.0;  ///< c^T R c
};

inline QcqpEvaluation evaluate(const VectorXd &c, const QcqpProblem &p) {
    if (c.size() != p.size)
        throw ValidationError("evaluate: vector has wrong length");
    QcqpEvaluation e;
    e.objective = c.dot(p.q0 * c);
    const auto nt = static_cast<Eigen::Index>(p.q.size());
    e.powers.resize(nt);
    e.power_residuals = VectorXd::Zero(nt);
    for (Eigen::Index n = 0; n < nt; ++n) {
        e.powers(n) = c.dot(p.q[static_cast<std::size_t>(n)] * c);
        if (p.constraints.mode == ConstraintMode::nonnegative)
            e.power_residuals(n) = std::max(0.0, -e.powers(n));
        else if (p.constraints.mode == ConstraintMode::caps)
            e.power_residuals(n) = std::max(0.0, e.powers(n) - p.constraints.caps(n));
    }
    const VectorXd r = p.affine.a * c - p.affine.b;
    e.kvl_residual = r(0);
    e.pl_residual = r(1);
    e.received_power = c.dot(p.conic.r * c);
    return e;
}

// ---------------------------------------------------------------------------
// JSON dump/restore (row-major matrices) for solver debugging.
// ---------------------------------------------------------------------------

namespace detail {
inline nlohmann::json matrix_json(const MatrixXd &m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline MatrixXd matrix_from_json(const nlohmann::json &j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
    MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j.at(static_cast<std::size_t>(r)).size()) != cols)
            throw ValidationError("matrix JSON: ragged rows");
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = j.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

inline nlohmann::json vector_json(const VectorXd &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline VectorXd vector_from_json(const nlohmann::json &j) {
    const auto vals = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}
} // namespace detail

inline nlohmann::json to_json(const QcqpProblem &p) {
    nlohmann::json q = nlohmann::json::array();
    for (const auto &m : p.q)
        q.push_back(detail::matrix_json(m));
    return {{"n_ports", p.n_ports},
            {"size", p.size},
            {"load_resistance", p.load_resistance},
            {"q0", detail::matrix_json(p.q0)},
            {"q", q},
            {"a", detail::matrix_json(p.affine.a)},
            {"b", detail::vector_json(p.affine.b)},
            {"k", detail::vector_json(p.conic.k)},
            {"r_entry", 0.5 * p.load_resistance},
            {"constraint_mode", std::string(constraint_mode_name(p.constraints.mode))},
            {"caps", detail::vector_json(p.constraints.caps)},
            {"redundant_kvl", p.redundant_kvl},
            {"matrix_hash", p.matrix_hash}};
}

inline QcqpProblem qcqp_from_json(const nlohmann::json &j) {
    try {
        QcqpProblem p;
        p.n_ports = j.at("n_ports").get<int>();
        p.size = j.at("size").get<int>();
        p.load_resistance = j.at("load_resistance").get<double>();
        p.q0 = detail::matrix_from_json(j.at("q0"));
        for (const auto &m : j.at("q"))
            p.q.push_back(detail::matrix_from_json(m));
        p.affine.a = detail::matrix_from_json(j.at("a"));
        p.affine.b = detail::vector_from_json(j.at("b"));
        p.conic.k = detail::vector_from_json(j.at("k"));
        p.conic.k0 = p.conic.k * p.conic.k.transpose();
        const auto m = static_cast<Eigen::Index>(p.size);
        for (Eigen::Index i = 0; i < m; ++i) {
            MatrixXd km = MatrixXd::Zero(m, m);
            km.row(i) += p.conic.k.transpose();
            km.col(i) += p.conic.k;
            p.conic.km.push_back(std::move(km));
        }
        p.conic.r = MatrixXd::Zero(m, m);
        p.conic.r(p.n_ports - 1, p.n_ports - 1) = j.at("r_entry").get<double>();
        const auto mode = j.at("constraint_mode").get<std::string>();
        p.constraints.mode = mode == "none" ? ConstraintMode::none
                             : mode == "caps" ? ConstraintMode::caps
                                              : ConstraintMode::nonnegative;
        p.constraints.caps = detail::vector_from_json(j.at("caps"));
        p.redundant_kvl = j.at("redundant_kvl").get<bool>();
        p.matrix_hash = j.value("matrix_hash", "");
        if (p.q0.rows() != m || p.affine.a.cols() != m || p.conic.k.size() != m ||
            p.q.size() != static_cast<std::size_t>(p.n_ports - 1))
            throw ValidationError("QCQP JSON: inconsistent dimensions");
        return p;
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(std::string("QCQP JSON: schema violation: ") + e.what());
    }
}

} // namespace wpt
