// SPDX-License-Identifier: Apache-2.0
//
// Constrained optimum through the semidefinite relaxation of the QCQP:
// relaxation, tightness certificate, rank-one extraction, operating point
// recovery, outer load search, and the closed-form-first pipeline.

#pragma once

#include "wpt/golden_section.hpp"
#include "wpt/qcqp.hpp"
#include "wpt/sdp.hpp"

#include <json.hpp>

#include <limits>
#include <optional>

namespace wpt {

enum class SdrForm { conic, affine };

inline std::string_view sdr_form_name(SdrForm f) { return f == SdrForm::conic ? "conic" : "affine"; }

inline SdrForm parse_sdr_form(std::string_view s) {
    if (s == "conic")
        return SdrForm::conic;
    if (s == "affine")
        return SdrForm::affine;
    throw ValidationError("unknown relaxation form '" + std::string(s) + "' (expected conic or affine)");
}

inline constexpr double tightness_threshold = 1e-8;
inline constexpr double rank_warning_ratio = 1e-4;
inline constexpr double skip_power_tolerance = 1e-12;

struct SdrOptions {
    SdrForm form = SdrForm::conic;
    sdp::Options solver;
    double tightness_threshold = wpt::tightness_threshold;
    /// Diagonal variable scaling c = D c^ applied before solving (empty: none).
    VectorXd scaling;
};

/// Scaling from a reference drive: D_ii = max(|c_i|, 1e-3 max_j |c_j|).
inline VectorXd equilibration_from(const VectorXd &reference) {
    const double floor = 1e-3 * reference.cwiseAbs().maxCoeff();
    VectorXd d = reference.cwiseAbs().cwiseMax(floor);
    if (!(floor > 0.0))
        d.setOnes();
    return d;
}

/// The same QCQP in the variable c^ with c = D c^.
inline QcqpProblem scale_problem(const QcqpProblem &p, const VectorXd &d) {
    QcqpProblem s = p;
    const auto dm = d.asDiagonal();
    s.q0 = dm * p.q0 * dm;
    for (auto &q : s.q)
        q = dm * q * dm;
    s.affine.a = p.affine.a * dm;
    s.conic.k = dm * p.conic.k;
    s.conic.k0 = s.conic.k * s.conic.k.transpose();
    for (std::size_t m = 0; m < s.conic.km.size(); ++m)
        s.conic.km[m] = dm * p.conic.km[m] * dm;
    s.conic.r = dm * p.conic.r * dm;
    return s;
}

/// SDP data for a QCQP in either relaxation form.
inline sdp::SdpInstance build_relaxation(const QcqpProblem &p, SdrForm form) {
    sdp::SdpInstance inst;
    inst.cost = p.q0;
    if (form == SdrForm::conic) {
        if (p.redundant_kvl)
            for (std::size_t m = 0; m < p.conic.km.size(); ++m)
                inst.constraints.push_back(
                    {p.conic.km[m], sdp::Sense::equal, 0.0, sdp::Role::kvl, "K" + std::to_string(m + 1)});
        inst.constraints.push_back({p.conic.k0, sdp::Sense::equal, 0.0, sdp::Role::kvl, "K0"});
        inst.constraints.push_back({p.conic.r, sdp::Sense::equal, 1.0, sdp::Role::received_power, "R"});
    } else {
        inst.affine = sdp::AffineBlock{p.affine.a, p.affine.b, {sdp::Role::kvl, sdp::Role::received_power}};
    }
    for (std::size_t n = 0; n < p.q.size(); ++n) {
        const std::string label = "P" + std::to_string(n + 1);
        if (p.constraints.mode == ConstraintMode::nonnegative)
            inst.constraints.push_back({p.q[n], sdp::Sense::greater_equal, 0.0, sdp::Role::power, label});
        else if (p.constraints.mode == ConstraintMode::caps)
            inst.constraints.push_back(
                {p.q[n], sdp::Sense::less_equal, p.constraints.caps(static_cast<Eigen::Index>(n)), sdp::Role::power, label});
    }
    return inst;
}

struct Relaxation {
    sdp::SdpInstance instance;
    sdp::SdpSolution solution;
    sdp::KktReport kkt;
    MatrixXd c_matrix;              ///< C*
    std::optional<VectorXd> c_vec;  ///< c* from the affine form
    double p_l_relax = 0.0;
};

/// Solves the relaxation. With `options.scaling` set, the SDP is solved in
/// the scaled variable and C*, c* are mapped back; the KKT report refers to
/// the scaled instance (the residuals are relative, so they carry over).
inline Relaxation solve_relaxation(const QcqpProblem &p, const SdrOptions &options = {}) {
    const bool scaled = options.scaling.size() > 0;
    if (scaled && options.scaling.size() != p.size)
        throw ValidationError("solve_relaxation: scaling has wrong length");
    Relaxation r;
    r.instance = build_relaxation(scaled ? scale_problem(p, options.scaling) : p, options.form);
    r.solution = sdp::solve(r.instance, options.solver);
    if (r.solution.primal.size() > 0)
        r.kkt = sdp::check_kkt(r.instance, r.solution);
    r.c_matrix = r.solution.primal;
    if (options.form == SdrForm::affine && r.solution.primal_vector.size() > 0)
        r.c_vec = r.solution.primal_vector;
    if (scaled && r.c_matrix.size() > 0) {
        const auto dm = options.scaling.asDiagonal();
        r.c_matrix = dm * r.c_matrix * dm;
        if (r.c_vec)
            r.c_vec = dm * *r.c_vec;
    }
    r.p_l_relax = r.solution.primal_objective;
    return r;
}

/// ||C - c c^T||_F / (c^T c).
inline double tightness_error(const MatrixXd &c_matrix, const VectorXd &c) {
    if (c_matrix.rows() != c.size() || c_matrix.cols() != c.size())
        throw ValidationError("tightness_error: shape mismatch");
    const double cc = c.squaredNorm();
    if (cc == 0.0)
        throw ValidationError("tightness_error: zero vector");
    return (c_matrix - c * c.transpose()).norm() / cc;
}

struct Extraction {
    VectorXd c;
    double eigen_ratio = 0.0; ///< mu_2 / mu_1
    bool rank_warning = false;
};

/// Dominant eigenvector of C, signed so that i_r' > 0 and scaled so that
/// i_r' equals the required receiver current.
inline Extraction extract_solution(const MatrixXd &c_matrix, int n_ports, double load_resistance) {
    const auto m = c_matrix.rows();
    if (m != 2 * n_ports - 1)
        throw ValidationError("extract_solution: matrix size does not match port count");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (c_matrix + c_matrix.transpose()));
    const auto &ev = es.eigenvalues();
    const double mu1 = ev(m - 1);
    if (!(mu1 > 0.0))
        throw SolverError("extract_solution: relaxed solution has no positive eigenvalue");
    Extraction out;
    out.eigen_ratio = m > 1 ? std::max(0.0, ev(m - 2)) / mu1 : 0.0;
    out.rank_warning = out.eigen_ratio > rank_warning_ratio;
    out.c = std::sqrt(mu1) * es.eigenvectors().col(m - 1);
    const auto ir = n_ports - 1;
    if (out.c(ir) == 0.0)
        throw SolverError("extract_solution: dominant eigenvector carries no receiver current");
    out.c *= std::sqrt(2.0 / load_resistance) / out.c(ir);
    return out;
}

/// Minimum-norm correction of c onto A c = b.
inline VectorXd project_affine(const VectorXd &c, const AffineData &affine) {
    const VectorXd r = affine.b - affine.a * c;
    const MatrixXd aat = affine.a * affine.a.transpose();
    return c + affine.a.transpose() * aat.ldlt().solve(r);
}

/// Gauss-Newton restoration of exact feasibility: A c = b and every violated
/// power constraint driven onto its boundary, by minimum-norm steps.
inline VectorXd restore_feasibility(VectorXd c, const QcqpProblem &p, int max_steps = 8) {
    auto bound = [&](std::size_t n) {
        return p.constraints.mode == ConstraintMode::caps ? p.constraints.caps(static_cast<Eigen::Index>(n)) : 0.0;
    };
    auto violated = [&](const VectorXd &x, std::size_t n) {
        const double g = x.dot(p.q[n] * x);
        if (p.constraints.mode == ConstraintMode::nonnegative)
            return g < 0.0;
        if (p.constraints.mode == ConstraintMode::caps)
            return g > bound(n);
        return false;
    };
    c = project_affine(c, p.affine);
    // A port can tip over its bound while others are corrected, so the
    // active set only grows.
    std::vector<std::size_t> active;
    auto grow = [&] {
        for (std::size_t n = 0; n < p.q.size(); ++n)
            if (violated(c, n) && std::find(active.begin(), active.end(), n) == active.end())
                active.push_back(n);
    };
    grow();
    if (active.empty())
        return c;
    for (int step = 0; step < max_steps; ++step) {
        const auto rows = 2 + static_cast<Eigen::Index>(active.size());
        MatrixXd j(rows, c.size());
        VectorXd r(rows);
        j.topRows(2) = p.affine.a;
        r.head(2) = p.affine.a * c - p.affine.b;
        for (std::size_t k = 0; k < active.size(); ++k) {
            const auto &q = p.q[active[k]];
            j.row(2 + static_cast<Eigen::Index>(k)) = 2.0 * (q * c).transpose();
            r(2 + static_cast<Eigen::Index>(k)) = c.dot(q * c) - bound(active[k]);
        }
        const VectorXd delta = j.completeOrthogonalDecomposition().solve(r);
        c -= delta;
        const auto before = active.size();
        grow();
        if (active.size() == before && delta.norm() <= 1e-15 * c.norm())
            break;
    }
    return project_affine(c, p.affine);
}

struct OperatingPoint {
    VectorXcd currents;
    VectorXcd voltages;
    double x_r = 0.0;
    VectorXd transmit_powers;
    double p_loss = 0.0;
    double p_load = 0.0;
    double eta = 0.0;
    double kvl_residual = 0.0; ///< |v_r| / (||Z^|| ||i||)
    std::optional<double> c_r;
    std::optional<double> l_r;
};

inline constexpr double recovery_feasibility_tolerance = 1e-8;

inline OperatingPoint recover_operating_point(const VectorXd &c, const ImpedanceMatrix &z, double load_resistance) {
    const auto affine = build_affine(z, load_resistance);
    if (c.size() != affine.a.cols())
        throw ValidationError("recover_operating_point: vector has wrong length");
    const VectorXd res = affine.a * c - affine.b;
    const double kvl_scale = affine.a.row(0).norm() * c.norm();
    const double rel0 = std::abs(res(0)) / std::max(kvl_scale, 1e-300);
    const double rel1 = std::abs(res(1)) / affine.b(1);
    if (rel0 > recovery_feasibility_tolerance || rel1 > recovery_feasibility_tolerance) {
        std::ostringstream os;
        os << "recover_operating_point: infeasible currents (KVL residual " << rel0 << ", receiver current residual "
           << rel1 << ")";
        throw SolverError(os.str());
    }
    OperatingPoint op;
    op.currents = currents_from_real(c);
    const auto nt = z.n_tx();
    const double i_r = op.currents(nt).real();
    op.x_r = receiver_reactance_for(z, op.currents.head(nt), i_r);
    const auto loaded = apply_receiver_loading(z, load_resistance, op.x_r);
    op.voltages = loaded.entries() * op.currents;
    op.kvl_residual = std::abs(op.voltages(nt)) / (loaded.entries().norm() * op.currents.norm());
    const auto pims = port_impedance_matrices(z);
    op.transmit_powers = transmit_powers(op.currents, pims).head(nt);
    op.p_loss = 0.5 * op.currents.dot(z.resistance().cast<cdouble>() * op.currents).real();
    op.p_load = 0.5 * load_resistance * i_r * i_r;
    op.eta = op.p_load / (op.p_loss + op.p_load);
    set_receiver_element(op.x_r, z.omega(), op.c_r, op.l_r);
    return op;
}

struct SdrResult {
    std::string matrix_hash;
    double load_resistance = 0.0;
    ConstraintMode constraint_mode = ConstraintMode::nonnegative;
    SdrForm form = SdrForm::conic;
    bool skipped = false;
    bool tight = false;
    bool rank_warning = false;
    sdp::Status status = sdp::Status::optimal;
    std::string diagnostics;
    MatrixXd c_matrix;
    VectorXd c;
    double p_l_relax = std::numeric_limits<double>::quiet_NaN();
    double epsilon = std::numeric_limits<double>::quiet_NaN();
    double eigen_ratio = std::numeric_limits<double>::quiet_NaN();
    double gap = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    sdp::KktReport kkt;
    OperatingPoint point;
    // Closed-form reference at the same load.
    double eta_cf = 0.0;
    double eta_max = 0.0;
    double u = 0.0;
    double r_l_opt = 0.0;
    VectorXd p_cf;
    std::optional<double> c_r_cf;
    double delta_eta_db = 0.0;
    double delta_c_r_rel = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> warnings;

    bool ok() const { return status == sdp::Status::optimal; }
    double eta() const { return point.eta; }
};

struct PipelineOptions {
    std::optional<double> load_resistance; ///< empty: closed-form optimum R_L*
    PowerConstraints constraints;
    SdrOptions sdr;
    bool redundant_kvl = true;
};

namespace detail {
inline bool closed_form_admissible(const VectorXd &p, const PowerConstraints &pc) {
    switch (pc.mode) {
    case ConstraintMode::none: return true;
    case ConstraintMode::nonnegative: return p.minCoeff() >= -skip_power_tolerance;
    case ConstraintMode::caps: return ((p - pc.caps).array() <= skip_power_tolerance).all();
    }
    return true;
}
} // namespace detail

/// Closed form first; the relaxation only runs when the closed-form drive
/// violates a power constraint.
inline SdrResult full_pipeline(const ImpedanceMatrix &z, const PipelineOptions &options = {}) {
    const auto cf = solve_closed_form(z, options.load_resistance);
    SdrResult r;
    r.matrix_hash = z.hash();
    r.load_resistance = cf.load_resistance;
    r.constraint_mode = options.constraints.mode;
    r.form = options.sdr.form;
    r.eta_cf = cf.eta_res;
    r.eta_max = cf.eta_max;
    r.u = cf.u;
    r.r_l_opt = cf.r_l_opt;
    r.p_cf = cf.p_t;
    r.c_r_cf = cf.c_r;

    const auto problem = build_qcqp(z, cf.load_resistance, options.constraints, options.redundant_kvl);
    if (detail::closed_form_admissible(cf.p_t, options.constraints)) {
        r.skipped = true;
        r.tight = true;
        r.c = real_from_currents(cf.currents());
        r.point = recover_operating_point(r.c, z, cf.load_resistance);
        r.delta_c_r_rel = 0.0;
        return r;
    }

    auto sdr_options = options.sdr;
    if (sdr_options.scaling.size() == 0)
        sdr_options.scaling = equilibration_from(real_from_currents(cf.currents()));
    const auto relax = solve_relaxation(problem, sdr_options);
    r.status = relax.solution.status;
    r.diagnostics = relax.solution.diagnostics;
    r.iterations = relax.solution.iterations;
    r.gap = relax.solution.relative_gap;
    r.kkt = relax.kkt;
    if (!relax.solution.optimal())
        return r;
    r.c_matrix = relax.c_matrix;
    r.p_l_relax = relax.p_l_relax;

    VectorXd c;
    if (relax.c_vec) {
        c = *relax.c_vec;
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(r.c_matrix, Eigen::EigenvaluesOnly);
        const auto &ev = es.eigenvalues();
        r.eigen_ratio = std::max(0.0, ev(ev.size() - 2)) / ev(ev.size() - 1);
    } else {
        const auto ex = extract_solution(r.c_matrix, z.n_ports(), cf.load_resistance);
        c = ex.c;
        r.eigen_ratio = ex.eigen_ratio;
        r.rank_warning = ex.rank_warning;
        if (ex.rank_warning)
            r.warnings.push_back("relaxed solution is clearly not rank one; extracted drive is heuristic");
    }
    r.epsilon = tightness_error(r.c_matrix, c);
    r.tight = r.epsilon <= options.sdr.tightness_threshold;
    if (!r.tight)
        r.warnings.push_back("relaxation not tight: reported efficiency is a heuristic extraction, the relaxed bound is "
                             "p_l_relax");
    r.c = r.tight ? restore_feasibility(c, problem) : project_affine(c, problem.affine);
    r.point = recover_operating_point(r.c, z, cf.load_resistance);
    r.delta_eta_db = 10.0 * std::log10(r.point.eta / r.eta_cf);
    if (r.point.c_r && r.c_r_cf)
        r.delta_c_r_rel = (*r.point.c_r - *r.c_r_cf) / *r.c_r_cf;
    return r;
}

struct LoadOptimization {
    double load_resistance = 0.0;
    SdrResult result;
    int evaluations = 0;
    bool grid_fallback = false;
    std::vector<std::string> warnings;
};

/// Outer search over R_L maximising the pipeline efficiency. Default bounds
/// are [R_L*/5, 5 R_L*] around the closed-form optimum.
inline LoadOptimization optimize_load(const ImpedanceMatrix &z, PipelineOptions options = {},
                                      std::optional<std::pair<double, double>> bounds = {}, double rel_tol = 1e-4) {
    const auto cf = solve_closed_form(z);
    const auto [lo, hi] = bounds.value_or(std::pair{cf.r_l_opt / 5.0, cf.r_l_opt * 5.0});
    if (!(lo > 0.0) || !(hi > lo))
        throw ValidationError("optimize_load: need 0 < lower bound < upper bound");
    auto eval = [&](double rl) {
        auto o = options;
        o.load_resistance = rl;
        auto res = full_pipeline(z, o);
        const double value = res.ok() ? res.eta() : -1.0;
        return std::pair{value, std::move(res)};
    };
    auto best = golden_section_maximize<SdrResult>(eval, lo, hi, rel_tol, true);
    LoadOptimization out;
    out.load_resistance = best.x;
    out.result = std::move(best.payload);
    out.evaluations = best.evaluations;
    out.grid_fallback = best.grid_fallback;
    out.warnings = std::move(best.warnings);
    return out;
}

inline nlohmann::json to_json(const SdrResult &r) {
    auto opt = [](const std::optional<double> &v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json currents = nlohmann::json::array();
    for (Eigen::Index k = 0; k < r.point.currents.size(); ++k)
        currents.push_back({{"re", r.point.currents(k).real()}, {"im", r.point.currents(k).imag()}});
    nlohmann::json j;
    j["matrix_hash"] = r.matrix_hash;
    j["load_resistance_ohm"] = r.load_resistance;
    j["constraint_mode"] = constraint_mode_name(r.constraint_mode);
    j["form"] = sdr_form_name(r.form);
    j["status"] = sdp::status_name(r.status);
    j["skipped"] = r.skipped;
    j["tight"] = r.tight;
    j["epsilon"] = num(r.epsilon);
    j["eigen_ratio"] = num(r.eigen_ratio);
    j["iterations"] = r.iterations;
    j["duality_gap"] = num(r.gap);
    j["p_l_relax"] = num(r.p_l_relax);
    j["eta"] = r.point.eta;
    j["eta_closed_form"] = r.eta_cf;
    j["eta_max"] = r.eta_max;
    j["mutual_q"] = r.u;
    j["r_l_opt_closed_form"] = r.r_l_opt;
    j["delta_eta_db"] = num(r.delta_eta_db);
    j["delta_c_r_rel"] = num(r.delta_c_r_rel);
    j["transmit_powers_w"] = detail::vector_json(r.point.transmit_powers);
    j["transmit_powers_closed_form_w"] = detail::vector_json(r.p_cf);
    j["currents_a"] = currents;
    j["x_r_ohm"] = r.point.x_r;
    j["c_r_f"] = opt(r.point.c_r);
    j["l_r_h"] = opt(r.point.l_r);
    j["c_r_closed_form_f"] = opt(r.c_r_cf);
    j["kkt"] = {{"primal_psd", r.kkt.primal_psd},     {"equality", r.kkt.equality},
                {"received_power", r.kkt.received_power}, {"inequality", r.kkt.inequality},
                {"dual_sign", r.kkt.dual_sign},       {"dual_psd", r.kkt.dual_psd},
                {"complementarity", r.kkt.complementarity}};
    j["warnings"] = r.warnings;
    if (!r.diagnostics.empty())
        j["diagnostics"] = r.diagnostics;
    return j;
}

} // namespace wpt
