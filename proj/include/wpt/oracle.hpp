// SPDX-License-Identifier: Apache-2.0
//
// Independent checks of the main solvers: a brute-force global search for
// small QCQPs and a batch of algebraic identity checks on a raw matrix.
// Nothing here calls the SDP solver or the closed-form formulas it is meant
// to certify, except where an identity explicitly compares them.

#pragma once

#include "wpt/closed_form.hpp"
#include "wpt/qcqp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace wpt::oracle {

enum class Method { grid, multistart };

inline std::string_view method_name(Method m) { return m == Method::grid ? "grid" : "multistart"; }

struct OracleReport {
    VectorXd c;
    double objective = 0.0;
    Method method = Method::grid;
    long evaluations = 0;
    double radius = 0.0;
    int feasible_grid_points = 0;
    bool widened = false;
    double max_violation = 0.0;

    /// |objective - candidate| / max(|objective|, |candidate|).
    double agreement(double candidate) const {
        return std::abs(objective - candidate) / std::max({std::abs(objective), std::abs(candidate), 1e-300});
    }
};

struct OracleOptions {
    int resolution = 41;
    int refine_candidates = 12;
    int penalty_rounds = 6;
    double feasibility_tolerance = 1e-10;
    int multistart_points = 4000;
    std::uint64_t seed = 12345;
};

namespace detail {

/// c = c_p + N t parametrisation of A c = b, with its own factorisation.
struct Parametrisation {
    VectorXd c_p;
    MatrixXd basis;
};

inline Parametrisation parametrise(const AffineData &affine) {
    Eigen::JacobiSVD<MatrixXd> svd(affine.a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto rank = svd.rank();
    Parametrisation p;
    p.c_p = svd.solve(affine.b);
    p.basis = svd.matrixV().rightCols(affine.a.cols() - rank);
    return p;
}

/// Quadratic f(t) = t^T H t + 2 g^T t + f0 from c^T Q c with c = c_p + N t.
struct Quadratic {
    MatrixXd h;
    VectorXd g;
    double f0 = 0.0;

    double operator()(const VectorXd &t) const { return t.dot(h * t) + 2.0 * g.dot(t) + f0; }
    VectorXd gradient(const VectorXd &t) const { return 2.0 * (h * t + g); }
};

inline Quadratic restrict(const MatrixXd &q, const Parametrisation &p) {
    return {p.basis.transpose() * q * p.basis, p.basis.transpose() * q * p.c_p, p.c_p.dot(q * p.c_p)};
}

struct Restricted {
    Quadratic objective;
    std::vector<Quadratic> powers;
    std::vector<double> bound;
    std::vector<int> sign; ///< +1 for g >= bound, -1 for g <= bound

    /// Constraint values in the form s (g - bound) >= 0.
    double slack(std::size_t n, const VectorXd &t) const { return sign[n] * (powers[n](t) - bound[n]); }

    double violation(const VectorXd &t) const {
        double v = 0.0;
        for (std::size_t n = 0; n < powers.size(); ++n)
            v = std::max(v, -slack(n, t));
        return v;
    }
};

inline Restricted restrict_problem(const QcqpProblem &problem, const Parametrisation &p) {
    Restricted r;
    r.objective = restrict(problem.q0, p);
    if (problem.constraints.mode == ConstraintMode::none)
        return r;
    for (std::size_t n = 0; n < problem.q.size(); ++n) {
        r.powers.push_back(restrict(problem.q[n], p));
        if (problem.constraints.mode == ConstraintMode::nonnegative) {
            r.bound.push_back(0.0);
            r.sign.push_back(1);
        } else {
            r.bound.push_back(problem.constraints.caps(static_cast<Eigen::Index>(n)));
            r.sign.push_back(-1);
        }
    }
    return r;
}

/// Penalty minimisation of f + w sum max(0, -slack)^2 by damped Newton.
inline VectorXd penalty_descent(const Restricted &r, VectorXd t, double weight, int iters = 60) {
    auto phi = [&](const VectorXd &x) {
        double v = r.objective(x);
        for (std::size_t n = 0; n < r.powers.size(); ++n) {
            const double s = std::min(0.0, r.slack(n, x));
            v += weight * s * s;
        }
        return v;
    };
    for (int it = 0; it < iters; ++it) {
        VectorXd grad = r.objective.gradient(t);
        MatrixXd hess = 2.0 * r.objective.h;
        for (std::size_t n = 0; n < r.powers.size(); ++n) {
            const double s = r.slack(n, t);
            if (s >= 0.0)
                continue;
            const VectorXd ds = r.sign[n] * r.powers[n].gradient(t);
            grad += 2.0 * weight * s * ds;
            hess += 2.0 * weight * (ds * ds.transpose() + s * r.sign[n] * 2.0 * r.powers[n].h);
        }
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (hess + hess.transpose()));
        const double floor = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
        VectorXd ev = es.eigenvalues().cwiseAbs().cwiseMax(floor);
        const VectorXd step = -(es.eigenvectors() * (es.eigenvectors().transpose() * grad).cwiseQuotient(ev));
        const double f_now = phi(t);
        double alpha = 1.0;
        bool moved = false;
        for (int k = 0; k < 40; ++k, alpha *= 0.5) {
            const VectorXd cand = t + alpha * step;
            if (phi(cand) < f_now) {
                t = cand;
                moved = true;
                break;
            }
        }
        if (!moved || alpha * step.norm() <= 1e-15 * std::max(1.0, t.norm()))
            break;
    }
    return t;
}

/// Newton iteration on the KKT system with a fixed active set: stationarity of
/// f - sum mu_n s_n and s_n = 0 on the active set.
inline std::optional<VectorXd> active_set_newton(const Restricted &r, VectorXd t, const std::vector<std::size_t> &active) {
    const auto dim = t.size();
    const auto k = static_cast<Eigen::Index>(active.size());
    VectorXd mu = VectorXd::Zero(k);
    if (k > 0) {
        // Least-squares multiplier estimate.
        MatrixXd j(dim, k);
        for (Eigen::Index a = 0; a < k; ++a)
            j.col(a) = r.sign[active[static_cast<std::size_t>(a)]] *
                       r.powers[active[static_cast<std::size_t>(a)]].gradient(t);
        mu = j.completeOrthogonalDecomposition().solve(r.objective.gradient(t));
    }
    for (int it = 0; it < 60; ++it) {
        MatrixXd kkt = MatrixXd::Zero(dim + k, dim + k);
        VectorXd rhs(dim + k);
        kkt.topLeftCorner(dim, dim) = 2.0 * r.objective.h;
        rhs.head(dim) = r.objective.gradient(t);
        for (Eigen::Index a = 0; a < k; ++a) {
            const auto n = active[static_cast<std::size_t>(a)];
            const VectorXd ds = r.sign[n] * r.powers[n].gradient(t);
            kkt.topLeftCorner(dim, dim) -= mu(a) * r.sign[n] * 2.0 * r.powers[n].h;
            kkt.col(dim + a).head(dim) = -ds;
            kkt.row(dim + a).head(dim) = ds.transpose();
            rhs.head(dim) -= mu(a) * ds;
            rhs(dim + a) = r.slack(n, t);
        }
        const VectorXd delta = kkt.fullPivLu().solve(-rhs);
        if (!delta.allFinite())
            return std::nullopt;
        t += delta.head(dim);
        mu += delta.tail(k);
        if (delta.head(dim).norm() <= 1e-15 * std::max(1.0, t.norm()) && rhs.norm() < 1e-12 * std::max(1.0, t.norm()))
            break;
    }
    if (!t.allFinite())
        return std::nullopt;
    return t;
}

} // namespace detail

/// Global search over A c = b for problems with at most two transmitters
/// (free dimension 2N - 3 <= 3); `Method::multistart` handles larger sizes
/// with random starts instead of a full grid.
inline OracleReport brute_force_qcqp(const QcqpProblem &problem, const OracleOptions &options = {},
                                     Method method = Method::grid) {
    using namespace detail;
    const auto par = parametrise(problem.affine);
    const auto r = restrict_problem(problem, par);
    const auto dim = par.basis.cols();
    if (method == Method::grid && dim > 3)
        throw ValidationError("brute_force_qcqp: grid search limited to free dimension 3 (N <= 3); use multistart");

    // Centre: unconstrained minimiser of the restricted objective.
    const VectorXd centre = -r.objective.h.ldlt().solve(r.objective.g);
    double radius = 10.0 * (par.c_p + par.basis * centre).norm();

    OracleReport rep;
    rep.method = method;
    const double tol = options.feasibility_tolerance;
    auto feasible = [&](const VectorXd &t) { return r.violation(t) <= tol; };

    for (int attempt = 0; attempt < 2; ++attempt) {
        rep.radius = radius;
        // Candidate generation; ties broken by generation order. Infeasible
        // samples are kept, ranked by violation, for when none is feasible.
        std::vector<std::pair<double, VectorXd>> cands;
        std::vector<std::pair<double, VectorXd>> near;
        auto consider = [&](const VectorXd &t) {
            ++rep.evaluations;
            if (feasible(t))
                cands.emplace_back(r.objective(t), t);
            else
                near.emplace_back(r.violation(t), t);
        };
        if (method == Method::grid) {
            const int res = options.resolution;
            const auto total = static_cast<long>(std::pow(res, static_cast<double>(dim)));
            for (long flat = 0; flat < total; ++flat) {
                long rem = flat;
                VectorXd t(dim);
                for (Eigen::Index d = 0; d < dim; ++d) {
                    const int i = static_cast<int>(rem % res);
                    rem /= res;
                    t(d) = centre(d) + radius * (-1.0 + 2.0 * i / (res - 1));
                }
                if ((t - centre).norm() <= radius * (1.0 + 1e-12))
                    consider(t);
            }
        } else {
            std::mt19937_64 rng(options.seed);
            std::normal_distribution<double> gauss;
            std::uniform_real_distribution<double> unif;
            consider(centre);
            for (int k = 0; k < options.multistart_points; ++k) {
                VectorXd dir(dim);
                for (Eigen::Index d = 0; d < dim; ++d)
                    dir(d) = gauss(rng);
                dir.normalize();
                consider(centre + radius * std::pow(unif(rng), 1.0 / static_cast<double>(dim)) * dir);
            }
        }
        rep.feasible_grid_points = static_cast<int>(cands.size());
        const auto by_key = [](const auto &a, const auto &b) { return a.first < b.first; };
        std::stable_sort(cands.begin(), cands.end(), by_key);
        std::stable_sort(near.begin(), near.end(), by_key);

        std::vector<VectorXd> starts;
        const auto limit = static_cast<std::size_t>(options.refine_candidates);
        for (std::size_t k = 0; k < std::min(cands.size(), limit); ++k)
            starts.push_back(cands[k].second);
        if (cands.empty())
            for (std::size_t k = 0; k < std::min(near.size(), limit); ++k)
                starts.push_back(near[k].second);

        double best_val = std::numeric_limits<double>::infinity();
        VectorXd best;
        if (!cands.empty()) {
            best_val = cands.front().first;
            best = cands.front().second;
        }
        const auto nc = r.powers.size();
        for (const auto &start : starts) {
            VectorXd t = start;
            const double f = r.objective(t);
            const double scale = std::max(1.0, std::isfinite(best_val) ? std::abs(best_val) : std::abs(f));
            double w = 1.0 / (std::abs(f) + 1.0);
            for (int round = 0; round < options.penalty_rounds; ++round, w *= 10.0)
                t = penalty_descent(r, t, w * scale);
            // Try every active set compatible with the penalised point.
            for (unsigned mask = 0; mask < (1u << nc); ++mask) {
                std::vector<std::size_t> s;
                for (std::size_t n = 0; n < nc; ++n)
                    if (mask & (1u << n))
                        s.push_back(n);
                const auto polished = active_set_newton(r, t, s);
                if (!polished || !feasible(*polished))
                    continue;
                const double v = r.objective(*polished);
                if (v < best_val) {
                    best_val = v;
                    best = *polished;
                }
            }
        }
        if (!std::isfinite(best_val)) {
            radius *= 10.0;
            rep.widened = true;
            continue;
        }
        rep.c = par.c_p + par.basis * best;
        rep.objective = rep.c.dot(problem.q0 * rep.c);
        rep.max_violation = r.violation(best);
        return rep;
    }
    throw SolverError("brute_force_qcqp: no feasible point found, also after widening the search ball");
}

// ---------------------------------------------------------------------------
// Identity checks
// ---------------------------------------------------------------------------

struct IdentityCheck {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string note;
};

struct IdentityReport {
    std::vector<IdentityCheck> checks;

    bool all_passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const auto &c) { return c.passed; });
    }
    const IdentityCheck *find(std::string_view name) const {
        for (const auto &c : checks)
            if (c.name == name)
                return &c;
        return nullptr;
    }
};

inline constexpr double identity_tolerance = 1e-10;

namespace detail {

inline MatrixXcd raw_pim(const MatrixXcd &z, int n) {
    const auto size = z.rows();
    MatrixXcd en = MatrixXcd::Zero(size, size);
    en(n, n) = 1.0;
    return 0.5 * (en * z + z.adjoint() * en);
}

} // namespace detail

/// Runs the cross-module identities on a raw (possibly invalid) matrix with
/// the receiver loaded by R_L. Failures are listed, never thrown.
inline IdentityReport verify_identities(const MatrixXcd &raw, double frequency_hz, double load_resistance,
                                        std::uint64_t seed = 7) {
    IdentityReport rep;
    auto add = [&](std::string name, double value, double tol, std::string note = {}) {
        rep.checks.push_back({std::move(name), value, tol, value <= tol && std::isfinite(value), std::move(note)});
    };
    const auto n = raw.rows();
    if (raw.cols() != n || n < 2) {
        add("shape", 1.0, 0.0, "matrix must be square with at least two ports");
        return rep;
    }
    const double z_norm = std::max(raw.norm(), 1e-300);
    add("symmetry", (raw - raw.transpose()).norm() / z_norm, 1e-12);

    MatrixXcd loaded = raw;
    loaded(n - 1, n - 1) += load_resistance;
    const double l_norm = loaded.norm();

    // Sum of loaded PIMs equals the loaded resistance matrix.
    MatrixXcd sum = MatrixXcd::Zero(n, n);
    std::vector<MatrixXcd> pims;
    for (int k = 0; k < n; ++k) {
        pims.push_back(detail::raw_pim(loaded, k));
        sum += pims.back();
    }
    add("pim_sum", (sum - loaded.real().cast<cdouble>()).norm() / l_norm, identity_tolerance);

    // Per-port and total power identities on random currents.
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    double per_port = 0.0, total = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        VectorXcd i(n);
        for (Eigen::Index k = 0; k < n; ++k)
            i(k) = cdouble(gauss(rng), gauss(rng));
        const VectorXcd v = loaded * i;
        const double scale = l_norm * i.squaredNorm();
        double s = 0.0;
        for (int k = 0; k < n; ++k) {
            const double pk = 0.5 * i.dot(pims[static_cast<std::size_t>(k)] * i).real();
            per_port = std::max(per_port, std::abs(pk - 0.5 * (v(k) * std::conj(i(k))).real()) / scale);
            s += pk;
        }
        const cdouble loss = 0.5 * i.dot(loaded.real().cast<cdouble>() * i);
        total = std::max(total, std::abs(cdouble(s) - loss) / scale);
    }
    add("port_power", per_port, 1e-12);
    add("power_sum", total, 1e-12);

    // Analytic eigensystems against numerical decompositions, splits, quadratic forms.
    double eig_val = 0.0, eig_vec = 0.0, split = 0.0, split_psd = 0.0, trace_id = 0.0, quad = 0.0, hermitian = 0.0;
    for (int k = 0; k < n; ++k) {
        const PortImpedanceMatrix t{k, detail::raw_pim(raw, k), false};
        const double t_norm = std::max(t.matrix.norm(), 1e-300);
        hermitian = std::max(hermitian, (t.matrix - t.matrix.adjoint()).norm() / t_norm);
        const auto es = pim_eigensystem(t);
        Eigen::SelfAdjointEigenSolver<MatrixXcd> num(hermitian_part(t.matrix));
        const auto &ev = num.eigenvalues();
        eig_val = std::max({eig_val, std::abs(ev(n - 1) - es.lambda_pos) / t_norm,
                            std::abs(ev(0) + es.lambda_neg) / t_norm});
        for (Eigen::Index m = 1; m + 1 < n; ++m)
            eig_val = std::max(eig_val, std::abs(ev(m)) / t_norm);
        auto residual = [&](const VectorXcd &v, double lambda) {
            return (t.matrix * v - lambda * v).norm() / (t_norm * v.norm());
        };
        eig_vec = std::max(eig_vec, residual(es.v_pos, es.lambda_pos));
        if (!es.rank_one)
            eig_vec = std::max(eig_vec, residual(es.v_neg, -es.lambda_neg));
        const auto sp = pim_split(es);
        split = std::max(split, (sp.positive - sp.negative - t.matrix).norm() / t_norm);
        split_psd = std::max({split_psd,
                              std::max(0.0, -Eigen::SelfAdjointEigenSolver<MatrixXcd>(sp.positive).eigenvalues()(0)) / t_norm,
                              std::max(0.0, -Eigen::SelfAdjointEigenSolver<MatrixXcd>(sp.negative).eigenvalues()(0)) / t_norm});
        trace_id = std::max(trace_id, std::abs((sp.positive.trace() - sp.negative.trace()).real() - es.resistance) / t_norm);
        const double qp = es.v_pos.dot(t.matrix * es.v_pos).real();
        quad = std::max(quad, std::abs(qp - es.lambda_pos * es.v_pos.squaredNorm()) / (t_norm * es.v_pos.squaredNorm()));
        if (!es.rank_one) {
            const double qn = es.v_neg.dot(t.matrix * es.v_neg).real();
            quad = std::max(quad, std::abs(qn + es.lambda_neg * es.v_neg.squaredNorm()) / (t_norm * es.v_neg.squaredNorm()));
        }
    }
    add("pim_hermitian", hermitian, 1e-14);
    add("pim_eigenvalues", eig_val, identity_tolerance);
    add("pim_eigenvectors", eig_vec, identity_tolerance);
    add("pim_split", split, 1e-12);
    add("pim_split_psd", split_psd, 1e-12);
    add("pim_split_trace", trace_id, 1e-12);
    add("pim_quadratic_forms", quad, 1e-12);

    // Checks that need a valid network.
    std::optional<ImpedanceMatrix> z;
    try {
        z.emplace(raw, frequency_hz);
    } catch (const ValidationError &e) {
        add("valid_network", 1.0, 0.0, e.what());
        return rep;
    }
    try {
        const auto qp = solve_min_loss_qp(*z, load_resistance);
        const auto cf = solve_closed_form(*z, load_resistance);
        add("closed_form_vs_qp", cf.qp_mismatch, 1e-8);
        // Efficiency from powers at the QP solution against 1/(P_l + 1).
        VectorXcd i(n);
        i.head(n - 1).real() = qp.c_t.head(n - 1);
        i.head(n - 1).imag() = qp.c_t.tail(n - 1);
        i(n - 1) = std::sqrt(2.0 / load_resistance);
        const double p_loss = 0.5 * i.dot(z->resistance().cast<cdouble>() * i).real();
        const double p_load = 0.5 * load_resistance * std::norm(i(n - 1));
        add("efficiency_from_loss", std::abs(p_load / (p_loss + p_load) - qp.eta), 1e-12);
        // Receiver KVL at the closed-form drive.
        const auto lz = apply_receiver_loading(*z, load_resistance, cf.x_r_opt);
        const VectorXcd ic = cf.currents();
        add("closed_form_kvl", std::abs((lz.entries() * ic)(n - 1)) / (lz.entries().norm() * ic.norm()), identity_tolerance);
        const double x_kvl = receiver_reactance_for(*z, cf.i_t, cf.i_r);
        add("closed_form_reactance", std::abs(x_kvl + cf.z_o.imag()) / std::max(1.0, std::abs(cf.z_o.imag())), 1e-9);
        if (n == 2) {
            // Reactive coupling only: general mutual Q against w|M| / sqrt(R_t R_r).
            MatrixXcd reactive = raw;
            reactive(0, 1) = reactive(1, 0) = cdouble(0.0, raw(0, 1).imag());
            const ImpedanceMatrix zr(reactive, frequency_hz);
            const double u_general = mutual_q(zr);
            const double u_siso = std::abs(raw(0, 1).imag()) / std::sqrt(raw(0, 0).real() * raw(1, 1).real());
            add("siso_mutual_q", std::abs(u_general - u_siso) / u_siso, 1e-12);
            const double r_siso = raw(1, 1).real() * std::sqrt(1.0 + u_siso * u_siso);
            add("siso_optimal_load", std::abs(optimal_load(output_impedance(zr), u_general) - r_siso) / r_siso, 1e-12);
        }
    } catch (const Error &e) {
        add("closed_form", 1.0, 0.0, e.what());
    }
    return rep;
}

} // namespace wpt::oracle
