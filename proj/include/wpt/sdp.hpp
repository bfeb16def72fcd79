// SPDX-License-Identifier: Apache-2.0
//
// Dense primal-dual interior-point solver for small semidefinite programs
//
//   min  <C0, X>
//   s.t. <A_i, X> (=, >=, <=) b_i
//        X >= 0 (PSD)
//
// optionally with an affine block A c = b coupled through [[X, c], [c^T, 1]] >= 0.
// Nesterov-Todd scaling, Mehrotra predictor-corrector, dense Schur complement.
// Inequalities get nonnegative slack variables (a linear cone block).
//
// Before iterating, homogeneous equality constraints <A, X> = 0 with a
// semidefinite A are used to restrict X to the null space of A (facial
// reduction), and linearly dependent constraints are dropped. Multipliers of
// dropped constraints are reconstructed afterwards so that the returned dual
// slack is the full-space one.

#pragma once

#include "wpt/core.hpp"

#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <vector>

namespace wpt::sdp {

enum class Sense { equal, greater_equal, less_equal };

/// Grouping used by the KKT report.
enum class Role { generic, kvl, received_power, power };

struct Constraint {
    MatrixXd matrix;
    Sense sense = Sense::equal;
    double rhs = 0.0;
    Role role = Role::generic;
    std::string label;
};

/// Rows a_r^T c = b_r on the vector c of [[X, c], [c^T, 1]] >= 0.
struct AffineBlock {
    MatrixXd a;
    VectorXd b;
    std::vector<Role> roles;
};

struct SdpInstance {
    MatrixXd cost;
    std::vector<Constraint> constraints;
    std::optional<AffineBlock> affine;

    int dim() const { return static_cast<int>(cost.rows()); }

    void validate() const {
        const auto n = cost.rows();
        auto symmetric = [](const MatrixXd &m) {
            const double s = std::max(1.0, m.cwiseAbs().maxCoeff());
            return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * s;
        };
        if (cost.cols() != n || n < 1)
            throw ValidationError("sdp: cost must be square and non-empty");
        if (!symmetric(cost) || !cost.allFinite())
            throw ValidationError("sdp: cost must be finite and symmetric");
        for (const auto &c : constraints) {
            if (c.matrix.rows() != n || c.matrix.cols() != n)
                throw ValidationError("sdp: constraint '" + c.label + "' has wrong dimension");
            if (!symmetric(c.matrix) || !c.matrix.allFinite() || !std::isfinite(c.rhs))
                throw ValidationError("sdp: constraint '" + c.label + "' must be finite and symmetric");
        }
        if (affine) {
            if (affine->a.cols() != n || affine->a.rows() != affine->b.size())
                throw ValidationError("sdp: affine block dimensions inconsistent");
            if (!affine->roles.empty() && affine->roles.size() != static_cast<std::size_t>(affine->b.size()))
                throw ValidationError("sdp: affine roles must match affine rows");
        }
    }
};

enum class Status { optimal, max_iters, infeasible, unbounded, numerical_failure };

inline std::string_view status_name(Status s) {
    switch (s) {
    case Status::optimal: return "optimal";
    case Status::max_iters: return "max_iters";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::numerical_failure: return "numerical_failure";
    }
    return "?";
}

struct IterationLog {
    int iteration = 0;
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double complementarity = 0.0; ///< <X,Z> + x^T z, never negative
    double relative_gap = 0.0;
    double primal_infeasibility = 0.0;
    double dual_infeasibility = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
    double step_primal = 0.0;
    double step_dual = 0.0;

    std::string to_line() const {
        char buf[320];
        std::snprintf(buf, sizeof buf,
                      "iter=%d pobj=%.15e dobj=%.15e comp=%.6e relgap=%.6e pinf=%.6e dinf=%.6e mu=%.6e sigma=%.6e "
                      "ap=%.6f ad=%.6f",
                      iteration, primal_objective, dual_objective, complementarity, relative_gap,
                      primal_infeasibility, dual_infeasibility, mu, sigma, step_primal, step_dual);
        return buf;
    }
};

struct Options {
    double tolerance = 1e-10;
    int max_iterations = 200;
    double step_fraction = 0.98;
    int max_dimension = 64;
    bool facial_reduction = true;
    int verbosity = 0;
    std::function<void(const IterationLog &)> on_iteration;
};

struct SdpSolution {
    Status status = Status::numerical_failure;
    MatrixXd primal;           ///< C* (n x n)
    VectorXd primal_vector;    ///< c* when an affine block is present
    MatrixXd lifted;           ///< [[C*, c*], [c*^T, t]] when affine
    VectorXd multipliers;      ///< one per instance constraint
    VectorXd affine_multipliers;
    double schur_multiplier = 0.0; ///< multiplier of t = 1 in the affine form
    MatrixXd dual_slack;       ///< Q* = C0 - sum y_i A_i (lifted size when affine)
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double relative_gap = 0.0;
    int iterations = 0;
    int reduced_dimension = 0;
    int dropped_constraints = 0;
    std::vector<IterationLog> trace;
    std::string diagnostics;

    bool optimal() const { return status == Status::optimal; }
};

namespace detail {

inline double frob_dot(const MatrixXd &a, const MatrixXd &b) { return a.cwiseProduct(b).sum(); }

inline MatrixXd sym(const MatrixXd &a) { return 0.5 * (a + a.transpose()); }

inline VectorXd svec(const MatrixXd &a) {
    const auto n = a.rows();
    VectorXd out(n * (n + 1) / 2);
    Eigen::Index k = 0;
    const double r2 = std::sqrt(2.0);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i <= j; ++i)
            out(k++) = i == j ? a(i, j) : r2 * a(i, j);
    return out;
}

/// Standard form: <A_i, X> + B_i x = b_i, X PSD (n x n), x >= 0 (length l).
struct StandardForm {
    MatrixXd cost;
    std::vector<MatrixXd> a;
    MatrixXd lp; ///< m x l
    VectorXd b;
};

/// Largest alpha with X + alpha dX PSD, given the lower Cholesky factor of X.
inline double max_step_psd(const MatrixXd &chol_lower, const MatrixXd &dx) {
    if (dx.size() == 0)
        return std::numeric_limits<double>::infinity();
    const auto l = chol_lower.triangularView<Eigen::Lower>();
    const MatrixXd t = l.solve(dx);
    const MatrixXd m = sym(l.solve(MatrixXd(t.transpose())));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues()(0);
    return lo >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lo;
}

inline double max_step_lp(const VectorXd &x, const VectorXd &dx) {
    double a = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (dx(i) < 0.0)
            a = std::min(a, -x(i) / dx(i));
    return a;
}

struct Presolved {
    MatrixXd basis;                  ///< n x r, X = V Xr V^T
    std::vector<std::size_t> kept;   ///< standard-form rows kept
    std::vector<std::size_t> reducers;
    bool inconsistent = false;
    std::string note;
};

inline Presolved presolve(const StandardForm &sf, bool facial_reduction) {
    const auto n = sf.cost.rows();
    const auto m = static_cast<std::size_t>(sf.b.size());
    Presolved p;
    p.basis = MatrixXd::Identity(n, n);
    std::vector<bool> is_reducer(m, false);
    if (facial_reduction) {
        bool changed = true;
        while (changed && p.basis.cols() > 0) {
            changed = false;
            for (std::size_t i = 0; i < m; ++i) {
                if (is_reducer[i] || sf.b(static_cast<Eigen::Index>(i)) != 0.0)
                    continue;
                if (sf.lp.cols() > 0 && sf.lp.row(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff() != 0.0)
                    continue;
                const MatrixXd ar = sym(p.basis.transpose() * sf.a[i] * p.basis);
                const double scale = ar.norm();
                if (scale <= 1e-14 * std::max(1.0, sf.a[i].norm()))
                    continue;
                Eigen::SelfAdjointEigenSolver<MatrixXd> es(ar);
                const auto &ev = es.eigenvalues();
                const double tol = 1e-11 * scale;
                const bool psd = ev(0) >= -tol;
                const bool nsd = ev(ev.size() - 1) <= tol;
                if (!psd && !nsd)
                    continue;
                std::vector<Eigen::Index> null_idx;
                for (Eigen::Index k = 0; k < ev.size(); ++k)
                    if (std::abs(ev(k)) <= tol)
                        null_idx.push_back(k);
                MatrixXd nb(ar.rows(), static_cast<Eigen::Index>(null_idx.size()));
                for (std::size_t k = 0; k < null_idx.size(); ++k)
                    nb.col(static_cast<Eigen::Index>(k)) = es.eigenvectors().col(null_idx[k]);
                p.basis = p.basis * nb;
                is_reducer[i] = true;
                p.reducers.push_back(i);
                changed = true;
            }
        }
    }

    // Greedy independent row selection on [svec(V^T A_i V), B_i].
    const auto r = p.basis.cols();
    std::vector<VectorXd> ortho;
    std::vector<VectorXd> kept_rows;
    for (std::size_t i = 0; i < m; ++i) {
        if (is_reducer[i])
            continue;
        const VectorXd sv = svec(sym(p.basis.transpose() * sf.a[i] * p.basis));
        VectorXd row(sv.size() + sf.lp.cols());
        row << sv, (sf.lp.cols() > 0 ? VectorXd(sf.lp.row(static_cast<Eigen::Index>(i)).transpose()) : VectorXd());
        const double full_norm = std::sqrt(sf.a[i].squaredNorm() +
                                           (sf.lp.cols() > 0 ? sf.lp.row(static_cast<Eigen::Index>(i)).squaredNorm() : 0.0));
        if (row.norm() <= 1e-12 * full_norm)
            row.setZero(); // vanishes on the reduced face
        const double norm = row.norm();
        VectorXd res = row;
        for (const auto &q : ortho)
            res -= q.dot(res) * q;
        for (const auto &q : ortho) // second pass for stability
            res -= q.dot(res) * q;
        if (norm > 0.0 && res.norm() > 1e-9 * norm) {
            ortho.push_back(res / res.norm());
            kept_rows.push_back(row);
            p.kept.push_back(i);
            continue;
        }
        // Dependent row: the right-hand side must follow the same combination.
        double predicted = 0.0;
        if (!kept_rows.empty()) {
            MatrixXd basis_rows(row.size(), static_cast<Eigen::Index>(kept_rows.size()));
            VectorXd bk(static_cast<Eigen::Index>(kept_rows.size()));
            for (std::size_t k = 0; k < kept_rows.size(); ++k) {
                basis_rows.col(static_cast<Eigen::Index>(k)) = kept_rows[k];
                bk(static_cast<Eigen::Index>(k)) = sf.b(static_cast<Eigen::Index>(p.kept[k]));
            }
            const VectorXd coef = basis_rows.completeOrthogonalDecomposition().solve(row);
            predicted = coef.dot(bk);
        }
        const double bi = sf.b(static_cast<Eigen::Index>(i));
        if (std::abs(bi - predicted) > 1e-8 * (1.0 + std::abs(bi))) {
            p.inconsistent = true;
            p.note = "constraint " + std::to_string(i) + " is dependent on others with an inconsistent right-hand side";
        }
    }
    (void)r;
    return p;
}

} // namespace detail

/// Solves the instance. Never throws for numerical trouble; the status and
/// diagnostics say what happened.
inline SdpSolution solve(const SdpInstance &instance, const Options &options = {}) {
    using namespace detail;
    instance.validate();
    const int n_inst = instance.dim();
    const bool affine = instance.affine.has_value();
    const int n = affine ? n_inst + 1 : n_inst;
    if (n_inst > options.max_dimension)
        throw ValidationError("sdp: dimension " + std::to_string(n_inst) + " exceeds cap " +
                              std::to_string(options.max_dimension));

    // ---- standard form ----------------------------------------------------
    StandardForm sf;
    auto pad = [&](const MatrixXd &m) {
        if (!affine)
            return m;
        MatrixXd out = MatrixXd::Zero(n, n);
        out.topLeftCorner(n_inst, n_inst) = m;
        return out;
    };
    sf.cost = pad(instance.cost);
    std::vector<int> slack_of(instance.constraints.size(), -1);
    int n_slack = 0;
    for (std::size_t i = 0; i < instance.constraints.size(); ++i)
        if (instance.constraints[i].sense != Sense::equal)
            slack_of[i] = n_slack++;
    const auto n_affine = affine ? static_cast<std::size_t>(instance.affine->b.size()) : std::size_t{0};
    const auto m_total = instance.constraints.size() + (affine ? n_affine + 1 : 0);
    sf.lp = MatrixXd::Zero(static_cast<Eigen::Index>(m_total), n_slack);
    sf.b.resize(static_cast<Eigen::Index>(m_total));
    for (std::size_t i = 0; i < instance.constraints.size(); ++i) {
        const auto &c = instance.constraints[i];
        sf.a.push_back(pad(c.matrix));
        sf.b(static_cast<Eigen::Index>(i)) = c.rhs;
        if (slack_of[i] >= 0)
            sf.lp(static_cast<Eigen::Index>(i), slack_of[i]) = c.sense == Sense::greater_equal ? -1.0 : 1.0;
    }
    if (affine) {
        for (std::size_t r = 0; r < n_affine; ++r) {
            MatrixXd a = MatrixXd::Zero(n, n);
            a.col(n - 1).head(n_inst) = 0.5 * instance.affine->a.row(static_cast<Eigen::Index>(r)).transpose();
            a.row(n - 1).head(n_inst) = 0.5 * instance.affine->a.row(static_cast<Eigen::Index>(r));
            sf.a.push_back(std::move(a));
            sf.b(static_cast<Eigen::Index>(instance.constraints.size() + r)) =
                instance.affine->b(static_cast<Eigen::Index>(r));
        }
        MatrixXd e = MatrixXd::Zero(n, n);
        e(n - 1, n - 1) = 1.0;
        sf.a.push_back(std::move(e));
        sf.b(static_cast<Eigen::Index>(m_total - 1)) = 1.0;
    }

    SdpSolution sol;
    const auto pre = presolve(sf, options.facial_reduction);
    sol.reduced_dimension = static_cast<int>(pre.basis.cols());
    sol.dropped_constraints = static_cast<int>(m_total - pre.kept.size());
    if (pre.inconsistent) {
        sol.status = Status::infeasible;
        sol.diagnostics = "presolve: " + pre.note;
        return sol;
    }

    // ---- reduced, normalised problem --------------------------------------
    const MatrixXd &v = pre.basis;
    const auto nr = v.cols();
    const auto m = static_cast<Eigen::Index>(pre.kept.size());
    const auto l = static_cast<Eigen::Index>(n_slack);
    MatrixXd cost = sym(v.transpose() * sf.cost * v);
    const double cost_norm = cost.norm();
    const double cost_scale = cost_norm > 0.0 ? 1.0 / cost_norm : 1.0;
    cost *= cost_scale;
    std::vector<MatrixXd> a(static_cast<std::size_t>(m));
    MatrixXd lp(m, l);
    VectorXd b(m), row_scale(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto src = pre.kept[static_cast<std::size_t>(i)];
        MatrixXd ai = sym(v.transpose() * sf.a[src] * v);
        VectorXd bi_lp = l > 0 ? VectorXd(sf.lp.row(static_cast<Eigen::Index>(src)).transpose()) : VectorXd();
        const double norm = std::sqrt(ai.squaredNorm() + bi_lp.squaredNorm());
        row_scale(i) = 1.0 / norm;
        a[static_cast<std::size_t>(i)] = ai * row_scale(i);
        if (l > 0)
            lp.row(i) = bi_lp.transpose() * row_scale(i);
        b(i) = sf.b(static_cast<Eigen::Index>(src)) * row_scale(i);
    }

    auto apply_a = [&](const MatrixXd &x, const VectorXd &xl) {
        VectorXd out(m);
        for (Eigen::Index i = 0; i < m; ++i)
            out(i) = frob_dot(a[static_cast<std::size_t>(i)], x) + (l > 0 ? lp.row(i).dot(xl) : 0.0);
        return out;
    };
    auto apply_at = [&](const VectorXd &y) {
        MatrixXd out = MatrixXd::Zero(nr, nr);
        for (Eigen::Index i = 0; i < m; ++i)
            out += y(i) * a[static_cast<std::size_t>(i)];
        return out;
    };

    // ---- starting point ---------------------------------------------------
    const double dim_total = static_cast<double>(nr + l);
    double xi = std::max(10.0, std::sqrt(static_cast<double>(nr)));
    for (Eigen::Index i = 0; i < m; ++i)
        xi = std::max(xi, static_cast<double>(nr) * (1.0 + std::abs(b(i))) / 2.0);
    const double eta = std::max(10.0, std::sqrt(static_cast<double>(nr)));
    MatrixXd x = xi * MatrixXd::Identity(nr, nr);
    MatrixXd z = eta * MatrixXd::Identity(nr, nr);
    VectorXd xl = VectorXd::Constant(l, xi);
    VectorXd zl = VectorXd::Constant(l, eta);
    VectorXd y = VectorXd::Zero(m);

    const double b_norm = b.norm();
    const double c_norm = cost.norm();
    sol.status = Status::max_iters;
    std::ostringstream diag;

    int iter = 0;
    int stalled = 0;
    int slow = 0;
    for (;; ++iter) {
        const VectorXd rp = b - apply_a(x, xl);
        const MatrixXd rd = cost - apply_at(y) - z;
        const VectorXd rdl = l > 0 ? VectorXd(-lp.transpose() * y - zl) : VectorXd();
        const double pobj = frob_dot(cost, x);
        const double dobj = b.dot(y);
        const double comp = frob_dot(x, z) + (l > 0 ? xl.dot(zl) : 0.0);
        const double mu = comp / dim_total;
        IterationLog log;
        log.iteration = iter;
        log.primal_objective = pobj / cost_scale;
        log.dual_objective = dobj / cost_scale;
        log.complementarity = comp / cost_scale;
        // Same measure as the reported gap; the floor only matters for a zero optimum.
        const double gap_scale = std::max({std::abs(pobj), std::abs(dobj), 1e-6});
        log.relative_gap = std::abs(pobj - dobj) / gap_scale;
        log.primal_infeasibility = rp.norm() / (1.0 + b_norm);
        log.dual_infeasibility = std::sqrt(rd.squaredNorm() + (l > 0 ? rdl.squaredNorm() : 0.0)) / (1.0 + c_norm);
        log.mu = mu;
        const double comp_rel = comp / gap_scale;

        if (log.relative_gap <= options.tolerance && comp_rel <= options.tolerance &&
            log.primal_infeasibility <= options.tolerance && log.dual_infeasibility <= options.tolerance) {
            sol.status = Status::optimal;
            sol.trace.push_back(log);
            break;
        }
        // Short steps near the target: rounding dominates, accept the iterate.
        const double loose = 5.0 * options.tolerance;
        if (slow >= 3 && log.relative_gap <= loose && comp_rel <= loose && log.primal_infeasibility <= loose &&
            log.dual_infeasibility <= loose) {
            sol.status = Status::optimal;
            diag << "accepted at numerical floor (relative gap " << log.relative_gap << ")";
            sol.trace.push_back(log);
            break;
        }
        // Infeasibility certificates from diverging iterates.
        if (dobj > 0.0) {
            const double ray = std::sqrt((cost - rd).squaredNorm() + (l > 0 ? rdl.squaredNorm() : 0.0)) / dobj;
            if (ray < 1e-8 && dobj > 1e6) {
                sol.status = Status::infeasible;
                diag << "primal infeasible: dual ray with b^T y = " << dobj << ", |A^T y + Z| / b^T y = " << ray;
                sol.trace.push_back(log);
                break;
            }
        }
        if (pobj < 0.0) {
            const double ray = (b - rp).norm() / -pobj;
            if (ray < 1e-8 && -pobj > 1e6) {
                sol.status = Status::unbounded;
                diag << "dual infeasible: primal ray with <C,X> = " << pobj;
                sol.trace.push_back(log);
                break;
            }
        }
        if (iter >= options.max_iterations) {
            sol.trace.push_back(log);
            diag << "iteration limit reached";
            break;
        }

        // ---- NT scaling ---------------------------------------------------
        Eigen::LLT<MatrixXd> llt_x(x), llt_z(z);
        if (llt_x.info() != Eigen::Success || llt_z.info() != Eigen::Success) {
            sol.status = Status::numerical_failure;
            diag << "iterate lost positive definiteness at iteration " << iter;
            sol.trace.push_back(log);
            break;
        }
        const MatrixXd lx = llt_x.matrixL();
        const MatrixXd lz = llt_z.matrixL();
        Eigen::JacobiSVD<MatrixXd> svd(lz.transpose() * lx, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const VectorXd d = svd.singularValues();
        const VectorXd d_isqrt = d.cwiseSqrt().cwiseInverse();
        const MatrixXd g = lx * svd.matrixV() * d_isqrt.asDiagonal();                // W = G G^T
        const MatrixXd g_inv = d.cwiseSqrt().asDiagonal() * svd.matrixV().transpose() *
                               lx.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(nr, nr));
        const MatrixXd w = g * g.transpose();
        const VectorXd lp_ratio = l > 0 ? VectorXd(xl.cwiseQuotient(zl)) : VectorXd();

        std::vector<MatrixXd> waw(static_cast<std::size_t>(m));
        for (Eigen::Index j = 0; j < m; ++j)
            waw[static_cast<std::size_t>(j)] = sym(w * a[static_cast<std::size_t>(j)] * w);
        MatrixXd h(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j <= i; ++j) {
                double hij = frob_dot(a[static_cast<std::size_t>(i)], waw[static_cast<std::size_t>(j)]);
                if (l > 0)
                    hij += (lp.row(i).transpose().cwiseProduct(lp_ratio)).dot(lp.row(j).transpose());
                h(i, j) = h(j, i) = hij;
            }
        Eigen::LDLT<MatrixXd> schur(h);
        if (schur.info() != Eigen::Success) {
            sol.status = Status::numerical_failure;
            diag << "Schur complement factorization failed at iteration " << iter;
            sol.trace.push_back(log);
            break;
        }
        const MatrixXd w_rd_w = sym(w * rd * w);

        struct Direction {
            MatrixXd dx, dz;
            VectorXd dxl, dzl, dy;
        };
        auto solve_direction = [&](const MatrixXd &rc, const VectorXd &rcl) {
            Direction dir;
            VectorXd rhs = rp - apply_a(rc - w_rd_w, VectorXd::Zero(l));
            if (l > 0)
                rhs -= lp * (rcl - lp_ratio.cwiseProduct(rdl));
            dir.dy = schur.solve(rhs);
            dir.dz = sym(rd - apply_at(dir.dy));
            dir.dx = sym(rc - w * dir.dz * w);
            if (l > 0) {
                dir.dzl = rdl - lp.transpose() * dir.dy;
                dir.dxl = rcl - lp_ratio.cwiseProduct(dir.dzl);
            } else {
                dir.dzl = dir.dxl = VectorXd();
            }
            return dir;
        };
        auto steps = [&](const Direction &dir) {
            double ap = std::min(max_step_psd(lx, dir.dx), max_step_lp(xl, dir.dxl));
            double ad = std::min(max_step_psd(lz, dir.dz), max_step_lp(zl, dir.dzl));
            return std::pair{std::min(1.0, options.step_fraction * ap), std::min(1.0, options.step_fraction * ad)};
        };

        // Predictor.
        const Direction pred = solve_direction(-x, l > 0 ? VectorXd(-xl) : VectorXd());
        const auto [ap_a, ad_a] = steps(pred);
        const double comp_aff = frob_dot(x + ap_a * pred.dx, z + ad_a * pred.dz) +
                                (l > 0 ? (xl + ap_a * pred.dxl).dot(zl + ad_a * pred.dzl) : 0.0);
        const double mu_aff = comp_aff / dim_total;
        const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);

        // Corrector in the scaled space: (D S + S D)/2 = sigma mu I - D^2 - sym(dX~ dZ~).
        const MatrixXd dxs = g_inv * pred.dx * g_inv.transpose();
        const MatrixXd dzs = g.transpose() * pred.dz * g;
        MatrixXd target = -0.5 * (dxs * dzs + dzs * dxs);
        target.diagonal().array() += sigma * mu;
        target.diagonal() -= d.cwiseProduct(d);
        MatrixXd s_scaled(nr, nr);
        for (Eigen::Index i = 0; i < nr; ++i)
            for (Eigen::Index j = 0; j < nr; ++j)
                s_scaled(i, j) = 2.0 * target(i, j) / (d(i) + d(j));
        const MatrixXd rc = sym(g * s_scaled * g.transpose());
        VectorXd rcl;
        if (l > 0)
            rcl = (VectorXd::Constant(l, sigma * mu) - xl.cwiseProduct(zl) - pred.dxl.cwiseProduct(pred.dzl))
                      .cwiseQuotient(zl);
        const Direction corr = solve_direction(rc, rcl);
        auto [ap, ad] = steps(corr);

        // Rounding can push a nearly singular update off the cone; back off.
        auto backtrack = [](const MatrixXd &base, const MatrixXd &dir, double &alpha) {
            for (int k = 0; k < 30; ++k, alpha *= 0.8) {
                MatrixXd cand = sym(base + alpha * dir);
                if (Eigen::LLT<MatrixXd>(cand).info() == Eigen::Success)
                    return cand;
            }
            return MatrixXd(sym(base + alpha * dir));
        };
        x = backtrack(x, corr.dx, ap);
        z = backtrack(z, corr.dz, ad);
        y += ad * corr.dy;
        if (l > 0) {
            xl += ap * corr.dxl;
            zl += ad * corr.dzl;
        }
        log.sigma = sigma;
        log.step_primal = ap;
        log.step_dual = ad;
        sol.trace.push_back(log);
        if (options.on_iteration)
            options.on_iteration(log);
        if (options.verbosity > 0)
            std::clog << log.to_line() << '\n';

        stalled = (ap < 1e-10 && ad < 1e-10) ? stalled + 1 : 0;
        slow = std::min(ap, ad) < 1e-2 ? slow + 1 : 0;
        if (stalled >= 3 || !x.allFinite() || !z.allFinite() || !y.allFinite()) {
            sol.status = Status::numerical_failure;
            diag << "no progress (step lengths " << ap << ", " << ad << ") at iteration " << iter;
            break;
        }
    }
    sol.iterations = iter;

    // ---- map back -----------------------------------------------------------
    const MatrixXd x_full = sym(v * x * v.transpose());
    VectorXd y_full = VectorXd::Zero(static_cast<Eigen::Index>(m_total));
    for (Eigen::Index i = 0; i < m; ++i)
        y_full(static_cast<Eigen::Index>(pre.kept[static_cast<std::size_t>(i)])) = y(i) * row_scale(i) / cost_scale;

    auto dual_slack = [&](const VectorXd &yy) {
        MatrixXd zz = sf.cost;
        for (std::size_t i = 0; i < m_total; ++i)
            zz -= yy(static_cast<Eigen::Index>(i)) * sf.a[i];
        return sym(zz);
    };

    if (nr < n) {
        // Reconstruct multipliers of homogeneous equality rows so that the
        // full-space dual slack has no component coupling range(V) with its
        // complement: V^T Z V unchanged, V^T Z N = 0, N^T Z N = 0.
        Eigen::HouseholderQR<MatrixXd> qr(v);
        const MatrixXd q_full = qr.householderQ();
        const MatrixXd nb = q_full.rightCols(n - nr);
        std::vector<std::size_t> free_rows;
        for (std::size_t i = 0; i < m_total; ++i) {
            const bool homogeneous = sf.b(static_cast<Eigen::Index>(i)) == 0.0 &&
                                     (l == 0 || sf.lp.row(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff() == 0.0);
            if (homogeneous)
                free_rows.push_back(i);
        }
        if (!free_rows.empty()) {
            const MatrixXd w0 = dual_slack(y_full);
            const auto nvv = nr * (nr + 1) / 2;
            const auto nvn = nr * (n - nr);
            const auto nnn = (n - nr) * (n - nr + 1) / 2;
            MatrixXd sys(nvv + nvn + nnn, static_cast<Eigen::Index>(free_rows.size()));
            for (std::size_t k = 0; k < free_rows.size(); ++k) {
                const MatrixXd &ai = sf.a[free_rows[k]];
                VectorXd col(sys.rows());
                const MatrixXd vn = v.transpose() * ai * nb;
                col << svec(sym(v.transpose() * ai * v)), Eigen::Map<const VectorXd>(vn.data(), vn.size()),
                    svec(sym(nb.transpose() * ai * nb));
                sys.col(static_cast<Eigen::Index>(k)) = col;
            }
            VectorXd rhs(sys.rows());
            const MatrixXd wvn = v.transpose() * w0 * nb;
            rhs << VectorXd::Zero(nvv), Eigen::Map<const VectorXd>(wvn.data(), wvn.size()),
                svec(sym(nb.transpose() * w0 * nb));
            const VectorXd delta = sys.completeOrthogonalDecomposition().solve(rhs);
            for (std::size_t k = 0; k < free_rows.size(); ++k)
                y_full(static_cast<Eigen::Index>(free_rows[k])) += delta(static_cast<Eigen::Index>(k));
        }
    }

    const auto n_cons = static_cast<Eigen::Index>(instance.constraints.size());
    sol.multipliers = y_full.head(n_cons);
    sol.dual_slack = dual_slack(y_full);
    if (affine) {
        sol.lifted = x_full;
        sol.primal = x_full.topLeftCorner(n_inst, n_inst);
        sol.primal_vector = x_full.col(n - 1).head(n_inst);
        sol.affine_multipliers = y_full.segment(n_cons, static_cast<Eigen::Index>(n_affine));
        sol.schur_multiplier = y_full(static_cast<Eigen::Index>(m_total - 1));
    } else {
        sol.primal = x_full;
    }
    sol.primal_objective = frob_dot(sf.cost, x_full);
    sol.dual_objective = sf.b.dot(y_full);
    sol.relative_gap = std::abs(sol.primal_objective - sol.dual_objective) /
                       std::max({std::abs(sol.primal_objective), std::abs(sol.dual_objective), 1e-300});
    sol.diagnostics = diag.str();
    return sol;
}

/// Optimality residuals recomputed from the instance and the returned
/// primal/dual pair. All values are relative and dimensionless.
struct KktReport {
    double primal_psd = 0.0;      ///< C* >= 0
    double equality = 0.0;        ///< homogeneous / KVL equalities
    double received_power = 0.0;  ///< normalisation equality
    double inequality = 0.0;      ///< power constraints
    double dual_sign = 0.0;       ///< lambda >= 0 (sign per sense)
    double dual_psd = 0.0;        ///< Q* >= 0
    double complementarity = 0.0; ///< tr(Q* C*)
    double dual_slack_mismatch = 0.0; ///< Q* rebuilt from multipliers vs returned

    double max() const {
        return std::max({primal_psd, equality, received_power, inequality, dual_sign, dual_psd, complementarity});
    }

    std::string to_string() const {
        char buf[320];
        std::snprintf(buf, sizeof buf,
                      "primal_psd=%.3e equality=%.3e received_power=%.3e inequality=%.3e dual_sign=%.3e "
                      "dual_psd=%.3e complementarity=%.3e",
                      primal_psd, equality, received_power, inequality, dual_sign, dual_psd, complementarity);
        return buf;
    }
};

inline KktReport check_kkt(const SdpInstance &instance, const SdpSolution &solution) {
    using detail::frob_dot;
    KktReport rep;
    const bool affine = instance.affine.has_value();
    const int n_inst = instance.dim();
    const MatrixXd x = affine ? solution.lifted : solution.primal;
    const auto n = x.rows();
    const double x_norm = std::max(x.norm(), 1e-300);

    auto pad = [&](const MatrixXd &m) {
        if (!affine)
            return m;
        MatrixXd out = MatrixXd::Zero(n, n);
        out.topLeftCorner(n_inst, n_inst) = m;
        return out;
    };

    rep.primal_psd = std::max(0.0, -min_eigenvalue(detail::sym(x))) / x_norm;

    MatrixXd q = pad(instance.cost);
    double q_scale = instance.cost.norm();
    const double y_max = solution.multipliers.size() ? solution.multipliers.cwiseAbs().maxCoeff() : 0.0;
    for (std::size_t i = 0; i < instance.constraints.size(); ++i) {
        const auto &c = instance.constraints[i];
        const double yi = solution.multipliers(static_cast<Eigen::Index>(i));
        const double lhs = frob_dot(c.matrix, solution.primal);
        const double scale = std::max({std::abs(c.rhs), c.matrix.norm() * solution.primal.norm(), 1e-300});
        double viol = 0.0;
        switch (c.sense) {
        case Sense::equal: viol = std::abs(lhs - c.rhs); break;
        case Sense::greater_equal:
            viol = std::max(0.0, c.rhs - lhs);
            rep.dual_sign = std::max(rep.dual_sign, std::max(0.0, -yi) / std::max(1.0, y_max));
            break;
        case Sense::less_equal:
            viol = std::max(0.0, lhs - c.rhs);
            rep.dual_sign = std::max(rep.dual_sign, std::max(0.0, yi) / std::max(1.0, y_max));
            break;
        }
        viol /= scale;
        if (c.sense != Sense::equal)
            rep.inequality = std::max(rep.inequality, viol);
        else if (c.role == Role::received_power)
            rep.received_power = std::max(rep.received_power, viol);
        else
            rep.equality = std::max(rep.equality, viol);
        q -= yi * pad(c.matrix);
        q_scale += std::abs(yi) * c.matrix.norm();
    }
    if (affine) {
        const auto &blk = *instance.affine;
        const VectorXd &cv = solution.primal_vector;
        for (Eigen::Index r = 0; r < blk.b.size(); ++r) {
            const double lhs = blk.a.row(r).dot(cv);
            const double scale = std::max({std::abs(blk.b(r)), blk.a.row(r).norm() * cv.norm(), 1e-300});
            const double viol = std::abs(lhs - blk.b(r)) / scale;
            const Role role = blk.roles.empty() ? Role::generic : blk.roles[static_cast<std::size_t>(r)];
            if (role == Role::received_power)
                rep.received_power = std::max(rep.received_power, viol);
            else
                rep.equality = std::max(rep.equality, viol);
            const double yr = solution.affine_multipliers(r);
            q.col(n - 1).head(n_inst) -= 0.5 * yr * blk.a.row(r).transpose();
            q.row(n - 1).head(n_inst) -= 0.5 * yr * blk.a.row(r);
            q_scale += std::abs(yr) * blk.a.row(r).norm();
        }
        rep.equality = std::max(rep.equality, std::abs(x(n - 1, n - 1) - 1.0));
        q(n - 1, n - 1) -= solution.schur_multiplier;
        q_scale += std::abs(solution.schur_multiplier);
    }
    q = detail::sym(q);
    q_scale = std::max(q_scale, 1e-300);
    rep.dual_psd = std::max(0.0, -min_eigenvalue(q)) / q_scale;
    rep.complementarity = std::abs(frob_dot(q, x)) / (q_scale * x_norm);
    if (solution.dual_slack.rows() == q.rows())
        rep.dual_slack_mismatch = (q - solution.dual_slack).norm() / q_scale;
    else
        rep.dual_slack_mismatch = std::numeric_limits<double>::infinity();
    return rep;
}

} // namespace wpt::sdp
