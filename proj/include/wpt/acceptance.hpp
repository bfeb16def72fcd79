// SPDX-License-Identifier: Apache-2.0
//
// Acceptance criteria for the full solver chain. Each criterion returns a
// pass flag plus a one-line detail string with the measured worst case.

#pragma once

#include "wpt/oracle.hpp"
#include "wpt/report.hpp"

#include <chrono>
#include <functional>
#include <random>

namespace wpt::acceptance {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;

    std::string line() const {
        char buf[64];
        std::snprintf(buf, sizeof buf, " (%.2fs)", seconds);
        return std::string(passed ? "PASS" : "FAIL") + " [" + std::to_string(id) + "] " + name + ": " + detail + buf;
    }
};

namespace detail {

inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

inline double median(std::vector<double> v) {
    if (v.empty())
        return 0.0;
    std::sort(v.begin(), v.end());
    const auto m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double percentile(std::vector<double> v, double q) {
    if (v.empty())
        return 0.0;
    std::sort(v.begin(), v.end());
    return v[static_cast<std::size_t>(std::round(q * static_cast<double>(v.size() - 1)))];
}

inline ImpedanceMatrix preset_system(Preset p, double d_lambda, double theta_deg, bool radiation = true) {
    auto g = GeometrySpec::from_preset(p, default_frequency_hz, d_lambda * wavelength(default_frequency_hz),
                                       theta_deg * constants::pi / 180.0);
    g.radiation_coupling = radiation;
    return build_loop_system(g, default_frequency_hz);
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

/// Full-angle sweeps at d = 0.1 lambda for every preset, shared by several
/// criteria.
struct SweepSet {
    std::vector<SweepReport> conic;
    std::vector<SweepReport> affine;
};

inline SweepSet run_sweeps(int workers) {
    SweepSet s;
    for (auto form : {SdrForm::conic, SdrForm::affine})
        for (auto p : all_presets) {
            SweepSpec spec;
            spec.source.preset = p;
            spec.theta = {-90.0, 90.0, 2.0};
            spec.form = form;
            (form == SdrForm::conic ? s.conic : s.affine).push_back(run_sweep(spec, workers));
        }
    return s;
}

/// Random passive 3-port (two transmitters plus receiver) whose closed-form
/// drive has a negative transmitter power.
inline ImpedanceMatrix random_binding_system(std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> r_self(0.5, 2.0), rho(-0.3, 0.3), x_self(-20.0, 20.0), x_mut(-5.0, 5.0);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        MatrixXd r = MatrixXd::Zero(3, 3), x = MatrixXd::Zero(3, 3);
        for (int i = 0; i < 3; ++i) {
            r(i, i) = r_self(rng);
            x(i, i) = x_self(rng);
        }
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j) {
                r(i, j) = r(j, i) = rho(rng) * std::sqrt(r(i, i) * r(j, j));
                x(i, j) = x(j, i) = x_mut(rng);
            }
        ImpedanceMatrix z(r.cast<cdouble>() + cdouble(0, 1) * x.cast<cdouble>(), default_frequency_hz);
        if (mutual_q(z) < 1e-3)
            continue;
        if (solve_closed_form(z).p_t.minCoeff() < -1e-3)
            return z;
    }
    throw SolverError("random_binding_system: no binding system generated");
}

} // namespace detail

/// SISO collapse: general mutual-Q and closed-form efficiency/load against
/// the two-coil formulas written out here.
inline CriterionResult siso_collapse() {
    CriterionResult c{1, "SISO collapse", false, {}, 0.0};
    double worst = 0.0;
    auto check = [&](const ImpedanceMatrix &z) {
        const auto e = z.entries();
        const double r_t = e(0, 0).real(), r_r = e(1, 1).real();
        const double x_m = e(0, 1).imag();
        const double u_siso = std::abs(x_m) / std::sqrt(r_t * r_r);
        const double eta_siso = u_siso * u_siso / std::pow(1.0 + std::sqrt(1.0 + u_siso * u_siso), 2);
        const double rl_siso = r_r * std::sqrt(1.0 + u_siso * u_siso);
        const auto cf = solve_closed_form(z);
        worst = std::max({worst, detail::rel(mutual_q(z), u_siso), detail::rel(cf.eta_max, eta_siso),
                          detail::rel(cf.r_l_opt, rl_siso), detail::rel(cf.eta_res, eta_siso)});
    };
    int systems = 0;
    for (double d : {0.05, 0.1, 0.2})
        for (double th = -90.0; th <= 90.0; th += 15.0) {
            const auto z = detail::preset_system(Preset::siso, d, th, false);
            if (mutual_q(z) == 0.0)
                continue;
            check(z);
            ++systems;
        }
    MatrixXcd hand(2, 2);
    hand << cdouble(1, 10), cdouble(0, 2), cdouble(0, 2), cdouble(1, 10);
    check(ImpedanceMatrix(hand, default_frequency_hz));
    ++systems;
    const double spot = max_pte(2.0);
    const bool spot_ok = std::abs(spot - 0.381966) < 5e-7;
    c.passed = worst <= 1e-12 && spot_ok;
    c.detail = std::to_string(systems) + " systems, worst rel " + detail::sci(worst) + ", eta_max(U=2)=" +
               std::to_string(spot);
    return c;
}

/// QP optimum = unconstrained SDR optimum = brute-force optimum.
inline CriterionResult convex_chain() {
    CriterionResult c{2, "convex-chain equivalence", false, {}, 0.0};
    double worst = 0.0;
    int points = 0, failures = 0;
    for (auto p : all_presets)
        for (double d : {0.05, 0.1, 0.2})
            for (double th : {0.0, 18.0, 60.0}) {
                ++points;
                try {
                    const auto z = detail::preset_system(p, d, th);
                    const auto cf = solve_closed_form(z);
                    const auto qp = solve_min_loss_qp(z, cf.r_l_opt);
                    const auto q = build_qcqp(z, cf.r_l_opt, {ConstraintMode::none, {}});
                    const auto relax = solve_relaxation(q);
                    const auto orc = oracle::brute_force_qcqp(
                        q, {}, z.n_ports() <= 3 ? oracle::Method::grid : oracle::Method::multistart);
                    if (!relax.solution.optimal()) {
                        ++failures;
                        continue;
                    }
                    worst = std::max({worst, detail::rel(relax.p_l_relax, qp.p_loss), orc.agreement(qp.p_loss),
                                      orc.agreement(relax.p_l_relax)});
                } catch (const Error &) {
                    ++failures;
                }
            }
    c.passed = failures == 0 && worst <= 1e-6;
    c.detail = std::to_string(points) + " points, " + std::to_string(failures) + " failures, worst rel " +
               detail::sci(worst);
    return c;
}

inline CriterionResult tightness(const detail::SweepSet &s) {
    CriterionResult c{3, "tightness", false, {}, 0.0};
    std::vector<double> eps;
    int failures = 0, skipped = 0, rows = 0;
    for (const auto &rep : s.conic)
        for (const auto &r : rep.records) {
            ++rows;
            if (r.failed()) {
                ++failures;
                continue;
            }
            if (r.result.skipped) {
                ++skipped;
                continue;
            }
            eps.push_back(r.result.epsilon);
        }
    const double mx = eps.empty() ? 0.0 : *std::max_element(eps.begin(), eps.end());
    c.passed = failures == 0 && mx <= 1e-8;
    c.detail = std::to_string(rows) + " rows, " + std::to_string(eps.size()) + " solved, " + std::to_string(skipped) +
               " skipped, " + std::to_string(failures) + " failed; eps min " +
               detail::sci(eps.empty() ? 0.0 : *std::min_element(eps.begin(), eps.end())) + " median " +
               detail::sci(detail::median(eps)) + " p90 " + detail::sci(detail::percentile(eps, 0.9)) + " max " +
               detail::sci(mx);
    return c;
}

inline CriterionResult nonnegativity(const detail::SweepSet &s) {
    CriterionResult c{4, "nonnegative transmit powers", false, {}, 0.0};
    double min_sdr = INFINITY;
    int failures = 0;
    std::string lobes;
    bool all_lobes = true;
    for (const auto *set : {&s.conic, &s.affine})
        for (const auto &rep : *set) {
            double min_cf = INFINITY;
            for (const auto &r : rep.records) {
                if (r.failed()) {
                    ++failures;
                    continue;
                }
                min_sdr = std::min(min_sdr, r.result.point.transmit_powers.minCoeff());
                min_cf = std::min(min_cf, r.result.p_cf.minCoeff());
            }
            if (set == &s.conic && *rep.spec.source.preset != Preset::siso) {
                const bool lobe = min_cf < 0.0;
                all_lobes = all_lobes && lobe;
                lobes += std::string(lobes.empty() ? "" : ", ") + std::string(preset_name(*rep.spec.source.preset)) +
                         " " + detail::sci(min_cf);
            }
        }
    c.passed = failures == 0 && min_sdr >= -1e-9 && all_lobes;
    c.detail = "min SDR power " + detail::sci(min_sdr) + " W; min closed-form power per MISO sweep: " + lobes;
    return c;
}

inline CriterionResult small_degradation(const detail::SweepSet &s) {
    CriterionResult c{5, "small degradation", false, {}, 0.0};
    std::vector<double> drops;
    double worst_excess = -INFINITY;
    int failures = 0;
    for (const auto *set : {&s.conic, &s.affine})
        for (const auto &rep : *set)
            for (const auto &r : rep.records) {
                if (r.failed()) {
                    ++failures;
                    continue;
                }
                worst_excess = std::max(worst_excess, r.result.eta() - r.result.eta_cf);
                if (!r.result.skipped && set == &s.conic)
                    drops.push_back(r.result.eta_cf - r.result.eta());
            }
    const double mx = drops.empty() ? 0.0 : *std::max_element(drops.begin(), drops.end());
    const double med = detail::median(drops);
    c.passed = failures == 0 && mx <= 0.05 && med < 0.01 && worst_excess <= 1e-12;
    c.detail = std::to_string(drops.size()) + " binding points, max drop " + detail::sci(mx) + " median " +
               detail::sci(med) + ", max (eta_sdr - eta_cf) " + detail::sci(worst_excess);
    return c;
}

/// Analytic PIM eigenpairs against a numerical eigensolver, plus the split.
inline CriterionResult pim_appendix() {
    CriterionResult c{6, "PIM eigensystem and split", false, {}, 0.0};
    double worst_val = 0.0, worst_vec = 0.0, worst_split = 0.0;
    int pims = 0;
    auto check = [&](const PortImpedanceMatrix &t) {
        ++pims;
        const auto es = pim_eigensystem(t);
        Eigen::SelfAdjointEigenSolver<MatrixXcd> num(t.matrix);
        const VectorXd &ev = num.eigenvalues();
        const auto size = ev.size();
        const double scale = ev.cwiseAbs().maxCoeff();
        worst_val = std::max(worst_val, std::abs(ev(size - 1) - es.lambda_pos) / scale);
        worst_val = std::max(worst_val, std::abs(ev(0) + es.lambda_neg) / scale);
        for (Eigen::Index k = 1; k + 1 < size; ++k)
            worst_val = std::max(worst_val, std::abs(ev(k)) / scale);
        auto projector = [](const VectorXcd &v) { return MatrixXcd(v * v.adjoint() / v.squaredNorm()); };
        worst_vec = std::max(worst_vec, (projector(es.v_pos) - projector(num.eigenvectors().col(size - 1))).norm());
        if (!es.rank_one)
            worst_vec = std::max(worst_vec, (projector(es.v_neg) - projector(num.eigenvectors().col(0))).norm());
        const auto sp = pim_split(es);
        const double tn = t.matrix.norm();
        worst_split = std::max(worst_split, (t.matrix - (sp.positive - sp.negative)).norm() / tn);
        worst_split = std::max(worst_split, std::abs((sp.positive + sp.negative).trace().real() -
                                                     (es.lambda_pos + es.lambda_neg)) / tn);
        Eigen::SelfAdjointEigenSolver<MatrixXcd> pos(sp.positive), neg(sp.negative);
        worst_split = std::max({worst_split, std::max(0.0, -pos.eigenvalues().minCoeff()) / tn,
                                std::max(0.0, -neg.eigenvalues().minCoeff()) / tn});
    };
    for (auto p : all_presets)
        for (double d : {0.05, 0.1, 0.2})
            for (double th : {0.0, 18.0, 60.0}) {
                const auto z = detail::preset_system(p, d, th);
                for (const auto &t : port_impedance_matrices(z))
                    check(t);
                for (const auto &t : port_impedance_matrices(apply_receiver_loading(z, solve_closed_form(z).r_l_opt)))
                    check(t);
            }
    c.passed = worst_val <= 1e-10 && worst_vec <= 1e-10 && worst_split <= 1e-12;
    c.detail = std::to_string(pims) + " PIMs, eigenvalue " + detail::sci(worst_val) + ", eigenvector projector " +
               detail::sci(worst_vec) + ", split " + detail::sci(worst_split);
    return c;
}

inline CriterionResult kkt_duality(const detail::SweepSet &s) {
    CriterionResult c{7, "KKT and duality", false, {}, 0.0};
    double kkt = 0.0, gap = 0.0;
    int iters = 0, solves = 0, failures = 0;
    for (const auto *set : {&s.conic, &s.affine})
        for (const auto &rep : *set)
            for (const auto &r : rep.records) {
                if (r.failed()) {
                    ++failures;
                    continue;
                }
                if (r.result.skipped)
                    continue;
                ++solves;
                kkt = std::max(kkt, r.result.kkt.max());
                gap = std::max(gap, r.result.gap);
                iters = std::max(iters, r.result.iterations);
            }
    c.passed = failures == 0 && kkt <= 1e-8 && gap <= 1e-9 && iters <= 60;
    c.detail = std::to_string(solves) + " solves (conic+affine), max KKT residual " + detail::sci(kkt) + ", max gap " +
               detail::sci(gap) + ", max iterations " + std::to_string(iters);
    return c;
}

inline CriterionResult load_optimization() {
    CriterionResult c{8, "load optimization", false, {}, 0.0};
    double worst_rl = 0.0, worst_flat = 0.0;
    int cases = 0;
    PipelineOptions o;
    o.constraints = {ConstraintMode::none, {}};
    for (auto p : all_presets)
        for (double th : {0.0, 30.0}) {
            ++cases;
            const auto z = detail::preset_system(p, 0.1, th);
            const auto cf = solve_closed_form(z);
            const auto lo = optimize_load(z, o);
            worst_rl = std::max(worst_rl, detail::rel(lo.load_resistance, cf.r_l_opt));
            for (double f : {0.9, 1.1}) {
                auto oo = o;
                oo.load_resistance = f * lo.load_resistance;
                const auto r = full_pipeline(z, oo);
                worst_flat = std::max(worst_flat, (lo.result.eta() - r.eta()) / lo.result.eta());
            }
        }
    c.passed = worst_rl <= 1e-3 && worst_flat <= 0.01;
    c.detail = std::to_string(cases) + " cases, worst R_L rel err " + detail::sci(worst_rl) +
               ", worst eta loss at +-10% " + detail::sci(worst_flat);
    return c;
}

inline CriterionResult oracle_equivalence(std::uint64_t seed = 20240611) {
    CriterionResult c{9, "oracle equivalence (constrained MISO-2)", false, {}, 0.0};
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    int failures = 0;
    for (int k = 0; k < 10; ++k) {
        try {
            const auto z = detail::random_binding_system(rng);
            const auto r = full_pipeline(z);
            if (!r.ok() || r.skipped) {
                ++failures;
                continue;
            }
            const auto q = build_qcqp(z, r.load_resistance);
            const auto orc = oracle::brute_force_qcqp(q, {}, oracle::Method::grid);
            worst = std::max(worst, orc.agreement(r.c.dot(q.q0 * r.c)));
        } catch (const Error &) {
            ++failures;
        }
    }
    c.passed = failures == 0 && worst <= 1e-4;
    c.detail = "10 random passive systems, " + std::to_string(failures) + " failures, worst rel objective " +
               detail::sci(worst);
    return c;
}

/// Runs all criteria in order; `on_result` sees each one as it finishes.
inline std::vector<CriterionResult> run_acceptance(const std::function<void(const CriterionResult &)> &on_result = {},
                                                   int workers = worker_count()) {
    std::vector<CriterionResult> out;
    auto timed = [&](auto &&fn) {
        const auto t0 = std::chrono::steady_clock::now();
        CriterionResult r;
        try {
            r = fn();
        } catch (const std::exception &e) {
            r.passed = false;
            r.detail = std::string("exception: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return r;
    };
    auto push = [&](CriterionResult r, int id, const char *name) {
        if (r.id == 0) {
            r.id = id;
            r.name = name;
        }
        if (on_result)
            on_result(r);
        out.push_back(std::move(r));
    };
    push(timed(siso_collapse), 1, "SISO collapse");
    push(timed(convex_chain), 2, "convex-chain equivalence");
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<detail::SweepSet> sweeps;
    std::string sweep_error;
    try {
        sweeps = detail::run_sweeps(workers);
    } catch (const std::exception &e) {
        sweep_error = e.what();
    }
    const double sweep_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto on_sweeps = [&](CriterionResult (*fn)(const detail::SweepSet &), int id, const char *name) {
        if (!sweeps) {
            push(CriterionResult{id, name, false, "sweep failed: " + sweep_error, sweep_seconds}, id, name);
            return;
        }
        auto r = timed([&] { return fn(*sweeps); });
        r.seconds += sweep_seconds;
        push(std::move(r), id, name);
    };
    on_sweeps(tightness, 3, "tightness");
    on_sweeps(nonnegativity, 4, "nonnegative transmit powers");
    on_sweeps(small_degradation, 5, "small degradation");
    push(timed(pim_appendix), 6, "PIM eigensystem and split");
    on_sweeps(kkt_duality, 7, "KKT and duality");
    push(timed(load_optimization), 8, "load optimization");
    push(timed([] { return oracle_equivalence(); }), 9, "oracle equivalence (constrained MISO-2)");
    return out;
}

} // namespace wpt::acceptance
