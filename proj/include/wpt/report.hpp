// SPDX-License-Identifier: Apache-2.0
//
// Sweeps over receiver angle and distance, a small worker pool, and the CSV
// emitters for per-point records and polar pattern data.

#pragma once

#include "wpt/sdr.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

namespace wpt {

inline constexpr std::string_view library_version = "1.0.0";
inline constexpr const char *workers_env = "WPT_WORKERS";

enum class LoadPolicy { closed_form, fixed, optimize };

struct LoadSpec {
    LoadPolicy policy = LoadPolicy::closed_form;
    double value = 0.0; ///< ohms, fixed policy only
};

inline LoadSpec parse_load_spec(std::string_view s) {
    if (s == "auto")
        return {};
    if (s == "optimize")
        return {LoadPolicy::optimize, 0.0};
    try {
        std::size_t pos = 0;
        const double v = std::stod(std::string(s), &pos);
        if (pos != s.size() || !(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument("bad");
        return {LoadPolicy::fixed, v};
    } catch (const std::exception &) {
        throw ValidationError("--rl expects auto, optimize or a positive resistance in ohms, got '" + std::string(s) +
                              "'");
    }
}

inline std::string load_spec_name(const LoadSpec &l) {
    switch (l.policy) {
    case LoadPolicy::closed_form: return "auto";
    case LoadPolicy::optimize: return "optimize";
    case LoadPolicy::fixed: break;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", l.value);
    return buf;
}

inline std::vector<double> parse_number_list(std::string_view s, std::string_view what) {
    std::vector<double> out;
    std::string item;
    std::stringstream ss{std::string(s)};
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size() || !std::isfinite(out.back()))
                throw std::invalid_argument("bad");
        } catch (const std::exception &) {
            throw ValidationError(std::string(what) + ": cannot parse '" + item + "' as a number");
        }
    }
    if (out.empty())
        throw ValidationError(std::string(what) + ": empty list");
    return out;
}

/// "none", "nonneg" or "caps=<w1>,<w2>,...".
inline PowerConstraints parse_constraints(std::string_view s) {
    if (s == "none")
        return {ConstraintMode::none, {}};
    if (s == "nonneg")
        return {ConstraintMode::nonnegative, {}};
    if (s.substr(0, 5) == "caps=") {
        const auto v = parse_number_list(s.substr(5), "--constraints caps");
        return {ConstraintMode::caps, Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))};
    }
    throw ValidationError("--constraints expects none, nonneg or caps=<w,...>, got '" + std::string(s) + "'");
}

inline std::string constraints_name(const PowerConstraints &pc) {
    if (pc.mode != ConstraintMode::caps)
        return std::string(constraint_mode_name(pc.mode));
    std::string out = "caps=";
    for (Eigen::Index k = 0; k < pc.caps.size(); ++k) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%s%.17g", k ? "," : "", pc.caps(k));
        out += buf;
    }
    return out;
}

struct ThetaRange {
    double start = 0.0;
    double stop = 0.0;
    double step = 1.0;

    std::vector<double> values() const {
        std::vector<double> out;
        const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
        for (long k = 0; k < count; ++k)
            out.push_back(start + static_cast<double>(k) * step);
        return out;
    }
};

/// "<deg>" or "<start>:<stop>:<step>" in degrees.
inline ThetaRange parse_theta_range(std::string_view s) {
    const auto v = [&] {
        std::string t(s);
        std::replace(t.begin(), t.end(), ':', ',');
        return parse_number_list(t, "--theta-range");
    }();
    if (v.size() == 1)
        return {v[0], v[0], 1.0};
    if (v.size() != 3)
        throw ValidationError("--theta-range expects <deg> or <start>:<stop>:<step>");
    if (!(v[2] > 0.0))
        throw ValidationError("--theta-range: step must be positive");
    if (v[1] < v[0])
        throw ValidationError("--theta-range: stop must not be below start");
    return {v[0], v[1], v[2]};
}

struct SystemSource {
    std::optional<Preset> preset;
    std::optional<ImpedanceMatrix> matrix;
    std::string matrix_path;
    double frequency_hz = default_frequency_hz;

    std::string name() const {
        return preset ? "preset:" + std::string(preset_name(*preset)) : "matrix:" + matrix_path;
    }
};

struct SweepSpec {
    SystemSource source;
    ThetaRange theta;
    std::vector<double> d_lambda{0.1};
    LoadSpec load;
    PowerConstraints constraints;
    SdrForm form = SdrForm::conic;
    double tolerance = 1e-10;

    void validate() const {
        if (!source.preset && !source.matrix)
            throw ValidationError("sweep: need a preset or a matrix file");
        if (d_lambda.empty())
            throw ValidationError("sweep: empty distance list");
        for (double d : d_lambda)
            if (!(d > 0.0))
                throw ValidationError("sweep: distances must be positive");
        if (!(theta.step > 0.0) || theta.stop < theta.start)
            throw ValidationError("sweep: invalid angle range");
        if (!(tolerance > 0.0))
            throw ValidationError("sweep: tolerance must be positive");
        if (constraints.mode == ConstraintMode::caps) {
            const auto nt = source.matrix ? source.matrix->n_tx()
                                          : static_cast<Eigen::Index>(
                                                GeometrySpec::from_preset(*source.preset, source.frequency_hz, 1.0, 0.0)
                                                    .transmitters.size());
            if (constraints.caps.size() != nt)
                throw ValidationError("sweep: caps= needs one value per transmitter (" + std::to_string(nt) + ")");
        }
    }
};

struct SweepRecord {
    std::size_t index = 0;
    double theta_deg = std::numeric_limits<double>::quiet_NaN();
    double d_lambda = std::numeric_limits<double>::quiet_NaN();
    int n_tx = 0;
    SdrResult result;
    std::string error;
    int error_code = 0;

    bool failed() const { return !error.empty() || !result.ok(); }
};

struct SweepReport {
    SweepSpec spec;
    std::vector<SweepRecord> records;

    int worst_exit_code() const {
        int code = 0;
        for (const auto &r : records) {
            if (r.error_code)
                code = std::max(code, r.error_code);
            else if (!r.result.ok())
                code = std::max(code, static_cast<int>(ErrorKind::solver));
        }
        return code;
    }
};

inline int worker_count() {
    if (const char *env = std::getenv(workers_env)) {
        char *end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v > 0)
            return static_cast<int>(std::min(v, 256L));
        throw ValidationError(std::string(workers_env) + " must be a positive integer");
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Runs `task(i)` for i in [0, n) on `workers` threads. Results must be
/// written by index; scheduling order never affects them.
template <class Task> void parallel_for(std::size_t n, int workers, Task &&task) {
    const auto threads = static_cast<std::size_t>(std::max(1, workers));
    if (threads == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i)
            task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++)
                task(i);
        });
    for (auto &th : pool)
        th.join();
}

inline ImpedanceMatrix system_for(const SystemSource &src, double d_lambda, double theta_deg) {
    if (src.matrix)
        return *src.matrix;
    const double lam = wavelength(src.frequency_hz);
    const auto g = GeometrySpec::from_preset(*src.preset, src.frequency_hz, d_lambda * lam, theta_deg * constants::pi / 180.0);
    return build_loop_system(g, src.frequency_hz);
}

inline SdrResult solve_point(const ImpedanceMatrix &z, const LoadSpec &load, const PowerConstraints &constraints,
                             SdrForm form, double tolerance) {
    PipelineOptions o;
    o.constraints = constraints;
    o.sdr.form = form;
    o.sdr.solver.tolerance = tolerance;
    switch (load.policy) {
    case LoadPolicy::closed_form: return full_pipeline(z, o);
    case LoadPolicy::fixed: o.load_resistance = load.value; return full_pipeline(z, o);
    case LoadPolicy::optimize: {
        auto lo = optimize_load(z, o);
        for (auto &w : lo.warnings)
            lo.result.warnings.push_back(w);
        return lo.result;
    }
    }
    return full_pipeline(z, o);
}

/// One record per (d, theta) point; a matrix source ignores geometry and
/// yields a single record.
inline SweepReport run_sweep(const SweepSpec &spec, int workers = worker_count()) {
    spec.validate();
    SweepReport rep;
    rep.spec = spec;
    std::vector<std::pair<double, double>> points;
    if (spec.source.matrix) {
        points.emplace_back(std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN());
    } else {
        for (double d : spec.d_lambda)
            for (double th : spec.theta.values())
                points.emplace_back(d, th);
    }
    rep.records.resize(points.size());
    parallel_for(points.size(), workers, [&](std::size_t i) {
        auto &rec = rep.records[i];
        rec.index = i;
        rec.d_lambda = points[i].first;
        rec.theta_deg = points[i].second;
        try {
            const auto z = system_for(spec.source, rec.d_lambda, rec.theta_deg);
            rec.n_tx = z.n_tx();
            rec.result = solve_point(z, spec.load, spec.constraints, spec.form, spec.tolerance);
            if (!rec.result.ok())
                rec.error_code = static_cast<int>(ErrorKind::solver);
        } catch (const Error &e) {
            rec.error = e.what();
            rec.error_code = e.exit_code();
        } catch (const std::exception &e) {
            rec.error = e.what();
            rec.error_code = static_cast<int>(ErrorKind::solver);
        }
    });
    return rep;
}

namespace detail {

inline std::string fmt(double v) {
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_escape(std::string s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

inline std::string provenance(const SweepReport &rep, std::string_view kind) {
    const auto &s = rep.spec;
    std::ostringstream os;
    os << "# wpt-miso " << kind << " version=" << library_version << '\n';
    os << "# source=" << s.source.name() << " frequency_hz=" << fmt(s.source.frequency_hz) << '\n';
    if (s.source.matrix)
        os << "# matrix_hash=" << s.source.matrix->hash() << '\n';
    os << "# theta_deg=" << fmt(s.theta.start) << ':' << fmt(s.theta.stop) << ':' << fmt(s.theta.step) << " d_lambda=";
    for (std::size_t k = 0; k < s.d_lambda.size(); ++k)
        os << (k ? "," : "") << fmt(s.d_lambda[k]);
    os << '\n';
    os << "# rl=" << load_spec_name(s.load) << " constraints=" << constraints_name(s.constraints)
       << " form=" << sdr_form_name(s.form) << " tol=" << fmt(s.tolerance) << '\n';
    return os.str();
}

inline int max_tx(const SweepReport &rep) {
    int n = 0;
    for (const auto &r : rep.records)
        n = std::max(n, r.n_tx);
    return n;
}

} // namespace detail

/// Per-point CSV with '#' provenance lines. Columns are fixed; per-port
/// power columns run to the largest transmitter count in the sweep.
inline std::string sweep_csv(const SweepReport &rep) {
    using detail::fmt;
    std::ostringstream os;
    os << detail::provenance(rep, "sweep");
    const int nt = detail::max_tx(rep);
    os << "index,theta_deg,d_lambda,matrix_hash,constraint_mode,rl_policy,R_L_ohm,eta_max,eta_cf,eta,delta_eta_db,"
          "C_r_cf_F,C_r_F,delta_C_r_rel,x_r_ohm,epsilon,skipped,tight,iterations,status";
    for (int n = 1; n <= nt; ++n)
        os << ",P_cf_" << n << "_W";
    for (int n = 1; n <= nt; ++n)
        os << ",P_" << n << "_W";
    os << ",error\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto &rec : rep.records) {
        const auto &r = rec.result;
        const bool has = rec.error.empty();
        const bool solved = has && r.ok();
        os << rec.index << ',' << fmt(rec.theta_deg) << ',' << fmt(rec.d_lambda) << ','
           << (has ? r.matrix_hash : "") << ',' << constraints_name(rep.spec.constraints) << ','
           << load_spec_name(rep.spec.load) << ',' << fmt(has ? r.load_resistance : nan) << ','
           << fmt(has ? r.eta_max : nan) << ',' << fmt(has ? r.eta_cf : nan) << ',' << fmt(solved ? r.eta() : nan)
           << ',' << fmt(solved ? r.delta_eta_db : nan) << ',' << fmt(has && r.c_r_cf ? *r.c_r_cf : nan) << ','
           << fmt(solved && r.point.c_r ? *r.point.c_r : nan) << ',' << fmt(solved ? r.delta_c_r_rel : nan) << ','
           << fmt(solved ? r.point.x_r : nan) << ',' << fmt(solved ? r.epsilon : nan) << ','
           << (has && r.skipped ? 1 : 0) << ',' << (solved && r.tight ? 1 : 0) << ',' << (has ? r.iterations : 0)
           << ',' << (has ? std::string(sdp::status_name(r.status)) : "error");
        for (int n = 0; n < nt; ++n)
            os << ',' << fmt(has && n < r.p_cf.size() ? r.p_cf(n) : nan);
        for (int n = 0; n < nt; ++n)
            os << ',' << fmt(solved && n < r.point.transmit_powers.size() ? r.point.transmit_powers(n) : nan);
        os << ',' << detail::csv_escape(rec.error.empty() ? r.diagnostics : rec.error) << '\n';
    }
    return os.str();
}

/// Long-format polar data: one row per (point, series) with theta and radius.
inline std::string pattern_csv(const SweepReport &rep) {
    using detail::fmt;
    std::ostringstream os;
    os << detail::provenance(rep, "pattern");
    os << "theta_deg,theta_rad,d_lambda,series,radius\n";
    for (const auto &rec : rep.records) {
        if (!rec.error.empty())
            continue;
        const auto &r = rec.result;
        const std::string head = fmt(rec.theta_deg) + ',' + fmt(rec.theta_deg * constants::pi / 180.0) + ',' +
                                 fmt(rec.d_lambda) + ',';
        os << head << "eta_max," << fmt(r.eta_max) << '\n';
        os << head << "eta_cf," << fmt(r.eta_cf) << '\n';
        if (r.ok())
            os << head << "eta," << fmt(r.eta()) << '\n';
        for (Eigen::Index n = 0; n < r.p_cf.size(); ++n)
            os << head << "P_cf_" << n + 1 << ',' << fmt(r.p_cf(n)) << '\n';
        if (r.ok())
            for (Eigen::Index n = 0; n < r.point.transmit_powers.size(); ++n)
                os << head << "P_" << n + 1 << ',' << fmt(r.point.transmit_powers(n)) << '\n';
    }
    return os.str();
}

} // namespace wpt
