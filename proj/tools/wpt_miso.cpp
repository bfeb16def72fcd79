// SPDX-License-Identifier: Apache-2.0
//
// wpt-miso: solve, sweep, validate and gen-matrix front end.

#include "wpt/wpt.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace wpt;

namespace {

struct Common {
    std::string preset;
    std::string matrix;
    std::string d = "0.1";
    std::string theta = "0";
    std::string rl = "auto";
    std::string constraints = "nonneg";
    std::string form = "conic";
    std::string out;
    double tol = 1e-10;
};

void add_source_flags(CLI::App *app, Common &c, bool with_matrix = true) {
    app->add_option("--preset", c.preset, "SISO, MISO-2p, MISO-3p, MISO-2c or MISO-3c");
    if (with_matrix)
        app->add_option("--matrix", c.matrix, "impedance matrix JSON file");
    app->add_option("--d", c.d, "receiver distance(s) in wavelengths, comma separated")->capture_default_str();
    app->add_option("--theta-range", c.theta, "<deg> or <start>:<stop>:<step> in degrees")->capture_default_str();
}

void add_solver_flags(CLI::App *app, Common &c) {
    app->add_option("--rl", c.rl, "auto | optimize | <ohms>")->capture_default_str();
    app->add_option("--constraints", c.constraints, "none | nonneg | caps=<w,...>")->capture_default_str();
    app->add_option("--form", c.form, "conic | affine")->capture_default_str();
    app->add_option("--tol", c.tol, "interior-point tolerance")->capture_default_str();
}

SystemSource make_source(const Common &c, std::vector<std::string> &warnings) {
    if (c.preset.empty() == c.matrix.empty())
        throw ValidationError("give exactly one of --preset or --matrix");
    SystemSource s;
    if (!c.preset.empty()) {
        s.preset = parse_preset(c.preset);
    } else {
        s.matrix = load_impedance_file(c.matrix, &warnings);
        s.matrix_path = c.matrix;
        s.frequency_hz = s.matrix->frequency();
    }
    return s;
}

void ensure_dir(const std::string &dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

double single_value(const std::vector<double> &v, const char *flag) {
    if (v.size() != 1)
        throw ValidationError(std::string(flag) + " takes a single value for this command");
    return v[0];
}

void print_summary(std::ostream &os, const SdrResult &r) {
    auto line = [&](const char *k, const std::string &v) { os << "  " << k << ": " << v << '\n'; };
    auto num = [](double v) { return detail::fmt(v); };
    line("matrix hash", r.matrix_hash);
    line("mutual Q (U)", num(r.u));
    line("eta_max (closed form)", num(r.eta_max));
    line("R_L* (closed form) [ohm]", num(r.r_l_opt));
    line("R_L used [ohm]", num(r.load_resistance));
    line("eta (closed form at R_L)", num(r.eta_cf));
    if (r.c_r_cf)
        line("C_r (closed form) [F]", num(*r.c_r_cf));
    std::string p;
    for (Eigen::Index k = 0; k < r.p_cf.size(); ++k)
        p += (k ? " " : "") + num(r.p_cf(k));
    line("P_t closed form [W]", p);
    line("constraints", std::string(constraint_mode_name(r.constraint_mode)));
    if (r.skipped) {
        line("relaxation", "skipped (closed form admissible)");
    } else {
        line("relaxation", std::string(sdr_form_name(r.form)) + ", status " + std::string(sdp::status_name(r.status)) +
                               ", " + std::to_string(r.iterations) + " iterations");
    }
    if (!r.ok()) {
        line("diagnostics", r.diagnostics);
        return;
    }
    line("eta", num(r.eta()));
    if (!r.skipped) {
        line("epsilon", num(r.epsilon));
        line("delta eta [dB]", num(r.delta_eta_db));
        line("delta C_r / C_r", num(r.delta_c_r_rel));
    }
    if (r.point.c_r)
        line("C_r [F]", num(*r.point.c_r));
    if (r.point.l_r)
        line("L_r [H]", num(*r.point.l_r));
    p.clear();
    for (Eigen::Index k = 0; k < r.point.transmit_powers.size(); ++k)
        p += (k ? " " : "") + num(r.point.transmit_powers(k));
    line("P_t [W]", p);
    for (const auto &w : r.warnings)
        line("warning", w);
}

int cmd_solve(const Common &c) {
    std::vector<std::string> warnings;
    const auto src = make_source(c, warnings);
    const double d = single_value(parse_number_list(c.d, "--d"), "--d");
    const auto th = parse_theta_range(c.theta);
    if (th.start != th.stop)
        throw ValidationError("--theta-range takes a single angle for solve");
    const auto load = parse_load_spec(c.rl);
    const auto pc = parse_constraints(c.constraints);
    const auto form = parse_sdr_form(c.form);
    const auto z = system_for(src, d, th.start);
    auto r = solve_point(z, load, pc, form, c.tol);
    for (auto &w : warnings)
        r.warnings.push_back(w);

    std::cout << "wpt-miso solve (" << src.name() << ")\n";
    print_summary(std::cout, r);
    const auto j = to_json(r);
    std::cout << j.dump(2) << '\n';
    if (!c.out.empty()) {
        ensure_dir(c.out);
        write_text_file((fs::path(c.out) / "solve.json").string(), j.dump(2) + "\n");
    }
    return r.ok() ? 0 : static_cast<int>(ErrorKind::solver);
}

int cmd_sweep(const Common &c) {
    std::vector<std::string> warnings;
    SweepSpec spec;
    spec.source = make_source(c, warnings);
    spec.d_lambda = parse_number_list(c.d, "--d");
    spec.theta = parse_theta_range(c.theta);
    spec.load = parse_load_spec(c.rl);
    spec.constraints = parse_constraints(c.constraints);
    spec.form = parse_sdr_form(c.form);
    spec.tolerance = c.tol;
    for (const auto &w : warnings)
        std::cerr << "warning: " << w << '\n';
    const auto rep = run_sweep(spec);
    const std::string dir = c.out.empty() ? "." : c.out;
    ensure_dir(dir);
    write_text_file((fs::path(dir) / "sweep.csv").string(), sweep_csv(rep));
    write_text_file((fs::path(dir) / "pattern.csv").string(), pattern_csv(rep));
    std::size_t failed = 0;
    for (const auto &r : rep.records)
        failed += r.failed() ? 1 : 0;
    std::cout << "wpt-miso sweep: " << rep.records.size() << " rows, " << failed << " failed -> "
              << (fs::path(dir) / "sweep.csv").string() << ", " << (fs::path(dir) / "pattern.csv").string() << '\n';
    return rep.worst_exit_code();
}

int cmd_validate() {
    bool ok = true;
    for (auto p : all_presets) {
        const auto z = acceptance::detail::preset_system(p, 0.1, 30.0);
        const auto rep = oracle::verify_identities(z.entries(), z.frequency(), solve_closed_form(z).r_l_opt);
        std::size_t bad = 0;
        for (const auto &chk : rep.checks)
            if (!chk.passed) {
                ++bad;
                std::cout << "  identity " << chk.name << " failed: " << chk.value << " > " << chk.tolerance << ' '
                          << chk.note << '\n';
            }
        std::cout << (bad ? "FAIL" : "PASS") << " identities " << preset_name(p) << ": " << rep.checks.size()
                  << " checks, " << bad << " failed\n";
        ok = ok && bad == 0;
    }
    const auto results = acceptance::run_acceptance([](const auto &r) { std::cout << r.line() << std::endl; });
    for (const auto &r : results)
        ok = ok && r.passed;
    std::cout << (ok ? "validate: all passed" : "validate: FAILED") << '\n';
    return ok ? 0 : static_cast<int>(ErrorKind::validation);
}

int cmd_gen_matrix(const Common &c) {
    if (c.preset.empty())
        throw ValidationError("gen-matrix needs --preset");
    SystemSource src;
    src.preset = parse_preset(c.preset);
    const double d = single_value(parse_number_list(c.d, "--d"), "--d");
    const auto th = parse_theta_range(c.theta);
    if (th.start != th.stop)
        throw ValidationError("--theta-range takes a single angle for gen-matrix");
    const auto z = system_for(src, d, th.start);
    std::string path;
    if (c.out.empty()) {
        std::cout << to_json(z).dump(2) << '\n';
        return 0;
    }
    if (fs::path(c.out).extension() == ".json") {
        path = c.out;
        if (const auto parent = fs::path(c.out).parent_path(); !parent.empty())
            ensure_dir(parent.string());
    } else {
        ensure_dir(c.out);
        path = (fs::path(c.out) / "matrix.json").string();
    }
    save_impedance_file(path, z);
    std::cout << "wrote " << z.n_ports() << "x" << z.n_ports() << " matrix " << z.hash() << " to " << path << '\n';
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Multi-transmitter wireless power transfer: closed-form and SDR-constrained optimisation"};
    app.require_subcommand(1);
    Common c;

    auto *solve = app.add_subcommand("solve", "single operating point");
    add_source_flags(solve, c);
    add_solver_flags(solve, c);
    solve->add_option("--out", c.out, "directory for solve.json");

    auto *sweep = app.add_subcommand("sweep", "angle/distance sweep to sweep.csv and pattern.csv");
    add_source_flags(sweep, c);
    add_solver_flags(sweep, c);
    sweep->add_option("--out", c.out, "output directory (default .)");

    auto *validate = app.add_subcommand("validate", "identity checks and acceptance suite");

    auto *gen = app.add_subcommand("gen-matrix", "write a preset impedance matrix as JSON");
    add_source_flags(gen, c, false);
    gen->add_option("--out", c.out, "output directory (matrix.json) or .json file; stdout when omitted");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ErrorKind::validation);
    }

    try {
        if (*solve)
            return cmd_solve(c);
        if (*sweep)
            return cmd_sweep(c);
        if (*validate)
            return cmd_validate();
        if (*gen)
            return cmd_gen_matrix(c);
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ErrorKind::solver);
    }
    return 0;
}
