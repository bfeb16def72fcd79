// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

#include <filesystem>

using namespace testing;
using Catch::Matchers::ContainsSubstring;

namespace {

// Coaxial loops: closed form with complete elliptic integrals,
// M = mu0 sqrt(ab) [(2/k - k) K(k) - (2/k) E(k)], k^2 = 4ab / ((a+b)^2 + h^2).
double maxwell_coaxial(double a, double b, double h) {
    const double k = std::sqrt(4.0 * a * b / ((a + b) * (a + b) + h * h));
    return constants::mu0 * std::sqrt(a * b) *
           ((2.0 / k - k) * std::comp_ellint_1(k) - 2.0 / k * std::comp_ellint_2(k));
}

std::string temp_path(const std::string &name) {
    return (std::filesystem::temp_directory_path() / ("wpt_unit_" + name)).string();
}

} // namespace

TEST_CASE("Neumann integral matches the coaxial elliptic-integral formula", "[circuit]") {
    const double r = 0.075;
    for (double h : {0.01, 0.05, 0.2, 0.75}) {
        const double m = neumann_mutual_inductance({{0, 0, 0}, r}, {{0, 0, h}, r});
        CHECK(rel(m, maxwell_coaxial(r, r, h)) < 1e-7);
    }
    const double m_uneq = neumann_mutual_inductance({{0, 0, 0}, 0.05}, {{0, 0, 0.03}, 0.08});
    CHECK(rel(m_uneq, maxwell_coaxial(0.05, 0.08, 0.03)) < 1e-7);
}

TEST_CASE("mutual inductance is mirror symmetric and reciprocal", "[circuit]") {
    const double r = 0.075;
    const double up = neumann_mutual_inductance({{0, 0, 0}, r}, {{0, 0, 0.3}, r});
    const double down = neumann_mutual_inductance({{0, 0, 0}, r}, {{0, 0, -0.3}, r});
    CHECK(std::abs(up) == Catch::Approx(std::abs(down)).epsilon(1e-9));
    const Loop a{{0.1, 0.0, 0.0}, r}, b{{0.3, 0.0, 0.2}, r};
    CHECK(rel(neumann_mutual_inductance(a, b), neumann_mutual_inductance(b, a)) < 1e-9);
}

TEST_CASE("self inductance formula agrees with a loop offset by the wire radius", "[circuit]") {
    const double r = wavelength(default_frequency_hz) / 100.0, a = r / 10.0;
    // Same loop shifted along its axis by one wire radius.
    const double numeric = neumann_mutual_inductance({{0, 0, 0}, r}, {{0, 0, a}, r}, 1e-10);
    CHECK(rel(numeric, loop_self_inductance(r, a)) < 0.02);

    const auto z = preset_system(Preset::siso);
    CHECK(rel(z(0, 0).imag(), z.omega() * loop_self_inductance(r, a)) < 1e-14);
}

TEST_CASE("preset matrices are passive, symmetric and correctly shaped", "[circuit]") {
    for (auto p : all_presets) {
        const auto z = preset_system(p);
        const int expected = p == Preset::siso ? 2 : (p == Preset::miso_2p || p == Preset::miso_2c) ? 3 : 4;
        CHECK(z.n_ports() == expected);
        CHECK(min_eigenvalue(z.resistance()) > 0.0);
        CHECK(z.entries() == z.entries().transpose());
    }
    const auto z2c = preset_system(Preset::miso_2c);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(z2c.resistance());
    CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("coaxial coupling decays monotonically with distance", "[circuit]") {
    double last = INFINITY;
    for (double d = 0.05; d <= 0.2 + 1e-12; d += 0.01) {
        const double m = std::abs(preset_system(Preset::siso, d, 0.0)(0, 1).imag());
        CHECK(m < last);
        last = m;
    }
}

TEST_CASE("swapping two loops permutes the matrix", "[circuit]") {
    auto g = GeometrySpec::from_preset(Preset::miso_3p, default_frequency_hz, 0.1 * wavelength(default_frequency_hz), 0.4);
    const auto z = build_loop_system(g, default_frequency_hz);
    std::swap(g.transmitters[0], g.transmitters[2]);
    const auto zs = build_loop_system(g, default_frequency_hz);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
    perm.indices() << 2, 1, 0, 3;
    const MatrixXcd expected = perm * z.entries() * perm.transpose();
    CHECK((zs.entries() - expected).cwiseAbs().maxCoeff() <= 1e-12 * z.entries().cwiseAbs().maxCoeff());
}

TEST_CASE("geometry validation rejects invalid layouts", "[circuit]") {
    auto g = GeometrySpec::from_preset(Preset::miso_2p, default_frequency_hz, 1.0, 0.0);
    auto bad = g;
    bad.transmitters[1] = bad.transmitters[0];
    CHECK_THROWS_AS(build_loop_system(bad, default_frequency_hz), ValidationError);
    bad = g;
    bad.wire_radius = 2.0 * bad.loop_radius;
    CHECK_THROWS_AS(build_loop_system(bad, default_frequency_hz), ValidationError);
    bad = g;
    bad.receiver_distance = 0.0;
    CHECK_THROWS_AS(build_loop_system(bad, default_frequency_hz), ValidationError);
}

TEST_CASE("impedance file ingestion", "[circuit][io]") {
    using nlohmann::json;
    SECTION("well-formed 2x2 file") {
        const json j{{"frequency_hz", 40e6}, {"n_ports", 2}, {"re", {{1, 0}, {0, 1}}}, {"im", {{10, 2}, {2, 10}}}};
        const auto z = parse_impedance_json(j);
        CHECK(z.n_ports() == 2);
        CHECK(z(0, 1) == cdouble(0, 2));
    }
    SECTION("negative eigenvalue of the real part") {
        const json j{{"frequency_hz", 40e6}, {"n_ports", 2}, {"re", {{1, 2}, {2, 1}}}, {"im", {{0, 0}, {0, 0}}}};
        CHECK_THROWS_WITH(parse_impedance_json(j), ContainsSubstring("not passive") && ContainsSubstring("-1"));
    }
    SECTION("small asymmetry is symmetrized with a warning") {
        const json j{{"frequency_hz", 40e6},
                     {"n_ports", 2},
                     {"re", {{1, 0}, {0, 1}}},
                     {"im", {{10, 2.0}, {2.0 * (1 + 1e-6), 10}}}};
        std::vector<std::string> warnings;
        const auto z = parse_impedance_json(j, &warnings);
        CHECK(z(0, 1) == z(1, 0));
        REQUIRE(warnings.size() == 1);
        CHECK_THAT(warnings[0], ContainsSubstring("symmetrized"));
    }
    SECTION("large asymmetry is rejected") {
        const json j{{"frequency_hz", 40e6}, {"n_ports", 2}, {"re", {{1, 0}, {0, 1}}}, {"im", {{10, 2}, {3, 10}}}};
        CHECK_THROWS_AS(parse_impedance_json(j), ValidationError);
    }
    SECTION("schema violations") {
        CHECK_THROWS_AS(parse_impedance_json(json{{"n_ports", 2}}), ValidationError);
        const json short_row{{"frequency_hz", 40e6}, {"n_ports", 2}, {"re", {{1}, {0, 1}}}, {"im", {{0, 0}, {0, 0}}}};
        CHECK_THROWS_AS(parse_impedance_json(short_row), ValidationError);
    }
    SECTION("missing file is an I/O error") {
        CHECK_THROWS_AS(load_impedance_file("/nonexistent/wpt/matrix.json"), IoError);
    }
    SECTION("file round trip is bit-stable") {
        const auto z = preset_system(Preset::miso_3c, 0.1, 18.0);
        const auto path = temp_path("roundtrip.json");
        save_impedance_file(path, z);
        const auto back = load_impedance_file(path);
        CHECK(back.entries() == z.entries());
        CHECK(back.frequency() == z.frequency());
        CHECK(back.hash() == z.hash());
        std::filesystem::remove(path);
    }
}

TEST_CASE("loading and partitioning", "[circuit]") {
    SECTION("direct sum on a 1x1 matrix") {
        MatrixXcd m(1, 1);
        m << cdouble(0.1, 5.0);
        const auto loaded = apply_loading(ImpedanceMatrix(m, 1e6), Loading{VectorXd::Zero(1), 1.0});
        CHECK(loaded.entries()(0, 0) == cdouble(1.1, 5.0));
    }
    SECTION("reactances cancelling self reactance") {
        const auto z = preset_system(Preset::miso_3p);
        const VectorXd x = -z.entries().diagonal().imag();
        const auto loaded = apply_loading(z, Loading{x, 2.0});
        CHECK(loaded.entries().diagonal().imag().cwiseAbs().maxCoeff() == 0.0);
        CHECK(loaded.entries() == loaded.entries().transpose());
    }
    SECTION("invalid loads") {
        const auto z = preset_system(Preset::siso);
        CHECK_THROWS_AS(apply_receiver_loading(z, 0.0), ValidationError);
        CHECK_THROWS_AS(apply_loading(z, Loading{VectorXd::Zero(3), 1.0}), ValidationError);
    }
    SECTION("block shapes and exact reassembly") {
        const auto z2 = preset_system(Preset::siso);
        const auto b2 = partition(z2);
        CHECK(b2.z_t.rows() == 1);
        CHECK(b2.z_tr.size() == 1);
        const auto z4 = preset_system(Preset::miso_3p, 0.1, 20.0);
        const auto b4 = partition(z4);
        CHECK(b4.z_t.rows() == 3);
        CHECK(b4.z_t.cols() == 3);
        CHECK(reassemble(b4) == z4.entries());
    }
}
