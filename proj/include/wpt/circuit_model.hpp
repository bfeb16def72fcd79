// SPDX-License-Identifier: Apache-2.0
//
// Impedance-matrix description of a multi-transmitter, single-receiver loop
// system: construction from loop geometry, JSON ingestion, loading and
// transmitter/receiver partitioning. The receiver is always the last port.

#pragma once

#include "wpt/core.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <json.hpp>

#include <array>
#include <fstream>
#include <optional>
#include <sstream>
#include <vector>

namespace wpt {

using Vector3d = Eigen::Vector3d;

/// Complex symmetric N x N network matrix with passive (positive definite)
/// real part. Immutable once constructed.
class ImpedanceMatrix {
public:
    ImpedanceMatrix(MatrixXcd entries, double frequency_hz)
        : entries_(std::move(entries)), frequency_(frequency_hz) {
        validate();
    }

    const MatrixXcd &entries() const noexcept { return entries_; }
    double frequency() const noexcept { return frequency_; }
    double omega() const noexcept { return angular_frequency(frequency_); }
    int n_ports() const noexcept { return static_cast<int>(entries_.rows()); }
    int n_tx() const noexcept { return n_ports() - 1; }
    MatrixXd resistance() const { return entries_.real(); }
    cdouble operator()(int i, int j) const { return entries_(i, j); }

    /// Stable fingerprint of the matrix and frequency.
    std::string hash() const {
        Fnv1a h;
        h.update(frequency_);
        for (Eigen::Index j = 0; j < entries_.cols(); ++j)
            for (Eigen::Index i = 0; i < entries_.rows(); ++i) {
                h.update(entries_(i, j).real());
                h.update(entries_(i, j).imag());
            }
        return hex64(h.digest());
    }

private:
    void validate() const {
        if (!(frequency_ > 0.0) || !std::isfinite(frequency_))
            throw ValidationError("impedance matrix: frequency must be positive and finite");
        if (entries_.rows() != entries_.cols() || entries_.rows() < 1)
            throw ValidationError("impedance matrix: must be square and non-empty");
        if (!entries_.allFinite())
            throw ValidationError("impedance matrix: non-finite entry");
        for (Eigen::Index i = 0; i < entries_.rows(); ++i)
            for (Eigen::Index j = i + 1; j < entries_.cols(); ++j)
                if (entries_(i, j) != entries_(j, i))
                    throw ValidationError("impedance matrix: not symmetric at (" + std::to_string(i) + "," +
                                          std::to_string(j) + ")");
        const MatrixXd re = entries_.real();
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(re, Eigen::EigenvaluesOnly);
        if (es.eigenvalues()(0) <= 0.0) {
            std::ostringstream os;
            os << "impedance matrix: not passive, real part has eigenvalue " << es.eigenvalues()(0);
            throw ValidationError(os.str());
        }
        if (entries_.rows() >= 2) {
            const auto nt = entries_.rows() - 1;
            if (min_eigenvalue(re.topLeftCorner(nt, nt)) <= 0.0)
                throw ValidationError("impedance matrix: transmitter block real part not positive definite");
        }
        if (entries_(entries_.rows() - 1, entries_.cols() - 1).real() <= 0.0)
            throw ValidationError("impedance matrix: receiver self-resistance must be positive");
    }

    MatrixXcd entries_;
    double frequency_;
};

struct ImpedanceBlocks {
    MatrixXcd z_t;  ///< transmitter block, (N-1) x (N-1)
    VectorXcd z_tr; ///< transmitter-receiver coupling, length N-1
    cdouble z_r;    ///< receiver self impedance
};

inline ImpedanceBlocks partition(const ImpedanceMatrix &z) {
    const int n = z.n_ports();
    if (n < 2)
        throw ValidationError("partition: need at least one transmitter and one receiver");
    const auto &e = z.entries();
    return {e.topLeftCorner(n - 1, n - 1), e.col(n - 1).head(n - 1), e(n - 1, n - 1)};
}

inline MatrixXcd reassemble(const ImpedanceBlocks &b) {
    const auto nt = b.z_t.rows();
    MatrixXcd out(nt + 1, nt + 1);
    out.topLeftCorner(nt, nt) = b.z_t;
    out.col(nt).head(nt) = b.z_tr;
    out.row(nt).head(nt) = b.z_tr.transpose();
    out(nt, nt) = b.z_r;
    return out;
}

struct Loading {
    VectorXd reactances;    ///< diag(X), ohms, one per port
    double load_resistance; ///< R_L at the receiver, ohms
};

/// Z + jX + R_L e_N e_N^T.
class LoadedImpedanceMatrix {
public:
    LoadedImpedanceMatrix(const ImpedanceMatrix &z, Loading loading) : loading_(std::move(loading)) {
        if (!(loading_.load_resistance > 0.0) || !std::isfinite(loading_.load_resistance))
            throw ValidationError("loading: load resistance must be positive");
        if (loading_.reactances.size() != z.n_ports())
            throw ValidationError("loading: reactance vector length does not match port count");
        if (!loading_.reactances.allFinite())
            throw ValidationError("loading: non-finite reactance");
        entries_ = z.entries();
        entries_.diagonal() += cdouble(0.0, 1.0) * loading_.reactances.cast<cdouble>();
        entries_(z.n_ports() - 1, z.n_ports() - 1) += loading_.load_resistance;
        frequency_ = z.frequency();
    }

    const MatrixXcd &entries() const noexcept { return entries_; }
    const Loading &loading() const noexcept { return loading_; }
    double frequency() const noexcept { return frequency_; }
    int n_ports() const noexcept { return static_cast<int>(entries_.rows()); }
    double load_resistance() const noexcept { return loading_.load_resistance; }

private:
    MatrixXcd entries_;
    Loading loading_;
    double frequency_ = 0.0;
};

inline LoadedImpedanceMatrix apply_loading(const ImpedanceMatrix &z, const Loading &loading) {
    return LoadedImpedanceMatrix(z, loading);
}

/// Loading with zero reactances everywhere except the receiver.
inline LoadedImpedanceMatrix apply_receiver_loading(const ImpedanceMatrix &z, double load_resistance,
                                                    double receiver_reactance = 0.0) {
    VectorXd x = VectorXd::Zero(z.n_ports());
    x(z.n_ports() - 1) = receiver_reactance;
    return LoadedImpedanceMatrix(z, Loading{x, load_resistance});
}

// ---------------------------------------------------------------------------
// Loop geometry
// ---------------------------------------------------------------------------

enum class Preset { siso, miso_2p, miso_3p, miso_2c, miso_3c };

inline constexpr std::array<Preset, 5> all_presets = {Preset::siso, Preset::miso_2p, Preset::miso_3p,
                                                      Preset::miso_2c, Preset::miso_3c};

inline std::string_view preset_name(Preset p) {
    switch (p) {
    case Preset::siso: return "SISO";
    case Preset::miso_2p: return "MISO-2p";
    case Preset::miso_3p: return "MISO-3p";
    case Preset::miso_2c: return "MISO-2c";
    case Preset::miso_3c: return "MISO-3c";
    }
    return "?";
}

inline Preset parse_preset(std::string_view s) {
    for (auto p : all_presets)
        if (preset_name(p) == s)
            return p;
    throw ValidationError("unknown preset '" + std::string(s) + "' (expected SISO, MISO-2p, MISO-3p, MISO-2c, MISO-3c)");
}

inline constexpr double default_frequency_hz = 40.0e6;
inline constexpr double copper_conductivity = 5.8e7;

/// Single-turn circular loops, all parallel to the xy-plane. The receiver
/// sits in the xz-plane at distance d and angle theta off the z-axis,
/// measured from the origin (centre of the transmitter array).
struct GeometrySpec {
    std::optional<Preset> preset;
    std::vector<Vector3d> transmitters;
    double loop_radius = 0.0;
    double wire_radius = 0.0;
    double conductivity = copper_conductivity;
    double receiver_distance = 0.0;
    double receiver_angle = 0.0; ///< radians
    bool radiation_coupling = true;

    Vector3d receiver_position() const {
        return {receiver_distance * std::sin(receiver_angle), 0.0, receiver_distance * std::cos(receiver_angle)};
    }

    /// Transmitter centres followed by the receiver centre.
    std::vector<Vector3d> loop_centers() const {
        auto out = transmitters;
        out.push_back(receiver_position());
        return out;
    }

    /// Transmitter layout of a preset at the given frequency. Loop radius
    /// lambda/100, wire radius loop/10, lateral gap lambda/50, axial pitch
    /// lambda/100.
    static GeometrySpec from_preset(Preset p, double frequency_hz, double distance_m, double angle_rad) {
        const double lam = wavelength(frequency_hz);
        GeometrySpec g;
        g.preset = p;
        g.loop_radius = lam / 100.0;
        g.wire_radius = g.loop_radius / 10.0;
        g.receiver_distance = distance_m;
        g.receiver_angle = angle_rad;
        const double pitch_x = 2.0 * g.loop_radius + lam / 50.0;
        const double pitch_z = lam / 100.0;
        switch (p) {
        case Preset::siso: g.transmitters = {{0, 0, 0}}; break;
        case Preset::miso_2p: g.transmitters = {{-pitch_x / 2, 0, 0}, {pitch_x / 2, 0, 0}}; break;
        case Preset::miso_3p: g.transmitters = {{-pitch_x, 0, 0}, {0, 0, 0}, {pitch_x, 0, 0}}; break;
        case Preset::miso_2c: g.transmitters = {{0, 0, -pitch_z / 2}, {0, 0, pitch_z / 2}}; break;
        case Preset::miso_3c: g.transmitters = {{0, 0, -pitch_z}, {0, 0, 0}, {0, 0, pitch_z}}; break;
        }
        return g;
    }

    void validate() const {
        if (transmitters.empty())
            throw ValidationError("geometry: at least one transmitter loop required");
        if (!(loop_radius > 0.0) || !(wire_radius > 0.0) || !(wire_radius < loop_radius))
            throw ValidationError("geometry: need 0 < wire_radius < loop_radius");
        if (!(conductivity > 0.0))
            throw ValidationError("geometry: conductivity must be positive");
        if (!(receiver_distance > 0.0))
            throw ValidationError("geometry: receiver distance must be positive");
        if (!std::isfinite(receiver_angle))
            throw ValidationError("geometry: receiver angle must be finite");
        const auto centers = loop_centers();
        for (std::size_t i = 0; i < centers.size(); ++i)
            for (std::size_t j = i + 1; j < centers.size(); ++j) {
                const Vector3d d = centers[j] - centers[i];
                const double lateral = std::hypot(d.x(), d.y());
                if (lateral < 1e-12 * loop_radius && std::abs(d.z()) < 1e-12 * loop_radius)
                    throw ValidationError("geometry: loops " + std::to_string(i) + " and " + std::to_string(j) +
                                          " coincide");
                // Closest approach of two equal parallel circles.
                const double in_plane = std::max(0.0, lateral - 2.0 * loop_radius);
                const double gap = std::hypot(in_plane, d.z());
                if (gap < 2.0 * wire_radius)
                    throw ValidationError("geometry: loops " + std::to_string(i) + " and " + std::to_string(j) +
                                          " overlap");
            }
    }
};

/// Filamentary circular loop parallel to the xy-plane.
struct Loop {
    Vector3d center;
    double radius;
};

/// Neumann double line integral
///   M = mu0/(4 pi) \oint\oint dl_a . dl_b / |r_a - r_b|
/// evaluated with nested adaptive Gauss-Kronrod quadrature.
inline double neumann_mutual_inductance(const Loop &a, const Loop &b, double rel_tol = 1e-8) {
    using boost::math::quadrature::gauss_kronrod;
    const double two_pi = 2.0 * constants::pi;
    const Vector3d off = b.center - a.center;
    auto outer = [&](double phi_b) {
        const double cb = std::cos(phi_b), sb = std::sin(phi_b);
        const double xb = off.x() + b.radius * cb, yb = off.y() + b.radius * sb;
        auto inner = [&](double phi_a) {
            const double ca = std::cos(phi_a), sa = std::sin(phi_a);
            const double dx = xb - a.radius * ca, dy = yb - a.radius * sa;
            const double dist = std::sqrt(dx * dx + dy * dy + off.z() * off.z());
            return (ca * cb + sa * sb) / dist;
        };
        return gauss_kronrod<double, 15>::integrate(inner, 0.0, two_pi, 20, rel_tol * 1e-2);
    };
    const double integral = gauss_kronrod<double, 15>::integrate(outer, 0.0, two_pi, 20, rel_tol);
    return constants::mu0 / (4.0 * constants::pi) * a.radius * b.radius * integral;
}

/// High-frequency self inductance of a thin circular loop, mu0 r (ln(8r/a) - 2).
inline double loop_self_inductance(double loop_radius, double wire_radius) {
    return constants::mu0 * loop_radius * (std::log(8.0 * loop_radius / wire_radius) - 2.0);
}

/// Skin-effect conduction loss of a round-wire loop.
inline double loop_ohmic_resistance(double loop_radius, double wire_radius, double conductivity, double frequency_hz) {
    const double surface = std::sqrt(angular_frequency(frequency_hz) * constants::mu0 / (2.0 * conductivity));
    return loop_radius / wire_radius * surface;
}

/// Small-loop radiation resistance 20 pi^2 (C/lambda)^4.
inline double loop_radiation_resistance(double loop_radius, double frequency_hz) {
    const double c_over_lambda = 2.0 * constants::pi * loop_radius / wavelength(frequency_hz);
    return 20.0 * constants::pi * constants::pi * std::pow(c_over_lambda, 4);
}

/// Mutual radiation resistance of two parallel z-oriented small loops
/// (magnetic dipoles) separated by `separation`. Reduces to the self
/// radiation resistance as the separation goes to zero.
inline double loop_mutual_radiation_resistance(double radiation_resistance, const Vector3d &separation,
                                               double frequency_hz) {
    const double r = separation.norm();
    const double x = 2.0 * constants::pi * r / wavelength(frequency_hz);
    const double cos_a = separation.z() / r;
    const double sin2 = 1.0 - cos_a * cos_a;
    double radial;
    if (x < 1e-3) {
        // Series of cos x/x^2 - sin x/x^3 near zero.
        radial = -1.0 / 3.0 + x * x / 30.0;
    } else {
        radial = std::cos(x) / (x * x) - std::sin(x) / (x * x * x);
    }
    const double sinc = x < 1e-8 ? 1.0 : std::sin(x) / x;
    return radiation_resistance * 1.5 * (sin2 * sinc + (1.0 - 3.0 * cos_a * cos_a) * radial);
}

/// Quasi-static loop-array impedance matrix: R_n + j w L_n on the diagonal,
/// j w M_nm (Neumann) plus the mutual radiation resistance off the diagonal.
inline ImpedanceMatrix build_loop_system(const GeometrySpec &geometry, double frequency_hz) {
    geometry.validate();
    if (!(frequency_hz > 0.0))
        throw ValidationError("frequency must be positive");
    const auto centers = geometry.loop_centers();
    const auto n = static_cast<Eigen::Index>(centers.size());
    const double omega = angular_frequency(frequency_hz);
    const double r_rad = loop_radiation_resistance(geometry.loop_radius, frequency_hz);
    const double r_self =
        loop_ohmic_resistance(geometry.loop_radius, geometry.wire_radius, geometry.conductivity, frequency_hz) + r_rad;
    const double l_self = loop_self_inductance(geometry.loop_radius, geometry.wire_radius);

    MatrixXcd z(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        z(i, i) = cdouble(r_self, omega * l_self);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double m = neumann_mutual_inductance({centers[static_cast<std::size_t>(i)], geometry.loop_radius},
                                                       {centers[static_cast<std::size_t>(j)], geometry.loop_radius});
            const double r_mut =
                geometry.radiation_coupling
                    ? loop_mutual_radiation_resistance(
                          r_rad, centers[static_cast<std::size_t>(j)] - centers[static_cast<std::size_t>(i)],
                          frequency_hz)
                    : 0.0;
            z(i, j) = z(j, i) = cdouble(r_mut, omega * m);
        }
    }
    try {
        return ImpedanceMatrix(std::move(z), frequency_hz);
    } catch (const ValidationError &e) {
        throw ValidationError(std::string("loop model rejected (coupling overestimate?): ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// JSON files
// ---------------------------------------------------------------------------

inline constexpr double asymmetry_warn_threshold = 1e-9;
inline constexpr double asymmetry_error_threshold = 1e-3;

/// Parses {"frequency_hz", "n_ports", "re", "im"}. Slightly asymmetric
/// input is symmetrized as (Z + Z^T)/2 and reported in `warnings`.
inline ImpedanceMatrix parse_impedance_json(const nlohmann::json &j, std::vector<std::string> *warnings = nullptr) {
    MatrixXcd z;
    double freq = 0.0;
    try {
        freq = j.at("frequency_hz").get<double>();
        const int n = j.at("n_ports").get<int>();
        const auto &re = j.at("re");
        const auto &im = j.at("im");
        if (n < 1 || !re.is_array() || !im.is_array() || re.size() != static_cast<std::size_t>(n) ||
            im.size() != static_cast<std::size_t>(n))
            throw ValidationError("impedance file: 're'/'im' must be n_ports x n_ports arrays");
        z.resize(n, n);
        for (int r = 0; r < n; ++r) {
            if (!re[r].is_array() || !im[r].is_array() || re[r].size() != static_cast<std::size_t>(n) ||
                im[r].size() != static_cast<std::size_t>(n))
                throw ValidationError("impedance file: row " + std::to_string(r) + " has wrong length");
            for (int c = 0; c < n; ++c)
                z(r, c) = cdouble(re[r][c].get<double>(), im[r][c].get<double>());
        }
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(std::string("impedance file: schema violation: ") + e.what());
    }
    const double scale = z.cwiseAbs().maxCoeff();
    const double asym = scale > 0.0 ? (z - z.transpose()).cwiseAbs().maxCoeff() / scale : 0.0;
    if (asym > asymmetry_error_threshold) {
        std::ostringstream os;
        os << "impedance file: asymmetry " << asym << " exceeds " << asymmetry_error_threshold;
        throw ValidationError(os.str());
    }
    if (asym > 0.0) {
        MatrixXcd sym = 0.5 * (z + z.transpose());
        // Force bit-exact symmetry regardless of rounding in the average.
        for (Eigen::Index r = 0; r < sym.rows(); ++r)
            for (Eigen::Index c = r + 1; c < sym.cols(); ++c)
                sym(c, r) = sym(r, c);
        z = std::move(sym);
        if (asym > asymmetry_warn_threshold && warnings) {
            std::ostringstream os;
            os << "impedance file: relative asymmetry " << asym << " symmetrized";
            warnings->push_back(os.str());
        }
    }
    return ImpedanceMatrix(std::move(z), freq);
}

inline nlohmann::json to_json(const ImpedanceMatrix &z) {
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
    for (int r = 0; r < z.n_ports(); ++r) {
        nlohmann::json rr = nlohmann::json::array(), ri = nlohmann::json::array();
        for (int c = 0; c < z.n_ports(); ++c) {
            rr.push_back(z(r, c).real());
            ri.push_back(z(r, c).imag());
        }
        re.push_back(std::move(rr));
        im.push_back(std::move(ri));
    }
    return {{"frequency_hz", z.frequency()}, {"n_ports", z.n_ports()}, {"re", re}, {"im", im}};
}

inline nlohmann::json read_json_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error &e) {
        throw ValidationError("'" + path + "': malformed JSON: " + e.what());
    }
}

inline void write_text_file(const std::string &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out)
        throw IoError("write failed for '" + path + "'");
}

inline ImpedanceMatrix load_impedance_file(const std::string &path, std::vector<std::string> *warnings = nullptr) {
    return parse_impedance_json(read_json_file(path), warnings);
}

inline void save_impedance_file(const std::string &path, const ImpedanceMatrix &z) {
    write_text_file(path, to_json(z).dump(2) + "\n");
}

inline nlohmann::json to_json(const GeometrySpec &g, double frequency_hz) {
    nlohmann::json tx = nlohmann::json::array();
    for (const auto &p : g.transmitters)
        tx.push_back({p.x(), p.y(), p.z()});
    nlohmann::json j{{"frequency_hz", frequency_hz},
                     {"transmitters", tx},
                     {"loop_radius", g.loop_radius},
                     {"wire_radius", g.wire_radius},
                     {"conductivity", g.conductivity},
                     {"receiver_distance", g.receiver_distance},
                     {"receiver_angle_rad", g.receiver_angle},
                     {"radiation_coupling", g.radiation_coupling}};
    j["preset"] = g.preset ? nlohmann::json(std::string(preset_name(*g.preset))) : nlohmann::json(nullptr);
    return j;
}

/// Geometry file. Either a preset (plus receiver_distance and
/// receiver_angle_rad) or an explicit transmitter list with loop data.
/// Loop dimensions of a preset are fixed by the frequency.
inline std::pair<GeometrySpec, double> parse_geometry_json(const nlohmann::json &j) {
    try {
        const double freq = j.value("frequency_hz", default_frequency_hz);
        GeometrySpec g;
        const double d = j.at("receiver_distance").get<double>();
        const double theta = j.value("receiver_angle_rad", 0.0);
        if (j.contains("preset") && !j.at("preset").is_null()) {
            g = GeometrySpec::from_preset(parse_preset(j.at("preset").get<std::string>()), freq, d, theta);
        } else {
            g.receiver_distance = d;
            g.receiver_angle = theta;
            g.loop_radius = j.at("loop_radius").get<double>();
            g.wire_radius = j.value("wire_radius", g.loop_radius / 10.0);
            for (const auto &p : j.at("transmitters"))
                g.transmitters.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
        }
        g.conductivity = j.value("conductivity", copper_conductivity);
        g.radiation_coupling = j.value("radiation_coupling", true);
        g.validate();
        return {g, freq};
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(std::string("geometry file: schema violation: ") + e.what());
    }
}

} // namespace wpt
