// SPDX-License-Identifier: Apache-2.0
//
// Shared types, constants and small numeric helpers.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace wpt {

using cdouble = std::complex<double>;
using MatrixXd = Eigen::MatrixXd;
using VectorXd = Eigen::VectorXd;
using MatrixXcd = Eigen::MatrixXcd;
using VectorXcd = Eigen::VectorXcd;

namespace constants {
inline constexpr double pi = std::numbers::pi;
inline constexpr double speed_of_light = 299792458.0;
inline constexpr double mu0 = 4.0e-7 * pi;
} // namespace constants

/// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind { validation = 2, solver = 3, io = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string &what) : Error(ErrorKind::validation, what) {}
};

class SolverError : public Error {
public:
    explicit SolverError(const std::string &what) : Error(ErrorKind::solver, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string &what) : Error(ErrorKind::io, what) {}
};

/// Raised when the receiver is decoupled from every transmitter (z_tr = 0).
class NoTransferError : public ValidationError {
public:
    explicit NoTransferError(const std::string &what) : ValidationError(what) {}
};

inline double wavelength(double frequency_hz) { return constants::speed_of_light / frequency_hz; }
inline double angular_frequency(double frequency_hz) { return 2.0 * constants::pi * frequency_hz; }

inline MatrixXcd hermitian_part(const MatrixXcd &a) { return 0.5 * (a + a.adjoint()); }

inline double min_eigenvalue(const MatrixXd &sym) {
    if (sym.size() == 0)
        return 0.0;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

inline double max_abs_eigenvalue(const MatrixXd &sym) {
    if (sym.size() == 0)
        return 0.0;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return std::max(std::abs(es.eigenvalues()(0)), std::abs(es.eigenvalues()(sym.rows() - 1)));
}

inline double relative_difference(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / scale;
}

/// 64-bit FNV-1a, used for stable input fingerprints in reports.
class Fnv1a {
public:
    void update(const void *data, std::size_t n) {
        const auto *p = static_cast<const unsigned char *>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 1099511628211ULL;
        }
    }
    void update(double v) { update(&v, sizeof v); }
    void update(std::string_view s) { update(s.data(), s.size()); }
    std::uint64_t digest() const { return h_; }

private:
    std::uint64_t h_ = 14695981039346656037ULL;
};

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4)
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return out;
}

} // namespace wpt
