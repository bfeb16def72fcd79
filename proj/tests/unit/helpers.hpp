// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wpt/wpt.hpp"

#include <catch_amalgamated.hpp>

#include <random>

namespace testing {

using namespace wpt;

inline ImpedanceMatrix preset_system(Preset p, double d_lambda = 0.1, double theta_deg = 0.0, bool radiation = true) {
    return acceptance::detail::preset_system(p, d_lambda, theta_deg, radiation);
}

/// Random complex symmetric matrix with diagonally dominant (hence positive
/// definite) real part.
inline ImpedanceMatrix random_passive(int n, std::mt19937_64 &rng, double coupling = 0.3) {
    std::uniform_real_distribution<double> u(-1.0, 1.0), r(0.5, 2.0);
    MatrixXd re = MatrixXd::Zero(n, n), im = MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        re(i, i) = r(rng);
        im(i, i) = 10.0 * u(rng);
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            re(i, j) = re(j, i) = coupling / (n - 1) * u(rng) * std::sqrt(re(i, i) * re(j, j));
            im(i, j) = im(j, i) = 4.0 * u(rng);
        }
    return ImpedanceMatrix(re.cast<cdouble>() + cdouble(0, 1) * im.cast<cdouble>(), default_frequency_hz);
}

inline VectorXcd random_currents(Eigen::Index n, std::mt19937_64 &rng) {
    std::normal_distribution<double> g;
    VectorXcd i(n);
    for (Eigen::Index k = 0; k < n; ++k)
        i(k) = cdouble(g(rng), g(rng));
    return i;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

} // namespace testing
