// SPDX-License-Identifier: Apache-2.0
//
// Golden-section maximisation of a unimodal scalar function, with a grid-scan
// fallback when the bracket turns out not to contain an interior maximum.

#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace wpt {

template <class T> struct ScalarMaximum {
    double x = 0.0;
    double value = 0.0;
    T payload{};
    int evaluations = 0;
    bool grid_fallback = false;
    std::vector<std::string> warnings;
};

namespace detail {

template <class T, class F>
ScalarMaximum<T> golden_core(F &&f, double lo, double hi, double rel_tol, int &evals, bool log_scale) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    auto to_x = [&](double u) { return log_scale ? std::exp(u) : u; };
    double a = log_scale ? std::log(lo) : lo;
    double b = log_scale ? std::log(hi) : hi;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    auto e1 = f(to_x(x1));
    auto e2 = f(to_x(x2));
    evals += 2;
    while (true) {
        const double width = log_scale ? (b - a) : (b - a) / std::max(std::abs(0.5 * (a + b)), 1e-300);
        if (width <= rel_tol)
            break;
        if (e1.first >= e2.first) {
            b = x2;
            x2 = x1;
            e2 = std::move(e1);
            x1 = b - inv_phi * (b - a);
            e1 = f(to_x(x1));
        } else {
            a = x1;
            x1 = x2;
            e1 = std::move(e2);
            x2 = a + inv_phi * (b - a);
            e2 = f(to_x(x2));
        }
        ++evals;
    }
    ScalarMaximum<T> out;
    if (e1.first >= e2.first) {
        out.x = to_x(x1);
        out.value = e1.first;
        out.payload = std::move(e1.second);
    } else {
        out.x = to_x(x2);
        out.value = e2.first;
        out.payload = std::move(e2.second);
    }
    return out;
}

} // namespace detail

/// Maximises f over [lo, hi]. `f(x)` returns {value, payload}. The search runs
/// in log(x) when `log_scale` is set (requires lo > 0). If the endpoints beat
/// the interior optimum the bracket is rejected: a grid of `grid_points` is
/// scanned and the search is repeated around the best grid cell.
template <class T, class F>
ScalarMaximum<T> golden_section_maximize(F &&f, double lo, double hi, double rel_tol = 1e-4, bool log_scale = true,
                                         int grid_points = 41) {
    int evals = 0;
    auto best = detail::golden_core<T>(f, lo, hi, rel_tol, evals, log_scale);
    const auto f_lo = f(lo);
    const auto f_hi = f(hi);
    evals += 2;
    const double slack = 1e-12 * std::max(1.0, std::abs(best.value));
    if (f_lo.first <= best.value + slack && f_hi.first <= best.value + slack) {
        best.evaluations = evals;
        return best;
    }

    ScalarMaximum<T> out;
    out.grid_fallback = true;
    out.warnings.push_back("load search: bracket does not enclose an interior maximum, falling back to grid scan");
    std::vector<double> xs(static_cast<std::size_t>(grid_points));
    std::size_t arg = 0;
    double arg_val = -INFINITY;
    for (int k = 0; k < grid_points; ++k) {
        const double s = static_cast<double>(k) / (grid_points - 1);
        xs[static_cast<std::size_t>(k)] = log_scale ? lo * std::pow(hi / lo, s) : lo + s * (hi - lo);
        auto e = f(xs[static_cast<std::size_t>(k)]);
        ++evals;
        if (e.first > arg_val) {
            arg_val = e.first;
            arg = static_cast<std::size_t>(k);
            out.x = xs[arg];
            out.value = e.first;
            out.payload = std::move(e.second);
        }
    }
    if (arg > 0 && arg + 1 < xs.size()) {
        auto local = detail::golden_core<T>(f, xs[arg - 1], xs[arg + 1], rel_tol, evals, log_scale);
        if (local.value > out.value) {
            out.x = local.x;
            out.value = local.value;
            out.payload = std::move(local.payload);
        }
    } else {
        out.warnings.push_back("load search: maximum lies on the search boundary");
    }
    out.evaluations = evals;
    return out;
}

} // namespace wpt
