// Gauss-Legendre rules and cubic Lagrange interpolation on uniform samples.
#pragma once

#include <map>
#include <memory>

#include "tat/core.hpp"

namespace tat {

struct QuadratureRule {
    std::vector<double> nodes, weights; // on [-1, 1]
};

namespace detail {
inline QuadratureRule compute_gauss_legendre(std::size_t n) {
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double dn = static_cast<double>(n);
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(pi * (static_cast<double>(i) + 0.75) / (dn + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (std::size_t k = 2; k <= n; ++k) {
                const double dk = static_cast<double>(k);
                const double p2 = ((2.0 * dk - 1.0) * x * p1 - (dk - 1.0) * p0) / dk;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) p1 = x, p0 = 1.0;
            dp = dn * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.weights[i] = rule.weights[n - 1 - i] = w;
    }
    return rule;
}
} // namespace detail

/// n-point Gauss-Legendre rule on [-1, 1]; rules are computed once and cached.
inline const QuadratureRule& gauss_legendre(std::size_t n) {
    require(n >= 1, Errc::invalid_argument, "Gauss-Legendre rule needs at least one node");
    static std::mutex m;
    static std::map<std::size_t, std::unique_ptr<QuadratureRule>> cache;
    std::lock_guard lock(m);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<QuadratureRule>(detail::compute_gauss_legendre(n));
    return *slot;
}

/// Four-point Lagrange interpolation of samples v[j] = v(j*step) at x.
/// Zero outside [0, (n-1)*step]; the stencil is shifted inward at the ends.
inline double cubic_sample(std::span<const double> v, double step, double x) {
    const std::size_t n = v.size();
    const double s = x / step;
    if (!(s >= 0.0) || s > static_cast<double>(n - 1)) return 0.0;
    if (n < 4) {
        const auto i = std::min<std::size_t>(static_cast<std::size_t>(s), n - 2);
        const double t = s - static_cast<double>(i);
        return (1 - t) * v[i] + t * v[i + 1];
    }
    std::ptrdiff_t i = static_cast<std::ptrdiff_t>(std::floor(s)) - 1;
    i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 4);
    const double t = s - static_cast<double>(i); // in [0, 3]
    const double l0 = -(t - 1) * (t - 2) * (t - 3) / 6.0;
    const double l1 = t * (t - 2) * (t - 3) / 2.0;
    const double l2 = -t * (t - 1) * (t - 3) / 2.0;
    const double l3 = t * (t - 1) * (t - 2) / 6.0;
    const auto b = static_cast<std::size_t>(i);
    return l0 * v[b] + l1 * v[b + 1] + l2 * v[b + 2] + l3 * v[b + 3];
}

} // namespace tat
