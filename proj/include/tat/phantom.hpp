// Analytic phantoms (balls and truncated Gaussians) and their rasterization.
#pragma once

#include <variant>

#include "tat/grid.hpp"

namespace tat {

struct Ball {
    Point center{0, 0, 0};
    double radius = 0.0;
    double amplitude = 1.0;
};

/// exp(-r^2 / 2 width^2), shifted and rescaled so it reaches zero continuously
/// at r = gaussian_cutoff * width. The cutoff gives the primitive a compact
/// support, which the observation-surface checks rely on.
struct Gaussian {
    Point center{0, 0, 0};
    double width = 0.0;
    double amplitude = 1.0;
};

inline constexpr double gaussian_cutoff = 5.0;

using Primitive = std::variant<Ball, Gaussian>;

struct PhantomDescriptor {
    std::vector<Primitive> primitives;
    double background = 0.0;
};

struct RasterOptions {
    /// One-cell linear ramp across ball edges; false gives hard indicators.
    bool smooth_edges = true;
    /// Ramp width in cells of the largest grid spacing.
    double edge_cells = 1.0;
};

/// Raised when a primitive's support leaves the grid box.
class PhantomSupportError : public Error {
public:
    PhantomSupportError(std::size_t index, const std::string& what)
        : Error(Errc::support_violation, what), index_(index) {}
    std::size_t primitive_index() const noexcept { return index_; }

private:
    std::size_t index_;
};

namespace detail {
inline double primitive_reach(const Primitive& prim, double ramp) {
    if (const auto* b = std::get_if<Ball>(&prim)) return b->radius + 0.5 * ramp;
    return gaussian_cutoff * std::get<Gaussian>(prim).width;
}
inline const Point& primitive_center(const Primitive& prim) {
    return std::visit([](const auto& p) -> const Point& { return p.center; }, prim);
}
} // namespace detail

inline void validate(const PhantomDescriptor& desc) {
    require(std::isfinite(desc.background), Errc::invariant_violation, "phantom background must be finite");
    for (std::size_t n = 0; n < desc.primitives.size(); ++n) {
        const auto& prim = desc.primitives[n];
        const double size = std::holds_alternative<Ball>(prim) ? std::get<Ball>(prim).radius
                                                               : std::get<Gaussian>(prim).width;
        if (!(std::isfinite(size) && size > 0.0))
            throw PhantomSupportError(n, "primitive " + std::to_string(n) + " has non-positive radius/width");
    }
}

/// Value of the phantom at `x`. `ramp` is the full width of the linear edge
/// ramp applied to balls (0 gives an exact indicator).
inline double evaluate(const PhantomDescriptor& desc, const Point& x, double ramp = 0.0) {
    static const double tail = std::exp(-0.5 * gaussian_cutoff * gaussian_cutoff);
    double value = desc.background;
    for (const auto& prim : desc.primitives) {
        if (const auto* b = std::get_if<Ball>(&prim)) {
            const double signed_dist = distance(x, b->center) - b->radius;
            if (ramp > 0.0)
                value += b->amplitude * std::clamp(0.5 - signed_dist / ramp, 0.0, 1.0);
            else if (signed_dist <= 0.0)
                value += b->amplitude;
        } else {
            const auto& g = std::get<Gaussian>(prim);
            const double r = distance(x, g.center);
            if (r < gaussian_cutoff * g.width) {
                const double e = std::exp(-0.5 * r * r / (g.width * g.width));
                value += g.amplitude * (e - tail) / (1.0 - tail);
            }
        }
    }
    return value;
}

/// Smallest ball enclosing every primitive's support (radius 0 if empty).
inline std::pair<Point, double> support_ball(const PhantomDescriptor& desc, double ramp = 0.0) {
    if (desc.primitives.empty()) return {Point{0, 0, 0}, 0.0};
    Point lo = detail::primitive_center(desc.primitives.front());
    Point hi = lo;
    for (const auto& prim : desc.primitives) {
        const Point& c = detail::primitive_center(prim);
        const double r = detail::primitive_reach(prim, ramp);
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], c[a] - r);
            hi[a] = std::max(hi[a], c[a] + r);
        }
    }
    const Point center = 0.5 * (lo + hi);
    double radius = 0.0;
    for (const auto& prim : desc.primitives)
        radius = std::max(radius, distance(center, detail::primitive_center(prim)) + detail::primitive_reach(prim, ramp));
    return {center, radius};
}

inline double ramp_width(const GridSpec& grid, const RasterOptions& opts) {
    return opts.smooth_edges ? opts.edge_cells * grid.max_spacing() : 0.0;
}

inline ScalarField rasterize_phantom(const PhantomDescriptor& desc, const GridSpec& grid,
                                     const RasterOptions& opts = {}, std::string name = "phantom") {
    validate(desc);
    grid.validate();
    const double ramp = ramp_width(grid, opts);
    for (std::size_t n = 0; n < desc.primitives.size(); ++n) {
        const Point& c = detail::primitive_center(desc.primitives[n]);
        const double reach = detail::primitive_reach(desc.primitives[n], ramp);
        for (int a = 0; a < grid.dim; ++a) {
            if (!(c[a] - reach > grid.lo(a) && c[a] + reach < grid.hi(a)))
                throw PhantomSupportError(n, "primitive " + std::to_string(n) +
                                                 " support leaves the grid bounding box along axis " +
                                                 std::to_string(a));
        }
        if (grid.dim == 2 && c[2] != 0.0)
            throw PhantomSupportError(n, "primitive " + std::to_string(n) + " has nonzero z in a 2D phantom");
    }
    std::vector<double> v(grid.size());
    parallel_for(v.size(), [&](std::size_t n) { v[n] = evaluate(desc, grid.point(n), ramp); }, 4096);
    return ScalarField(grid, std::move(v), std::move(name));
}

} // namespace tat
