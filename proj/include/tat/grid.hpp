// Uniform axis-aligned grids and the scalar fields sampled on them.
#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tat/core.hpp"

namespace tat {

/// Uniform, axis-aligned sampling lattice in 2 or 3 dimensions.
/// Storage is row-major with the last axis fastest. Inactive axes (the third
/// axis of a 2D grid) have shape 1, spacing 1 and origin 0.
struct GridSpec {
    int dim = 0;
    std::array<std::size_t, 3> shape{1, 1, 1};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};

    static GridSpec make(const std::vector<std::size_t>& shape, const std::vector<double>& spacing,
                         const std::vector<double>& origin) {
        require(shape.size() == 2 || shape.size() == 3, Errc::invariant_violation,
                "grid dimension must be 2 or 3, got " + std::to_string(shape.size()));
        require(spacing.size() == shape.size() && origin.size() == shape.size(), Errc::invariant_violation,
                "grid shape, spacing and origin must have the same length");
        GridSpec g;
        g.dim = static_cast<int>(shape.size());
        for (std::size_t a = 0; a < shape.size(); ++a) {
            g.shape[a] = shape[a];
            g.spacing[a] = spacing[a];
            g.origin[a] = origin[a];
        }
        g.validate();
        return g;
    }

    /// Grid with `n` nodes per axis spanning [lo, hi] on every active axis.
    static GridSpec cube(int dim, std::size_t n, double lo, double hi) {
        require(n >= 2, Errc::invariant_violation, "grid needs at least 2 nodes per axis");
        std::vector<std::size_t> s(static_cast<std::size_t>(dim), n);
        std::vector<double> h(static_cast<std::size_t>(dim), (hi - lo) / static_cast<double>(n - 1));
        std::vector<double> o(static_cast<std::size_t>(dim), lo);
        return make(s, h, o);
    }

    void validate() const {
        require(dim == 2 || dim == 3, Errc::invariant_violation, "grid dimension must be 2 or 3");
        for (int a = 0; a < dim; ++a) {
            require(shape[a] >= 2, Errc::invariant_violation, "grid shape must be >= 2 on every axis");
            require(std::isfinite(spacing[a]) && spacing[a] > 0.0, Errc::invariant_violation,
                    "grid spacing must be positive on every axis");
            require(std::isfinite(origin[a]), Errc::invariant_violation, "grid origin must be finite");
        }
        for (int a = dim; a < 3; ++a)
            require(shape[a] == 1, Errc::invariant_violation, "inactive grid axes must have shape 1");
    }

    std::size_t size() const { return shape[0] * shape[1] * shape[2]; }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k = 0) const {
        return (i * shape[1] + j) * shape[2] + k;
    }
    std::array<std::size_t, 3> unravel(std::size_t idx) const {
        const std::size_t k = idx % shape[2];
        const std::size_t j = (idx / shape[2]) % shape[1];
        const std::size_t i = idx / (shape[1] * shape[2]);
        return {i, j, k};
    }
    double coord(int axis, std::size_t i) const { return origin[axis] + spacing[axis] * static_cast<double>(i); }
    Point point(std::size_t i, std::size_t j, std::size_t k = 0) const {
        Point p{coord(0, i), coord(1, j), 0.0};
        if (dim == 3) p[2] = coord(2, k);
        return p;
    }
    Point point(std::size_t idx) const {
        const auto [i, j, k] = unravel(idx);
        return point(i, j, k);
    }
    double lo(int axis) const { return origin[axis]; }
    double hi(int axis) const { return origin[axis] + spacing[axis] * static_cast<double>(shape[axis] - 1); }
    double min_spacing() const {
        double h = spacing[0];
        for (int a = 1; a < dim; ++a) h = std::min(h, spacing[a]);
        return h;
    }
    double max_spacing() const {
        double h = spacing[0];
        for (int a = 1; a < dim; ++a) h = std::max(h, spacing[a]);
        return h;
    }
    double cell_volume() const {
        double v = 1.0;
        for (int a = 0; a < dim; ++a) v *= spacing[a];
        return v;
    }
    bool is_boundary(std::size_t idx) const {
        const auto ijk = unravel(idx);
        for (int a = 0; a < dim; ++a)
            if (ijk[a] == 0 || ijk[a] + 1 == shape[a]) return true;
        return false;
    }
    bool contains(const Point& p, double slack = 0.0) const {
        for (int a = 0; a < dim; ++a)
            if (p[a] < lo(a) - slack || p[a] > hi(a) + slack) return false;
        return true;
    }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Axis-aligned bounding box of the nodes where a field is nonzero.
struct SupportBox {
    bool empty = true;
    Point lo{0, 0, 0};
    Point hi{0, 0, 0};

    Point center() const { return 0.5 * (lo + hi); }
    double radius() const { return 0.5 * distance(lo, hi); }
};

/// Immutable sampled function on a grid.
class ScalarField {
public:
    ScalarField() = default;
    ScalarField(GridSpec grid, std::vector<double> values, std::string name = {})
        : grid_(grid), values_(std::move(values)), name_(std::move(name)) {
        grid_.validate();
        require(values_.size() == grid_.size(), Errc::invariant_violation,
                "field has " + std::to_string(values_.size()) + " values, grid needs " +
                    std::to_string(grid_.size()));
        require(all_finite(values_), Errc::non_finite, "field '" + name_ + "' contains non-finite values");
    }

    static ScalarField constant(const GridSpec& grid, double value, std::string name = {}) {
        return ScalarField(grid, std::vector<double>(grid.size(), value), std::move(name));
    }

    template <class Fn>
    static ScalarField sample(const GridSpec& grid, Fn&& fn, std::string name = {}) {
        std::vector<double> v(grid.size());
        for (std::size_t n = 0; n < v.size(); ++n) v[n] = fn(grid.point(n));
        return ScalarField(grid, std::move(v), std::move(name));
    }

    const GridSpec& grid() const { return grid_; }
    std::span<const double> values() const { return values_; }
    const std::vector<double>& data() const { return values_; }
    const std::string& name() const { return name_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t n) const { return values_[n]; }
    double at(std::size_t i, std::size_t j, std::size_t k = 0) const { return values_[grid_.index(i, j, k)]; }

    ScalarField renamed(std::string name) const { return ScalarField(grid_, values_, std::move(name)); }

    double min() const { return *std::min_element(values_.begin(), values_.end()); }
    double max() const { return *std::max_element(values_.begin(), values_.end()); }
    double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    /// Multilinear interpolation; zero outside the grid.
    double interpolate(const Point& p) const {
        std::array<std::size_t, 3> i0{0, 0, 0};
        std::array<double, 3> t{0, 0, 0};
        for (int a = 0; a < grid_.dim; ++a) {
            const double s = (p[a] - grid_.origin[a]) / grid_.spacing[a];
            const double last = static_cast<double>(grid_.shape[a] - 1);
            if (!(s >= 0.0 && s <= last)) return 0.0;
            double fl = std::floor(s);
            if (fl >= last) fl = last - 1.0;
            i0[a] = static_cast<std::size_t>(fl);
            t[a] = s - fl;
        }
        if (grid_.dim == 2) {
            const std::size_t n0 = grid_.index(i0[0], i0[1]);
            const std::size_t s0 = grid_.shape[1];
            return (1 - t[0]) * ((1 - t[1]) * values_[n0] + t[1] * values_[n0 + 1]) +
                   t[0] * ((1 - t[1]) * values_[n0 + s0] + t[1] * values_[n0 + s0 + 1]);
        }
        const std::size_t s1 = grid_.shape[2];
        const std::size_t s0 = grid_.shape[1] * s1;
        const std::size_t n0 = grid_.index(i0[0], i0[1], i0[2]);
        auto lerp_z = [&](std::size_t n) { return (1 - t[2]) * values_[n] + t[2] * values_[n + 1]; };
        const double c00 = lerp_z(n0), c01 = lerp_z(n0 + s1), c10 = lerp_z(n0 + s0), c11 = lerp_z(n0 + s0 + s1);
        return (1 - t[0]) * ((1 - t[1]) * c00 + t[1] * c01) + t[0] * ((1 - t[1]) * c10 + t[1] * c11);
    }

    /// Bounding box of nodes with |value| > threshold, padded by one cell so
    /// that the multilinear interpolant vanishes outside it.
    SupportBox support(double threshold = 0.0) const {
        SupportBox box;
        for (std::size_t n = 0; n < values_.size(); ++n) {
            if (std::abs(values_[n]) <= threshold) continue;
            const Point p = grid_.point(n);
            if (box.empty) {
                box.lo = box.hi = p;
                box.empty = false;
            } else {
                for (int a = 0; a < grid_.dim; ++a) {
                    box.lo[a] = std::min(box.lo[a], p[a]);
                    box.hi[a] = std::max(box.hi[a], p[a]);
                }
            }
        }
        if (!box.empty)
            for (int a = 0; a < grid_.dim; ++a) {
                box.lo[a] = std::max(grid_.lo(a), box.lo[a] - grid_.spacing[a]);
                box.hi[a] = std::min(grid_.hi(a), box.hi[a] + grid_.spacing[a]);
            }
        return box;
    }

private:
    GridSpec grid_;
    std::vector<double> values_;
    std::string name_;
};

// Field arithmetic used by the iterative methods and metrics.

inline void require_same_grid(const ScalarField& a, const ScalarField& b, std::string_view what) {
    require(a.grid() == b.grid(), Errc::invalid_argument, std::string(what) + ": fields live on different grids");
}

inline ScalarField axpy(double alpha, const ScalarField& x, const ScalarField& y, std::string name = {}) {
    require_same_grid(x, y, "axpy");
    std::vector<double> out(y.data());
    for (std::size_t n = 0; n < out.size(); ++n) out[n] += alpha * x[n];
    return ScalarField(y.grid(), std::move(out), name.empty() ? y.name() : std::move(name));
}

inline ScalarField scaled(double alpha, const ScalarField& x) {
    std::vector<double> out(x.data());
    for (double& v : out) v *= alpha;
    return ScalarField(x.grid(), std::move(out), x.name());
}

inline double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) s += (a[n] - b[n]) * (a[n] - b[n]);
    return std::sqrt(s);
}

inline double relative_l2(std::span<const double> estimate, std::span<const double> reference) {
    const double ref = l2_norm(reference);
    require(ref > 0.0, Errc::invalid_argument, "relative error against an all-zero reference");
    return l2_distance(estimate, reference) / ref;
}

inline double relative_l2(const ScalarField& estimate, const ScalarField& reference) {
    require_same_grid(estimate, reference, "relative_l2");
    return relative_l2(estimate.values(), reference.values());
}

} // namespace tat
