// Closed observation surfaces carrying detectors (or ultrasound centers).
#pragma once

#include "tat/io.hpp"

namespace tat {

enum class SurfaceKind { sphere, cube };

/// Discretized closed surface: detector positions, outward unit normals and
/// quadrature weights that sum to the surface area (perimeter in 2D).
///
/// Spheres use a Fibonacci lattice in 3D and equispaced points on a circle in
/// 2D, both with equal weights. Cubes use the boundary nodes of a regular
/// lattice with per-face trapezoid weights; those nodes keep their lattice
/// multi-index so solvers can map them onto grid nodes exactly.
class ObservationSurface {
public:
    static ObservationSurface sphere(int dim, const Point& center, double radius, std::size_t count) {
        require(dim == 2 || dim == 3, Errc::invalid_argument, "surface dimension must be 2 or 3");
        require(radius > 0.0 && std::isfinite(radius), Errc::invariant_violation, "sphere radius must be positive");
        require(count >= 4, Errc::invalid_argument, "a sphere surface needs at least 4 points");
        ObservationSurface s;
        s.dim_ = dim;
        s.kind_ = SurfaceKind::sphere;
        s.center_ = center;
        s.radius_ = radius;
        if (dim == 2) s.center_[2] = 0.0;
        const double area = dim == 3 ? 4.0 * pi * radius * radius : 2.0 * pi * radius;
        const double golden = pi * (3.0 - std::sqrt(5.0));
        for (std::size_t k = 0; k < count; ++k) {
            Point u{};
            if (dim == 3) {
                const double z = 1.0 - (2.0 * static_cast<double>(k) + 1.0) / static_cast<double>(count);
                const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
                const double phi = golden * static_cast<double>(k);
                u = {rho * std::cos(phi), rho * std::sin(phi), z};
            } else {
                const double phi = 2.0 * pi * static_cast<double>(k) / static_cast<double>(count);
                u = {std::cos(phi), std::sin(phi), 0.0};
            }
            s.points_.push_back(s.center_ + radius * u);
            s.normals_.push_back(u);
            s.weights_.push_back(area / static_cast<double>(count));
        }
        s.validate();
        return s;
    }

    static ObservationSurface cube(int dim, const Point& lo, const Point& hi, std::array<std::size_t, 3> nodes) {
        require(dim == 2 || dim == 3, Errc::invalid_argument, "surface dimension must be 2 or 3");
        ObservationSurface s;
        s.dim_ = dim;
        s.kind_ = SurfaceKind::cube;
        s.lo_ = lo;
        s.hi_ = hi;
        if (dim == 2) {
            s.lo_[2] = s.hi_[2] = 0.0;
            nodes[2] = 1;
        }
        std::array<double, 3> h{1, 1, 1};
        for (int a = 0; a < dim; ++a) {
            require(hi[a] > lo[a], Errc::invariant_violation, "cube bounds must satisfy lo < hi");
            require(nodes[a] >= 3, Errc::invalid_argument, "cube surfaces need at least 3 nodes per axis");
            h[a] = (hi[a] - lo[a]) / static_cast<double>(nodes[a] - 1);
        }
        s.lattice_ = nodes;
        auto trap = [&](int a, std::size_t i) { return (i == 0 || i + 1 == nodes[a]) ? 0.5 * h[a] : h[a]; };
        for (std::size_t i = 0; i < nodes[0]; ++i)
            for (std::size_t j = 0; j < nodes[1]; ++j)
                for (std::size_t k = 0; k < nodes[2]; ++k) {
                    const std::array<std::size_t, 3> ijk{i, j, k};
                    Point normal{0, 0, 0};
                    double weight = 0.0;
                    for (int a = 0; a < dim; ++a) {
                        const bool at_lo = ijk[a] == 0, at_hi = ijk[a] + 1 == nodes[a];
                        if (!at_lo && !at_hi) continue;
                        double w = 1.0;
                        for (int b = 0; b < dim; ++b)
                            if (b != a) w *= trap(b, ijk[b]);
                        weight += w;
                        normal[a] += at_lo ? -1.0 : 1.0;
                    }
                    if (weight == 0.0) continue;
                    Point p{0, 0, 0};
                    for (int a = 0; a < dim; ++a) p[a] = lo[a] + h[a] * static_cast<double>(ijk[a]);
                    for (int a = 0; a < dim; ++a)
                        if (ijk[a] + 1 == nodes[a]) p[a] = hi[a];
                    s.points_.push_back(p);
                    s.normals_.push_back(normalized(normal));
                    s.weights_.push_back(weight);
                    s.lattice_index_.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                                                static_cast<std::uint32_t>(k)});
                }
        s.validate();
        return s;
    }

    /// Cube surface whose detectors are exactly the boundary nodes of `grid`.
    static ObservationSurface cube_on_grid(const GridSpec& grid) {
        Point lo{0, 0, 0}, hi{0, 0, 0};
        for (int a = 0; a < grid.dim; ++a) {
            lo[a] = grid.lo(a);
            hi[a] = grid.hi(a);
        }
        return cube(grid.dim, lo, hi, grid.shape);
    }

    int dim() const { return dim_; }
    SurfaceKind kind() const { return kind_; }
    std::size_t size() const { return points_.size(); }
    const std::vector<Point>& points() const { return points_; }
    const std::vector<Point>& normals() const { return normals_; }
    const std::vector<double>& weights() const { return weights_; }
    const Point& center() const { return center_; }
    double radius() const { return radius_; }
    const Point& lo() const { return lo_; }
    const Point& hi() const { return hi_; }
    const std::array<std::size_t, 3>& lattice() const { return lattice_; }
    const std::vector<std::array<std::uint32_t, 3>>& lattice_index() const { return lattice_index_; }

    double area() const {
        if (kind_ == SurfaceKind::sphere) return dim_ == 3 ? 4.0 * pi * radius_ * radius_ : 2.0 * pi * radius_;
        const Point l = hi_ - lo_;
        return dim_ == 3 ? 2.0 * (l[0] * l[1] + l[1] * l[2] + l[0] * l[2]) : 2.0 * (l[0] + l[1]);
    }

    /// Largest distance between two points of the enclosed region.
    double diameter() const {
        if (kind_ == SurfaceKind::sphere) return 2.0 * radius_;
        return norm(hi_ - lo_);
    }

    Point centroid() const { return kind_ == SurfaceKind::sphere ? center_ : 0.5 * (lo_ + hi_); }

    bool strictly_inside(const Point& x) const {
        if (kind_ == SurfaceKind::sphere) return distance(x, center_) < radius_;
        for (int a = 0; a < dim_; ++a)
            if (!(x[a] > lo_[a] && x[a] < hi_[a])) return false;
        return true;
    }

    /// Distance from x to the surface, positive inside and negative outside
    /// (for cubes outside: minus the largest axis overshoot).
    double inside_depth(const Point& x) const {
        if (kind_ == SurfaceKind::sphere) return radius_ - distance(x, center_);
        double d = std::numeric_limits<double>::infinity();
        for (int a = 0; a < dim_; ++a) d = std::min({d, x[a] - lo_[a], hi_[a] - x[a]});
        return d;
    }

    /// Closest point on the surface (used to map grid nodes onto detectors).
    Point project(const Point& x) const {
        if (kind_ == SurfaceKind::sphere) {
            Point d = x - center_;
            if (norm(d) == 0.0) d = {1, 0, 0};
            return center_ + radius_ * normalized(d);
        }
        Point p = x;
        for (int a = 0; a < dim_; ++a) p[a] = std::clamp(p[a], lo_[a], hi_[a]);
        if (strictly_inside(x)) {
            int best = 0;
            double gap = std::numeric_limits<double>::infinity();
            bool to_hi = false;
            for (int a = 0; a < dim_; ++a) {
                if (x[a] - lo_[a] < gap) gap = x[a] - lo_[a], best = a, to_hi = false;
                if (hi_[a] - x[a] < gap) gap = hi_[a] - x[a], best = a, to_hi = true;
            }
            p[best] = to_hi ? hi_[best] : lo_[best];
        }
        return p;
    }

    /// Throws support_violation unless the support box of `f` lies strictly
    /// inside the surface.
    void check_encloses(const ScalarField& f) const {
        require(f.grid().dim == dim_, Errc::invalid_argument, "field and surface dimensions differ");
        if (kind_ == SurfaceKind::sphere) {
            // Nonzero nodes, padded by one cell, must lie inside the sphere.
            const double pad = f.grid().max_spacing();
            for (std::size_t n = 0; n < f.size(); ++n)
                require(f[n] == 0.0 || distance(f.grid().point(n), center_) + pad < radius_, Errc::support_violation,
                        "field '" + f.name() + "' support is not strictly inside the observation surface");
            return;
        }
        const SupportBox box = f.support();
        if (box.empty) return;
        const int corners = 1 << dim_;
        for (int c = 0; c < corners; ++c) {
            Point p{0, 0, 0};
            for (int a = 0; a < dim_; ++a) p[a] = (c >> a) & 1 ? box.hi[a] : box.lo[a];
            require(strictly_inside(p), Errc::support_violation,
                    "field '" + f.name() + "' support is not strictly inside the observation surface");
        }
    }

    void validate() const {
        require(!points_.empty(), Errc::invariant_violation, "surface has no points");
        require(points_.size() == normals_.size() && points_.size() == weights_.size(), Errc::invariant_violation,
                "surface arrays differ in length");
        const double scale = kind_ == SurfaceKind::sphere ? radius_ : norm(hi_ - lo_);
        for (std::size_t n = 0; n < points_.size(); ++n) {
            require(weights_[n] > 0.0, Errc::invariant_violation, "surface weights must be positive");
            require(on_surface_error(points_[n]) <= 1e-12 * scale, Errc::invariant_violation,
                    "surface point " + std::to_string(n) + " is off the declared surface");
        }
    }

    json descriptor() const {
        json j;
        j["dim"] = dim_;
        if (kind_ == SurfaceKind::sphere) {
            j["kind"] = "sphere";
            j["center"] = std::vector<double>(center_.begin(), center_.begin() + dim_);
            j["radius"] = radius_;
            j["count"] = points_.size();
        } else {
            j["kind"] = "cube";
            j["lo"] = std::vector<double>(lo_.begin(), lo_.begin() + dim_);
            j["hi"] = std::vector<double>(hi_.begin(), hi_.begin() + dim_);
            j["nodes"] = std::vector<std::size_t>(lattice_.begin(), lattice_.begin() + dim_);
        }
        return j;
    }

    static ObservationSurface from_descriptor(const json& j) {
        try {
            const int dim = j.at("dim").get<int>();
            require(dim == 2 || dim == 3, Errc::invalid_argument, "surface dim must be 2 or 3");
            auto point = [&](const char* key) {
                const auto v = j.at(key).get<std::vector<double>>();
                require(v.size() == static_cast<std::size_t>(dim), Errc::invalid_argument,
                        std::string("surface '") + key + "' must have dim entries");
                Point p{0, 0, 0};
                for (int a = 0; a < dim; ++a) p[a] = v[a];
                return p;
            };
            const std::string kind = j.at("kind").get<std::string>();
            if (kind == "sphere")
                return sphere(dim, point("center"), j.at("radius").get<double>(), j.at("count").get<std::size_t>());
            if (kind == "cube") {
                const auto n = j.at("nodes").get<std::vector<std::size_t>>();
                require(n.size() == static_cast<std::size_t>(dim), Errc::invalid_argument,
                        "surface 'nodes' must have dim entries");
                std::array<std::size_t, 3> nodes{1, 1, 1};
                for (int a = 0; a < dim; ++a) nodes[a] = n[a];
                return cube(dim, point("lo"), point("hi"), nodes);
            }
            fail(Errc::invalid_argument, "unknown surface kind '" + kind + "'");
        } catch (const json::exception& e) {
            fail(Errc::malformed_header, std::string("surface descriptor: ") + e.what());
        }
    }

private:
    double on_surface_error(const Point& p) const {
        if (kind_ == SurfaceKind::sphere) return std::abs(distance(p, center_) - radius_);
        double inside = 0.0, face = std::numeric_limits<double>::infinity();
        for (int a = 0; a < dim_; ++a) {
            inside = std::max({inside, lo_[a] - p[a], p[a] - hi_[a]});
            face = std::min({face, std::abs(p[a] - lo_[a]), std::abs(p[a] - hi_[a])});
        }
        return std::max(inside, face);
    }

    int dim_ = 3;
    SurfaceKind kind_ = SurfaceKind::sphere;
    Point center_{0, 0, 0};
    double radius_ = 0.0;
    Point lo_{0, 0, 0}, hi_{0, 0, 0};
    std::array<std::size_t, 3> lattice_{0, 0, 0};
    std::vector<Point> points_, normals_;
    std::vector<double> weights_;
    std::vector<std::array<std::uint32_t, 3>> lattice_index_;
};

} // namespace tat
