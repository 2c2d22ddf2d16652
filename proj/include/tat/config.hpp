// Schema-checked readers for experiment configs. Every failure is an
// invalid_argument error that names the offending field by its JSON path.
#pragma once

#include <set>

#include "tat/conductivity.hpp"
#include "tat/phantom.hpp"
#include "tat/surface.hpp"

namespace tat::config {

/// A JSON object plus the path it was found at, for error messages.
class Node {
public:
    Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
        require(j.is_object(), Errc::invalid_argument, "'" + path_ + "' must be a JSON object");
    }

    const json& raw() const { return *j_; }
    const std::string& path() const { return path_; }
    bool has(const std::string& key) const { return j_->contains(key); }
    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    /// Rejects keys outside `allowed`.
    void only(std::initializer_list<std::string_view> allowed) const {
        for (auto it = j_->begin(); it != j_->end(); ++it)
            require(std::find(allowed.begin(), allowed.end(), it.key()) != allowed.end(), Errc::invalid_argument,
                    "unknown field '" + field(it.key()) + "'");
    }

    Node child(const std::string& key) const {
        require(has(key), Errc::invalid_argument, "missing field '" + field(key) + "'");
        return Node(j_->at(key), field(key));
    }

    template <class T>
    T get(const std::string& key) const {
        require(has(key), Errc::invalid_argument, "missing field '" + field(key) + "'");
        return as<T>(j_->at(key), field(key));
    }

    template <class T>
    T get(const std::string& key, T fallback) const {
        return has(key) ? as<T>(j_->at(key), field(key)) : fallback;
    }

    double positive(const std::string& key) const {
        const double v = get<double>(key);
        require(std::isfinite(v) && v > 0.0, Errc::invalid_argument, "field '" + field(key) + "' must be > 0");
        return v;
    }

    double positive(const std::string& key, double fallback) const { return has(key) ? positive(key) : fallback; }

    /// One of `choices`.
    std::string choice(const std::string& key, std::initializer_list<std::string_view> choices,
                       std::optional<std::string> fallback = std::nullopt) const {
        if (!has(key) && fallback) return *fallback;
        const auto v = get<std::string>(key);
        if (std::find(choices.begin(), choices.end(), v) == choices.end()) {
            std::string list;
            for (auto c : choices) list += (list.empty() ? "" : ", ") + std::string(c);
            fail(Errc::invalid_argument, "field '" + field(key) + "' has unknown value '" + v + "' (expected " + list + ")");
        }
        return v;
    }

    template <class T>
    static T as(const json& j, const std::string& where) {
        try {
            return j.get<T>();
        } catch (const json::exception&) {
            fail(Errc::invalid_argument, "field '" + where + "' has the wrong type");
        }
    }

private:
    const json* j_;
    std::string path_;
};

inline Point point(const Node& n, const std::string& key, int dim) {
    const auto v = n.get<std::vector<double>>(key);
    require(v.size() == static_cast<std::size_t>(dim), Errc::invalid_argument,
            "field '" + n.field(key) + "' must have " + std::to_string(dim) + " entries");
    Point p{0, 0, 0};
    for (int a = 0; a < dim; ++a) p[a] = v[a];
    return p;
}

/// {"dim", "n", "lo", "hi"} for a cube, or {"shape", "lo", "hi"} with per-axis lists.
inline GridSpec grid(const Node& n) {
    n.only({"dim", "n", "lo", "hi", "shape"});
    if (n.has("shape")) {
        const auto shape = n.get<std::vector<std::size_t>>("shape");
        const int dim = static_cast<int>(shape.size());
        require(dim == 2 || dim == 3, Errc::invalid_argument, "field '" + n.field("shape") + "' must have 2 or 3 entries");
        const Point lo = point(n, "lo", dim), hi = point(n, "hi", dim);
        std::vector<double> spacing(dim), origin(dim);
        for (int a = 0; a < dim; ++a) {
            require(shape[a] >= 2 && hi[a] > lo[a], Errc::invalid_argument, "grid '" + n.path() + "' is degenerate");
            spacing[a] = (hi[a] - lo[a]) / static_cast<double>(shape[a] - 1);
            origin[a] = lo[a];
        }
        return GridSpec::make(shape, spacing, origin);
    }
    const int dim = n.get<int>("dim");
    require(dim == 2 || dim == 3, Errc::invalid_argument, "field '" + n.field("dim") + "' must be 2 or 3");
    const auto count = n.get<std::size_t>("n");
    const double lo = n.get<double>("lo"), hi = n.get<double>("hi");
    require(count >= 2 && hi > lo, Errc::invalid_argument, "grid '" + n.path() + "' is degenerate");
    return GridSpec::cube(dim, count, lo, hi);
}

inline json primitive_to_json(const Primitive& p, int dim) {
    json j;
    const Point& c = detail::primitive_center(p);
    j["center"] = std::vector<double>(c.begin(), c.begin() + dim);
    if (const auto* b = std::get_if<Ball>(&p)) {
        j["type"] = "ball";
        j["radius"] = b->radius;
        j["amplitude"] = b->amplitude;
    } else {
        const auto& g = std::get<Gaussian>(p);
        j["type"] = "gaussian";
        j["width"] = g.width;
        j["amplitude"] = g.amplitude;
    }
    return j;
}

inline json phantom_to_json(const PhantomDescriptor& d, int dim) {
    json j;
    j["background"] = d.background;
    j["primitives"] = json::array();
    for (const auto& p : d.primitives) j["primitives"].push_back(primitive_to_json(p, dim));
    return j;
}

/// {"background", "primitives": [{"type": "ball"|"gaussian", "center", "radius"|"width", "amplitude"}]}
inline PhantomDescriptor phantom(const Node& n, int dim) {
    PhantomDescriptor d;
    d.background = n.get<double>("background", 0.0);
    require(n.has("primitives") && n.raw().at("primitives").is_array(), Errc::invalid_argument,
            "field '" + n.field("primitives") + "' must be an array");
    const json& list = n.raw().at("primitives");
    for (std::size_t i = 0; i < list.size(); ++i) {
        const Node p(list[i], n.field("primitives") + "[" + std::to_string(i) + "]");
        const std::string type = p.choice("type", {"ball", "gaussian"});
        const Point c = point(p, "center", dim);
        const double amp = p.get<double>("amplitude", 1.0);
        if (type == "ball") {
            p.only({"type", "center", "radius", "amplitude"});
            d.primitives.push_back(Ball{c, p.positive("radius"), amp});
        } else {
            p.only({"type", "center", "width", "amplitude"});
            d.primitives.push_back(Gaussian{c, p.positive("width"), amp});
        }
    }
    return d;
}

/// Sphere {"kind": "sphere", "center", "radius", "count"}, cube
/// {"kind": "cube", "lo", "hi", "nodes"}, or {"kind": "grid_boundary"} for
/// the boundary nodes of `grid`.
inline ObservationSurface surface(const Node& n, const GridSpec& grid) {
    const std::string kind = n.choice("kind", {"sphere", "cube", "grid_boundary"});
    const int dim = grid.dim;
    if (kind == "grid_boundary") {
        n.only({"kind"});
        return ObservationSurface::cube_on_grid(grid);
    }
    if (kind == "sphere") {
        n.only({"kind", "dim", "center", "radius", "count"});
        return ObservationSurface::sphere(dim, point(n, "center", dim), n.positive("radius"),
                                          n.get<std::size_t>("count"));
    }
    n.only({"kind", "dim", "lo", "hi", "nodes"});
    const auto nodes = n.get<std::vector<std::size_t>>("nodes");
    require(nodes.size() == static_cast<std::size_t>(dim), Errc::invalid_argument,
            "field '" + n.field("nodes") + "' must have " + std::to_string(dim) + " entries");
    std::array<std::size_t, 3> lattice{1, 1, 1};
    for (int a = 0; a < dim; ++a) lattice[a] = nodes[a];
    return ObservationSurface::cube(dim, point(n, "lo", dim), point(n, "hi", dim), lattice);
}

/// {"type": "dirichlet", "potential": "x"|"y"|"xy"} or
/// {"type": "neumann", "current": "x"|"y"} (current density e . n).
inline CurrentPattern pattern(const Node& n, const GridSpec& grid) {
    const std::string type = n.choice("type", {"dirichlet", "neumann"});
    if (type == "dirichlet") {
        n.only({"type", "potential"});
        const std::string p = n.choice("potential", {"x", "y", "xy"});
        return CurrentPattern::dirichlet(
            grid,
            [&](const Point& x) { return p == "x" ? x[0] : p == "y" ? x[1] : x[0] * x[1]; },
            "dirichlet_" + p);
    }
    n.only({"type", "current"});
    const std::string c = n.choice("current", {"x", "y"});
    const int axis = c == "x" ? 0 : 1;
    const double tol = 1e-9 * grid.max_spacing();
    return CurrentPattern::neumann(
        grid,
        [&](const Point& x) {
            if (std::abs(x[axis] - grid.lo(axis)) <= tol) return -1.0;
            if (std::abs(x[axis] - grid.hi(axis)) <= tol) return 1.0;
            return 0.0;
        },
        "neumann_" + c);
}

} // namespace tat::config
