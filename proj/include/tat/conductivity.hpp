// 2D conductivity equation div(sigma grad u) = 0 on a rectangle, vertex-centered
// finite volumes with harmonic-mean face conductivities, plus the interior
// functional sigma grad(u1) . grad(u2) that focused acousto-electric
// measurements deliver.
#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "tat/io.hpp"

namespace tat {

enum class PatternKind { dirichlet, neumann };

/// Boundary nodes of a 2D grid in index order.
inline std::vector<std::size_t> boundary_nodes(const GridSpec& g) {
    std::vector<std::size_t> out;
    for (std::size_t n = 0; n < g.size(); ++n)
        if (g.is_boundary(n)) out.push_back(n);
    return out;
}

/// Boundary length attached to each boundary node (half edges on either side).
inline std::vector<double> boundary_lengths(const GridSpec& g) {
    std::vector<double> len;
    for (std::size_t n : boundary_nodes(g)) {
        const auto ijk = g.unravel(n);
        double l = 0.0;
        for (int a = 0; a < 2; ++a) {
            const int b = 1 - a;
            if (ijk[a] != 0 && ijk[a] + 1 != g.shape[a]) continue;
            // node sits on a face normal to axis a; it owns half edges along axis b
            const bool end = ijk[b] == 0 || ijk[b] + 1 == g.shape[b];
            l += end ? 0.5 * g.spacing[b] : g.spacing[b];
        }
        len.push_back(l);
    }
    return len;
}

/// Boundary potential (Dirichlet) or normal current density sigma du/dn
/// (Neumann) per boundary node, in boundary_nodes() order.
struct CurrentPattern {
    PatternKind kind = PatternKind::dirichlet;
    std::vector<double> values;
    std::string name;

    template <class Fn>
    static CurrentPattern dirichlet(const GridSpec& g, Fn&& fn, std::string name = "dirichlet") {
        CurrentPattern p{PatternKind::dirichlet, {}, std::move(name)};
        for (std::size_t n : boundary_nodes(g)) p.values.push_back(fn(g.point(n)));
        return p;
    }

    template <class Fn>
    static CurrentPattern neumann(const GridSpec& g, Fn&& fn, std::string name = "neumann") {
        CurrentPattern p{PatternKind::neumann, {}, std::move(name)};
        for (std::size_t n : boundary_nodes(g)) p.values.push_back(fn(g.point(n)));
        p.validate(g);
        return p;
    }

    void validate(const GridSpec& g) const {
        const auto len = boundary_lengths(g);
        require(values.size() == len.size(), Errc::invalid_argument, "pattern size does not match the boundary");
        require(all_finite(values), Errc::non_finite, "pattern contains non-finite values");
        if (kind == PatternKind::neumann) {
            double net = 0.0, scale = 0.0;
            for (std::size_t k = 0; k < len.size(); ++k) {
                net += len[k] * values[k];
                scale += len[k] * std::abs(values[k]);
            }
            require(std::abs(net) <= 1e-10 * std::max(scale, 1e-300), Errc::invariant_violation,
                    "Neumann pattern must integrate to zero over the boundary");
        }
    }
};

/// Grid topology shared by the forward solves and the adjoint gradient.
class ConductivityGrid {
public:
    struct Face {
        std::size_t p, q;
        double geometry; // face length / node distance
    };

    explicit ConductivityGrid(const GridSpec& g) : grid_(g) {
        require(g.dim == 2, Errc::invalid_argument, "conductivity solver is 2D only");
        require(g.shape[0] >= 3 && g.shape[1] >= 3, Errc::invalid_argument, "conductivity grid needs >= 3 nodes per axis");
        const std::size_t n0 = g.shape[0], n1 = g.shape[1];
        for (std::size_t i = 0; i < n0; ++i)
            for (std::size_t j = 0; j < n1; ++j) {
                if (i + 1 < n0) {
                    const double len = (j == 0 || j + 1 == n1) ? 0.5 * g.spacing[1] : g.spacing[1];
                    faces_.push_back({g.index(i, j), g.index(i + 1, j), len / g.spacing[0]});
                }
                if (j + 1 < n1) {
                    const double len = (i == 0 || i + 1 == n0) ? 0.5 * g.spacing[0] : g.spacing[0];
                    faces_.push_back({g.index(i, j), g.index(i, j + 1), len / g.spacing[1]});
                }
            }
        boundary_ = boundary_nodes(g);
        lengths_ = boundary_lengths(g);
        slot_.assign(g.size(), -1);
        for (std::size_t n = 0; n < g.size(); ++n)
            if (!g.is_boundary(n)) {
                slot_[n] = static_cast<std::ptrdiff_t>(interior_.size());
                interior_.push_back(n);
            }
        gx_ = gradient_matrix(0);
        gy_ = gradient_matrix(1);
        volume_.assign(g.size(), g.spacing[0] * g.spacing[1]);
        for (std::size_t n = 0; n < g.size(); ++n) {
            const auto ijk = g.unravel(n);
            for (int a = 0; a < 2; ++a)
                if (ijk[a] == 0 || ijk[a] + 1 == g.shape[a]) volume_[n] *= 0.5;
        }
    }

    const GridSpec& grid() const { return grid_; }
    const std::vector<Face>& faces() const { return faces_; }
    const std::vector<std::size_t>& boundary() const { return boundary_; }
    const std::vector<double>& boundary_length() const { return lengths_; }
    const std::vector<std::size_t>& interior() const { return interior_; }
    std::ptrdiff_t interior_slot(std::size_t n) const { return slot_[n]; }
    /// Control-volume area of each node.
    const std::vector<double>& volume() const { return volume_; }
    /// Nodal gradient operators: centered inside, second-order one-sided at edges.
    const Eigen::SparseMatrix<double>& gx() const { return gx_; }
    const Eigen::SparseMatrix<double>& gy() const { return gy_; }

    static double face_sigma(double a, double b) { return 2.0 * a * b / (a + b); }
    /// d(face_sigma)/da.
    static double face_sigma_da(double a, double b) { return 2.0 * b * b / ((a + b) * (a + b)); }

    /// Full stiffness matrix over all nodes: (K u)_p = sum_f T_f (u_p - u_q).
    Eigen::SparseMatrix<double> stiffness(const std::vector<double>& sigma) const {
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(4 * faces_.size());
        for (const Face& f : faces_) {
            const double T = face_sigma(sigma[f.p], sigma[f.q]) * f.geometry;
            const auto p = static_cast<Eigen::Index>(f.p), q = static_cast<Eigen::Index>(f.q);
            t.emplace_back(p, p, T);
            t.emplace_back(q, q, T);
            t.emplace_back(p, q, -T);
            t.emplace_back(q, p, -T);
        }
        const auto n = static_cast<Eigen::Index>(grid_.size());
        Eigen::SparseMatrix<double> K(n, n);
        K.setFromTriplets(t.begin(), t.end());
        return K;
    }

private:
    Eigen::SparseMatrix<double> gradient_matrix(int axis) const {
        const GridSpec& g = grid_;
        const double h = g.spacing[axis];
        std::vector<Eigen::Triplet<double>> t;
        for (std::size_t n = 0; n < g.size(); ++n) {
            auto ijk = g.unravel(n);
            const std::size_t i = ijk[axis], m = g.shape[axis];
            auto at = [&](std::size_t v) {
                auto c = ijk;
                c[axis] = v;
                return static_cast<Eigen::Index>(g.index(c[0], c[1], c[2]));
            };
            const auto row = static_cast<Eigen::Index>(n);
            if (i == 0) {
                t.emplace_back(row, at(0), -1.5 / h);
                t.emplace_back(row, at(1), 2.0 / h);
                t.emplace_back(row, at(2), -0.5 / h);
            } else if (i + 1 == m) {
                t.emplace_back(row, at(m - 1), 1.5 / h);
                t.emplace_back(row, at(m - 2), -2.0 / h);
                t.emplace_back(row, at(m - 3), 0.5 / h);
            } else {
                t.emplace_back(row, at(i + 1), 0.5 / h);
                t.emplace_back(row, at(i - 1), -0.5 / h);
            }
        }
        const auto n = static_cast<Eigen::Index>(g.size());
        Eigen::SparseMatrix<double> G(n, n);
        G.setFromTriplets(t.begin(), t.end());
        return G;
    }

    GridSpec grid_;
    std::vector<Face> faces_;
    std::vector<std::size_t> boundary_, interior_;
    std::vector<double> lengths_, volume_;
    std::vector<std::ptrdiff_t> slot_;
    Eigen::SparseMatrix<double> gx_, gy_;
};

namespace detail {

inline void check_sigma(const ScalarField& sigma) {
    require(sigma.grid().dim == 2, Errc::invalid_argument, "conductivity must be a 2D field");
    for (double v : sigma.values())
        require(v > 0.0, Errc::invalid_argument, "conductivity must be positive everywhere");
}

struct StateSolve {
    std::vector<double> u;
    Eigen::SparseMatrix<double> K;
};

/// Solves for the potential; for Dirichlet patterns the system is the
/// interior block, for Neumann patterns the full matrix with node 0 pinned
/// (the result is shifted to zero boundary mean).
inline StateSolve solve_state(const ConductivityGrid& cg, const std::vector<double>& sigma,
                              const CurrentPattern& pattern) {
    pattern.validate(cg.grid());
    StateSolve s;
    s.K = cg.stiffness(sigma);
    const std::size_t N = cg.grid().size();
    s.u.assign(N, 0.0);
    if (pattern.kind == PatternKind::dirichlet) {
        for (std::size_t k = 0; k < cg.boundary().size(); ++k) s.u[cg.boundary()[k]] = pattern.values[k];
        const auto ni = static_cast<Eigen::Index>(cg.interior().size());
        std::vector<Eigen::Triplet<double>> t;
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ni);
        for (int col = 0; col < s.K.outerSize(); ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(s.K, col); it; ++it) {
                const auto r = cg.interior_slot(static_cast<std::size_t>(it.row()));
                if (r < 0) continue;
                const auto c = cg.interior_slot(static_cast<std::size_t>(it.col()));
                if (c >= 0)
                    t.emplace_back(r, c, it.value());
                else
                    rhs[r] -= it.value() * s.u[static_cast<std::size_t>(it.col())];
            }
        Eigen::SparseMatrix<double> A(ni, ni);
        A.setFromTriplets(t.begin(), t.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
        require(ldlt.info() == Eigen::Success, Errc::numerical_failure, "conductivity factorization failed");
        Eigen::VectorXd x = ldlt.solve(rhs);
        const double res = (A * x - rhs).norm(), ref = std::max(rhs.norm(), 1e-300);
        require(rhs.norm() == 0.0 || res <= 1e-10 * ref, Errc::numerical_failure,
                "conductivity solve did not reach relative residual 1e-10");
        for (std::size_t k = 0; k < cg.interior().size(); ++k) s.u[cg.interior()[k]] = x[static_cast<Eigen::Index>(k)];
        return s;
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
    for (std::size_t k = 0; k < cg.boundary().size(); ++k)
        b[static_cast<Eigen::Index>(cg.boundary()[k])] = pattern.values[k] * cg.boundary_length()[k];
    Eigen::SparseMatrix<double> A = s.K;
    // pin node 0: replace its row and column by the identity
    for (int col = 0; col < A.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, col); it; ++it)
            if (it.row() == 0 || it.col() == 0) it.valueRef() = (it.row() == it.col()) ? 1.0 : 0.0;
    b[0] = 0.0;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
    require(ldlt.info() == Eigen::Success, Errc::numerical_failure, "conductivity factorization failed");
    Eigen::VectorXd x = ldlt.solve(b);
    const double res = (A * x - b).norm();
    require(b.norm() == 0.0 || res <= 1e-10 * b.norm(), Errc::numerical_failure,
            "conductivity solve did not reach relative residual 1e-10");
    double mean = 0.0, total = 0.0;
    for (std::size_t k = 0; k < cg.boundary().size(); ++k) {
        mean += cg.boundary_length()[k] * x[static_cast<Eigen::Index>(cg.boundary()[k])];
        total += cg.boundary_length()[k];
    }
    mean /= total;
    for (std::size_t n = 0; n < N; ++n) s.u[n] = x[static_cast<Eigen::Index>(n)] - mean;
    return s;
}

} // namespace detail

inline ScalarField solve_conductivity(const ScalarField& sigma, const CurrentPattern& pattern) {
    detail::check_sigma(sigma);
    const ConductivityGrid cg(sigma.grid());
    auto s = detail::solve_state(cg, std::vector<double>(sigma.values().begin(), sigma.values().end()), pattern);
    return ScalarField(sigma.grid(), std::move(s.u), "u_" + pattern.name);
}

/// Normal current density sigma du/dn at each boundary node (the measured
/// boundary currents of a Dirichlet pattern), from the discrete balance.
inline std::vector<double> boundary_currents(const ScalarField& sigma, const ScalarField& u) {
    detail::check_sigma(sigma);
    require_same_grid(sigma, u, "boundary_currents");
    const ConductivityGrid cg(sigma.grid());
    const Eigen::SparseMatrix<double> K = cg.stiffness(std::vector<double>(sigma.values().begin(), sigma.values().end()));
    const Eigen::Map<const Eigen::VectorXd> uv(u.data().data(), static_cast<Eigen::Index>(u.size()));
    const Eigen::VectorXd r = K * uv;
    std::vector<double> out;
    for (std::size_t k = 0; k < cg.boundary().size(); ++k)
        out.push_back(r[static_cast<Eigen::Index>(cg.boundary()[k])] / cg.boundary_length()[k]);
    return out;
}

inline constexpr std::string_view functional_sigma_grad_dot = "sigma_grad_u1_dot_grad_u2";

/// Tags accepted in InteriorMap; only the first is implemented.
inline const std::vector<std::string_view>& registered_functionals() {
    static const std::vector<std::string_view> tags{functional_sigma_grad_dot, "sigma_grad_u_squared",
                                                    "current_density_magnitude"};
    return tags;
}

/// W(x) for the pattern pair (a, b).
struct InteriorMap {
    ScalarField W;
    std::string tag = std::string(functional_sigma_grad_dot);
    std::size_t pattern_a = 0, pattern_b = 0;

    void validate() const {
        const auto& tags = registered_functionals();
        require(std::find(tags.begin(), tags.end(), tag) != tags.end(), Errc::invalid_argument,
                "unregistered interior functional '" + tag + "'");
    }
};

namespace detail {
inline std::vector<double> apply(const Eigen::SparseMatrix<double>& G, std::span<const double> v) {
    const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
    const Eigen::VectorXd y = G * x;
    return std::vector<double>(y.data(), y.data() + y.size());
}
} // namespace detail

/// sigma grad(u1) . grad(u2), centered differences inside and second-order
/// one-sided differences on the boundary.
inline InteriorMap interior_functional(const ScalarField& sigma, const ScalarField& u1, const ScalarField& u2,
                                       std::size_t pattern_a = 0, std::size_t pattern_b = 1) {
    require_same_grid(sigma, u1, "interior_functional");
    require_same_grid(sigma, u2, "interior_functional");
    require(sigma.grid().dim == 2, Errc::invalid_argument, "interior functional is 2D only");
    const ConductivityGrid cg(sigma.grid());
    const auto ax = detail::apply(cg.gx(), u1.values()), ay = detail::apply(cg.gy(), u1.values());
    const auto bx = detail::apply(cg.gx(), u2.values()), by = detail::apply(cg.gy(), u2.values());
    std::vector<double> w(sigma.size());
    for (std::size_t n = 0; n < w.size(); ++n) w[n] = sigma[n] * (ax[n] * bx[n] + ay[n] * by[n]);
    return {ScalarField(sigma.grid(), std::move(w), "W"), std::string(functional_sigma_grad_dot), pattern_a, pattern_b};
}

inline constexpr std::string_view interior_map_magic = "TATIMP01";

inline void write_interior_map(const InteriorMap& m, const std::filesystem::path& path, json extra = json::object()) {
    m.validate();
    extra["functional"] = m.tag;
    extra["patterns"] = {m.pattern_a, m.pattern_b};
    write_field(m.W, path, extra, interior_map_magic);
}

inline InteriorMap read_interior_map(const std::filesystem::path& path) {
    FieldFile f = read_field_file(path, interior_map_magic);
    try {
        InteriorMap m{std::move(f.field), f.header.at("functional").get<std::string>(), 0, 0};
        const auto p = f.header.at("patterns").get<std::vector<std::size_t>>();
        require(p.size() == 2, Errc::malformed_header, "interior map needs a pattern pair");
        m.pattern_a = p[0];
        m.pattern_b = p[1];
        m.validate();
        return m;
    } catch (const json::exception& e) {
        fail(Errc::malformed_header, std::string("interior map header: ") + e.what());
    }
}

} // namespace tat
