// Synthetic focusing: measurements made with spherical-shell or N-shaped
// probing waves are turned into point-focused interior data by inverting the
// spherical (circular) mean transform.
//
// 2D: the Dirichlet eigenfunctions of the bounding square satisfy
//   psi_k(x) = int_S G(x - z) dpsi_k/dn(z) dz,   G = -Y0(lambda r) / 4,
// so f_k = int_S dpsi_k/dn(z) int_0^inf G(r) M(z, r) dr dz. For N-shaped data
// M_N = dM/dr the kernel is integrated once: -Psi with Psi' = G, Psi(0) = 0.
// 3D: spherical centers, FBP; the N-shaped path drops one radial derivative.
#pragma once

#include <random>

#include "tat/conductivity.hpp"
#include "tat/fbp.hpp"
#include "tat/series.hpp"
#include "tat/spherical_mean.hpp"

namespace tat {

enum class FocusingKind { delta_shell, n_shaped_shell };

inline std::string_view to_string(FocusingKind k) {
    return k == FocusingKind::delta_shell ? "delta_shell" : "n_shaped_shell";
}

inline FocusingKind focusing_kind_from_string(std::string_view s) {
    if (s == "delta_shell") return FocusingKind::delta_shell;
    if (s == "n_shaped_shell") return FocusingKind::n_shaped_shell;
    fail(Errc::invalid_argument, "unknown focusing basis '" + std::string(s) + "'");
}

struct FocusingBasis {
    FocusingKind kind = FocusingKind::delta_shell;
    ObservationSurface centers;
    RadialSampling radii;
    double half_width = 0.0; // N-shaped pulses only

    void validate() const {
        radii.validate();
        require(radii.count >= 5, Errc::invalid_argument, "focusing needs at least 5 radii");
        if (kind == FocusingKind::n_shaped_shell) {
            require(std::isfinite(half_width) && half_width > 0.0, Errc::invalid_argument,
                    "N-shaped pulse needs a positive half-width");
            require(half_width >= radii.dr * (1.0 - 1e-12), Errc::invalid_argument,
                    "pulse half-width " + std::to_string(half_width) + " is below the radius step " +
                        std::to_string(radii.dr) + " and cannot be resolved");
        }
    }

    json descriptor() const {
        json j;
        j["kind"] = to_string(kind);
        j["centers"] = centers.descriptor();
        j["dr"] = radii.dr;
        j["n_radii"] = radii.count;
        if (kind == FocusingKind::n_shaped_shell) j["half_width"] = half_width;
        return j;
    }

    static FocusingBasis from_descriptor(const json& j) {
        try {
            FocusingBasis b{focusing_kind_from_string(j.at("kind").get<std::string>()),
                            ObservationSurface::from_descriptor(j.at("centers")),
                            {j.at("dr").get<double>(), j.at("n_radii").get<std::size_t>()},
                            j.value("half_width", 0.0)};
            b.validate();
            return b;
        } catch (const json::exception& e) {
            fail(Errc::malformed_header, std::string("focusing basis: ") + e.what());
        }
    }
};

/// M[c][r], center-major.
struct ModulatedMeasurements {
    FocusingBasis basis;
    std::vector<double> values;
    double noise_level = 0.0;
    std::uint64_t seed = 0;

    std::size_t n_centers() const { return basis.centers.size(); }
    std::size_t n_radii() const { return basis.radii.count; }
    std::span<const double> row(std::size_t c) const { return {values.data() + c * n_radii(), n_radii()}; }

    void validate() const {
        basis.validate();
        require(values.size() == n_centers() * n_radii(), Errc::invariant_violation,
                "measurement matrix does not match the basis");
        require(all_finite(values), Errc::non_finite, "measurements contain non-finite values");
    }
};

namespace detail {
inline double rms(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return l2_norm(v) / std::sqrt(static_cast<double>(v.size()));
}
} // namespace detail

/// Adds level * RMS(values) * N(0, 1) to every entry.
inline void add_relative_noise(std::vector<double>& values, double level, std::uint64_t seed) {
    require(std::isfinite(level) && level >= 0.0, Errc::invalid_argument, "noise level must be >= 0");
    if (level == 0.0) return;
    const double sigma = level * detail::rms(values);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : values) v += sigma * normal(rng);
}

/// Linearized measurements of W probed by the basis waves: circle/sphere
/// integrals (delta shells) or their centered radial difference at the pulse
/// half-width (N-shaped shells), plus relative Gaussian noise.
inline ModulatedMeasurements synthesize_modulated_measurements(const InteriorMap& W, const FocusingBasis& basis,
                                                               double noise_level = 0.0, std::uint64_t seed = 0,
                                                               const SphereQuadrature& q = {}) {
    basis.validate();
    W.validate();
    const ScalarField& f = W.W;
    const ObservationSurface& s = basis.centers;
    require(f.grid().dim == s.dim(), Errc::invalid_argument, "interior map and basis dimensions differ");
    s.check_encloses(f);
    const SupportBox box = f.support();
    const std::size_t nr = basis.radii.count;
    ModulatedMeasurements out{basis, std::vector<double>(s.size() * nr, 0.0), noise_level, seed};
    if (!box.empty) {
        const Point sc = box.center();
        const double rho = box.radius();
        double reach = 0.0;
        for (const Point& y : s.points()) reach = std::max(reach, distance(y, sc) + rho);
        const double extra = basis.kind == FocusingKind::n_shaped_shell ? basis.half_width : 0.0;
        require(basis.radii.max_radius() + extra >= reach, Errc::invalid_argument,
                "radii up to " + std::to_string(basis.radii.max_radius()) + " do not cover the object (need " +
                    std::to_string(reach) + ")");
        const int dim = f.grid().dim;
        const double h = f.grid().min_spacing();
        auto R = [&](const Point& y, double t) {
            // odd continuation through r = 0
            const double v = detail::cap_integral(dim, [&](const Point& x) { return f.interpolate(x); }, y,
                                                  std::abs(t), sc, rho, h, q);
            return t < 0.0 ? -v : v;
        };
        parallel_for(s.size(), [&](std::size_t i) {
            const Point& y = s.points()[i];
            for (std::size_t j = 0; j < nr; ++j) {
                const double r = basis.radii.radius(j);
                double v;
                if (basis.kind == FocusingKind::delta_shell) {
                    v = j == 0 ? 0.0 : R(y, r);
                } else {
                    const double d = basis.half_width;
                    v = (R(y, r + d) - R(y, r - d)) / (2.0 * d);
                }
                out.values[i * nr + j] = v;
            }
        });
    }
    add_relative_noise(out.values, noise_level, seed);
    return out;
}

namespace detail {

/// Table of I(x) = int_0^x Y0(s) ds on a uniform grid, Simpson's rule per
/// interval, the first interval from the small-argument form of Y0.
class Y0Integral {
public:
    explicit Y0Integral(double x_max, double step = 0.01) : step_(step) {
        const auto n = static_cast<std::size_t>(std::ceil(x_max / step)) + 4;
        table_.assign(n, 0.0);
        const double a = step;
        constexpr double gamma = 0.57721566490153286;
        table_[1] = (2.0 / pi) * (a * std::log(a / 2.0) - a + gamma * a);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double x0 = step * static_cast<double>(i), x1 = x0 + step;
            table_[i + 1] = table_[i] + step / 6.0 *
                                            (std::cyl_neumann(0.0, x0) + 4.0 * std::cyl_neumann(0.0, x0 + 0.5 * step) +
                                             std::cyl_neumann(0.0, x1));
        }
    }

    double operator()(double x) const {
        if (x <= step_) {
            constexpr double gamma = 0.57721566490153286;
            return x <= 0.0 ? 0.0 : (2.0 / pi) * (x * std::log(x / 2.0) - x + gamma * x);
        }
        return cubic_sample(table_, step_, x);
    }

private:
    double step_;
    std::vector<double> table_;
};

/// The boundary projection m_k(r_j) = int_S dpsi_k/dn(z) M(z, r_j) dz.
inline ModeSeries project_measurements(const ModulatedMeasurements& M, const EigenBasis& basis) {
    const Sinogram rows(M.basis.centers, DataKind::pressure, M.basis.radii.dr, M.n_radii(), M.values, 1.0);
    return project_boundary_data(rows, basis);
}

inline ScalarField focus_2d(const ModulatedMeasurements& M, const GridSpec& out_grid, double lambda_max) {
    const ObservationSurface& s = M.basis.centers;
    require(s.kind() == SurfaceKind::cube, Errc::unsupported, "2D focusing needs centers on a square");
    EigenBasis basis = EigenBasis::for_surface(s, 1.0);
    if (lambda_max > 0.0) {
        std::array<std::uint32_t, 3> limit{basis.max_index(0), basis.max_index(1), 1};
        basis = EigenBasis::isotropic(2, s.lo(), s.hi(), 1.0, lambda_max, limit);
    }
    const ModeSeries mk = project_measurements(M, basis);
    const RadialSampling& radii = M.basis.radii;
    const std::size_t nr = radii.count;
    const bool n_shaped = M.basis.kind == FocusingKind::n_shaped_shell;

    double top = 0.0;
    for (std::size_t k = 0; k < basis.size(); ++k) top = std::max(top, basis.lambda(k));
    std::optional<Y0Integral> table;
    if (n_shaped) table.emplace(top * radii.max_radius() + 1.0);

    std::vector<double> fk(basis.size());
    parallel_for(basis.size(), [&](std::size_t k) {
        const double l = basis.lambda(k);
        const auto m = mk.row(k);
        double acc = 0.0;
        for (std::size_t j = 1; j < nr; ++j) {
            const double r = radii.radius(j);
            // G = -Y0/4 for shells; -Psi = I(lambda r) / (4 lambda) for N-pulses
            const double kernel = n_shaped ? (*table)(l * r) / (4.0 * l) : -0.25 * std::cyl_neumann(0.0, l * r);
            acc += (j + 1 == nr ? 0.5 : 1.0) * kernel * m[j];
        }
        fk[k] = acc * radii.dr;
    });
    ModeCoefficients coeffs{basis, std::move(fk), lambda_max};
    return synthesize_field(coeffs, out_grid);
}

inline ScalarField focus_3d(const ModulatedMeasurements& M, const GridSpec& out_grid, FbpVariant variant) {
    const ObservationSurface& s = M.basis.centers;
    require(s.kind() == SurfaceKind::sphere, Errc::unsupported, "3D focusing needs centers on a sphere");
    require(out_grid.dim == 3, Errc::invalid_argument, "3D focusing needs a 3D output grid");
    const double dr = M.basis.radii.dr;
    const Sinogram g(s, DataKind::spherical_integral, dr, M.n_radii(), M.values, 1.0);
    if (M.basis.kind == FocusingKind::delta_shell) return reconstruct_fbp(g, variant, out_grid);

    // The data already hold one radial derivative: h = (1/r) dM_N/dr.
    const std::size_t nr = g.n_times();
    std::vector<double> h(g.data().size(), 0.0);
    for (std::size_t i = 0; i < g.n_detectors(); ++i) {
        const auto v = g.row(i);
        for (std::size_t j = 1; j < nr; ++j) {
            const double d = j + 1 < nr ? (v[j + 1] - v[j - 1]) / (2.0 * dr)
                                        : (3.0 * v[j] - 4.0 * v[j - 1] + v[j - 2]) / (2.0 * dr);
            h[i * nr + j] = d / (dr * static_cast<double>(j));
        }
    }
    const double R = s.radius();
    const ScalarField B = backproject(g.with_values(std::move(h), DataKind::spherical_integral), out_grid, R);
    std::vector<double> out(out_grid.size(), 0.0);
    for (std::size_t n = 0; n < out_grid.size(); ++n)
        if (distance(out_grid.point(n), s.center()) < R) out[n] = -B[n] / (8.0 * pi * pi * R);
    return ScalarField(out_grid, std::move(out), "focus");
}

} // namespace detail

struct FocusOptions {
    /// 2D: largest eigenfrequency kept; 0 keeps every mode below the center
    /// spacing's Nyquist limit.
    double lambda_max = 0.0;
    /// 3D delta-shell data: FBP formula.
    FbpVariant variant = FbpVariant::second_radial;
};

/// Point-focused interior data W on `out_grid`.
inline InteriorMap synthetic_focus(const ModulatedMeasurements& M, const GridSpec& out_grid,
                                   const FocusOptions& opts = {}) {
    M.validate();
    out_grid.validate();
    const int dim = M.basis.centers.dim();
    require(out_grid.dim == dim, Errc::invalid_argument, "output grid and basis dimensions differ");
    ScalarField W = dim == 2 ? detail::focus_2d(M, out_grid, opts.lambda_max)
                             : detail::focus_3d(M, out_grid, opts.variant);
    return {W.renamed("W_focused"), std::string(functional_sigma_grad_dot), 0, 1};
}

inline constexpr std::string_view modulated_magic = "TATMOD02";

inline void write_modulated(const ModulatedMeasurements& M, const std::filesystem::path& path,
                            const json& extra = json::object()) {
    M.validate();
    json h;
    h["basis"] = M.basis.descriptor();
    h["n_centers"] = M.n_centers();
    h["n_radii"] = M.n_radii();
    h["noise_level"] = M.noise_level;
    h["seed"] = M.seed;
    for (auto it = extra.begin(); it != extra.end(); ++it) h[it.key()] = it.value();
    write_container(path, modulated_magic, h, M.values);
}

inline ModulatedMeasurements read_modulated(const std::filesystem::path& path) {
    Container c = read_container(path, modulated_magic, [](const json& h) {
        return h.at("n_centers").get<std::size_t>() * h.at("n_radii").get<std::size_t>();
    });
    try {
        ModulatedMeasurements M{FocusingBasis::from_descriptor(c.header.at("basis")), std::move(c.payload),
                                c.header.value("noise_level", 0.0), c.header.value("seed", std::uint64_t{0})};
        require(M.n_centers() == c.header.at("n_centers").get<std::size_t>() &&
                    M.n_radii() == c.header.at("n_radii").get<std::size_t>(),
                Errc::malformed_header, "basis descriptor does not reproduce the matrix shape");
        M.validate();
        return M;
    } catch (const json::exception& e) {
        fail(Errc::malformed_header, std::string("modulated measurements header: ") + e.what());
    }
}

} // namespace tat
