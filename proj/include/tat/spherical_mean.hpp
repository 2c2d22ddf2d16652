// Spherical integrals of a field over spheres centered on an observation
// surface, and the constant-speed conversions between those integrals and
// pressure traces.
#pragma once

#include "tat/phantom.hpp"
#include "tat/quadrature.hpp"
#include "tat/sinogram.hpp"

namespace tat {

/// Radii r_j = j * dr, j = 0..count-1. The r = 0 sample is always zero.
struct RadialSampling {
    double dr = 0.0;
    std::size_t count = 0;

    double radius(std::size_t j) const { return dr * static_cast<double>(j); }
    double max_radius() const { return radius(count - 1); }
    void validate() const {
        require(count >= 1, Errc::invalid_argument, "radial sampling needs at least one radius");
        require(std::isfinite(dr) && dr > 0.0, Errc::invalid_argument, "radial step must be positive");
    }
};

/// Node density of the sphere quadrature, in nodes per `resolution` length
/// of arc, with a floor per direction.
struct SphereQuadrature {
    double density = 1.5;
    std::size_t min_nodes = 8;
};

namespace detail {

struct Frame {
    Point axis, e1, e2;
};

inline Frame frame_along(const Point& axis) {
    Frame f;
    f.axis = normalized(axis);
    const Point helper = std::abs(f.axis[0]) < 0.9 ? Point{1, 0, 0} : Point{0, 1, 0};
    f.e1 = normalized(cross(f.axis, helper));
    f.e2 = cross(f.axis, f.e1);
    return f;
}

/// Integral of fn over the part of the sphere |x - y| = t (circle in 2D)
/// that meets the ball |x - sc| < rho; fn must vanish outside that ball.
template <class Fn>
double cap_integral(int dim, Fn&& fn, const Point& y, double t, const Point& sc, double rho, double resolution,
                    const SphereQuadrature& q) {
    if (t <= 0.0 || rho <= 0.0) return 0.0;
    const Point to_center = sc - y;
    const double d = norm(to_center);
    double cos_alpha;
    if (d <= 1e-14 * std::max(1.0, rho)) {
        if (t >= rho) return 0.0;
        cos_alpha = -1.0;
    } else {
        cos_alpha = (d * d + t * t - rho * rho) / (2.0 * d * t);
        if (cos_alpha >= 1.0) return 0.0;
        cos_alpha = std::max(cos_alpha, -1.0);
    }
    const double alpha = std::acos(cos_alpha);
    const Frame fr = frame_along(d > 0.0 ? to_center : Point{0, 0, 1});
    const auto nodes_for = [&](double arc) {
        return std::max<std::size_t>(q.min_nodes, static_cast<std::size_t>(std::ceil(q.density * arc / resolution)));
    };
    if (dim == 2) {
        const Point ax{fr.axis[0], fr.axis[1], 0.0};
        const Point perp{-ax[1], ax[0], 0.0};
        const std::size_t n = nodes_for(2.0 * alpha * t);
        const bool full = cos_alpha <= -1.0;
        double sum = 0.0;
        if (full) {
            for (std::size_t k = 0; k < n; ++k) {
                const double psi = 2.0 * pi * static_cast<double>(k) / static_cast<double>(n);
                sum += fn(y + t * (std::cos(psi) * ax + std::sin(psi) * perp));
            }
            return sum * 2.0 * pi * t / static_cast<double>(n);
        }
        const double step = 2.0 * alpha / static_cast<double>(n);
        for (std::size_t k = 0; k <= n; ++k) {
            const double psi = -alpha + step * static_cast<double>(k);
            const double w = (k == 0 || k == n) ? 0.5 : 1.0;
            sum += w * fn(y + t * (std::cos(psi) * ax + std::sin(psi) * perp));
        }
        return sum * step * t;
    }
    const QuadratureRule& gl = gauss_legendre(nodes_for(alpha * t));
    const std::size_t n_az = nodes_for(2.0 * pi * t * std::sin(std::min(alpha, 0.5 * pi)));
    const double half = 0.5 * (1.0 - cos_alpha), mid = 0.5 * (1.0 + cos_alpha);
    std::vector<double> cs(n_az), sn(n_az);
    for (std::size_t k = 0; k < n_az; ++k) {
        const double phi = 2.0 * pi * (static_cast<double>(k) + 0.5) / static_cast<double>(n_az);
        cs[k] = std::cos(phi);
        sn[k] = std::sin(phi);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
        const double u = mid + half * gl.nodes[i];
        const double s = std::sqrt(std::max(0.0, 1.0 - u * u));
        double ring = 0.0;
        for (std::size_t k = 0; k < n_az; ++k)
            ring += fn(y + t * (u * fr.axis + s * (cs[k] * fr.e1 + sn[k] * fr.e2)));
        sum += gl.weights[i] * half * ring;
    }
    return sum * t * t * 2.0 * pi / static_cast<double>(n_az);
}

inline double sphere_area(int dim, double t) { return dim == 3 ? 4.0 * pi * t * t : 2.0 * pi * t; }

} // namespace detail

/// Integral of f over the sphere |x - y| = t (circle in 2D) by cap quadrature
/// with multilinear interpolation of f (zero outside its grid).
inline double spherical_integral(const ScalarField& f, const Point& y, double t, const SphereQuadrature& q = {}) {
    const SupportBox box = f.support();
    if (box.empty) return 0.0;
    return detail::cap_integral(f.grid().dim, [&](const Point& x) { return f.interpolate(x); }, y, t, box.center(),
                                box.radius(), f.grid().min_spacing(), q);
}

/// (R_S f)(y_i, r_j) = integral of f over |x - y_i| = r_j, for every detector
/// and radius. The sinogram time axis is t_j = r_j / c.
inline Sinogram spherical_mean_transform(const ScalarField& f, const ObservationSurface& surface,
                                         const RadialSampling& radii, double c = 1.0,
                                         const SphereQuadrature& q = {}) {
    radii.validate();
    require(surface.dim() == f.grid().dim, Errc::invalid_argument, "surface and field dimensions differ");
    require(c > 0.0, Errc::invalid_argument, "sound speed must be positive");
    const SupportBox box = f.support();
    const std::size_t nr = radii.count;
    std::vector<double> values(surface.size() * nr, 0.0);
    if (!box.empty) {
        const int dim = f.grid().dim;
        const Point sc = box.center();
        const double rho = box.radius();
        const double h = f.grid().min_spacing();
        parallel_for(surface.size(), [&](std::size_t i) {
            const Point& y = surface.points()[i];
            for (std::size_t j = 1; j < nr; ++j)
                values[i * nr + j] = detail::cap_integral(
                    dim, [&](const Point& x) { return f.interpolate(x); }, y, radii.radius(j), sc, rho, h, q);
        });
    }
    return Sinogram(surface, DataKind::spherical_integral, radii.dr / c, nr, std::move(values), c);
}

namespace detail {

/// Integral over |x - y| = t of a primitive's radial profile F(|x - c|),
/// 3D closed form: (2 pi t / d) * int_{|d-t|}^{d+t} F(s) s ds.
inline double primitive_sphere_integral_3d(const Primitive& prim, const Point& y, double t, double ramp) {
    const Point& c = primitive_center(prim);
    const double d = distance(y, c);
    const double reach = primitive_reach(prim, ramp);
    // Antiderivative G(s) of F(s) s on [0, reach]; F = 0 beyond reach.
    std::function<double(double)> G;
    if (const auto* b = std::get_if<Ball>(&prim)) {
        const double r = b->radius, a = b->amplitude;
        if (ramp <= 0.0) {
            G = [=](double s) { return a * 0.5 * std::min(s, r) * std::min(s, r); };
        } else {
            const double s0 = r - 0.5 * ramp, s1 = r + 0.5 * ramp;
            // F = a on [0, s0], a (s1 - s)/ramp on [s0, s1]
            G = [=](double s) {
                const double sa = std::min(s, s0);
                double v = 0.5 * sa * sa;
                if (s > s0) {
                    const double sb = std::min(s, s1);
                    auto ramp_anti = [&](double x) { return (s1 * x * x / 2.0 - x * x * x / 3.0) / ramp; };
                    v += ramp_anti(sb) - ramp_anti(s0);
                }
                return a * v;
            };
        }
    } else {
        const auto& g = std::get<Gaussian>(prim);
        const double w2 = g.width * g.width;
        const double tail = std::exp(-0.5 * gaussian_cutoff * gaussian_cutoff);
        const double a = g.amplitude / (1.0 - tail);
        G = [=](double s) {
            s = std::min(s, reach);
            return a * (w2 * (1.0 - std::exp(-0.5 * s * s / w2)) - tail * 0.5 * s * s);
        };
    }
    if (d < 1e-12 * std::max(1.0, reach)) {
        if (t >= reach) return 0.0;
        const PhantomDescriptor single{{prim}, 0.0};
        return 4.0 * pi * t * t * evaluate(single, c + Point{t, 0.0, 0.0}, ramp);
    }
    const double lo = std::abs(d - t), hi = d + t;
    if (lo >= reach) return 0.0;
    return 2.0 * pi * t / d * (G(std::min(hi, reach)) - G(lo));
}

} // namespace detail

/// Spherical integrals of an analytic phantom: closed form in 3D, adaptive
/// arc quadrature in 2D. `ramp` is the ball edge ramp width (see
/// rasterize_phantom); `resolution` sets the 2D arc node spacing.
inline Sinogram phantom_spherical_integrals(const PhantomDescriptor& desc, const ObservationSurface& surface,
                                            const RadialSampling& radii, double ramp = 0.0, double c = 1.0,
                                            double resolution = 0.0, const SphereQuadrature& q = {}) {
    validate(desc);
    radii.validate();
    require(desc.background == 0.0, Errc::invalid_argument, "spherical integrals need a zero-background phantom");
    const int dim = surface.dim();
    const std::size_t nr = radii.count;
    std::vector<double> values(surface.size() * nr, 0.0);
    parallel_for(surface.size(), [&](std::size_t i) {
        const Point& y = surface.points()[i];
        for (const Primitive& prim : desc.primitives) {
            const double reach = detail::primitive_reach(prim, ramp);
            const Point& pc = detail::primitive_center(prim);
            const double feature = resolution > 0.0 ? resolution
                                   : std::holds_alternative<Gaussian>(prim)
                                       ? 0.25 * std::get<Gaussian>(prim).width
                                       : std::max(0.25 * ramp, 0.02 * std::get<Ball>(prim).radius);
            PhantomDescriptor single{{prim}, 0.0};
            for (std::size_t j = 1; j < nr; ++j) {
                const double t = radii.radius(j);
                values[i * nr + j] +=
                    dim == 3 ? detail::primitive_sphere_integral_3d(prim, y, t, ramp)
                             : detail::cap_integral(
                                   2, [&](const Point& x) { return evaluate(single, x, ramp); }, y, t, pc, reach,
                                   feature, q);
            }
        }
    });
    return Sinogram(surface, DataKind::spherical_integral, radii.dr / c, nr, std::move(values), c);
}

/// Converts between integral and mean kinds (divide/multiply by sphere area).
inline Sinogram convert_spherical_kind(const Sinogram& g, DataKind target) {
    require(g.kind() != DataKind::pressure && target != DataKind::pressure, Errc::invalid_argument,
            "kind conversion applies to spherical data only");
    if (g.kind() == target) return g;
    const int dim = g.surface().dim();
    std::vector<double> v(g.data());
    for (std::size_t i = 0; i < g.n_detectors(); ++i)
        for (std::size_t j = 0; j < g.n_times(); ++j) {
            const double area = detail::sphere_area(dim, g.dr() * static_cast<double>(j));
            double& x = v[i * g.n_times() + j];
            x = target == DataKind::spherical_integral ? x * area : (area > 0.0 ? x / area : 0.0);
        }
    return g.with_values(std::move(v), target);
}

/// 3D Kirchhoff conversion: p(y, t) = d/dt [ g(y, ct) / (4 pi c^2 t) ],
/// centered differences inside, one-sided at the ends.
inline Sinogram pressure_from_means(const Sinogram& means, double c) {
    require(means.surface().dim() == 3, Errc::unsupported,
            "pressure_from_means needs 3D data (no local Huygens formula in 2D)");
    require(means.kind() != DataKind::pressure, Errc::invalid_argument, "input must be spherical data");
    require(c > 0.0, Errc::invalid_argument, "sound speed must be positive");
    const Sinogram g = convert_spherical_kind(means, DataKind::spherical_integral);
    const std::size_t nt = g.n_times();
    require(nt >= 2, Errc::invalid_argument, "need at least two time samples");
    const double dt = g.dt();
    std::vector<double> out(g.data().size());
    std::vector<double> q(nt);
    for (std::size_t i = 0; i < g.n_detectors(); ++i) {
        const auto row = g.row(i);
        q[0] = 0.0;
        for (std::size_t j = 1; j < nt; ++j) q[j] = row[j] / (4.0 * pi * c * c * g.time(j));
        double* p = out.data() + i * nt;
        p[0] = (q[1] - q[0]) / dt;
        for (std::size_t j = 1; j + 1 < nt; ++j) p[j] = (q[j + 1] - q[j - 1]) / (2.0 * dt);
        p[nt - 1] = (q[nt - 1] - q[nt - 2]) / dt;
    }
    return Sinogram(g.surface(), DataKind::pressure, dt, nt, std::move(out), c);
}

/// Inverse of pressure_from_means: integrates q' = p with q(0) = 0 by the
/// exact inverse of the difference operator above (a staggered midpoint
/// rule), then g = 4 pi c^2 t q.
inline Sinogram means_from_pressure(const Sinogram& pressure, double c) {
    require(pressure.surface().dim() == 3, Errc::unsupported,
            "means_from_pressure needs 3D data (no local Huygens formula in 2D)");
    require(pressure.kind() == DataKind::pressure, Errc::invalid_argument, "input must be pressure data");
    require(c > 0.0, Errc::invalid_argument, "sound speed must be positive");
    const std::size_t nt = pressure.n_times();
    require(nt >= 2, Errc::invalid_argument, "need at least two time samples");
    const double dt = pressure.dt();
    std::vector<double> out(pressure.data().size());
    std::vector<double> q(nt);
    for (std::size_t i = 0; i < pressure.n_detectors(); ++i) {
        const auto p = pressure.row(i);
        q[0] = 0.0;
        q[1] = dt * p[0];
        for (std::size_t j = 1; j + 1 < nt; ++j) q[j + 1] = q[j - 1] + 2.0 * dt * p[j];
        for (std::size_t j = 0; j < nt; ++j) out[i * nt + j] = 4.0 * pi * c * c * pressure.time(j) * q[j];
    }
    return Sinogram(pressure.surface(), DataKind::spherical_integral, dt, nt, std::move(out), c);
}

} // namespace tat
