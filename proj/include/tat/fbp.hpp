// Filtered backprojection for a spherical observation surface, constant speed,
// three dimensions:
//   f(x) = -1/(8 pi^2 R) * int_S (F g)(y, |y - x|) dA(y)
// with the filter F one of
//   laplacian_outside : g/r, and the Laplacian taken after backprojection
//   second_radial     : (1/r) g''
//   nested_radial     : (1/r) (r (g/r)')'
// where g holds spherical integrals (not means).
#pragma once

#include "tat/spherical_mean.hpp"

namespace tat {

enum class FbpVariant { laplacian_outside, second_radial, nested_radial };

inline std::string_view to_string(FbpVariant v) {
    switch (v) {
    case FbpVariant::laplacian_outside: return "laplacian_outside";
    case FbpVariant::second_radial: return "second_radial";
    case FbpVariant::nested_radial: return "nested_radial";
    }
    return "unknown";
}

inline FbpVariant fbp_variant_from_string(std::string_view s) {
    if (s == "laplacian_outside") return FbpVariant::laplacian_outside;
    if (s == "second_radial") return FbpVariant::second_radial;
    if (s == "nested_radial") return FbpVariant::nested_radial;
    fail(Errc::invalid_argument, "unknown FBP variant '" + std::string(s) + "'");
}

/// What to do when |y - x| runs past the last sampled radius.
enum class RangePolicy { zero_extend, reject };

struct FbpOptions {
    RangePolicy range = RangePolicy::zero_extend;
};

namespace detail {
inline Sinogram as_integrals(const Sinogram& g, std::string_view who) {
    require(g.kind() != DataKind::pressure, Errc::invalid_argument,
            std::string(who) + " needs spherical-integral data, got pressure traces");
    if (g.kind() == DataKind::spherical_mean) {
        warn(std::string(who) + ": converting spherical means to integrals (x 4 pi r^2)");
        return convert_spherical_kind(g, DataKind::spherical_integral);
    }
    return g;
}
} // namespace detail

/// Applies the radial filter of `variant` to each detector row with
/// second-order differences in r = j*dr. Rows are zero at r = 0.
inline Sinogram filter_radial(const Sinogram& g, FbpVariant variant) {
    const std::size_t nr = g.n_times();
    require(nr >= 5, Errc::invalid_argument, "radial filtering needs at least 5 radial samples");
    const double dr = g.dr();
    std::vector<double> out(g.data().size(), 0.0);
    parallel_for(g.n_detectors(), [&](std::size_t i) {
        const auto v = g.row(i);
        double* h = out.data() + i * nr;
        const auto r = [&](double j) { return dr * j; };
        switch (variant) {
        case FbpVariant::laplacian_outside:
            for (std::size_t j = 1; j < nr; ++j) h[j] = v[j] / r(double(j));
            break;
        case FbpVariant::second_radial:
            for (std::size_t j = 1; j + 1 < nr; ++j) h[j] = (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (dr * dr * r(double(j)));
            h[nr - 1] = (2.0 * v[nr - 1] - 5.0 * v[nr - 2] + 4.0 * v[nr - 3] - v[nr - 4]) / (dr * dr * r(double(nr - 1)));
            break;
        case FbpVariant::nested_radial: {
            // q = g/r, continued to r = 0 linearly from the next two samples.
            std::vector<double> q(nr);
            for (std::size_t j = 1; j < nr; ++j) q[j] = v[j] / r(double(j));
            q[0] = 2.0 * q[1] - q[2];
            for (std::size_t j = 1; j + 1 < nr; ++j) {
                const double flux_hi = r(double(j) + 0.5) * (q[j + 1] - q[j]);
                const double flux_lo = r(double(j) - 0.5) * (q[j] - q[j - 1]);
                h[j] = (flux_hi - flux_lo) / (dr * dr * r(double(j)));
            }
            const std::size_t l = nr - 1;
            const double dq = (3.0 * q[l] - 4.0 * q[l - 1] + q[l - 2]) / (2.0 * dr);
            const double d2q = (2.0 * q[l] - 5.0 * q[l - 1] + 4.0 * q[l - 2] - q[l - 3]) / (dr * dr);
            h[l] = d2q + dq / r(double(l));
            break;
        }
        }
    });
    return g.with_values(std::move(out), g.kind());
}

/// B(x) = sum_i w_i h(y_i, |y_i - x|) at every node of `grid`, with cubic
/// interpolation in r. Nodes farther than `max_reach` from the sphere center
/// are skipped (left at zero); pass infinity to evaluate everywhere.
inline ScalarField backproject(const Sinogram& h, const GridSpec& grid, double max_reach,
                               const FbpOptions& opts = {}, std::string name = "backprojection") {
    grid.validate();
    const ObservationSurface& s = h.surface();
    require(grid.dim == s.dim(), Errc::invalid_argument, "grid and surface dimensions differ");
    const double dr = h.dr();
    const double r_last = dr * static_cast<double>(h.n_times() - 1);
    std::vector<double> values(grid.size(), 0.0);
    std::atomic<bool> out_of_range{false};
    parallel_for(
        grid.size(),
        [&](std::size_t n) {
            const Point x = grid.point(n);
            if (distance(x, s.centroid()) > max_reach) return;
            double acc = 0.0;
            for (std::size_t i = 0; i < s.size(); ++i) {
                const double r = distance(s.points()[i], x);
                if (r > r_last) {
                    out_of_range.store(true, std::memory_order_relaxed);
                    continue;
                }
                acc += s.weights()[i] * cubic_sample(h.row(i), dr, r);
            }
            values[n] = acc;
        },
        256);
    if (out_of_range) {
        require(opts.range == RangePolicy::zero_extend, Errc::invalid_argument,
                "backprojection needs radii beyond the sampled range " + std::to_string(r_last));
        warn("backprojection: radii beyond " + std::to_string(r_last) + " treated as zero data");
    }
    return ScalarField(grid, std::move(values), std::move(name));
}

/// Reconstructs f on `out_grid` from 3D spherical integrals on a sphere.
/// Nodes outside the sphere are set to zero.
inline ScalarField reconstruct_fbp(const Sinogram& data, FbpVariant variant, const GridSpec& out_grid,
                                   const FbpOptions& opts = {}) {
    const ObservationSurface& s = data.surface();
    require(s.kind() == SurfaceKind::sphere, Errc::invalid_argument, "FBP needs a spherical observation surface");
    require(s.dim() == 3, Errc::unsupported, "FBP formulas are implemented for 3D data only");
    require(out_grid.dim == 3, Errc::invalid_argument, "FBP output grid must be 3D");
    const Sinogram g = detail::as_integrals(data, "reconstruct_fbp");
    const double R = s.radius();
    const double scale = -1.0 / (8.0 * pi * pi * R);
    const Sinogram h = filter_radial(g, variant);

    std::vector<double> out(out_grid.size(), 0.0);
    if (variant == FbpVariant::laplacian_outside) {
        GridSpec padded = out_grid;
        for (int a = 0; a < 3; ++a) {
            padded.shape[a] += 2;
            padded.origin[a] -= out_grid.spacing[a];
        }
        const double reach = R + 2.0 * out_grid.max_spacing();
        const ScalarField B = backproject(h, padded, reach, opts);
        const auto& bv = B.values();
        const std::size_t s1 = padded.shape[2], s0 = padded.shape[1] * padded.shape[2];
        for (std::size_t n = 0; n < out_grid.size(); ++n) {
            const auto ijk = out_grid.unravel(n);
            if (distance(out_grid.point(n), s.center()) >= R) continue;
            const std::size_t m = padded.index(ijk[0] + 1, ijk[1] + 1, ijk[2] + 1);
            const std::array<std::size_t, 3> st{s0, s1, 1};
            double lap = 0.0;
            for (int a = 0; a < 3; ++a)
                lap += (bv[m + st[a]] + bv[m - st[a]] - 2.0 * bv[m]) / (out_grid.spacing[a] * out_grid.spacing[a]);
            out[n] = scale * lap;
        }
    } else {
        const ScalarField B = backproject(h, out_grid, R, opts);
        for (std::size_t n = 0; n < out_grid.size(); ++n)
            if (distance(out_grid.point(n), s.center()) < R) out[n] = scale * B[n];
    }
    return ScalarField(out_grid, std::move(out), "fbp_" + std::string(to_string(variant)));
}

/// Warns when a known field has support outside the observation sphere, where
/// the inversion formulas no longer hold.
inline bool warn_if_support_outside(const ScalarField& truth, const ObservationSurface& s) {
    try {
        s.check_encloses(truth);
    } catch (const Error& e) {
        if (e.code() != Errc::support_violation) throw;
        warn("support of '" + truth.name() + "' reaches outside the observation surface; interior values may be wrong");
        return true;
    }
    return false;
}

} // namespace tat
