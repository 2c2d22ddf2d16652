// Time reversal: the wave equation run backward inside the observation
// surface from a zero state at t = T, driven by the measured traces on the
// boundary, evaluated at t = 0. Neumann refinement iterates
//   f <- f + TR(g - forward(f)).
#pragma once

#include "tat/quadrature.hpp"
#include "tat/wave.hpp"

namespace tat {

enum class Cutoff { hard_zero, smoothed };

inline std::string_view to_string(Cutoff c) { return c == Cutoff::hard_zero ? "hard_zero" : "smoothed"; }

inline Cutoff cutoff_from_string(std::string_view s) {
    if (s == "hard_zero") return Cutoff::hard_zero;
    if (s == "smoothed") return Cutoff::smoothed;
    fail(Errc::invalid_argument, "unknown cutoff '" + std::string(s) + "'");
}

struct TimeReversalConfig {
    double T = 0.0;
    Cutoff cutoff = Cutoff::hard_zero;
    /// Taper length of the smoothed cutoff; 0 means 10% of T.
    double window = 0.0;
    std::size_t neumann_iterations = 0;

    double taper() const { return window > 0.0 ? window : 0.1 * T; }

    void validate(double duration) const {
        require(std::isfinite(T) && T > 0.0, Errc::invalid_argument, "time-reversal T must be positive");
        require(T <= duration * (1.0 + 1e-9), Errc::invalid_argument,
                "time-reversal T = " + std::to_string(T) + " exceeds the data duration " + std::to_string(duration));
        if (cutoff == Cutoff::smoothed)
            require(taper() < T, Errc::invalid_argument, "cutoff window must be shorter than T");
    }

    /// Weight applied to the data at time t.
    double weight(double t) const {
        if (t > T) return 0.0;
        if (cutoff == Cutoff::hard_zero) return 1.0;
        const double start = T - taper();
        if (t <= start) return 1.0;
        return 0.5 * (1.0 + std::cos(pi * (t - start) / taper()));
    }
};

namespace detail {

/// Interior nodes of the grid strictly inside the surface, and the
/// Dirichlet ring around them with the detector weights that feed each
/// ring node.
struct InteriorDomain {
    std::vector<std::uint8_t> active;
    std::vector<std::size_t> ring;
    // ring node r takes sum_k weight[k] * g(detector[k]) over [offset[r], offset[r + 1])
    std::vector<std::size_t> offset, detector;
    std::vector<double> weight;
};

inline InteriorDomain build_interior(const GridSpec& grid, const ObservationSurface& s) {
    require(grid.dim == s.dim(), Errc::invalid_argument, "grid and surface dimensions differ");
    InteriorDomain dom;
    dom.active.assign(grid.size(), 0);
    for (std::size_t n = 0; n < grid.size(); ++n) dom.active[n] = s.inside_depth(grid.point(n)) > 1e-9 * grid.min_spacing() ? 1 : 0;

    std::vector<std::uint8_t> is_ring(grid.size(), 0);
    for (std::size_t n = 0; n < grid.size(); ++n) {
        if (!dom.active[n]) continue;
        const auto ijk = grid.unravel(n);
        for (int a = 0; a < grid.dim; ++a) {
            require(ijk[a] > 0 && ijk[a] + 1 < grid.shape[a], Errc::invalid_argument,
                    "grid does not extend past the observation surface");
            for (int d : {-1, 1}) {
                auto nb = ijk;
                nb[a] = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(nb[a]) + d);
                const std::size_t m = grid.index(nb[0], nb[1], nb[2]);
                if (!dom.active[m]) is_ring[m] = 1;
            }
        }
    }
    for (std::size_t n = 0; n < grid.size(); ++n)
        if (is_ring[n]) dom.ring.push_back(n);
    require(!dom.ring.empty(), Errc::invalid_argument, "no grid nodes inside the observation surface");

    // Cube surfaces whose lattice is the grid's own boundary map one to one.
    bool exact = s.kind() == SurfaceKind::cube;
    for (int a = 0; a < grid.dim && exact; ++a)
        exact = s.lattice()[a] == grid.shape[a] && std::abs(s.lo()[a] - grid.lo(a)) <= 1e-9 * grid.spacing[a] &&
                std::abs(s.hi()[a] - grid.hi(a)) <= 1e-9 * grid.spacing[a];
    dom.offset.push_back(0);
    if (exact) {
        std::vector<std::ptrdiff_t> where(grid.size(), -1);
        for (std::size_t i = 0; i < s.size(); ++i) {
            const auto& l = s.lattice_index()[i];
            where[grid.index(l[0], l[1], l[2])] = static_cast<std::ptrdiff_t>(i);
        }
        for (std::size_t n : dom.ring) {
            require(where[n] >= 0, Errc::invariant_violation, "boundary node without a detector");
            dom.detector.push_back(static_cast<std::size_t>(where[n]));
            dom.weight.push_back(1.0);
            dom.offset.push_back(dom.detector.size());
        }
        return dom;
    }

    // General surfaces: renormalized Gaussian-kernel average of the detectors
    // near the ring node's projection onto the surface.
    const double spacing = std::pow(s.area() / static_cast<double>(s.size()), 1.0 / (s.dim() - 1));
    const double width = std::max(spacing, grid.max_spacing());
    const double reach = 2.0 * width;
    for (std::size_t n : dom.ring) {
        const Point y = s.project(grid.point(n));
        double total = 0.0;
        std::size_t nearest = 0;
        double best = std::numeric_limits<double>::infinity();
        const std::size_t first = dom.detector.size();
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double d = distance(s.points()[i], y);
            if (d < best) best = d, nearest = i;
            if (d > reach) continue;
            const double w = s.weights()[i] * std::exp(-0.5 * (d / (0.5 * width)) * (d / (0.5 * width)));
            dom.detector.push_back(i);
            dom.weight.push_back(w);
            total += w;
        }
        if (total <= 0.0) {
            dom.detector.resize(first);
            dom.weight.resize(first);
            dom.detector.push_back(nearest);
            dom.weight.push_back(1.0);
        } else {
            for (std::size_t k = first; k < dom.weight.size(); ++k) dom.weight[k] /= total;
        }
        dom.offset.push_back(dom.detector.size());
    }
    return dom;
}

/// Data resampled to `steps` samples at spacing dt by cubic interpolation,
/// or returned unchanged when the spacing already matches.
inline std::vector<double> resample_rows(const Sinogram& g, double dt, std::size_t steps) {
    const std::size_t nd = g.n_detectors();
    std::vector<double> out(nd * steps, 0.0);
    const bool same = std::abs(dt - g.dt()) <= 1e-12 * g.dt();
    for (std::size_t i = 0; i < nd; ++i) {
        const auto r = g.row(i);
        for (std::size_t j = 0; j < steps; ++j)
            out[i * steps + j] = same ? (j < r.size() ? r[j] : 0.0) : cubic_sample(r, g.dt(), dt * static_cast<double>(j));
    }
    return out;
}

/// Largest step <= the CFL bound that divides the data step evenly.
inline std::size_t substeps(double data_dt, double dt_max) {
    return static_cast<std::size_t>(std::ceil(data_dt / dt_max * (1.0 - 1e-12)));
}

} // namespace detail

/// Solves p_tt = c^2 Laplace p inside the surface backward from
/// p(T) = p_t(T) = 0 with boundary values w(t) g(., t), returns p(., 0) on
/// the grid of c (zero outside the surface).
inline ScalarField time_reverse(const Sinogram& g, const ScalarField& c, const TimeReversalConfig& cfg) {
    require(g.kind() == DataKind::pressure, Errc::invalid_argument, "time reversal needs pressure traces");
    detail::check_speed(c);
    cfg.validate(g.duration());
    const GridSpec& grid = c.grid();
    const ObservationSurface& s = g.surface();
    const detail::InteriorDomain dom = detail::build_interior(grid, s);

    const double c_max = c.max();
    const std::size_t sub = std::max<std::size_t>(1, detail::substeps(g.dt(), max_stable_dt(grid, c_max)));
    const double dt = g.dt() / static_cast<double>(sub);
    const std::size_t N = static_cast<std::size_t>(std::floor(cfg.T / dt + 1e-9));
    const std::vector<double> data = detail::resample_rows(g, dt, N + 1);

    std::vector<double> coef(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n) coef[n] = c[n] * c[n] * dt * dt;
    WaveScheme scheme(grid.dim, grid.shape, grid.spacing, std::move(coef), {}, dom.active);

    auto boundary = [&](std::vector<double>& p, std::size_t level) {
        const double w = cfg.weight(dt * static_cast<double>(level));
        for (std::size_t r = 0; r < dom.ring.size(); ++r) {
            double v = 0.0;
            if (w != 0.0)
                for (std::size_t k = dom.offset[r]; k < dom.offset[r + 1]; ++k)
                    v += dom.weight[k] * data[dom.detector[k] * (N + 1) + level];
            p[dom.ring[r]] = w * v;
        }
    };
    boundary(scheme.current(), N);
    boundary(scheme.previous(), N);
    for (std::size_t level = N; level-- > 0;) {
        boundary(scheme.previous(), level);
        scheme.step();
    }
    std::vector<double> out(scheme.current());
    for (std::size_t n = 0; n < grid.size(); ++n)
        if (!dom.active[n] && !std::binary_search(dom.ring.begin(), dom.ring.end(), n)) out[n] = 0.0;
    return ScalarField(grid, std::move(out), "time_reversal");
}

inline ScalarField time_reverse(const Sinogram& g, const GridSpec& grid, double c, const TimeReversalConfig& cfg) {
    return time_reverse(g, ScalarField::constant(grid, c, "c"), cfg);
}

struct NeumannReport {
    std::vector<double> residuals; // ||g - F f_n||, n = 0..
    std::size_t best_iteration = 0;
    bool stopped_on_increase = false;
};

/// f_0 = TR g, f_{n+1} = f_n + TR(g - F f_n) with the smoothed cutoff, for
/// cfg.neumann_iterations steps. Stops early, returning the best iterate,
/// if the data residual grows.
inline ScalarField neumann_refine(const Sinogram& g, const ScalarField& c, const TimeReversalConfig& cfg,
                                  NeumannReport* report = nullptr, const WaveOptions& forward = {}) {
    require(cfg.neumann_iterations >= 1, Errc::invalid_argument, "Neumann refinement needs at least one iteration");
    TimeReversalConfig tr = cfg;
    tr.cutoff = Cutoff::smoothed;
    tr.validate(g.duration());

    const std::size_t sub = std::max<std::size_t>(1, detail::substeps(g.dt(), max_stable_dt(c.grid(), c.max())));
    WaveOptions fo = forward;
    fo.record_stride = sub;
    const double dt = g.dt() / static_cast<double>(sub);
    const double T = g.duration();

    auto residual = [&](const ScalarField& f) {
        const Sinogram p = detail::forward_unchecked(f, c, g.surface(), T, dt, fo);
        require(p.n_times() == g.n_times(), Errc::invariant_violation, "forward resampling mismatch");
        std::vector<double> r(g.data());
        for (std::size_t n = 0; n < r.size(); ++n) r[n] -= p.data()[n];
        return g.with_values(std::move(r), DataKind::pressure);
    };

    NeumannReport rep;
    ScalarField f = time_reverse(g, c, tr);
    ScalarField best = f;
    Sinogram r = residual(f);
    rep.residuals.push_back(l2_norm(r.values()));
    for (std::size_t it = 1; it <= cfg.neumann_iterations; ++it) {
        f = axpy(1.0, time_reverse(r, c, tr), f);
        r = residual(f);
        rep.residuals.push_back(l2_norm(r.values()));
        if (rep.residuals.back() > rep.residuals[rep.best_iteration]) {
            rep.stopped_on_increase = true;
            warn("Neumann iteration " + std::to_string(it) +
                 " increased the data residual; returning iterate " + std::to_string(rep.best_iteration));
            break;
        }
        rep.best_iteration = it;
        best = f;
    }
    if (report) *report = rep;
    return best.renamed("neumann");
}

} // namespace tat
