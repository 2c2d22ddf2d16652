// Explicit leapfrog solver for p_tt = c^2(x) Laplace(p) on a uniform lattice.
//
// WaveScheme is the shared kernel: the forward free-space solver runs it on a
// lattice padded with an absorbing sponge, and time reversal runs it backward
// on the interior of the observation surface with Dirichlet boundary nodes.
#pragma once

#include "tat/sinogram.hpp"

namespace tat {

/// Leapfrog stepping on an n0 x n1 x n2 lattice (dim 1..3; trailing axes of
/// size 1). Only "active" nodes are updated; every other node keeps whatever
/// value the caller writes there (zero by default), which makes it a
/// Dirichlet node.
///
/// With damping s = sigma*dt/2 the update is
///   p+ = (2p - (1 - s) p- + c^2 dt^2 L p) / (1 + s),
/// the centered discretization of p_tt + sigma p_t = c^2 L p.
class WaveScheme {
public:
    WaveScheme(int dim, std::array<std::size_t, 3> n, std::array<double, 3> h, std::vector<double> c2dt2,
               std::vector<double> damping, const std::vector<std::uint8_t>& active)
        : dim_(dim), n_(n), h_(h), coef_(std::move(c2dt2)), damping_(std::move(damping)) {
        require(dim >= 1 && dim <= 3, Errc::invalid_argument, "wave lattice dimension must be 1..3");
        size_ = n_[0] * n_[1] * n_[2];
        stride_ = {n_[1] * n_[2], n_[2], 1};
        if (dim_ == 2) stride_ = {n_[1], 1, 0};
        if (dim_ == 1) stride_ = {1, 0, 0};
        require(coef_.size() == size_, Errc::invalid_argument, "coefficient array does not match lattice");
        require(damping_.empty() || damping_.size() == size_, Errc::invalid_argument,
                "damping array does not match lattice");
        require(active.empty() || active.size() == size_, Errc::invalid_argument, "active mask does not match lattice");
        for (int a = 0; a < dim_; ++a) inv_h2_[a] = 1.0 / (h_[a] * h_[a]);
        build_runs(active);
        cur_.assign(size_, 0.0);
        prev_.assign(size_, 0.0);
    }

    int dim() const { return dim_; }
    std::size_t size() const { return size_; }
    const std::array<std::size_t, 3>& shape() const { return n_; }
    std::vector<double>& current() { return cur_; }
    std::vector<double>& previous() { return prev_; }
    const std::vector<double>& current() const { return cur_; }
    const std::vector<double>& previous() const { return prev_; }
    bool is_active(std::size_t idx) const { return active_[idx] != 0; }

    /// Discrete Laplacian of `p` at active node `idx`.
    double laplacian(const std::vector<double>& p, std::size_t idx) const {
        double lap = 0.0;
        for (int a = 0; a < dim_; ++a) lap += (p[idx + stride_[a]] + p[idx - stride_[a]] - 2.0 * p[idx]) * inv_h2_[a];
        return lap;
    }

    /// Sets previous := current + 0.5 c^2 dt^2 L current at active nodes, the
    /// second-order start for zero initial velocity (p(-dt) = p(dt)). Call
    /// after loading the initial field into current(); inactive nodes of
    /// previous() are copied from current().
    void start_from_rest() {
        prev_ = cur_;
        for (const Run& r : runs_)
            for (std::size_t idx = r.begin; idx < r.end; ++idx) prev_[idx] = cur_[idx] + 0.5 * coef_[idx] * laplacian(cur_, idx);
    }

    /// Advances one step: previous <- next, then swap so current() holds the
    /// new level. The same update runs backward in time when previous() holds
    /// the later level.
    void step() {
        switch (dim_) {
        case 1: advance<1>(); break;
        case 2: advance<2>(); break;
        default: advance<3>(); break;
        }
        for (const Edge& e : edges_) prev_[e.node] = cur_[e.inner] + e.k * (prev_[e.inner] - cur_[e.node]);
        std::swap(cur_, prev_);
    }

    /// Replaces the Dirichlet condition on the outer lattice faces by the
    /// first-order one-way condition p_t + c p_n = 0 (Mur). Edge and corner
    /// nodes use the first axis they lie on. Forward stepping only.
    void enable_absorbing_edges() {
        edges_.clear();
        for (std::size_t idx = 0; idx < size_; ++idx) {
            if (active_[idx]) continue;
            const std::array<std::size_t, 3> ijk{idx / (n_[1] * n_[2]), (idx / n_[2]) % n_[1], idx % n_[2]};
            for (int a = 0; a < dim_; ++a) {
                const bool lo = ijk[a] == 0, hi = ijk[a] + 1 == n_[a];
                if (!lo && !hi) continue;
                const std::size_t inner = lo ? idx + stride_[a] : idx - stride_[a];
                const double cdt = std::sqrt(coef_[idx]);
                edges_.push_back({idx, inner, (cdt - h_[a]) / (cdt + h_[a])});
                break;
            }
        }
    }

    /// Leapfrog energy between the two stored levels,
    ///   1/2 sum |p1 - p0|^2 / (c^2 dt^2) + 1/2 sum_edges (grad p1)(grad p0),
    /// times the cell volume. Conserved to round-off without damping;
    /// `inv_c2` holds 1/c^2 per node.
    double energy(const std::vector<double>& inv_c2, double dt) const {
        double vol = 1.0;
        for (int a = 0; a < dim_; ++a) vol *= h_[a];
        double kinetic = 0.0, potential = 0.0;
        for (std::size_t idx = 0; idx < size_; ++idx) {
            const double d = cur_[idx] - prev_[idx];
            kinetic += inv_c2[idx] * d * d;
        }
        for (std::size_t i = 0; i < n_[0]; ++i)
            for (std::size_t j = 0; j < n_[1]; ++j)
                for (std::size_t k = 0; k < n_[2]; ++k) {
                    const std::size_t idx = i * n_[1] * n_[2] + j * n_[2] + k;
                    const std::array<std::size_t, 3> ijk{i, j, k};
                    for (int a = 0; a < dim_; ++a) {
                        if (ijk[a] + 1 >= n_[a]) continue;
                        const std::size_t nb = idx + stride_[a];
                        potential += (cur_[nb] - cur_[idx]) * (prev_[nb] - prev_[idx]) * inv_h2_[a];
                    }
                }
        return 0.5 * vol * (kinetic / (dt * dt) + potential);
    }

private:
    struct Edge {
        std::size_t node, inner;
        double k;
    };

    struct Run {
        std::size_t begin, end;
        bool damped;
    };

    void build_runs(const std::vector<std::uint8_t>& active) {
        active_.assign(size_, 0);
        for (std::size_t idx = 0; idx < size_; ++idx) {
            const std::size_t i = idx / (n_[1] * n_[2]), j = (idx / n_[2]) % n_[1], k = idx % n_[2];
            const std::array<std::size_t, 3> ijk{i, j, k};
            bool interior = true;
            for (int a = 0; a < dim_; ++a) interior = interior && ijk[a] > 0 && ijk[a] + 1 < n_[a];
            active_[idx] = interior && (active.empty() || active[idx]) ? 1 : 0;
        }
        std::size_t idx = 0;
        while (idx < size_) {
            if (!active_[idx]) {
                ++idx;
                continue;
            }
            const bool damped = !damping_.empty() && damping_[idx] != 0.0;
            std::size_t end = idx + 1;
            while (end < size_ && active_[end] && (!damping_.empty() && damping_[end] != 0.0) == damped &&
                   end % n_[dim_ - 1] != 0)
                ++end;
            runs_.push_back({idx, end, damped});
            idx = end;
        }
    }

    template <int D>
    void advance() {
        const double* __restrict p = cur_.data();
        double* __restrict q = prev_.data();
        const double* __restrict coef = coef_.data();
        const double* damp = damping_.empty() ? nullptr : damping_.data();
        const std::array<std::size_t, 3> s = stride_;
        const std::array<double, 3> w = inv_h2_;
        double centre = 0.0;
        for (int a = 0; a < D; ++a) centre += 2.0 * w[a];
        parallel_for(
            runs_.size(),
            [&](std::size_t r) {
                const Run run = runs_[r];
                for (std::size_t idx = run.begin; idx < run.end; ++idx) {
                    double lap = -centre * p[idx];
                    lap += (p[idx + s[0]] + p[idx - s[0]]) * w[0];
                    if constexpr (D > 1) lap += (p[idx + s[1]] + p[idx - s[1]]) * w[1];
                    if constexpr (D > 2) lap += (p[idx + s[2]] + p[idx - s[2]]) * w[2];
                    if (run.damped) {
                        const double sd = damp[idx];
                        q[idx] = (2.0 * p[idx] - (1.0 - sd) * q[idx] + coef[idx] * lap) / (1.0 + sd);
                    } else {
                        q[idx] = 2.0 * p[idx] - q[idx] + coef[idx] * lap;
                    }
                }
            },
            64);
    }

    int dim_;
    std::array<std::size_t, 3> n_;
    std::array<double, 3> h_;
    std::array<std::size_t, 3> stride_{};
    std::array<double, 3> inv_h2_{0, 0, 0};
    std::size_t size_ = 0;
    std::vector<double> coef_, damping_;
    std::vector<std::uint8_t> active_;
    std::vector<Run> runs_;
    std::vector<Edge> edges_;
    std::vector<double> cur_, prev_;
};

/// Largest stable-by-design time step: 0.5 h_min / c_max.
inline double max_stable_dt(const GridSpec& grid, double c_max) { return 0.5 * grid.min_spacing() / c_max; }

struct WaveOptions {
    /// Absorbing layer width in cells (>= 20). The layer ends in a one-way
    /// boundary condition, so it only has to mop up oblique and
    /// low-frequency leftovers; a steep damping ramp reflects more than it
    /// absorbs.
    std::size_t sponge_cells = 48;
    /// Undamped cells between the field grid and the sponge.
    std::size_t padding_cells = 0;
    /// sigma_max * width / c_max of the quadratic damping profile.
    double sponge_strength = 1.0;
    /// Keep every n-th solver step in the output sinogram.
    std::size_t record_stride = 1;
};

namespace detail {

/// Field grid embedded into a larger lattice with `margin` extra nodes on
/// each side of every active axis.
struct PaddedLattice {
    GridSpec inner;
    std::size_t margin = 0;
    std::array<std::size_t, 3> n{1, 1, 1};
    std::array<double, 3> h{1, 1, 1};
    std::array<double, 3> origin{0, 0, 0};

    PaddedLattice(const GridSpec& g, std::size_t m) : inner(g), margin(m) {
        for (int a = 0; a < g.dim; ++a) {
            n[a] = g.shape[a] + 2 * m;
            h[a] = g.spacing[a];
            origin[a] = g.origin[a] - static_cast<double>(m) * g.spacing[a];
        }
    }
    std::size_t size() const { return n[0] * n[1] * n[2]; }
    std::size_t outer_index(std::size_t inner_idx) const {
        auto ijk = inner.unravel(inner_idx);
        for (int a = 0; a < inner.dim; ++a) ijk[a] += margin;
        return (ijk[0] * n[1] + ijk[1]) * n[2] + ijk[2];
    }
    /// Inner node closest to an outer node (edge replication).
    std::size_t clamp_to_inner(std::size_t outer_idx) const {
        std::array<std::size_t, 3> ijk{outer_idx / (n[1] * n[2]), (outer_idx / n[2]) % n[1], outer_idx % n[2]};
        for (int a = 0; a < inner.dim; ++a) {
            const auto v = static_cast<std::ptrdiff_t>(ijk[a]) - static_cast<std::ptrdiff_t>(margin);
            ijk[a] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(inner.shape[a]) - 1));
        }
        return inner.index(ijk[0], ijk[1], ijk[2]);
    }
    /// Depth (in cells) of an outer node beyond the inner grid plus padding, per axis.
    std::array<double, 3> depth_beyond(std::size_t outer_idx, std::size_t padding) const {
        const std::array<std::size_t, 3> ijk{outer_idx / (n[1] * n[2]), (outer_idx / n[2]) % n[1], outer_idx % n[2]};
        std::array<double, 3> d{0, 0, 0};
        const auto start = static_cast<std::ptrdiff_t>(margin - padding);
        for (int a = 0; a < inner.dim; ++a) {
            const auto i = static_cast<std::ptrdiff_t>(ijk[a]);
            const auto last = static_cast<std::ptrdiff_t>(n[a]) - 1 - start;
            if (i < start) d[a] = static_cast<double>(start - i);
            if (i > last) d[a] = static_cast<double>(i - last);
        }
        return d;
    }
};

/// Multilinear interpolation stencil of a point on a lattice.
struct Stencil {
    std::array<std::size_t, 8> idx{};
    std::array<double, 8> w{};
    int count = 0;

    double apply(const std::vector<double>& v) const {
        double s = 0.0;
        for (int c = 0; c < count; ++c) s += w[c] * v[idx[c]];
        return s;
    }
};

inline Stencil make_stencil(int dim, const std::array<std::size_t, 3>& n, const std::array<double, 3>& h,
                            const std::array<double, 3>& origin, const Point& p) {
    std::array<std::size_t, 3> i0{0, 0, 0};
    std::array<double, 3> t{0, 0, 0};
    for (int a = 0; a < dim; ++a) {
        const double s = (p[a] - origin[a]) / h[a];
        double fl = std::floor(s);
        fl = std::clamp(fl, 0.0, static_cast<double>(n[a] - 2));
        i0[a] = static_cast<std::size_t>(fl);
        t[a] = std::clamp(s - fl, 0.0, 1.0);
    }
    Stencil st;
    st.count = 1 << dim;
    for (int c = 0; c < st.count; ++c) {
        std::array<std::size_t, 3> ijk = i0;
        double w = 1.0;
        for (int a = 0; a < dim; ++a) {
            const bool up = (c >> a) & 1;
            ijk[a] += up ? 1 : 0;
            w *= up ? t[a] : 1.0 - t[a];
        }
        st.idx[c] = (ijk[0] * n[1] + ijk[1]) * n[2] + ijk[2];
        st.w[c] = w;
    }
    return st;
}

inline void check_speed(const ScalarField& c) {
    for (double v : c.values())
        require(v > 0.0, Errc::invalid_argument, "sound speed must be positive everywhere");
}

inline std::size_t time_samples(double T, double dt) {
    require(std::isfinite(T) && T >= 0.0, Errc::invalid_argument, "final time must be non-negative");
    return static_cast<std::size_t>(std::floor(T / dt + 1e-9)) + 1;
}

/// Free-space forward solve without the support/enclosure checks (used by
/// iterative reconstructions whose iterates are not compactly supported).
inline Sinogram forward_unchecked(const ScalarField& f, const ScalarField& c, const ObservationSurface& surface,
                                  double T, double dt, const WaveOptions& opts) {
    const GridSpec& g = f.grid();
    const int dim = g.dim;
    const double c_max = c.max();
    require(dt > 0.0 && dt <= max_stable_dt(g, c_max) * (1.0 + 1e-12), Errc::cfl_violation,
            "dt = " + std::to_string(dt) + " exceeds 0.5 h / max(c) = " + std::to_string(max_stable_dt(g, c_max)));
    require(opts.sponge_cells >= 20, Errc::invalid_argument, "absorbing layer must be at least 20 cells wide");
    require(opts.record_stride >= 1, Errc::invalid_argument, "record stride must be >= 1");

    const std::size_t margin = opts.sponge_cells + opts.padding_cells;
    const PaddedLattice lat(g, margin);
    const std::size_t size = lat.size();
    std::vector<double> coef(size), damping(size, 0.0);
    const double width = static_cast<double>(opts.sponge_cells);
    for (std::size_t idx = 0; idx < size; ++idx) {
        const double cv = c[lat.clamp_to_inner(idx)];
        coef[idx] = cv * cv * dt * dt;
        const auto depth = lat.depth_beyond(idx, opts.padding_cells);
        double sigma = 0.0;
        for (int a = 0; a < dim; ++a) {
            const double x = depth[a] / width;
            sigma += opts.sponge_strength * c_max / (width * lat.h[a]) * x * x;
        }
        damping[idx] = 0.5 * sigma * dt;
    }
    WaveScheme scheme(dim, lat.n, lat.h, std::move(coef), std::move(damping), {});
    scheme.enable_absorbing_edges();
    for (std::size_t n = 0; n < f.size(); ++n) scheme.current()[lat.outer_index(n)] = f[n];

    std::vector<Stencil> probes;
    probes.reserve(surface.size());
    for (const Point& y : surface.points()) {
        require(g.contains(y, 1e-9 * g.max_spacing()), Errc::invalid_argument,
                "detector lies outside the field grid");
        probes.push_back(make_stencil(dim, lat.n, lat.h, lat.origin, y));
    }

    const std::size_t steps = time_samples(T, dt);
    const std::size_t stride = opts.record_stride;
    const std::size_t n_out = (steps - 1) / stride + 1;
    std::vector<double> values(surface.size() * n_out, 0.0);
    auto record = [&](std::size_t j) {
        const auto& p = scheme.current();
        for (std::size_t i = 0; i < probes.size(); ++i) values[i * n_out + j] = probes[i].apply(p);
    };
    record(0);
    if (steps > 1) {
        scheme.start_from_rest();
        std::swap(scheme.current(), scheme.previous());
        // current = p(dt), previous = p(0)
        for (std::size_t s = 1; s < steps; ++s) {
            if (s > 1) scheme.step();
            if (s % stride == 0) record(s / stride);
        }
    }
    return Sinogram(surface, DataKind::pressure, dt * static_cast<double>(stride), n_out, std::move(values));
}

} // namespace detail

/// Pressure traces p(y_i, t_j) of the free-space Cauchy problem
/// p_tt = c^2 Laplace p, p(0) = f, p_t(0) = 0, sampled at the detectors of
/// `surface` for t_j = j * dt * record_stride <= T.
///
/// `c` lives on the grid of `f` and is extended by edge replication into
/// the absorbing layer that emulates free space.
inline Sinogram solve_wave_forward(const ScalarField& f, const ScalarField& c, const ObservationSurface& surface,
                                   double T, double dt, const WaveOptions& opts = {}) {
    require_same_grid(f, c, "solve_wave_forward");
    detail::check_speed(c);
    require(surface.dim() == f.grid().dim, Errc::invalid_argument, "surface and field dimensions differ");
    surface.check_encloses(f);
    return detail::forward_unchecked(f, c, surface, T, dt, opts);
}

inline Sinogram solve_wave_forward(const ScalarField& f, double c, const ObservationSurface& surface, double T,
                                   double dt, const WaveOptions& opts = {}) {
    return solve_wave_forward(f, ScalarField::constant(f.grid(), c, "c"), surface, T, dt, opts);
}

} // namespace tat
