// Eigenfunction-series reconstruction on a box (2D square / 3D cube) for
// constant sound speed. With psi_m the L2-normalized Dirichlet sine products
// and lambda_m = c pi |m / L|, the coefficients f_m = <f, psi_m> follow from
// g_m(t) = int_S g(x, t) d(psi_m)/dn dx by one of
//   A: f = -c^2 l^-2 g(0) + c^2 l^-3 int sin(l t) g''
//   B: f = -c^2 l^-2 g(0) - c^2 l^-2 int cos(l t) g'
//   C: f = -c^2 l^-1 int sin(l t) g
// (normal derivatives taken outward).
#pragma once

#include <fftw3.h>

#include <Eigen/Dense>

#include "tat/sinogram.hpp"

namespace tat {

using Mode = std::array<std::uint32_t, 3>;

/// Dirichlet sine eigenbasis of -c^2 Laplace on [lo, hi] (dim 2 or 3).
class EigenBasis {
public:
    EigenBasis(int dim, const Point& lo, const Point& hi, double c, std::vector<Mode> modes)
        : dim_(dim), lo_(lo), hi_(hi), c_(c), modes_(std::move(modes)) {
        require(dim == 2 || dim == 3, Errc::invalid_argument, "eigenbasis dimension must be 2 or 3");
        require(c > 0.0 && std::isfinite(c), Errc::invalid_argument, "sound speed must be positive");
        require(!modes_.empty(), Errc::invalid_argument, "eigenbasis needs at least one mode");
        if (dim == 2) lo_[2] = hi_[2] = 0.0;
        for (int a = 0; a < dim; ++a) {
            require(hi_[a] > lo_[a], Errc::invariant_violation, "box bounds must satisfy lo < hi");
            length_[a] = hi_[a] - lo_[a];
        }
        for (Mode& m : modes_) {
            if (dim == 2) m[2] = 0;
            for (int a = 0; a < dim; ++a)
                require(m[a] >= 1, Errc::invariant_violation, "mode indices must be >= 1");
        }
    }

    /// All modes with lambda <= lambda_max. `limit` caps each index (use it
    /// for the detector Nyquist limit).
    static EigenBasis isotropic(int dim, const Point& lo, const Point& hi, double c, double lambda_max,
                                std::array<std::uint32_t, 3> limit) {
        std::vector<Mode> modes;
        const std::uint32_t l2 = dim == 3 ? limit[2] : 1;
        for (std::uint32_t i = 1; i <= limit[0]; ++i)
            for (std::uint32_t j = 1; j <= limit[1]; ++j)
                for (std::uint32_t k = 1; k <= l2; ++k) {
                    const Mode m{i, j, dim == 3 ? k : 0};
                    if (eigenvalue(dim, lo, hi, c, m) <= lambda_max * (1.0 + 1e-12)) modes.push_back(m);
                }
        return EigenBasis(dim, lo, hi, c, std::move(modes));
    }

    /// Basis for a cube observation surface: every mode below the detector
    /// Nyquist limit m_a < nodes_a / 2, truncated isotropically at the
    /// largest lambda that keeps the ball of modes inside that limit.
    static EigenBasis for_surface(const ObservationSurface& s, double c) {
        require(s.kind() == SurfaceKind::cube, Errc::invalid_argument, "series method needs a cube surface");
        std::array<std::uint32_t, 3> limit{1, 1, 1};
        double lambda_max = std::numeric_limits<double>::infinity();
        for (int a = 0; a < s.dim(); ++a) {
            limit[a] = static_cast<std::uint32_t>((s.lattice()[a] - 1) / 2);
            require(limit[a] >= 1, Errc::invalid_argument, "too few detectors per axis for any mode");
            lambda_max = std::min(lambda_max, c * pi * limit[a] / (s.hi()[a] - s.lo()[a]));
        }
        return isotropic(s.dim(), s.lo(), s.hi(), c, lambda_max, limit);
    }

    static double eigenvalue(int dim, const Point& lo, const Point& hi, double c, const Mode& m) {
        double s = 0.0;
        for (int a = 0; a < dim; ++a) {
            const double q = m[a] / (hi[a] - lo[a]);
            s += q * q;
        }
        return c * pi * std::sqrt(s);
    }

    int dim() const { return dim_; }
    const Point& lo() const { return lo_; }
    const Point& hi() const { return hi_; }
    double length(int a) const { return length_[a]; }
    double sound_speed() const { return c_; }
    std::size_t size() const { return modes_.size(); }
    const std::vector<Mode>& modes() const { return modes_; }
    double lambda(std::size_t k) const { return eigenvalue(dim_, lo_, hi_, c_, modes_[k]); }
    std::uint32_t max_index(int a) const {
        std::uint32_t m = 0;
        for (const Mode& mode : modes_) m = std::max(m, mode[a]);
        return m;
    }

    /// One-dimensional factor sqrt(2/L) sin(m pi (x - a) / L).
    double factor(int a, std::uint32_t m, double x) const {
        return std::sqrt(2.0 / length_[a]) * std::sin(m * pi * (x - lo_[a]) / length_[a]);
    }

    double operator()(std::size_t k, const Point& x) const {
        double v = 1.0;
        for (int a = 0; a < dim_; ++a) v *= factor(a, modes_[k][a], x[a]);
        return v;
    }

    json descriptor() const {
        json j;
        j["dim"] = dim_;
        j["lo"] = std::vector<double>(lo_.begin(), lo_.begin() + dim_);
        j["hi"] = std::vector<double>(hi_.begin(), hi_.begin() + dim_);
        j["c"] = c_;
        return j;
    }

private:
    int dim_;
    Point lo_, hi_;
    std::array<double, 3> length_{1, 1, 1};
    double c_;
    std::vector<Mode> modes_;
};

/// g_k(t_j), mode-major.
struct ModeSeries {
    std::size_t n_modes = 0, n_times = 0;
    double dt = 1.0;
    std::vector<double> values;

    std::span<const double> row(std::size_t k) const { return {values.data() + k * n_times, n_times}; }
};

namespace detail {

/// Table T[m - 1][j] = sqrt(2/L) sin(m pi (x_j - a) / L) for m = 1..M.
inline Eigen::MatrixXd sine_table(const EigenBasis& b, int a, std::uint32_t M, const std::vector<double>& x) {
    Eigen::MatrixXd t(M, x.size());
    for (std::uint32_t m = 1; m <= M; ++m)
        for (std::size_t j = 0; j < x.size(); ++j) t(m - 1, static_cast<Eigen::Index>(j)) = b.factor(a, m, x[j]);
    return t;
}

inline std::vector<double> lattice_coords(const ObservationSurface& s, int a) {
    const std::size_t n = s.lattice()[a];
    std::vector<double> x(n);
    for (std::size_t j = 0; j < n; ++j)
        x[j] = j + 1 == n ? s.hi()[a] : s.lo()[a] + (s.hi()[a] - s.lo()[a]) * j / static_cast<double>(n - 1);
    return x;
}

inline double trapezoid_weight(std::size_t j, std::size_t n, double h) { return j == 0 || j + 1 == n ? 0.5 * h : h; }

} // namespace detail

/// g_k(t) = int_S g(x, t) d(psi_k)/dn dx for every basis mode, by the
/// surface trapezoid rule on each face. Face sums are separable sine
/// contractions of the face data.
inline ModeSeries project_boundary_data(const Sinogram& g, const EigenBasis& basis) {
    const ObservationSurface& s = g.surface();
    require(g.kind() == DataKind::pressure, Errc::invalid_argument, "series projection needs pressure traces");
    require(s.kind() == SurfaceKind::cube, Errc::invalid_argument, "series projection needs a cube surface");
    require(s.dim() == basis.dim(), Errc::invalid_argument, "surface and basis dimensions differ");
    const int dim = s.dim();
    const double tol = 1e-9 * s.diameter();
    for (int a = 0; a < dim; ++a)
        require(std::abs(s.lo()[a] - basis.lo()[a]) <= tol && std::abs(s.hi()[a] - basis.hi()[a]) <= tol,
                Errc::invalid_argument, "observation cube does not match the eigenbasis box");
    for (int a = 0; a < dim; ++a)
        require(2 * basis.max_index(a) < s.lattice()[a], Errc::invalid_argument,
                "mode index " + std::to_string(basis.max_index(a)) + " on axis " + std::to_string(a) +
                    " aliases at " + std::to_string(s.lattice()[a]) + " detectors per axis");

    const std::size_t nt = g.n_times();
    const std::array<std::size_t, 3> N = s.lattice();
    std::array<std::vector<double>, 3> x;
    std::array<Eigen::MatrixXd, 3> W; // weighted sine tables, M_a x N_a
    for (int a = 0; a < dim; ++a) {
        x[a] = detail::lattice_coords(s, a);
        W[a] = detail::sine_table(basis, a, basis.max_index(a), x[a]);
        const double h = (s.hi()[a] - s.lo()[a]) / static_cast<double>(N[a] - 1);
        for (std::size_t j = 0; j < N[a]; ++j)
            W[a].col(static_cast<Eigen::Index>(j)) *= detail::trapezoid_weight(j, N[a], h);
    }
    // detector index of each lattice node on the surface
    std::vector<std::ptrdiff_t> where(N[0] * N[1] * N[2], -1);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto& l = s.lattice_index()[i];
        where[(l[0] * N[1] + l[1]) * N[2] + l[2]] = static_cast<std::ptrdiff_t>(i);
    }

    ModeSeries out;
    out.n_modes = basis.size();
    out.n_times = nt;
    out.dt = g.dt();
    out.values.assign(basis.size() * nt, 0.0);

    // For face axis a, the remaining axes (b, c) (c unused in 2D).
    struct Face {
        int a, b, c;
    };
    std::vector<Face> faces;
    for (int a = 0; a < dim; ++a) {
        int others[2] = {-1, -1}, k = 0;
        for (int b = 0; b < dim; ++b)
            if (b != a) others[k++] = b;
        faces.push_back({a, others[0], others[1]});
    }

    parallel_for(nt, [&](std::size_t j) {
        for (const Face& f : faces) {
            const double La = basis.length(f.a);
            for (int side = 0; side < 2; ++side) {
                const std::size_t ia = side == 0 ? 0 : N[f.a] - 1;
                const std::size_t nb = N[f.b], nc = f.c >= 0 ? N[f.c] : 1;
                Eigen::MatrixXd G(nb, nc);
                for (std::size_t ib = 0; ib < nb; ++ib)
                    for (std::size_t ic = 0; ic < nc; ++ic) {
                        std::array<std::size_t, 3> ijk{0, 0, 0};
                        ijk[f.a] = ia;
                        ijk[f.b] = ib;
                        if (f.c >= 0) ijk[f.c] = ic;
                        const auto det = where[(ijk[0] * N[1] + ijk[1]) * N[2] + ijk[2]];
                        G(static_cast<Eigen::Index>(ib), static_cast<Eigen::Index>(ic)) =
                            det >= 0 ? g(static_cast<std::size_t>(det), j) : 0.0;
                    }
                Eigen::MatrixXd P = f.c >= 0 ? Eigen::MatrixXd(W[f.b] * G * W[f.c].transpose())
                                             : Eigen::MatrixXd(W[f.b] * G);
                for (std::size_t k = 0; k < basis.size(); ++k) {
                    const Mode& m = basis.modes()[k];
                    // d/dn of the axis-a factor: -alpha on the low face, (-1)^m alpha on the high face
                    const double alpha = std::sqrt(2.0 / La) * m[f.a] * pi / La;
                    const double sign = side == 0 ? -1.0 : (m[f.a] % 2 ? -1.0 : 1.0);
                    const double v = P(m[f.b] - 1, f.c >= 0 ? m[f.c] - 1 : 0);
                    out.values[k * nt + j] += sign * alpha * v;
                }
            }
        }
    });
    return out;
}

enum class CoefficientFormula { A, B, C };

inline std::string_view to_string(CoefficientFormula f) {
    switch (f) {
    case CoefficientFormula::A: return "A";
    case CoefficientFormula::B: return "B";
    case CoefficientFormula::C: return "C";
    }
    return "?";
}

inline CoefficientFormula coefficient_formula_from_string(std::string_view s) {
    if (s == "A") return CoefficientFormula::A;
    if (s == "B") return CoefficientFormula::B;
    if (s == "C") return CoefficientFormula::C;
    fail(Errc::invalid_argument, "unknown coefficient formula '" + std::string(s) + "' (A, B or C)");
}

struct ModeCoefficients {
    EigenBasis basis;
    std::vector<double> values;
    double lambda_max = 0.0;

    std::size_t size() const { return values.size(); }
};

/// Fraction of the energy of g_k held in the last 10% of the record, over
/// all modes.
inline double tail_energy_fraction(const ModeSeries& gk) {
    const std::size_t start = gk.n_times - std::max<std::size_t>(1, gk.n_times / 10);
    double tail = 0.0, total = 0.0;
    for (std::size_t k = 0; k < gk.n_modes; ++k) {
        const auto r = gk.row(k);
        for (std::size_t j = 0; j < gk.n_times; ++j) {
            total += r[j] * r[j];
            if (j >= start) tail += r[j] * r[j];
        }
    }
    return total > 0.0 ? tail / total : 0.0;
}

/// Coefficients from the projected series: trapezoid rule in time, centered
/// differences for g' and g'' (second-order one-sided at the ends).
inline ModeCoefficients coefficients_from_gk(const ModeSeries& gk, const EigenBasis& basis,
                                             CoefficientFormula formula = CoefficientFormula::B) {
    require(gk.n_modes == basis.size(), Errc::invalid_argument, "mode series does not match the basis");
    require(gk.n_times >= 4, Errc::invalid_argument, "need at least 4 time samples");
    const double tail = tail_energy_fraction(gk);
    if (tail > 0.01)
        warn("series data have not decayed: " + std::to_string(100.0 * tail) +
             "% of the energy lies in the last 10% of the record");
    const double dt = gk.dt, c2 = basis.sound_speed() * basis.sound_speed();
    const std::size_t nt = gk.n_times;
    std::vector<double> f(basis.size());
    parallel_for(basis.size(), [&](std::size_t k) {
        const auto g = gk.row(k);
        const double l = basis.lambda(k);
        const auto d1 = [&](std::size_t j) {
            if (j == 0) return (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * dt);
            if (j + 1 == nt) return (3.0 * g[j] - 4.0 * g[j - 1] + g[j - 2]) / (2.0 * dt);
            return (g[j + 1] - g[j - 1]) / (2.0 * dt);
        };
        const auto d2 = [&](std::size_t j) {
            if (j == 0) return (2.0 * g[0] - 5.0 * g[1] + 4.0 * g[2] - g[3]) / (dt * dt);
            if (j + 1 == nt) return (2.0 * g[j] - 5.0 * g[j - 1] + 4.0 * g[j - 2] - g[j - 3]) / (dt * dt);
            return (g[j + 1] - 2.0 * g[j] + g[j - 1]) / (dt * dt);
        };
        double acc = 0.0;
        for (std::size_t j = 0; j < nt; ++j) {
            const double t = dt * static_cast<double>(j);
            const double w = (j == 0 || j + 1 == nt) ? 0.5 * dt : dt;
            switch (formula) {
            case CoefficientFormula::A: acc += w * std::sin(l * t) * d2(j); break;
            case CoefficientFormula::B: acc += w * std::cos(l * t) * d1(j); break;
            case CoefficientFormula::C: acc += w * std::sin(l * t) * g[j]; break;
            }
        }
        switch (formula) {
        case CoefficientFormula::A: f[k] = c2 * (-g[0] / (l * l) + acc / (l * l * l)); break;
        case CoefficientFormula::B: f[k] = c2 * (-g[0] / (l * l) - acc / (l * l)); break;
        case CoefficientFormula::C: f[k] = -c2 * acc / l; break;
        }
    });
    double lmax = 0.0;
    for (std::size_t k = 0; k < basis.size(); ++k) lmax = std::max(lmax, basis.lambda(k));
    return {basis, std::move(f), lmax};
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

/// True when the grid nodes are the closed lattice of the basis box.
inline bool on_dst_lattice(const EigenBasis& b, const GridSpec& g) {
    if (g.dim != b.dim()) return false;
    for (int a = 0; a < g.dim; ++a) {
        const double tol = 1e-9 * b.length(a);
        if (g.shape[a] < 3 || std::abs(g.lo(a) - b.lo()[a]) > tol || std::abs(g.hi(a) - b.hi()[a]) > tol)
            return false;
    }
    return true;
}

/// Dense coefficient array C[m0-1][m1-1][m2-1] with extents M.
inline std::vector<double> dense_coefficients(const ModeCoefficients& c, const std::array<std::size_t, 3>& M) {
    std::vector<double> dense(M[0] * M[1] * M[2], 0.0);
    const int dim = c.basis.dim();
    for (std::size_t k = 0; k < c.size(); ++k) {
        const Mode& m = c.basis.modes()[k];
        const std::size_t i = m[0] - 1, j = m[1] - 1, l = dim == 3 ? m[2] - 1 : 0;
        dense[(i * M[1] + j) * M[2] + l] += c.values[k];
    }
    return dense;
}

} // namespace detail

enum class SynthesisPath { automatic, dst, direct };

/// f(x) = sum_k f_k psi_k(x) on `out_grid`. On the closed lattice of the
/// basis box the sum is one multi-dimensional DST-I (boundary nodes are
/// zero); elsewhere it is evaluated directly as separable sine sums.
inline ScalarField synthesize_field(const ModeCoefficients& coeffs, const GridSpec& out_grid,
                                    SynthesisPath path = SynthesisPath::automatic) {
    const EigenBasis& b = coeffs.basis;
    require(coeffs.size() > 0, Errc::invalid_argument, "empty coefficient set");
    require(coeffs.values.size() == b.size(), Errc::invariant_violation, "coefficient count does not match modes");
    require(out_grid.dim == b.dim(), Errc::invalid_argument, "grid and basis dimensions differ");
    out_grid.validate();
    const int dim = b.dim();
    for (int a = 0; a < dim; ++a) {
        const double tol = 1e-9 * b.length(a);
        require(out_grid.lo(a) >= b.lo()[a] - tol && out_grid.hi(a) <= b.hi()[a] + tol, Errc::invalid_argument,
                "output grid leaves the eigenbasis box");
    }
    bool use_dst = detail::on_dst_lattice(b, out_grid);
    for (int a = 0; a < dim && use_dst; ++a) use_dst = b.max_index(a) + 2 <= out_grid.shape[a];
    if (path == SynthesisPath::dst)
        require(use_dst, Errc::invalid_argument, "grid is not a DST lattice for these modes");
    if (path == SynthesisPath::direct) use_dst = false;

    std::vector<double> out(out_grid.size(), 0.0);
    if (use_dst) {
        std::array<std::size_t, 3> n{1, 1, 1};
        double norm = 1.0;
        for (int a = 0; a < dim; ++a) {
            n[a] = out_grid.shape[a] - 2;
            norm *= 0.5 * std::sqrt(2.0 / b.length(a));
        }
        std::vector<double> work = detail::dense_coefficients(coeffs, n);
        std::array<int, 3> ni{static_cast<int>(n[0]), static_cast<int>(n[1]), static_cast<int>(n[2])};
        std::array<fftw_r2r_kind, 3> kinds{FFTW_RODFT00, FFTW_RODFT00, FFTW_RODFT00};
        fftw_plan plan;
        {
            std::lock_guard lock(detail::fftw_planner_mutex());
            plan = fftw_plan_r2r(dim, ni.data(), work.data(), work.data(), kinds.data(), FFTW_ESTIMATE);
        }
        require(plan != nullptr, Errc::numerical_failure, "FFTW could not plan the sine transform");
        fftw_execute(plan);
        {
            std::lock_guard lock(detail::fftw_planner_mutex());
            fftw_destroy_plan(plan);
        }
        for (std::size_t i = 0; i < n[0]; ++i)
            for (std::size_t j = 0; j < n[1]; ++j)
                for (std::size_t k = 0; k < n[2]; ++k) {
                    const std::size_t dst = dim == 3 ? out_grid.index(i + 1, j + 1, k + 1)
                                                     : out_grid.index(i + 1, j + 1, 0);
                    out[dst] = norm * work[(i * n[1] + j) * n[2] + k];
                }
    } else {
        std::array<std::size_t, 3> M{1, 1, 1};
        std::array<Eigen::MatrixXd, 3> T;
        for (int a = 0; a < dim; ++a) {
            M[a] = b.max_index(a);
            std::vector<double> x(out_grid.shape[a]);
            for (std::size_t j = 0; j < x.size(); ++j) x[j] = out_grid.coord(a, j);
            T[a] = detail::sine_table(b, a, static_cast<std::uint32_t>(M[a]), x);
        }
        const std::vector<double> C = detail::dense_coefficients(coeffs, M);
        const std::size_t n0 = out_grid.shape[0], n1 = out_grid.shape[1], n2 = out_grid.shape[2];
        if (dim == 2) {
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Cm(
                C.data(), static_cast<Eigen::Index>(M[0]), static_cast<Eigen::Index>(M[1]));
            const Eigen::MatrixXd F = T[0].transpose() * Cm * T[1]; // n0 x n1
            for (std::size_t i = 0; i < n0; ++i)
                for (std::size_t j = 0; j < n1; ++j) out[out_grid.index(i, j, 0)] = F(i, j);
        } else {
            // contract axis 2, then 1, then 0
            parallel_for(n0, [&](std::size_t i) {
                Eigen::MatrixXd A = Eigen::MatrixXd::Zero(M[1], M[2]);
                std::vector<double> s0(M[0]);
                for (std::size_t m = 0; m < M[0]; ++m) s0[m] = T[0](m, i);
                for (std::size_t m = 0; m < M[0]; ++m) {
                    if (s0[m] == 0.0) continue;
                    for (std::size_t p = 0; p < M[1]; ++p)
                        for (std::size_t q = 0; q < M[2]; ++q) A(p, q) += s0[m] * C[(m * M[1] + p) * M[2] + q];
                }
                const Eigen::MatrixXd F = T[1].transpose() * A * T[2]; // n1 x n2
                for (std::size_t j = 0; j < n1; ++j)
                    for (std::size_t k = 0; k < n2; ++k) out[out_grid.index(i, j, k)] = F(j, k);
            });
        }
    }
    return ScalarField(out_grid, std::move(out), "series");
}

/// <f, psi_k> for every mode by the trapezoid rule on the grid of f, which
/// must be the closed lattice of the basis box.
inline ModeCoefficients project_field(const ScalarField& f, const EigenBasis& b) {
    const GridSpec& g = f.grid();
    require(detail::on_dst_lattice(b, g), Errc::invalid_argument, "field grid is not the lattice of the basis box");
    const int dim = b.dim();
    std::array<Eigen::MatrixXd, 3> T;
    std::array<std::size_t, 3> M{1, 1, 1};
    for (int a = 0; a < dim; ++a) {
        M[a] = b.max_index(a);
        std::vector<double> x(g.shape[a]);
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = g.coord(a, j);
        T[a] = detail::sine_table(b, a, static_cast<std::uint32_t>(M[a]), x);
        for (std::size_t j = 0; j < x.size(); ++j)
            T[a].col(static_cast<Eigen::Index>(j)) *= detail::trapezoid_weight(j, x.size(), g.spacing[a]);
    }
    const std::size_t n0 = g.shape[0], n1 = g.shape[1], n2 = g.shape[2];
    std::vector<double> dense(M[0] * M[1] * M[2], 0.0);
    if (dim == 2) {
        Eigen::MatrixXd F(n0, n1);
        for (std::size_t i = 0; i < n0; ++i)
            for (std::size_t j = 0; j < n1; ++j) F(i, j) = f[g.index(i, j, 0)];
        const Eigen::MatrixXd P = T[0] * F * T[1].transpose();
        for (std::size_t i = 0; i < M[0]; ++i)
            for (std::size_t j = 0; j < M[1]; ++j) dense[i * M[1] + j] = P(i, j);
    } else {
        // slab-wise: contract axes 1 and 2 for each i, then axis 0
        std::vector<Eigen::MatrixXd> slabs(n0);
        parallel_for(n0, [&](std::size_t i) {
            Eigen::MatrixXd F(n1, n2);
            for (std::size_t j = 0; j < n1; ++j)
                for (std::size_t k = 0; k < n2; ++k) F(j, k) = f[g.index(i, j, k)];
            slabs[i] = T[1] * F * T[2].transpose();
        });
        for (std::size_t m = 0; m < M[0]; ++m)
            for (std::size_t i = 0; i < n0; ++i) {
                const double w = T[0](m, i);
                if (w == 0.0) continue;
                for (std::size_t p = 0; p < M[1]; ++p)
                    for (std::size_t q = 0; q < M[2]; ++q) dense[(m * M[1] + p) * M[2] + q] += w * slabs[i](p, q);
            }
    }
    std::vector<double> values(b.size());
    for (std::size_t k = 0; k < b.size(); ++k) {
        const Mode& m = b.modes()[k];
        values[k] = dense[((m[0] - 1) * M[1] + (m[1] - 1)) * M[2] + (dim == 3 ? m[2] - 1 : 0)];
    }
    double lmax = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) lmax = std::max(lmax, b.lambda(k));
    return {b, std::move(values), lmax};
}

/// Coefficients restricted to modes with lambda <= lambda_max.
inline ModeCoefficients truncate(const ModeCoefficients& c, double lambda_max) {
    std::vector<Mode> modes;
    std::vector<double> values;
    for (std::size_t k = 0; k < c.size(); ++k)
        if (c.basis.lambda(k) <= lambda_max) {
            modes.push_back(c.basis.modes()[k]);
            values.push_back(c.values[k]);
        }
    require(!modes.empty(), Errc::invalid_argument, "truncation leaves no modes");
    EigenBasis b(c.basis.dim(), c.basis.lo(), c.basis.hi(), c.basis.sound_speed(), std::move(modes));
    return {std::move(b), std::move(values), lambda_max};
}

/// Projection, coefficients and synthesis in one call.
inline ScalarField reconstruct_series(const Sinogram& g, const GridSpec& out_grid,
                                      CoefficientFormula formula = CoefficientFormula::B,
                                      ModeCoefficients* coefficients = nullptr) {
    require(g.sound_speed().has_value() || g.kind() == DataKind::pressure, Errc::invalid_argument,
            "series reconstruction needs pressure data");
    const double c = g.sound_speed().value_or(1.0);
    const EigenBasis basis = EigenBasis::for_surface(g.surface(), c);
    ModeCoefficients coeffs = coefficients_from_gk(project_boundary_data(g, basis), basis, formula);
    ScalarField f = synthesize_field(coeffs, out_grid);
    if (coefficients) *coefficients = std::move(coeffs);
    return f;
}

inline constexpr std::string_view coefficients_magic = "TATMOD01";

inline void write_coefficients(const ModeCoefficients& c, const std::filesystem::path& path,
                               const json& extra = json::object()) {
    json h;
    h["basis"] = c.basis.descriptor();
    std::vector<std::uint32_t> flat;
    for (const Mode& m : c.basis.modes())
        for (int a = 0; a < c.basis.dim(); ++a) flat.push_back(m[a]);
    h["modes"] = flat;
    h["n_modes"] = c.size();
    h["lambda_max"] = c.lambda_max;
    for (auto it = extra.begin(); it != extra.end(); ++it) h[it.key()] = it.value();
    write_container(path, coefficients_magic, h, c.values);
}

inline ModeCoefficients read_coefficients(const std::filesystem::path& path) {
    Container con = read_container(path, coefficients_magic,
                                   [](const json& h) { return h.at("n_modes").get<std::size_t>(); });
    try {
        const json& bj = con.header.at("basis");
        const int dim = bj.at("dim").get<int>();
        require(dim == 2 || dim == 3, Errc::malformed_header, "basis dim must be 2 or 3");
        const auto lo = bj.at("lo").get<std::vector<double>>(), hi = bj.at("hi").get<std::vector<double>>();
        require(lo.size() == static_cast<std::size_t>(dim) && hi.size() == lo.size(), Errc::malformed_header,
                "basis bounds must have dim entries");
        const auto flat = con.header.at("modes").get<std::vector<std::uint32_t>>();
        const std::size_t n = con.header.at("n_modes").get<std::size_t>();
        require(flat.size() == n * static_cast<std::size_t>(dim), Errc::malformed_header,
                "mode list does not match n_modes");
        Point l{0, 0, 0}, u{0, 0, 0};
        for (int a = 0; a < dim; ++a) l[a] = lo[a], u[a] = hi[a];
        std::vector<Mode> modes(n, Mode{0, 0, 0});
        for (std::size_t k = 0; k < n; ++k)
            for (int a = 0; a < dim; ++a) modes[k][a] = flat[k * dim + a];
        EigenBasis b(dim, l, u, bj.at("c").get<double>(), std::move(modes));
        return {std::move(b), std::move(con.payload), con.header.value("lambda_max", 0.0)};
    } catch (const json::exception& e) {
        fail(Errc::malformed_header, std::string("coefficient header: ") + e.what());
    }
}

} // namespace tat
