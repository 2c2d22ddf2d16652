// Conductivity recovery from interior maps W_ab = sigma grad(u_a) . grad(u_b):
// projected gradient descent on
//   J(sigma) = sum_pairs || W_ab[sigma] - W_obs ||^2 + beta || grad sigma ||^2
// with adjoint-state gradients, Barzilai-Borwein steps and Armijo backtracking.
#pragma once

#include "tat/conductivity.hpp"

namespace tat {

struct AetOptions {
    double sigma_background = 1.0;
    double sigma_min = 0.05;
    double sigma_max = 20.0;
    /// Regularization weight; negative means 1e-4 h^2.
    double beta = -1.0;
    std::size_t max_iterations = 300;
    /// Stop when the objective falls below this fraction of its start value,
    /// or the relative change over the last accepted step is below `stall`.
    double tolerance = 1e-10;
    double stall = 1e-9;
    std::size_t max_backtracks = 30;
    /// Nodes closer than this many cells to the domain edge are left out of
    /// the misfit (the regularizer still couples them).
    std::size_t edge_cells = 0;
};

struct AetReport {
    std::vector<double> objective; // accepted iterates, starting with sigma_0
    std::size_t iterations = 0;
    bool converged = false;
    bool line_search_failed = false;
    std::string diagnostic;
};

/// Objective and adjoint gradient for a fixed set of maps and patterns.
class AetObjective {
public:
    AetObjective(const GridSpec& grid, std::vector<CurrentPattern> patterns, std::vector<InteriorMap> maps,
                 double beta, std::size_t edge_cells = 0)
        : cg_(grid), patterns_(std::move(patterns)), maps_(std::move(maps)), beta_(beta) {
        require(grid.dim == 2, Errc::invalid_argument, "AET is 2D only");
        require(patterns_.size() >= 2, Errc::invalid_argument, "AET needs at least two current patterns");
        require(!maps_.empty(), Errc::invalid_argument, "AET needs at least one interior map");
        require(beta_ >= 0.0, Errc::invalid_argument, "regularization weight must be >= 0");
        for (const auto& p : patterns_) p.validate(grid);
        for (const auto& m : maps_) {
            m.validate();
            require(m.tag == functional_sigma_grad_dot, Errc::unsupported,
                    "functional '" + m.tag + "' is registered but not implemented");
            require(m.W.grid() == grid, Errc::invalid_argument, "interior map grid differs from the conductivity grid");
            require(m.pattern_a < patterns_.size() && m.pattern_b < patterns_.size(), Errc::invalid_argument,
                    "interior map refers to a missing current pattern");
        }
        weight_ = cg_.volume();
        for (std::size_t n = 0; n < grid.size(); ++n) {
            const auto ij = grid.unravel(n);
            for (int a = 0; a < 2; ++a) {
                const std::size_t lo = ij[a], hi = grid.shape[a] - 1 - ij[a];
                if (std::min(lo, hi) < edge_cells) weight_[n] = 0.0;
            }
        }
    }

    const ConductivityGrid& topology() const { return cg_; }
    double beta() const { return beta_; }

    /// J(sigma); fills `gradient` when non-null.
    double evaluate(const std::vector<double>& sigma, std::vector<double>* gradient = nullptr) const {
        const std::size_t N = sigma.size(), P = patterns_.size();
        std::vector<detail::StateSolve> state(P);
        parallel_for(P, [&](std::size_t i) { state[i] = detail::solve_state(cg_, sigma, patterns_[i]); }, 1);

        std::vector<std::vector<double>> gx(P), gy(P);
        for (std::size_t i = 0; i < P; ++i) {
            gx[i] = detail::apply(cg_.gx(), state[i].u);
            gy[i] = detail::apply(cg_.gy(), state[i].u);
        }

        double J = 0.0;
        std::vector<double> grad(gradient ? N : 0, 0.0);
        std::vector<std::vector<double>> dJdu(gradient ? P : 0, std::vector<double>(N, 0.0));
        for (const InteriorMap& m : maps_) {
            const std::size_t a = m.pattern_a, b = m.pattern_b;
            std::vector<double> rx(N), ry(N);
            for (std::size_t n = 0; n < N; ++n) {
                const double dot = gx[a][n] * gx[b][n] + gy[a][n] * gy[b][n];
                const double res = sigma[n] * dot - m.W[n];
                J += weight_[n] * res * res;
                if (!gradient) continue;
                const double r = 2.0 * weight_[n] * res;
                grad[n] += r * dot;
                rx[n] = r * sigma[n];
                ry[n] = r * sigma[n];
            }
            if (!gradient) continue;
            // d/du_a of sum r sigma (Gx u_a Gx u_b + Gy u_a Gy u_b) = Gx^T (r sigma Gx u_b) + ...
            auto accumulate = [&](std::size_t target, std::size_t other) {
                std::vector<double> vx(N), vy(N);
                for (std::size_t n = 0; n < N; ++n) {
                    vx[n] = rx[n] * gx[other][n];
                    vy[n] = ry[n] * gy[other][n];
                }
                const Eigen::Map<const Eigen::VectorXd> ex(vx.data(), static_cast<Eigen::Index>(N));
                const Eigen::Map<const Eigen::VectorXd> ey(vy.data(), static_cast<Eigen::Index>(N));
                const Eigen::VectorXd d = cg_.gx().transpose() * ex + cg_.gy().transpose() * ey;
                for (std::size_t n = 0; n < N; ++n) dJdu[target][n] += d[static_cast<Eigen::Index>(n)];
            };
            accumulate(a, b);
            accumulate(b, a);
        }

        for (const auto& f : cg_.faces()) {
            const double d = sigma[f.p] - sigma[f.q];
            J += beta_ * f.geometry * d * d;
            if (gradient) {
                grad[f.p] += 2.0 * beta_ * f.geometry * d;
                grad[f.q] -= 2.0 * beta_ * f.geometry * d;
            }
        }
        if (!gradient) return J;

        std::vector<std::vector<double>> z(P);
        parallel_for(P, [&](std::size_t i) { z[i] = adjoint(state[i].K, patterns_[i].kind, dJdu[i]); }, 1);
        for (std::size_t i = 0; i < P; ++i) {
            const auto& u = state[i].u;
            for (const auto& f : cg_.faces()) {
                const double s = (u[f.p] - u[f.q]) * (z[i][f.p] - z[i][f.q]) * f.geometry;
                if (s == 0.0) continue;
                grad[f.p] += s * ConductivityGrid::face_sigma_da(sigma[f.p], sigma[f.q]);
                grad[f.q] += s * ConductivityGrid::face_sigma_da(sigma[f.q], sigma[f.p]);
            }
        }
        *gradient = std::move(grad);
        return J;
    }

    std::vector<ScalarField> potentials(const std::vector<double>& sigma) const {
        std::vector<ScalarField> out;
        for (const auto& p : patterns_)
            out.emplace_back(cg_.grid(), detail::solve_state(cg_, sigma, p).u, "u_" + p.name);
        return out;
    }

private:
    /// Solves K z = -dJ/du on the unknowns of the state system; z is zero on
    /// Dirichlet nodes and at the pinned node of Neumann problems.
    std::vector<double> adjoint(const Eigen::SparseMatrix<double>& K, PatternKind kind,
                                const std::vector<double>& dJdu) const {
        const std::size_t N = dJdu.size();
        std::vector<double> z(N, 0.0);
        if (kind == PatternKind::dirichlet) {
            const auto ni = static_cast<Eigen::Index>(cg_.interior().size());
            std::vector<Eigen::Triplet<double>> t;
            for (int col = 0; col < K.outerSize(); ++col)
                for (Eigen::SparseMatrix<double>::InnerIterator it(K, col); it; ++it) {
                    const auto r = cg_.interior_slot(static_cast<std::size_t>(it.row()));
                    const auto c = cg_.interior_slot(static_cast<std::size_t>(it.col()));
                    if (r >= 0 && c >= 0) t.emplace_back(r, c, it.value());
                }
            Eigen::SparseMatrix<double> A(ni, ni);
            A.setFromTriplets(t.begin(), t.end());
            Eigen::VectorXd rhs(ni);
            for (std::size_t k = 0; k < cg_.interior().size(); ++k)
                rhs[static_cast<Eigen::Index>(k)] = -dJdu[cg_.interior()[k]];
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
            require(ldlt.info() == Eigen::Success, Errc::numerical_failure, "adjoint factorization failed");
            const Eigen::VectorXd x = ldlt.solve(rhs);
            for (std::size_t k = 0; k < cg_.interior().size(); ++k) z[cg_.interior()[k]] = x[static_cast<Eigen::Index>(k)];
            return z;
        }
        Eigen::SparseMatrix<double> A = K;
        for (int col = 0; col < A.outerSize(); ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(A, col); it; ++it)
                if (it.row() == 0 || it.col() == 0) it.valueRef() = (it.row() == it.col()) ? 1.0 : 0.0;
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(N));
        for (std::size_t n = 0; n < N; ++n) rhs[static_cast<Eigen::Index>(n)] = -dJdu[n];
        rhs[0] = 0.0;
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
        require(ldlt.info() == Eigen::Success, Errc::numerical_failure, "adjoint factorization failed");
        const Eigen::VectorXd x = ldlt.solve(rhs);
        for (std::size_t n = 0; n < N; ++n) z[n] = x[static_cast<Eigen::Index>(n)];
        return z;
    }

    ConductivityGrid cg_;
    std::vector<CurrentPattern> patterns_;
    std::vector<InteriorMap> maps_;
    double beta_;
    std::vector<double> weight_;
};

inline double default_beta(const GridSpec& g) { return 1e-4 * g.max_spacing() * g.max_spacing(); }

/// Recovers sigma from interior maps, starting from the background constant.
inline ScalarField reconstruct_sigma(const std::vector<InteriorMap>& maps, const std::vector<CurrentPattern>& patterns,
                                     const AetOptions& opts = {}, AetReport* report = nullptr) {
    require(!maps.empty(), Errc::invalid_argument, "AET needs at least one interior map");
    require(opts.sigma_min > 0.0 && opts.sigma_max > opts.sigma_min, Errc::invalid_argument,
            "conductivity bounds must satisfy 0 < sigma_min < sigma_max");
    const GridSpec& grid = maps.front().W.grid();
    const double beta = opts.beta < 0.0 ? default_beta(grid) : opts.beta;
    const AetObjective obj(grid, patterns, maps, beta, opts.edge_cells);
    const std::size_t N = grid.size();
    auto clamp = [&](std::vector<double>& s) {
        for (double& v : s) v = std::clamp(v, opts.sigma_min, opts.sigma_max);
    };

    AetReport rep;
    std::vector<double> sigma(N, opts.sigma_background), grad;
    clamp(sigma);
    double J = obj.evaluate(sigma, &grad);
    const double J0 = J;
    rep.objective.push_back(J);
    std::vector<double> prev_sigma, prev_grad;
    double gnorm = 0.0;
    for (double v : grad) gnorm = std::max(gnorm, std::abs(v));
    double step = gnorm > 0.0 ? 0.1 / gnorm : 0.0;

    for (std::size_t it = 0; it < opts.max_iterations; ++it) {
        if (J <= opts.tolerance * std::max(J0, 1e-300) || J == 0.0 || gnorm == 0.0) {
            rep.converged = true;
            break;
        }
        if (!prev_sigma.empty()) {
            double ss = 0.0, sy = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double s = sigma[n] - prev_sigma[n], y = grad[n] - prev_grad[n];
                ss += s * s;
                sy += s * y;
            }
            if (sy > 0.0) step = ss / sy;
        }
        bool accepted = false;
        std::vector<double> trial(N), trial_grad;
        double trial_J = J;
        for (std::size_t bt = 0; bt <= opts.max_backtracks; ++bt) {
            for (std::size_t n = 0; n < N; ++n) trial[n] = sigma[n] - step * grad[n];
            clamp(trial);
            double decrease = 0.0;
            for (std::size_t n = 0; n < N; ++n) decrease += grad[n] * (sigma[n] - trial[n]);
            trial_J = obj.evaluate(trial, nullptr);
            if (trial_J <= J - 1e-4 * decrease) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            rep.line_search_failed = true;
            rep.diagnostic = "line search exhausted at iteration " + std::to_string(it) + "; returning best iterate";
            break;
        }
        prev_sigma = std::move(sigma);
        prev_grad = std::move(grad);
        sigma = trial;
        J = obj.evaluate(sigma, &grad);
        gnorm = 0.0;
        for (double v : grad) gnorm = std::max(gnorm, std::abs(v));
        rep.objective.push_back(J);
        rep.iterations = it + 1;
        if (rep.objective[rep.objective.size() - 2] - J <= opts.stall * J) {
            rep.converged = true;
            break;
        }
    }
    if (rep.diagnostic.empty())
        rep.diagnostic = rep.converged ? "converged" : "iteration limit reached";
    if (report) *report = rep;
    return ScalarField(grid, std::move(sigma), "sigma");
}

} // namespace tat
