#include "test_support.hpp"

#include "tat/phantom.hpp"
#include "tat/time_reversal.hpp"

using namespace tat;

TEST_CASE("zero data time-reverse to zero") {
    const GridSpec g = GridSpec::cube(2, 48, -1, 1);
    const auto S = ObservationSurface::cube_on_grid(g);
    const Sinogram p = Sinogram::zeros(S, DataKind::pressure, max_stable_dt(g, 1.0), 200);
    TimeReversalConfig cfg;
    cfg.T = p.duration();
    CHECK(time_reverse(p, g, 1.0, cfg).max_abs() == 0.0);
    cfg.neumann_iterations = 3;
    NeumannReport rep;
    CHECK(neumann_refine(p, ScalarField::constant(g, 1.0), cfg, &rep).max_abs() == 0.0);
    for (double r : rep.residuals) CHECK(r == 0.0);
}

TEST_CASE("invalid horizons are rejected") {
    const GridSpec g = GridSpec::cube(2, 16, -1, 1);
    const auto S = ObservationSurface::cube_on_grid(g);
    const Sinogram p = Sinogram::zeros(S, DataKind::pressure, 0.01, 100);
    TimeReversalConfig cfg;
    cfg.T = 2.0; // past the record
    CHECK(tat_test::error_code_of([&] { time_reverse(p, g, 1.0, cfg); }) == Errc::invalid_argument);
    cfg.T = 0.5;
    cfg.cutoff = Cutoff::smoothed;
    cfg.window = 0.6;
    CHECK(tat_test::error_code_of([&] { time_reverse(p, g, 1.0, cfg); }) == Errc::invalid_argument);
}

TEST_CASE("3D time reversal in the Huygens regime") {
    const GridSpec g = GridSpec::cube(3, 40, -1, 1);
    RasterOptions ro;
    ro.edge_cells = 2;
    const ScalarField f = rasterize_phantom({{Ball{{0.1, -0.1, 0.05}, 0.35, 1.0}}, 0.0}, g, ro);
    const auto S = ObservationSurface::cube_on_grid(g);
    const Sinogram p = solve_wave_forward(f, 1.0, S, 1.2 * S.diameter(), max_stable_dt(g, 1.0));
    TimeReversalConfig cfg;
    cfg.T = p.duration();
    const ScalarField f0 = time_reverse(p, g, 1.0, cfg);
    CHECK(relative_l2(f0, f) < 0.05);

    // one Neumann correction on exact data barely moves the estimate
    cfg.neumann_iterations = 1;
    cfg.cutoff = Cutoff::smoothed;
    const ScalarField c = ScalarField::constant(g, 1.0);
    const ScalarField s0 = time_reverse(p, c, cfg);
    const ScalarField f1 = neumann_refine(p, c, cfg);
    CHECK(l2_distance(f1.values(), s0.values()) <= 0.01 * l2_norm(s0.values()));
}

TEST_CASE("2D error shrinks with longer records") {
    const GridSpec g = GridSpec::cube(2, 96, -1, 1);
    const ScalarField f = rasterize_phantom({{Ball{{0.15, -0.1, 0}, 0.4, 1.0}}, 0.0}, g);
    const auto S = ObservationSurface::cube_on_grid(g);
    const Sinogram p = solve_wave_forward(f, 1.0, S, 8 * S.diameter(), max_stable_dt(g, 1.0));
    double last = 1e300;
    for (double k : {2.0, 4.0, 8.0}) {
        TimeReversalConfig cfg;
        cfg.T = std::min(k * S.diameter(), p.duration());
        const double e = relative_l2(time_reverse(p, g, 1.0, cfg), f);
        CHECK(e < last);
        last = e;
    }
}

TEST_CASE("Neumann refinement improves variable-speed reconstructions") {
    const GridSpec g = GridSpec::cube(2, 96, -1, 1);
    const ScalarField f = rasterize_phantom({{Ball{{0.15, -0.1, 0}, 0.4, 1.0}}, 0.0}, g);
    const ScalarField c = rasterize_phantom({{Gaussian{{-0.1, 0.1, 0}, 0.15, 0.3}}, 1.0}, g);
    const auto S = ObservationSurface::cube_on_grid(g);
    const Sinogram p = solve_wave_forward(f, c, S, S.diameter(), max_stable_dt(g, c.max()));
    TimeReversalConfig cfg;
    cfg.T = p.duration();
    cfg.cutoff = Cutoff::smoothed;
    cfg.neumann_iterations = 5;
    const double plain = relative_l2(time_reverse(p, c, cfg), f);
    NeumannReport rep;
    const double refined = relative_l2(neumann_refine(p, c, cfg, &rep), f);
    CHECK(refined <= 0.7 * plain);
    CHECK(rep.residuals.size() >= 2);
    CHECK(rep.residuals[rep.best_iteration] <= rep.residuals.front());
}
