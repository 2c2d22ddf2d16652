#include "test_support.hpp"

#include "tat/focusing.hpp"

using namespace tat;

namespace {

InteriorMap smooth_map(const GridSpec& g) {
    // 5-width truncation keeps both bumps inside [-0.8, 0.8] and the unit sphere
    const double z = g.dim == 3 ? 0.05 : 0.0;
    PhantomDescriptor d{{Gaussian{{0.2, -0.1, z}, 0.1, 1.0}, Gaussian{{-0.3, 0.25, 0.0}, 0.08, 0.6}}, 0.0};
    if (g.dim == 3) d.primitives.resize(1);
    return {rasterize_phantom(d, g, {}, "W")};
}

ObservationSurface square(std::size_t per_side) {
    return ObservationSurface::cube(2, {-1, -1, 0}, {1, 1, 0}, {per_side, per_side, 1});
}

} // namespace

TEST_CASE("zero interior map gives zero measurements and zero focus") {
    const GridSpec g = GridSpec::cube(2, 32, -1, 1);
    const FocusingBasis b{FocusingKind::delta_shell, square(33), {0.01, 300}, 0.0};
    const InteriorMap W{ScalarField::constant(g, 0.0)};
    const ModulatedMeasurements M = synthesize_modulated_measurements(W, b);
    for (double v : M.values) REQUIRE(v == 0.0);
    CHECK(synthetic_focus(M, g).W.max_abs() == 0.0);
}

TEST_CASE("delta-shell measurements of a disk are arc lengths") {
    const GridSpec g = GridSpec::cube(2, 481, -0.6, 0.6);
    const double rho = 0.4;
    const InteriorMap W{rasterize_phantom({{Ball{{0, 0, 0}, rho, 1.0}}, 0.0}, g)};
    const FocusingBasis b{FocusingKind::delta_shell, square(5), {0.05, 60}, 0.0};
    const ModulatedMeasurements M = synthesize_modulated_measurements(W, b);
    for (std::size_t c = 0; c < M.n_centers(); ++c) {
        const double d = distance(b.centers.points()[c], Point{0, 0, 0});
        for (std::size_t j = 1; j < M.n_radii(); ++j) {
            const double t = b.radii.radius(j);
            if (t <= d - rho + 0.02 || t >= d + rho - 0.02) continue; // skip grazing circles
            const double arc = 2 * t * std::acos((d * d + t * t - rho * rho) / (2 * d * t));
            CHECK(M.row(c)[j] == Catch::Approx(arc).epsilon(0.005));
        }
    }
}

TEST_CASE("N-shaped measurements are centered differences of delta-shell measurements") {
    const GridSpec g = GridSpec::cube(2, 64, -0.8, 0.8);
    const InteriorMap W = smooth_map(g);
    const double dr = 0.01;
    const FocusingBasis delta{FocusingKind::delta_shell, square(9), {dr, 300}, 0.0};
    const FocusingBasis n{FocusingKind::n_shaped_shell, square(9), {dr, 300}, 2 * dr};
    const auto Md = synthesize_modulated_measurements(W, delta), Mn = synthesize_modulated_measurements(W, n);
    for (std::size_t c = 0; c < Md.n_centers(); ++c)
        for (std::size_t j = 2; j + 2 < Md.n_radii(); ++j) {
            const double fd = (Md.row(c)[j + 2] - Md.row(c)[j - 2]) / (4 * dr);
            REQUIRE(Mn.row(c)[j] == Catch::Approx(fd).margin(1e-12));
        }
}

TEST_CASE("focusing inverts the measurements of a smooth map in 2D") {
    const GridSpec g = GridSpec::cube(2, 64, -1, 1);
    const InteriorMap W = smooth_map(g);
    for (FocusingKind kind : {FocusingKind::delta_shell, FocusingKind::n_shaped_shell}) {
        const FocusingBasis b{kind, square(65), {0.005, 581}, 0.02};
        const InteriorMap F = synthetic_focus(synthesize_modulated_measurements(W, b), g);
        CHECK(relative_l2(F.W, W.W) < 0.05);
    }
}

TEST_CASE("focusing inverts the measurements of a smooth map in 3D") {
    const GridSpec g = GridSpec::cube(3, 32, -1, 1);
    const InteriorMap W = smooth_map(g);
    const auto S = ObservationSurface::sphere(3, {0, 0, 0}, 1.0, 1500);
    for (FocusingKind kind : {FocusingKind::delta_shell, FocusingKind::n_shaped_shell}) {
        const FocusingBasis b{kind, S, {0.01, 241}, 0.02};
        const InteriorMap F = synthetic_focus(synthesize_modulated_measurements(W, b), g);
        CHECK(relative_l2(F.W, W.W) < 0.08);
    }
}

TEST_CASE("noise is reproducible and scaled to the data") {
    const GridSpec g = GridSpec::cube(2, 32, -1, 1);
    const InteriorMap W = smooth_map(g);
    const FocusingBasis b{FocusingKind::delta_shell, square(17), {0.02, 150}, 0.0};
    const auto clean = synthesize_modulated_measurements(W, b);
    const auto a = synthesize_modulated_measurements(W, b, 0.5, 42);
    const auto a2 = synthesize_modulated_measurements(W, b, 0.5, 42);
    const auto c = synthesize_modulated_measurements(W, b, 0.5, 43);
    CHECK(a.values == a2.values);
    CHECK(a.values != c.values);
    const double ratio = l2_distance(a.values, clean.values) / l2_norm(clean.values);
    CHECK(ratio == Catch::Approx(0.5).epsilon(0.05));
}

TEST_CASE("basis validation") {
    const GridSpec g = GridSpec::cube(2, 32, -1, 1);
    const InteriorMap W = smooth_map(g);
    using tat_test::error_code_of;
    CHECK(error_code_of([&] {
              synthesize_modulated_measurements(W, {FocusingKind::n_shaped_shell, square(17), {0.02, 150}, 0.01});
          }) == Errc::invalid_argument);
    CHECK(error_code_of([&] {
              synthesize_modulated_measurements(W, {FocusingKind::delta_shell, square(17), {0.02, 20}, 0.0});
          }) == Errc::invalid_argument);
    CHECK(error_code_of([&] {
              const auto small = ObservationSurface::sphere(2, {0, 0, 0}, 0.3, 64);
              synthesize_modulated_measurements(W, {FocusingKind::delta_shell, small, {0.02, 150}, 0.0});
          }) == Errc::support_violation);
}

TEST_CASE("measurement files round-trip") {
    const auto dir = tat_test::scratch("mod_io");
    const GridSpec g = GridSpec::cube(2, 32, -1, 1);
    const FocusingBasis b{FocusingKind::n_shaped_shell, square(9), {0.02, 150}, 0.04};
    const auto M = synthesize_modulated_measurements(smooth_map(g), b, 0.1, 5);
    write_modulated(M, dir / "m.tatmod2");
    const auto back = read_modulated(dir / "m.tatmod2");
    CHECK(back.values == M.values);
    CHECK(back.basis.kind == b.kind);
    CHECK(back.basis.half_width == b.half_width);
    CHECK(back.basis.radii.count == b.radii.count);
    CHECK(back.basis.centers.size() == b.centers.size());
}
