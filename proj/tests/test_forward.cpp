#include "test_support.hpp"

#include "tat/spherical_mean.hpp"
#include "tat/wave.hpp"

using namespace tat;

namespace {
constexpr double pi_v = std::numbers::pi;
}

TEST_CASE("zero initial pressure gives a zero sinogram") {
    const GridSpec g = GridSpec::cube(2, 48, -1, 1);
    const auto S = ObservationSurface::cube_on_grid(g);
    const Sinogram p = solve_wave_forward(ScalarField::constant(g, 0.0), 1.0, S, 1.0, max_stable_dt(g, 1.0));
    for (double v : p.values()) REQUIRE(v == 0.0);
}

TEST_CASE("1D leapfrog at unit Courant number splits a pulse exactly") {
    const std::size_t n = 401;
    const double h = 0.01;
    std::vector<double> f(n);
    auto pulse = [](double x) { return std::exp(-x * x / (2 * 0.05 * 0.05)); };
    for (std::size_t i = 0; i < n; ++i) f[i] = pulse(h * (double(i) - 200.0));
    WaveScheme s(1, {n, 1, 1}, {h, 1, 1}, std::vector<double>(n, h * h), {}, {});
    s.current() = f;
    s.start_from_rest();
    const std::size_t steps = 100; // pulses travel 1.0 of the 2.0 half-domain
    for (std::size_t k = 0; k < steps; ++k) s.step();
    // d'Alembert: (f(x - t) + f(x + t)) / 2
    for (std::size_t i = 0; i < n; ++i) {
        const double x = h * (double(i) - 200.0), t = h * double(steps);
        REQUIRE(s.current()[i] == Catch::Approx(0.5 * (pulse(x - t) + pulse(x + t))).margin(1e-12));
    }
}

TEST_CASE("interior leapfrog energy is conserved") {
    const std::size_t n = 64;
    const double h = 2.0 / double(n - 1), dt = 0.5 * h;
    std::vector<double> coef(n * n), inv_c2(n * n), p0(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double x = -1 + h * double(i), y = -1 + h * double(j);
            const double c = 1.0 + 0.3 * std::exp(-(x * x + y * y) / 0.1);
            coef[i * n + j] = c * c * dt * dt;
            inv_c2[i * n + j] = 1.0 / (c * c);
            p0[i * n + j] = std::exp(-((x - 0.2) * (x - 0.2) + y * y) / 0.02);
        }
    WaveScheme s(2, {n, n, 1}, {h, h, 1}, coef, {}, {});
    s.current() = p0;
    s.start_from_rest();
    s.step();
    const double e0 = s.energy(inv_c2, dt);
    for (int k = 0; k < 500; ++k) s.step();
    CHECK(std::abs(s.energy(inv_c2, dt) - e0) <= 1e-10 * e0);
}

TEST_CASE("spherical integral of a constant over a full sphere") {
    for (int dim : {2, 3}) {
        const GridSpec g = GridSpec::cube(dim, dim == 2 ? 128 : 48, -1, 1);
        const ScalarField f = ScalarField::constant(g, 1.0);
        for (double t : {0.2, 0.5, 0.8}) {
            const double expect = dim == 3 ? 4 * pi_v * t * t : 2 * pi_v * t;
            CHECK(spherical_integral(f, {0.05, -0.02, 0.0}, t) == Catch::Approx(expect).epsilon(1e-6));
        }
    }
}

TEST_CASE("spherical integral of a ball indicator matches the cap area") {
    // cap of the sphere |x - y| = t inside the ball |x - c| <= rho, d = |y - c|:
    // area = pi t (rho^2 - (d - t)^2) / d
    const GridSpec g = GridSpec::cube(3, 161, -0.6, 0.6);
    const double rho = 0.5;
    const ScalarField f = rasterize_phantom({{Ball{{0, 0, 0}, rho, 1.0}}, 0.0}, g);
    const Point y{1.2, 0.0, 0.0};
    const double d = 1.2;
    for (double t : {0.9, 1.1, 1.3, 1.5}) {
        const double cap = pi_v * t * (rho * rho - (d - t) * (d - t)) / d;
        CHECK(spherical_integral(f, y, t) == Catch::Approx(cap).epsilon(0.005));
    }
    CHECK(spherical_integral(f, y, d + rho + 2 * g.max_spacing()) == 0.0);
}

TEST_CASE("circle integral of a disk indicator matches the arc length") {
    const GridSpec g = GridSpec::cube(2, 601, -0.6, 0.6);
    const double rho = 0.5, d = 1.2;
    const ScalarField f = rasterize_phantom({{Ball{{0, 0, 0}, rho, 1.0}}, 0.0}, g);
    for (double t : {0.9, 1.2, 1.5}) {
        const double arc = 2 * t * std::acos((d * d + t * t - rho * rho) / (2 * d * t));
        CHECK(spherical_integral(f, {d, 0, 0}, t) == Catch::Approx(arc).epsilon(0.005));
    }
}

TEST_CASE("pressure conversion of zero means is zero") {
    const auto S = ObservationSurface::sphere(3, {0, 0, 0}, 1.0, 20);
    const Sinogram m = Sinogram::zeros(S, DataKind::spherical_mean, 0.01, 100, 1.0);
    const Sinogram p = pressure_from_means(m, 1.0);
    for (double v : p.values()) REQUIRE(v == 0.0);
}

TEST_CASE("3D traces change sign at the travel time") {
    // p(y, t) = (d - t) F(d - t) / (2 d) for a radial bump F at distance d:
    // positive before t = d/c, negative after.
    const GridSpec g = GridSpec::cube(3, 64, -1.1, 1.1);
    const ScalarField f = rasterize_phantom({{Gaussian{{0, 0, 0}, 0.08, 1.0}}, 0.0}, g);
    const auto S = ObservationSurface::sphere(3, {0, 0, 0}, 0.8, 12);
    const double dt = max_stable_dt(g, 1.0);
    const Sinogram p = solve_wave_forward(f, 1.0, S, 1.2, dt);
    for (std::size_t i = 0; i < S.size(); ++i) {
        const auto row = p.row(i);
        const auto peak = std::max_element(row.begin(), row.end()) - row.begin();
        const auto trough = std::min_element(row.begin(), row.end()) - row.begin();
        REQUIRE(peak < trough);
        std::size_t j = static_cast<std::size_t>(peak);
        while (row[j + 1] > 0.0) ++j;
        const double crossing = p.time(j) + dt * row[j] / (row[j] - row[j + 1]);
        CHECK(std::abs(crossing - 0.8) <= dt);
    }
}

TEST_CASE("wave solver traces agree with the closed-form transform") {
    // smaller version of the 128^3 cross-check
    const GridSpec g = GridSpec::cube(3, 64, -1.1, 1.1);
    const PhantomDescriptor d{{Gaussian{{0.1, -0.05, 0.08}, 0.15, 1.0}}, 0.0};
    const ScalarField f = rasterize_phantom(d, g);
    const auto S = ObservationSurface::sphere(3, {0, 0, 0}, 1.0, 200);
    WaveOptions o;
    o.record_stride = 2;
    const Sinogram p = solve_wave_forward(f, 1.0, S, 2.4, max_stable_dt(g, 1.0), o);
    const Sinogram ref = pressure_from_means(
        convert_spherical_kind(phantom_spherical_integrals(d, S, {p.dt(), p.n_times()}, 0.0, 1.0, g.min_spacing()),
                               DataKind::spherical_mean),
        1.0);
    CHECK(relative_l2(p.values(), ref.values()) < 0.05);
}

TEST_CASE("time step above the CFL bound is rejected") {
    const GridSpec g = GridSpec::cube(2, 32, -1, 1);
    const auto S = ObservationSurface::cube_on_grid(g);
    const ScalarField f = ScalarField::constant(g, 0.0);
    CHECK(tat_test::error_code_of([&] { solve_wave_forward(f, 1.0, S, 1.0, 1.01 * max_stable_dt(g, 1.0)); }) ==
          Errc::cfl_violation);
}
