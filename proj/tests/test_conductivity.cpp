#include "test_support.hpp"

#include "tat/conductivity.hpp"

using namespace tat;

namespace {
ScalarField bump(const GridSpec& g) {
    return ScalarField::sample(g, [](const Point& p) {
        return 1.0 + std::exp(-((p[0] - 0.1) * (p[0] - 0.1) + (p[1] + 0.05) * (p[1] + 0.05)) / (2 * 0.12 * 0.12));
    }, "sigma");
}
} // namespace

TEST_CASE("affine potentials are exact for unit conductivity") {
    const GridSpec g = GridSpec::cube(2, 33, -1, 1);
    const auto u = solve_conductivity(ScalarField::constant(g, 1.0),
                                      CurrentPattern::dirichlet(g, [](const Point& p) { return p[0]; }));
    for (std::size_t n = 0; n < g.size(); ++n) REQUIRE(u[n] == Catch::Approx(g.point(n)[0]).margin(1e-12));
}

TEST_CASE("net boundary current vanishes for Dirichlet patterns") {
    const GridSpec g = GridSpec::cube(2, 40, -1, 1);
    const ScalarField s = bump(g);
    const auto u = solve_conductivity(s, CurrentPattern::dirichlet(g, [](const Point& p) { return p[0] * p[1] + p[1]; }));
    const auto j = boundary_currents(s, u);
    const auto len = boundary_lengths(g);
    double net = 0.0, total = 0.0;
    for (std::size_t k = 0; k < j.size(); ++k) {
        net += j[k] * len[k];
        total += std::abs(j[k]) * len[k];
    }
    CHECK(std::abs(net) <= 1e-10 * total);
}

TEST_CASE("layered conductivity matches the 1D series-resistor solution") {
    // sigma depends on x only: with boundary data from the 1D profile
    // phi_{i+1} - phi_i = J / sigma_face(i), the 2D solution is phi in every row.
    const GridSpec g = GridSpec::cube(2, 25, 0, 1);
    const ScalarField s = ScalarField::sample(g, [](const Point& p) { return p[0] < 0.5 ? 1.0 : 4.0; });
    const std::size_t n = g.shape[0];
    std::vector<double> phi(n, 0.0);
    double R = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double a = s.at(i, 0), b = s.at(i + 1, 0);
        R += (a + b) / (2 * a * b);
        phi[i + 1] = R;
    }
    for (double& v : phi) v /= R;
    const auto profile = [&](const Point& p) { return phi[static_cast<std::size_t>(std::lround(p[0] / g.spacing[0]))]; };
    const auto u = solve_conductivity(s, CurrentPattern::dirichlet(g, profile));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < g.shape[1]; ++j) REQUIRE(u.at(i, j) == Catch::Approx(phi[i]).margin(1e-11));
}

TEST_CASE("Neumann patterns must carry zero net current") {
    const GridSpec g = GridSpec::cube(2, 16, -1, 1);
    CHECK(tat_test::error_code_of([&] {
              CurrentPattern::neumann(g, [](const Point& p) { return p[0] > 0.99 ? 1.0 : 0.0; });
          }) == Errc::invariant_violation);
}

TEST_CASE("Neumann solution reproduces the applied current") {
    const GridSpec g = GridSpec::cube(2, 33, -1, 1);
    const ScalarField s = bump(g);
    const auto pat = CurrentPattern::neumann(g, [](const Point& p) {
        return std::abs(p[0] - 1) < 1e-12 ? 1.0 : std::abs(p[0] + 1) < 1e-12 ? -1.0 : 0.0;
    });
    const auto u = solve_conductivity(s, pat);
    const auto j = boundary_currents(s, u);
    for (std::size_t k = 0; k < j.size(); ++k) REQUIRE(j[k] == Catch::Approx(pat.values[k]).margin(1e-9));
}

TEST_CASE("interior functional of orthogonal unit gradients is zero") {
    const GridSpec g = GridSpec::cube(2, 20, -1, 1);
    const ScalarField x = ScalarField::sample(g, [](const Point& p) { return p[0]; });
    const ScalarField y = ScalarField::sample(g, [](const Point& p) { return p[1]; });
    const InteriorMap W = interior_functional(ScalarField::constant(g, 1.0), x, y);
    CHECK(W.W.max_abs() < 1e-12);
    CHECK(W.tag == functional_sigma_grad_dot);
}

TEST_CASE("interior functional of a unit gradient returns sigma") {
    const GridSpec g = GridSpec::cube(2, 20, -1, 1);
    const ScalarField x = ScalarField::sample(g, [](const Point& p) { return p[0]; });
    const ScalarField s = bump(g);
    const InteriorMap W = interior_functional(s, x, x);
    for (std::size_t n = 0; n < g.size(); ++n) REQUIRE(W.W[n] == Catch::Approx(s[n]).epsilon(1e-12));
}

TEST_CASE("interior maps round-trip with their tags") {
    const auto dir = tat_test::scratch("imp_io");
    const GridSpec g = GridSpec::cube(2, 8, -1, 1);
    const InteriorMap m{bump(g), std::string(functional_sigma_grad_dot), 0, 1};
    write_interior_map(m, dir / "w.tatimp");
    const InteriorMap back = read_interior_map(dir / "w.tatimp");
    CHECK(back.tag == m.tag);
    CHECK(back.pattern_a == 0);
    CHECK(back.pattern_b == 1);
    CHECK(back.W.data() == m.W.data());
}

TEST_CASE("non-positive conductivity is rejected") {
    const GridSpec g = GridSpec::cube(2, 8, -1, 1);
    const ScalarField s = ScalarField::sample(g, [](const Point& p) { return p[0]; });
    CHECK(tat_test::error_code_of([&] {
              solve_conductivity(s, CurrentPattern::dirichlet(g, [](const Point& p) { return p[0]; }));
          }) == Errc::invalid_argument);
}
