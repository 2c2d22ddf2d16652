#include "test_support.hpp"

#include <random>

#include "tat/aet.hpp"

using namespace tat;

namespace {

struct Setup {
    GridSpec g;
    ScalarField sigma;
    std::vector<CurrentPattern> patterns;
    std::vector<InteriorMap> maps;
};

Setup make(std::size_t n, double contrast) {
    Setup s{GridSpec::cube(2, n, -0.6, 0.6), {}, {}, {}};
    s.sigma = ScalarField::sample(s.g, [&](const Point& p) {
        return 1.0 + contrast * std::exp(-((p[0] - 0.05) * (p[0] - 0.05) + (p[1] + 0.05) * (p[1] + 0.05)) / (2 * 0.1 * 0.1));
    });
    s.patterns = {CurrentPattern::dirichlet(s.g, [](const Point& p) { return p[0]; }, "x"),
                  CurrentPattern::dirichlet(s.g, [](const Point& p) { return p[1]; }, "y")};
    std::vector<ScalarField> u;
    for (const auto& p : s.patterns) u.push_back(solve_conductivity(s.sigma, p));
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = a; b < 2; ++b) s.maps.push_back(interior_functional(s.sigma, u[a], u[b], a, b));
    return s;
}

} // namespace

TEST_CASE("maps of the background conductivity are a fixed point") {
    const Setup s = make(24, 0.0);
    AetReport rep;
    const ScalarField rec = reconstruct_sigma(s.maps, s.patterns, {}, &rep);
    CHECK(rep.iterations == 0);
    CHECK(rep.converged);
    CHECK(rep.objective.front() == Catch::Approx(0.0).margin(1e-20));
    for (double v : rec.values()) REQUIRE(v == 1.0);
}

TEST_CASE("adjoint gradient matches central differences") {
    const Setup s = make(24, 1.0);
    const AetObjective obj(s.g, s.patterns, s.maps, default_beta(s.g));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(0.8, 1.6);
    std::vector<double> x(s.g.size());
    for (double& v : x) v = uni(rng);
    std::vector<double> grad;
    obj.evaluate(x, &grad);
    std::normal_distribution<double> normal;
    for (int t = 0; t < 4; ++t) {
        std::vector<double> d(x.size()), xp(x), xm(x);
        for (double& v : d) v = normal(rng);
        const double eps = 1e-5;
        double an = 0.0;
        for (std::size_t n = 0; n < x.size(); ++n) {
            xp[n] += eps * d[n];
            xm[n] -= eps * d[n];
            an += grad[n] * d[n];
        }
        const double fd = (obj.evaluate(xp) - obj.evaluate(xm)) / (2 * eps);
        CHECK(std::abs(fd - an) <= 1e-5 * std::abs(an));
    }
}

TEST_CASE("exact interior maps recover a 2:1 bump") {
    const Setup s = make(48, 1.0);
    AetReport rep;
    const ScalarField rec = reconstruct_sigma(s.maps, s.patterns, {}, &rep);
    CHECK(relative_l2(rec, s.sigma) < 0.01);
    for (std::size_t k = 1; k < rep.objective.size(); ++k) REQUIRE(rep.objective[k] <= rep.objective[k - 1]);
    CHECK(!rep.line_search_failed);
}

TEST_CASE("iterates stay inside the conductivity bounds") {
    const Setup s = make(24, 1.0);
    AetOptions o;
    o.sigma_max = 1.5;
    o.max_iterations = 40;
    const ScalarField rec = reconstruct_sigma(s.maps, s.patterns, o);
    CHECK(rec.max() <= 1.5);
    CHECK(rec.min() >= o.sigma_min);
}

TEST_CASE("bad bounds are rejected") {
    const Setup s = make(16, 1.0);
    AetOptions o;
    o.sigma_min = 2.0;
    o.sigma_max = 1.0;
    CHECK(tat_test::error_code_of([&] { reconstruct_sigma(s.maps, s.patterns, o); }) == Errc::invalid_argument);
}
