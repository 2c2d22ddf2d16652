#include <catch_amalgamated.hpp>

#include "tat/quadrature.hpp"

TEST_CASE("gauss-legendre integrates polynomials exactly") {
    for (std::size_t n : {1u, 2u, 5u, 16u, 64u}) {
        const auto& r = tat::gauss_legendre(n);
        for (std::size_t p = 0; p < 2 * n; ++p) {
            double s = 0;
            for (std::size_t i = 0; i < n; ++i) s += r.weights[i] * std::pow(r.nodes[i], double(p));
            const double exact = p % 2 ? 0.0 : 2.0 / double(p + 1);
            CHECK(s == Catch::Approx(exact).margin(1e-13));
        }
    }
}
