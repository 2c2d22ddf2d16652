#include "test_support.hpp"

#include "tat/io.hpp"
#include "tat/phantom.hpp"

using namespace tat;
using tat_test::error_code_of;

TEST_CASE("empty phantom rasterizes to zero") {
    const GridSpec g = GridSpec::cube(2, 16, -1, 1);
    const ScalarField f = rasterize_phantom({}, g);
    CHECK(f.max_abs() == 0.0);
}

TEST_CASE("ball mass matches its volume at 128^3") {
    const GridSpec g = GridSpec::cube(3, 128, -1, 1);
    const double r = 0.5;
    const ScalarField f = rasterize_phantom({{Ball{{0.05, -0.02, 0.01}, r, 1.0}}, 0.0}, g);
    double mass = 0.0;
    for (double v : f.values()) mass += v;
    mass *= g.cell_volume();
    const double volume = 4.0 / 3.0 * std::numbers::pi * r * r * r;
    CHECK(std::abs(mass - volume) / volume < 0.01);
}

TEST_CASE("rasterization is additive over disjoint balls") {
    const GridSpec g = GridSpec::cube(2, 64, -1, 1);
    const Ball a{{-0.4, 0.1, 0}, 0.25, 1.0}, b{{0.45, -0.2, 0}, 0.3, 0.5};
    const ScalarField both = rasterize_phantom({{a, b}, 0.0}, g);
    const ScalarField fa = rasterize_phantom({{a}, 0.0}, g), fb = rasterize_phantom({{b}, 0.0}, g);
    for (std::size_t n = 0; n < g.size(); ++n) REQUIRE(both[n] == Catch::Approx(fa[n] + fb[n]).margin(1e-15));
}

TEST_CASE("primitive leaving the grid is rejected with its index") {
    const GridSpec g = GridSpec::cube(2, 32, -1, 1);
    const PhantomDescriptor d{{Ball{{0, 0, 0}, 0.2, 1.0}, Gaussian{{0.9, 0, 0}, 0.1, 1.0}}, 0.0};
    try {
        rasterize_phantom(d, g);
        FAIL("expected PhantomSupportError");
    } catch (const PhantomSupportError& e) {
        CHECK(e.primitive_index() == 1);
        CHECK(e.code() == Errc::support_violation);
    }
}

TEST_CASE("gaussian reaches zero at its cutoff") {
    const PhantomDescriptor d{{Gaussian{{0, 0, 0}, 0.1, 2.0}}, 0.0};
    CHECK(evaluate(d, {0, 0, 0}) == Catch::Approx(2.0));
    CHECK(evaluate(d, {gaussian_cutoff * 0.1, 0, 0}) == Catch::Approx(0.0).margin(1e-15));
    CHECK(evaluate(d, {0.6, 0, 0}) == 0.0);
}

TEST_CASE("field files round-trip exactly") {
    const auto dir = tat_test::scratch("field_io");
    const GridSpec g = GridSpec::cube(2, 4, 0, 3);
    const ScalarField f = ScalarField::sample(g, [](const Point& p) { return p[0] + 10.0 * p[1] + 0.125; }, "ramp");
    write_field(f, dir / "ramp.tatfld", {{"note", "x"}});
    const FieldFile back = read_field_file(dir / "ramp.tatfld");
    CHECK(back.field.grid() == g);
    CHECK(back.field.name() == "ramp");
    CHECK(back.header.at("note") == "x");
    for (std::size_t n = 0; n < g.size(); ++n) CHECK(back.field[n] == f[n]);
}

namespace {
// Writes a field file by hand: header JSON, newline, raw little-endian doubles.
void write_raw(const std::filesystem::path& p, const json& header, const std::vector<double>& values,
               std::size_t count) {
    std::ofstream out(p, std::ios::binary);
    out << field_magic << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(8 * count));
}

json header_4x4(double spacing) {
    return {{"name", "f"}, {"dim", 2}, {"shape", {4, 4}}, {"spacing", {spacing, spacing}}, {"origin", {0.0, 0.0}}};
}
} // namespace

TEST_CASE("field file errors are distinguished") {
    const auto dir = tat_test::scratch("field_errors");
    // the hand-written layout must match what write_field produces
    write_field(ScalarField::constant(GridSpec::cube(2, 4, 0, 3), 1.0, "f"), dir / "ok.tatfld");
    const json h = read_field_file(dir / "ok.tatfld").header;
    const json expected = header_4x4(1.0);
    for (auto it = expected.begin(); it != expected.end(); ++it) REQUIRE(h.at(it.key()) == it.value());

    std::vector<double> v(16, 1.0);
    write_raw(dir / "short.tatfld", header_4x4(1.0), v, 15);
    CHECK(error_code_of([&] { read_field(dir / "short.tatfld"); }) == Errc::truncated_payload);

    write_raw(dir / "long.tatfld", header_4x4(1.0), std::vector<double>(17, 1.0), 17);
    CHECK(error_code_of([&] { read_field(dir / "long.tatfld"); }) == Errc::excess_payload);

    write_raw(dir / "zero.tatfld", header_4x4(0.0), v, 16);
    CHECK(error_code_of([&] { read_field(dir / "zero.tatfld"); }) == Errc::invariant_violation);

    v[5] = std::numeric_limits<double>::quiet_NaN();
    write_raw(dir / "nan.tatfld", header_4x4(1.0), v, 16);
    CHECK(error_code_of([&] { read_field(dir / "nan.tatfld"); }) == Errc::non_finite);

    {
        std::ofstream out(dir / "bad.tatfld", std::ios::binary);
        out << field_magic << "{not json\n";
    }
    CHECK(error_code_of([&] { read_field(dir / "bad.tatfld"); }) == Errc::malformed_header);
    CHECK(error_code_of([&] { read_field(dir / "missing.tatfld"); }) == Errc::io_failure);
}
