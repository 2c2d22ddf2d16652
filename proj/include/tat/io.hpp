// Binary container shared by all file formats:
//
//   8-byte magic | one-line UTF-8 JSON header | '\n' | float64 LE payload
//
// plus the field format ("TATFLD01") and 8-bit PGM previews.
#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "tat/grid.hpp"

namespace tat {

using json = nlohmann::json;

inline constexpr std::string_view field_magic = "TATFLD01";

namespace detail {

inline std::uint64_t to_little_endian(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    std::uint64_t r = 0;
    for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xffu) << (8 * (7 - b));
    return r;
}

inline std::string encode_payload(std::span<const double> values) {
    std::string out(values.size() * 8, '\0');
    for (std::size_t n = 0; n < values.size(); ++n) {
        const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(values[n]));
        std::memcpy(out.data() + 8 * n, &bits, 8);
    }
    return out;
}

} // namespace detail

struct Container {
    json header;
    std::vector<double> payload;
};

inline void write_container(const std::filesystem::path& path, std::string_view magic, const json& header,
                            std::span<const double> payload) {
    require(magic.size() == 8, Errc::invalid_argument, "container magic must be 8 bytes");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Errc::io_failure, "cannot open '" + path.string() + "' for writing");
    out.write(magic.data(), 8);
    const std::string line = header.dump() + '\n';
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    const std::string bytes = detail::encode_payload(payload);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), Errc::io_failure, "write to '" + path.string() + "' failed");
}

/// Reads a container. `expected_count` inspects the parsed header and returns
/// the payload length it implies (throwing malformed_header if it cannot).
inline Container read_container(const std::filesystem::path& path, std::string_view magic,
                                 const std::function<std::size_t(const json&)>& expected_count) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Errc::io_failure, "cannot open '" + path.string() + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    require(bytes.size() >= 8 && std::string_view(bytes).substr(0, 8) == magic, Errc::malformed_header,
            "'" + path.string() + "' does not start with magic " + std::string(magic));
    const std::size_t eol = bytes.find('\n', 8);
    require(eol != std::string::npos, Errc::malformed_header, "header line is not newline-terminated");
    Container c;
    try {
        c.header = json::parse(bytes.begin() + 8, bytes.begin() + static_cast<std::ptrdiff_t>(eol));
    } catch (const json::exception& e) {
        fail(Errc::malformed_header, std::string("header is not valid JSON: ") + e.what());
    }
    require(c.header.is_object(), Errc::malformed_header, "header must be a JSON object");
    std::size_t count = 0;
    try {
        count = expected_count(c.header);
    } catch (const json::exception& e) {
        fail(Errc::malformed_header, std::string("header field error: ") + e.what());
    }
    const std::size_t available = bytes.size() - eol - 1;
    require(available >= 8 * count, Errc::truncated_payload,
            "payload holds " + std::to_string(available / 8) + " values, header implies " + std::to_string(count));
    require(available == 8 * count, Errc::excess_payload,
            "payload has " + std::to_string(available - 8 * count) + " trailing bytes");
    c.payload.resize(count);
    for (std::size_t n = 0; n < count; ++n) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, bytes.data() + eol + 1 + 8 * n, 8);
        c.payload[n] = std::bit_cast<double>(detail::to_little_endian(bits));
        require(std::isfinite(c.payload[n]), Errc::non_finite,
                "payload value " + std::to_string(n) + " is not finite");
    }
    return c;
}

// ---------------------------------------------------------------------------
// Grid headers

inline json grid_to_json(const GridSpec& g) {
    json j;
    j["dim"] = g.dim;
    j["shape"] = std::vector<std::size_t>(g.shape.begin(), g.shape.begin() + g.dim);
    j["spacing"] = std::vector<double>(g.spacing.begin(), g.spacing.begin() + g.dim);
    j["origin"] = std::vector<double>(g.origin.begin(), g.origin.begin() + g.dim);
    return j;
}

/// Parse errors surface as malformed_header; structurally valid headers that
/// break a grid invariant surface as invariant_violation.
inline GridSpec grid_from_json(const json& j) {
    std::vector<std::size_t> shape;
    std::vector<double> spacing, origin;
    int dim = 0;
    try {
        dim = j.at("dim").get<int>();
        shape = j.at("shape").get<std::vector<std::size_t>>();
        spacing = j.at("spacing").get<std::vector<double>>();
        origin = j.at("origin").get<std::vector<double>>();
    } catch (const json::exception& e) {
        fail(Errc::malformed_header, std::string("grid header: ") + e.what());
    }
    require(static_cast<std::size_t>(dim) == shape.size(), Errc::invariant_violation,
            "grid dim does not match shape length");
    return GridSpec::make(shape, spacing, origin);
}

// ---------------------------------------------------------------------------
// Fields

inline json field_header(const ScalarField& f) {
    json j = grid_to_json(f.grid());
    j["name"] = f.name();
    return j;
}

/// `extra` keys (e.g. provenance) are merged into the header object.
inline void write_field(const ScalarField& f, const std::filesystem::path& path, const json& extra = json::object(),
                        std::string_view magic = field_magic) {
    json header = field_header(f);
    for (auto it = extra.begin(); it != extra.end(); ++it) header[it.key()] = it.value();
    write_container(path, magic, header, f.values());
}

struct FieldFile {
    ScalarField field;
    json header;
};

inline FieldFile read_field_file(const std::filesystem::path& path, std::string_view magic = field_magic) {
    GridSpec grid;
    Container c = read_container(path, magic, [&](const json& h) {
        grid = grid_from_json(h);
        return grid.size();
    });
    std::string name;
    if (c.header.contains("name")) {
        require(c.header["name"].is_string(), Errc::malformed_header, "field name must be a string");
        name = c.header["name"].get<std::string>();
    }
    return {ScalarField(grid, std::move(c.payload), std::move(name)), std::move(c.header)};
}

inline ScalarField read_field(const std::filesystem::path& path) { return read_field_file(path).field; }

// ---------------------------------------------------------------------------
// PGM previews: 2D fields directly, 3D fields through their middle slice
// along the first axis. Affine min-max normalization to 0..255.

inline void write_pgm(const ScalarField& f, const std::filesystem::path& path) {
    const GridSpec& g = f.grid();
    const std::size_t rows = g.dim == 2 ? g.shape[0] : g.shape[1];
    const std::size_t cols = g.dim == 2 ? g.shape[1] : g.shape[2];
    const std::size_t slice = g.dim == 2 ? 0 : g.shape[0] / 2;
    std::vector<double> plane(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            plane[r * cols + c] = g.dim == 2 ? f.at(r, c) : f.at(slice, r, c);
    const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
    const double span = *hi - *lo;
    std::string pixels(plane.size(), '\0');
    for (std::size_t n = 0; n < plane.size(); ++n) {
        const double t = span > 0 ? (plane[n] - *lo) / span : 0.0;
        pixels[n] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t)));
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Errc::io_failure, "cannot open '" + path.string() + "' for writing");
    out << "P5\n" << cols << ' ' << rows << "\n255\n";
    out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
    require(out.good(), Errc::io_failure, "write to '" + path.string() + "' failed");
}

} // namespace tat
