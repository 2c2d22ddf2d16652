// Time-resolved boundary data g(y, t) and its file format ("TATSIN01").
#pragma once

#include <optional>

#include "tat/surface.hpp"

namespace tat {

/// What a sinogram row holds as a function of t: pressure traces, integrals
/// of the initial field over spheres of radius c*t, or the same divided by
/// the sphere area.
enum class DataKind { pressure, spherical_integral, spherical_mean };

inline std::string_view to_string(DataKind k) {
    switch (k) {
    case DataKind::pressure: return "pressure";
    case DataKind::spherical_integral: return "spherical_integral";
    case DataKind::spherical_mean: return "spherical_mean";
    }
    return "unknown";
}

inline DataKind data_kind_from_string(std::string_view s) {
    if (s == "pressure") return DataKind::pressure;
    if (s == "spherical_integral") return DataKind::spherical_integral;
    if (s == "spherical_mean") return DataKind::spherical_mean;
    fail(Errc::malformed_header, "unknown sinogram kind '" + std::string(s) + "'");
}

/// Samples g[i][j] = g(y_i, j*dt), detector-major.
class Sinogram {
public:
    Sinogram() = default;
    Sinogram(ObservationSurface surface, DataKind kind, double dt, std::size_t n_times, std::vector<double> values,
             std::optional<double> sound_speed = std::nullopt)
        : surface_(std::move(surface)), kind_(kind), dt_(dt), n_times_(n_times), values_(std::move(values)),
          sound_speed_(sound_speed) {
        require(std::isfinite(dt_) && dt_ > 0.0, Errc::invariant_violation, "sinogram dt must be positive");
        require(n_times_ >= 1, Errc::invariant_violation, "sinogram needs at least one time sample");
        require(values_.size() == surface_.size() * n_times_, Errc::invariant_violation,
                "sinogram payload does not match detectors x times");
        require(all_finite(values_), Errc::non_finite, "sinogram contains non-finite values");
        if (kind_ != DataKind::pressure)
            require(sound_speed_.has_value() && *sound_speed_ > 0.0, Errc::invariant_violation,
                    "spherical data require a positive constant sound speed");
    }

    static Sinogram zeros(ObservationSurface surface, DataKind kind, double dt, std::size_t n_times,
                          std::optional<double> sound_speed = std::nullopt) {
        const std::size_t n = surface.size() * n_times;
        return Sinogram(std::move(surface), kind, dt, n_times, std::vector<double>(n, 0.0), sound_speed);
    }

    const ObservationSurface& surface() const { return surface_; }
    DataKind kind() const { return kind_; }
    double dt() const { return dt_; }
    std::size_t n_times() const { return n_times_; }
    std::size_t n_detectors() const { return surface_.size(); }
    double time(std::size_t j) const { return dt_ * static_cast<double>(j); }
    double duration() const { return dt_ * static_cast<double>(n_times_ - 1); }
    std::optional<double> sound_speed() const { return sound_speed_; }
    /// Radial step c*dt of spherical data.
    double dr() const { return sound_speed_.value_or(1.0) * dt_; }

    std::span<const double> values() const { return values_; }
    const std::vector<double>& data() const { return values_; }
    std::span<const double> row(std::size_t i) const { return {values_.data() + i * n_times_, n_times_}; }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * n_times_ + j]; }

    Sinogram with_values(std::vector<double> values, DataKind kind) const {
        return Sinogram(surface_, kind, dt_, n_times_, std::move(values), sound_speed_);
    }

private:
    ObservationSurface surface_;
    DataKind kind_ = DataKind::pressure;
    double dt_ = 1.0;
    std::size_t n_times_ = 0;
    std::vector<double> values_;
    std::optional<double> sound_speed_;
};

inline constexpr std::string_view sinogram_magic = "TATSIN01";

inline void write_sinogram(const Sinogram& g, const std::filesystem::path& path, const json& extra = json::object()) {
    json h;
    h["kind"] = to_string(g.kind());
    h["n_detectors"] = g.n_detectors();
    h["n_times"] = g.n_times();
    h["dt"] = g.dt();
    if (g.sound_speed()) h["c"] = *g.sound_speed();
    h["surface"] = g.surface().descriptor();
    for (auto it = extra.begin(); it != extra.end(); ++it) h[it.key()] = it.value();
    write_container(path, sinogram_magic, h, g.values());
}

struct SinogramFile {
    Sinogram sinogram;
    json header;
};

inline SinogramFile read_sinogram_file(const std::filesystem::path& path) {
    Container c = read_container(path, sinogram_magic, [](const json& h) {
        return h.at("n_detectors").get<std::size_t>() * h.at("n_times").get<std::size_t>();
    });
    try {
        ObservationSurface surface = ObservationSurface::from_descriptor(c.header.at("surface"));
        require(surface.size() == c.header.at("n_detectors").get<std::size_t>(), Errc::malformed_header,
                "surface descriptor does not reproduce n_detectors");
        std::optional<double> speed;
        if (c.header.contains("c")) speed = c.header["c"].get<double>();
        Sinogram g(std::move(surface), data_kind_from_string(c.header.at("kind").get<std::string>()),
                   c.header.at("dt").get<double>(), c.header.at("n_times").get<std::size_t>(), std::move(c.payload),
                   speed);
        return {std::move(g), std::move(c.header)};
    } catch (const json::exception& e) {
        fail(Errc::malformed_header, std::string("sinogram header: ") + e.what());
    }
}

inline Sinogram read_sinogram(const std::filesystem::path& path) { return read_sinogram_file(path).sinogram; }

} // namespace tat
