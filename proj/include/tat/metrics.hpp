// Error metrics against a ground truth.
#pragma once

#include "tat/io.hpp"

namespace tat {

struct ErrorMetrics {
    double relative_l2 = 0.0;
    double linf = 0.0;          // max |estimate - truth|
    double relative_linf = 0.0; // linf / max |truth|
    double psnr_db = 0.0;       // 20 log10(max |truth| / RMSE); +inf for an exact match

    json to_json() const {
        json j;
        j["relative_l2"] = relative_l2;
        j["linf"] = linf;
        j["relative_linf"] = relative_linf;
        // JSON has no infinity
        j["psnr_db"] = std::isfinite(psnr_db) ? json(psnr_db) : json("inf");
        return j;
    }
};

inline ErrorMetrics compare(std::span<const double> estimate, std::span<const double> truth) {
    require(estimate.size() == truth.size(), Errc::invalid_argument, "metric inputs differ in length");
    require(!truth.empty(), Errc::invalid_argument, "metric inputs are empty");
    ErrorMetrics m;
    double sq = 0.0, peak = 0.0;
    for (std::size_t n = 0; n < truth.size(); ++n) {
        const double e = estimate[n] - truth[n];
        sq += e * e;
        m.linf = std::max(m.linf, std::abs(e));
        peak = std::max(peak, std::abs(truth[n]));
    }
    m.relative_l2 = relative_l2(estimate, truth);
    m.relative_linf = peak > 0.0 ? m.linf / peak : (m.linf == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    const double rmse = std::sqrt(sq / static_cast<double>(truth.size()));
    m.psnr_db = rmse == 0.0 ? std::numeric_limits<double>::infinity() : 20.0 * std::log10(peak / rmse);
    return m;
}

inline ErrorMetrics compare(const ScalarField& estimate, const ScalarField& truth) {
    require_same_grid(estimate, truth, "compare");
    return compare(estimate.values(), truth.values());
}

} // namespace tat
