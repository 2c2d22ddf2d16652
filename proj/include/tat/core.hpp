// Shared vocabulary for the tomography toolkit: errors, warnings, small
// geometry helpers and the thread-count-aware parallel loop.
#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace tat {

inline constexpr std::string_view version = "0.3.1";

inline constexpr double pi = std::numbers::pi;

/// Error categories. Each maps to one failure mode named by an operation's
/// contract so that callers (and the CLI exit-code mapping) can branch on it.
enum class Errc {
    invalid_argument,
    invariant_violation,
    malformed_header,
    truncated_payload,
    excess_payload,
    non_finite,
    support_violation,
    cfl_violation,
    unsupported,
    numerical_failure,
    io_failure,
};

inline std::string_view to_string(Errc code) {
    switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::invariant_violation: return "invariant_violation";
    case Errc::malformed_header: return "malformed_header";
    case Errc::truncated_payload: return "truncated_payload";
    case Errc::excess_payload: return "excess_payload";
    case Errc::non_finite: return "non_finite";
    case Errc::support_violation: return "support_violation";
    case Errc::cfl_violation: return "cfl_violation";
    case Errc::unsupported: return "unsupported";
    case Errc::numerical_failure: return "numerical_failure";
    case Errc::io_failure: return "io_failure";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
    if (!ok) fail(code, what);
}

// ---------------------------------------------------------------------------
// Warnings. Numerical routines report soft problems (zero-padding, slow decay,
// residual growth) through one process-wide sink; tests swap it out.

using WarningSink = std::function<void(std::string_view)>;

namespace detail {
inline WarningSink& warning_sink() {
    static WarningSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    return sink;
}
inline std::mutex& warning_mutex() {
    static std::mutex m;
    return m;
}
} // namespace detail

inline WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard lock(detail::warning_mutex());
    auto previous = std::move(detail::warning_sink());
    detail::warning_sink() = std::move(sink);
    return previous;
}

inline void warn(std::string_view msg) {
    std::lock_guard lock(detail::warning_mutex());
    if (detail::warning_sink()) detail::warning_sink()(msg);
}

/// Collects warnings for the lifetime of the object (RAII swap of the sink).
class WarningCapture {
public:
    WarningCapture()
        : previous_(set_warning_sink([this](std::string_view m) { messages_.emplace_back(m); })) {}
    ~WarningCapture() { set_warning_sink(std::move(previous_)); }
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    const std::vector<std::string>& messages() const { return messages_; }
    bool contains(std::string_view needle) const {
        return std::any_of(messages_.begin(), messages_.end(),
                           [&](const std::string& m) { return m.find(needle) != std::string::npos; });
    }

private:
    std::vector<std::string> messages_;
    WarningSink previous_;
};

// ---------------------------------------------------------------------------
// Geometry. Points are always stored with three components; 2D data uses z = 0.

using Point = std::array<double, 3>;

inline Point operator+(const Point& a, const Point& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Point operator-(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Point operator*(double s, const Point& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Point& a) { return std::sqrt(dot(a, a)); }
inline double distance(const Point& a, const Point& b) { return norm(a - b); }
inline Point cross(const Point& a, const Point& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline Point normalized(const Point& a) {
    const double n = norm(a);
    return n > 0 ? (1.0 / n) * a : a;
}

inline bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------
// Threading. Loops split the index range into contiguous blocks, one per
// worker; each output element is written by exactly one worker so results do
// not depend on the thread count.

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
    static std::atomic<unsigned> n{0};
    return n;
}
} // namespace detail

inline unsigned thread_count() {
    unsigned n = detail::thread_setting().load();
    if (n == 0) {
        if (const char* env = std::getenv("TAT_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v > 0) return static_cast<unsigned>(v);
        }
        n = std::max(1u, std::thread::hardware_concurrency());
    }
    return n;
}

/// 0 restores the default (TAT_THREADS, else all cores).
inline void set_thread_count(unsigned n) { detail::thread_setting().store(n); }

template <class Fn>
void parallel_for(std::size_t count, Fn&& fn, std::size_t min_block = 1) {
    const std::size_t workers =
        std::min<std::size_t>(thread_count(), std::max<std::size_t>(1, count / std::max<std::size_t>(1, min_block)));
    if (workers <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run_block = [&](std::size_t w) {
        const std::size_t begin = count * w / workers;
        const std::size_t end = count * (w + 1) / workers;
        try {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    };
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run_block, w);
    run_block(0);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace tat
