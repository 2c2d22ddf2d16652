// Shared helpers for the test binaries.
#pragma once

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "tat/core.hpp"

namespace tat_test {

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("tat_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <class Fn>
tat::Errc error_code_of(Fn&& fn) {
    try {
        fn();
    } catch (const tat::Error& e) {
        return e.code();
    }
    FAIL("expected a tat::Error");
    return tat::Errc::invalid_argument;
}

} // namespace tat_test
