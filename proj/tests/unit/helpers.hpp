#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "bikeflow/numerics.hpp"
#include "bikeflow/random.hpp"

namespace testing {

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("bikeflow_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline bikeflow::Matrix random_matrix(std::size_t r, std::size_t c, bikeflow::RngStream& rng, double scale = 1.0) {
    bikeflow::Matrix m(r, c);
    for (auto& v : m.data()) v = scale * rng.normal();
    return m;
}

inline double rel_err(double a, double b, double floor = 1e-7) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testing
