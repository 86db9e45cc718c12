#pragma once

#include <functional>
#include <string>
#include <vector>

#include "glsgn/tensor.hpp"

namespace glsgn {

using LossBuilder = std::function<Tensor<double>(const std::vector<Tensor<double>>& leaves)>;

// One finite-difference experiment: a scalar function of some leaves.
struct GradCheckCase {
    std::string op;
    LossBuilder build;
    std::vector<Tensor<double>> leaves;
    double tolerance = 1e-4;
    double epsilon = 1e-5;
    // Five-point stencil (error O(eps^4)) instead of the two-point one.
    bool fourth_order = false;
    // 0 checks every coordinate; otherwise an evenly spaced subset per leaf.
    size_t max_coords_per_leaf = 0;
};

struct GradCheckEntry {
    std::string op;
    double max_rel_error = 0;
    double tolerance = 0;
    size_t coordinates = 0;
    bool passed = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool all_passed() const;
    std::string table() const;
};

// Relative error |a - n| / max(|a|, |n|, floor); the floor keeps coordinates
// whose true gradient is zero from dividing by roundoff.
inline constexpr double kGradCheckFloor = 1e-6;

GradCheckEntry check_gradient(const GradCheckCase& c);
GradCheckReport check_gradients(const std::vector<GradCheckCase>& cases);

} // namespace glsgn
