#pragma once

#include <functional>
#include <string>
#include <vector>

#include "glsgn/gradcheck.hpp"

namespace glsgn {

// Names of every primitive op that records a backward closure.
const std::vector<std::string>& registered_ops();

// Op names recorded while `fn` runs against a private 64-bit graph, in first
// appearance order.
std::vector<std::string> recorded_op_names(const std::function<void()>& fn);

// One case per registered op, a few composites, and the end-to-end tiny
// model. `inject_fault` appends an op whose backward is deliberately wrong.
std::vector<GradCheckCase> gradcheck_suite(bool inject_fault = false);

inline constexpr const char* kSabotagedOp = "sabotaged_square";

} // namespace glsgn
