#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcagc/gradcheck.hpp"

namespace gcagc {

struct GradCheckEntry {
  std::string name;   // op or probe name, e.g. "conv2d/weight"
  std::string op;     // op under test; the unit for fault injection
  bool end_to_end = false;
  double tolerance = 0.0;
  GradCheckResult result;
  double seconds = 0.0;

  bool passed() const { return result.max_rel_error < tolerance; }
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double seconds = 0.0;

  bool passed() const;
  /// Fixed-width table: name, max relative error, tolerance, status. Failing
  /// rows also show the coordinate and both gradient values.
  std::string format() const;
};

/// Operation tolerance and end-to-end probe tolerance.
inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kEndToEndTolerance = 1e-3;

/// Names of every op with a registered check, in suite order.
std::vector<std::string> gradcheck_op_names();

/// Runs every registered op check and three end-to-end parameter probes on a
/// small model. When `corrupt_op` names an op, its backward rule is scaled by
/// 1.5 so the suite must report that op as failing.
GradCheckReport run_gradcheck_suite(std::uint64_t seed, const std::string& corrupt_op = "");

}  // namespace gcagc
