#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vitals/gradcheck.hpp"

namespace vitals {

// One registered gradient check: builds random inputs from a seed and runs
// finite_difference_check on them.
struct GradCheckCase {
  std::string name;
  // Op kinds whose backward this case exercises.
  std::vector<OpKind> covers;
  std::function<GradCheckResult(std::uint64_t seed, const GradCheckOptions&)> run;
};

// Every differentiable op on its own, the composite attention ops, and the
// tiny end-to-end model (L=2, N=1, h=8, n=12, K=3).
std::vector<GradCheckCase> gradcheck_cases();

struct GradCheckSuiteOptions {
  std::size_t seeds = 10;
  double tolerance = 1e-3;
  std::optional<std::pair<OpKind, double>> corrupt;
};

struct GradCheckSuiteEntry {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckSuiteReport {
  std::vector<GradCheckSuiteEntry> entries;
  bool passed = true;
};

GradCheckSuiteReport run_gradcheck_suite(const GradCheckSuiteOptions& options = {});

}  // namespace vitals
