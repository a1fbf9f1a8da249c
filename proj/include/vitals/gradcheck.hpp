#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "vitals/tape.hpp"
#include "vitals/tensor.hpp"

namespace vitals {

// Builds the function under test on a fresh tape from leaf variables that
// hold the inputs. May return a non-scalar node.
using GradCheckFn =
    std::function<Var(Tape<double>& tape, std::span<const Var> inputs)>;

struct GradCheckOptions {
  double eps = 1e-4;
  // Seed of the random projection r in f(x) = sum(r * op(x)).
  std::uint64_t projection_seed = 0;
  // Negative-control hook: corrupts the named op's backward on the analytic
  // tape only.
  std::optional<std::pair<OpKind, double>> corrupt;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

// Compares reverse-mode gradients of a random scalar projection of `fn`
// against central differences, coordinate by coordinate over every input.
GradCheckResult finite_difference_check(const GradCheckFn& fn,
                                        const std::vector<Tensor<double>>& inputs,
                                        const GradCheckOptions& options = {});

}  // namespace vitals
