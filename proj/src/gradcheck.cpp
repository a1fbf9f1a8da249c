#include "vitals/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vitals/ops.hpp"
#include "vitals/random.hpp"

namespace vitals {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

namespace {

Tensor<double> projection_for(const Tensor<double>& out, std::uint64_t seed) {
  Tensor<double> r(out.shape());
  if (out.numel() == 1) {
    r[0] = 1.0;
    return r;
  }
  Rng rng(seed);
  for (double& v : r.data()) v = rng.uniform(-1.0, 1.0);
  return r;
}

double projected(const Tensor<double>& out, const Tensor<double>& r) {
  double total = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) total += out[i] * r[i];
  return total;
}

// Which side of zero every relu input sits on. Central differences are only
// valid while the perturbation stays inside one linear piece.
std::vector<bool> relu_pattern(const Tape<double>& tape) {
  std::vector<bool> pattern;
  for (std::size_t id = 0; id < tape.size(); ++id) {
    if (tape.kind(Var{id}) != OpKind::kRelu) continue;
    for (double v : tape.value(tape.inputs(Var{id})[0]).data()) pattern.push_back(v > 0.0);
  }
  return pattern;
}

struct Evaluation {
  double value;
  std::vector<bool> pattern;
};

Evaluation evaluate(const GradCheckFn& fn, const std::vector<Tensor<double>>& inputs,
                    const Tensor<double>& r) {
  Tape<double> tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& in : inputs) vars.push_back(tape.leaf(in, false));
  const double value = projected(tape.value(fn(tape, vars)), r);
  return {value, relu_pattern(tape)};
}

// Retries with a smaller step while x +- step crosses a relu kink.
constexpr int kMaxStepRetries = 6;
constexpr double kStepShrink = 8.0;

}  // namespace

GradCheckResult finite_difference_check(const GradCheckFn& fn,
                                        const std::vector<Tensor<double>>& inputs,
                                        const GradCheckOptions& options) {
  Tape<double> tape;
  if (options.corrupt) {
    tape.corrupt_backward(options.corrupt->first, options.corrupt->second);
  }
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& in : inputs) vars.push_back(tape.leaf(in, true));
  const Var out = fn(tape, vars);
  const Tensor<double> r = projection_for(tape.value(out), options.projection_seed);
  const Var loss =
      tape.value(out).numel() == 1
          ? out
          : ops::sum(tape, ops::mul(tape, out, tape.leaf(r, false)));
  tape.backward(loss);

  const std::vector<bool> base_pattern = relu_pattern(tape);

  GradCheckResult result;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double>& analytic = tape.grad(vars[i]);
    for (std::size_t j = 0; j < inputs[i].numel(); ++j) {
      const double original = probe[i][j];
      double step = options.eps;
      double numeric = 0.0;
      for (int attempt = 0; attempt <= kMaxStepRetries; ++attempt) {
        probe[i][j] = original + step;
        const Evaluation up = evaluate(fn, probe, r);
        probe[i][j] = original - step;
        const Evaluation down = evaluate(fn, probe, r);
        numeric = (up.value - down.value) / (2.0 * step);
        if (up.pattern == base_pattern && down.pattern == base_pattern) break;
        step /= kStepShrink;
      }
      probe[i][j] = original;
      const double err = relative_error(analytic[j], numeric);
      if (err > result.max_rel_error || std::isnan(err)) {
        result = {std::isnan(err) ? INFINITY : err, i, j, analytic[j], numeric};
      }
    }
  }
  return result;
}

}  // namespace vitals
