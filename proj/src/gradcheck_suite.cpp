#include "vitals/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>

#include "vitals/model.hpp"
#include "vitals/ops.hpp"
#include "vitals/random.hpp"

namespace vitals {

namespace {

Tensor<double> random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-scale, scale);
  return t;
}

// Keeps relu inputs away from the kink so central differences are smooth.
Tensor<double> kink_free_tensor(Rng& rng, Shape shape) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.data()) {
    const double mag = rng.uniform(0.1, 1.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<int> labels(n);
  for (int& y : labels) y = static_cast<int>(rng.below(k));
  return labels;
}

using Inputs = std::vector<Tensor<double>>;

GradCheckCase simple_case(std::string name, std::vector<OpKind> covers,
                          std::function<Inputs(Rng&)> make_inputs,
                          std::function<GradCheckFn(Rng&)> make_fn) {
  return GradCheckCase{
      std::move(name), std::move(covers),
      [make_inputs = std::move(make_inputs), make_fn = std::move(make_fn)](
          std::uint64_t seed, const GradCheckOptions& base) {
        Rng rng(seed);
        const Inputs inputs = make_inputs(rng);
        const GradCheckFn fn = make_fn(rng);
        GradCheckOptions opts = base;
        opts.projection_seed = Rng::derive(seed, 99);
        return finite_difference_check(fn, inputs, opts);
      }};
}

AttentionWeights attention_from(std::span<const Var> v, std::size_t first) {
  return {v[first], v[first + 1], v[first + 2], v[first + 3]};
}

GradCheckResult end_to_end(std::uint64_t seed, const GradCheckOptions& base) {
  ModelConfig config;
  config.input_dim = 5;
  config.hidden_dim = 8;
  config.num_layers = 2;
  config.num_decoders = 1;
  config.num_phases = 3;
  config.dropout_rate = 0.3;
  const std::size_t n = 12;

  Rng rng(seed);
  const auto params = ModelParams<double>::init(config, rng.next_u64());
  const Tensor<double> features = random_tensor(rng, {n, config.input_dim});
  const std::vector<int> labels = random_labels(rng, n, config.num_phases);
  const std::vector<double> weights{1.0, 0.5, 2.0};
  const ForwardOptions forward{true, rng.next_u64()};

  std::vector<std::string> names;
  Inputs inputs;
  for (const auto& [name, t] : params.tensors()) {
    names.push_back(name);
    inputs.push_back(t);
  }
  inputs.push_back(features);

  // The smoothing term compares each frame with a frozen copy of the previous
  // frame; freezing the anchors at the unperturbed point makes the checked
  // function exactly the one the backward pass differentiates.
  SmoothAnchors<double> anchors;
  {
    Tape<double> tape;
    const BoundParams bound = BoundParams::bind(tape, params, false);
    const StageVars stages =
        model_forward(tape, tape.leaf(features), bound, config, forward);
    anchors = smooth_anchors(tape, stages);
  }

  GradCheckFn fn = [&](Tape<double>& tape, std::span<const Var> vars) {
    BoundParams bound;
    for (std::size_t i = 0; i < names.size(); ++i) bound.set(names[i], vars[i]);
    const StageVars stages = model_forward(tape, vars.back(), bound, config, forward);
    return total_loss(tape, stages, labels, config, weights, &anchors);
  };
  GradCheckOptions opts = base;
  opts.projection_seed = Rng::derive(seed, 99);
  return finite_difference_check(fn, inputs, opts);
}

}  // namespace

std::vector<GradCheckCase> gradcheck_cases() {
  std::vector<GradCheckCase> cases;
  cases.push_back(simple_case(
      "add", {OpKind::kAdd},
      [](Rng& r) { return Inputs{random_tensor(r, {3, 4}), random_tensor(r, {3, 4})}; },
      [](Rng&) -> GradCheckFn {
        return [](Tape<double>& t, std::span<const Var> v) { return ops::add(t, v[0], v[1]); };
      }));
  cases.push_back(simple_case(
      "add_bias", {OpKind::kAddBias},
      [](Rng& r) { return Inputs{random_tensor(r, {5, 3}), random_tensor(r, {3})}; },
      [](Rng&) -> GradCheckFn {
        return [](Tape<double>& t, std::span<const Var> v) { return ops::add_bias(t, v[0], v[1]); };
      }));
  cases.push_back(simple_case(
      "mul", {OpKind::kMul},
      [](Rng& r) { return Inputs{random_tensor(r, {3, 4}), random_tensor(r, {3, 4})}; },
      [](Rng&) -> GradCheckFn {
        return [](Tape<double>& t, std::span<const Var> v) { return ops::mul(t, v[0], v[1]); };
      }));
  cases.push_back(simple_case(
      "scale", {OpKind::kScale},
      [](Rng& r) { return Inputs{random_tensor(r, {4, 2})}; },
      [](Rng& r) -> GradCheckFn {
        const double factor = r.uniform(-2.0, 2.0);
        return [factor](Tape<double>& t, std::span<const Var> v) {
          return ops::scale(t, v[0], factor);
        };
      }));
  cases.push_back(simple_case(
      "sum", {OpKind::kSum},
      [](Rng& r) { return Inputs{random_tensor(r, {3, 5})}; },
      [](Rng&) -> GradCheckFn {
        return [](Tape<double>& t, std::span<const Var> v) { return ops::sum(t, v[0]); };
      }));
  cases.push_back(simple_case(
      "matmul", {OpKind::kMatMul},
      [](Rng& r) { return Inputs{random_tensor(r, {3, 4}), random_tensor(r, {4, 2})}; },
      [](Rng&) -> GradCheckFn {
        return [](Tape<double>& t, std::span<const Var> v) { return ops::matmul(t, v[0], v[1]); };
      }));
  cases.push_back(simple_case(
      "dilated_conv1d", {OpKind::kDilatedConv1d},
      [](Rng& r) {
        return Inputs{random_tensor(r, {16, 3}), random_tensor(r, {ops::kConvTaps, 3, 2})};
      },
      [](Rng&) -> GradCheckFn {
        return [](Tape<double>& t, std::span<const Var> v) {
          return ops::dilated_conv1d(t, v[0], v[1], 4);
        };
      }));
  cases.push_back(simple_case(
      "relu", {OpKind::kRelu},
      [](Rng& r) { return Inputs{kink_free_tensor(r, {6, 3})}; },
      [](Rng&) -> GradCheckFn {
        return [](Tape<double>& t, std::span<const Var> v) { return ops::relu(t, v[0]); };
      }));
  cases.push_back(simple_case(
      "dropout", {OpKind::kDropout},
      [](Rng& r) { return Inputs{random_tensor(r, {8, 4})}; },
      [](Rng& r) -> GradCheckFn {
        const std::uint64_t seed = r.next_u64();
        return [seed](Tape<double>& t, std::span<const Var> v) {
          return ops::dropout(t, v[0], 0.3, seed, true);
        };
      }));
  cases.push_back(simple_case(
      "softmax_rows", {OpKind::kSoftmaxRows},
      [](Rng& r) { return Inputs{random_tensor(r, {4, 5}, 3.0)}; },
      [](Rng&) -> GradCheckFn {
        return [](Tape<double>& t, std::span<const Var> v) { return ops::softmax_rows(t, v[0]); };
      }));
  cases.push_back(simple_case(
      "concat_cols", {OpKind::kConcatCols},
      [](Rng& r) {
        return Inputs{random_tensor(r, {4, 2}), random_tensor(r, {4, 3}), random_tensor(r, {4, 1})};
      },
      [](Rng&) -> GradCheckFn {
        return [](Tape<double>& t, std::span<const Var> v) {
          return ops::concat_cols(t, {v[0], v[1], v[2]});
        };
      }));
  cases.push_back(simple_case(
      "chunked_attention", {OpKind::kChunkedAttention},
      [](Rng& r) {
        return Inputs{random_tensor(r, {11, 4}), random_tensor(r, {11, 4}), random_tensor(r, {11, 3})};
      },
      [](Rng&) -> GradCheckFn {
        return [](Tape<double>& t, std::span<const Var> v) {
          return ops::chunked_attention(t, v[0], v[1], v[2], 4);
        };
      }));
  cases.push_back(simple_case(
      "windowed_self_attention", {OpKind::kMatMul, OpKind::kChunkedAttention},
      [](Rng& r) {
        Inputs in{random_tensor(r, {10, 4})};
        for (int i = 0; i < 4; ++i) in.push_back(random_tensor(r, {4, 4}));
        return in;
      },
      [](Rng&) -> GradCheckFn {
        return [](Tape<double>& t, std::span<const Var> v) {
          return windowed_self_attention(t, v[0], 4, attention_from(v, 1));
        };
      }));
  cases.push_back(simple_case(
      "cross_attention", {OpKind::kMatMul, OpKind::kChunkedAttention},
      [](Rng& r) {
        Inputs in{random_tensor(r, {10, 4}), random_tensor(r, {10, 4})};
        for (int i = 0; i < 4; ++i) in.push_back(random_tensor(r, {4, 4}));
        return in;
      },
      [](Rng&) -> GradCheckFn {
        return [](Tape<double>& t, std::span<const Var> v) {
          return cross_attention(t, v[0], v[1], 8, attention_from(v, 2));
        };
      }));
  cases.push_back(simple_case(
      "cross_entropy", {OpKind::kCrossEntropy},
      [](Rng& r) { return Inputs{random_tensor(r, {7, 4}, 2.0)}; },
      [](Rng& r) -> GradCheckFn {
        auto labels = random_labels(r, 7, 4);
        std::vector<double> weights{1.0, 0.25, 2.0, 0.75};
        return [labels, weights](Tape<double>& t, std::span<const Var> v) {
          return ops::cross_entropy(t, v[0], labels, weights);
        };
      }));
  cases.push_back(GradCheckCase{
      "smoothing_loss", {OpKind::kSmoothingLoss},
      [](std::uint64_t seed, const GradCheckOptions& base) {
        Rng rng(seed);
        const Tensor<double> logits = random_tensor(rng, {9, 3}, 3.0);
        const Tensor<double> anchor = ops::log_softmax_rows_value(logits);
        const double tau = 1.5;
        GradCheckFn fn = [anchor, tau](Tape<double>& t, std::span<const Var> v) {
          return ops::smoothing_loss(t, v[0], tau, &anchor);
        };
        return finite_difference_check(fn, {logits}, base);
      }});
  cases.push_back(GradCheckCase{
      "model_end_to_end",
      {OpKind::kAdd, OpKind::kAddBias, OpKind::kScale, OpKind::kMatMul,
       OpKind::kDilatedConv1d, OpKind::kRelu, OpKind::kDropout, OpKind::kSoftmaxRows,
       OpKind::kConcatCols, OpKind::kChunkedAttention, OpKind::kCrossEntropy,
       OpKind::kSmoothingLoss},
      end_to_end});
  return cases;
}

GradCheckSuiteReport run_gradcheck_suite(const GradCheckSuiteOptions& options) {
  GradCheckSuiteReport report;
  GradCheckOptions base;
  base.corrupt = options.corrupt;
  for (const GradCheckCase& c : gradcheck_cases()) {
    GradCheckSuiteEntry entry{c.name, 0.0, true};
    for (std::size_t s = 0; s < options.seeds; ++s) {
      const GradCheckResult r = c.run(Rng::derive(0x6772616463686b, s), base);
      entry.max_rel_error = std::max(entry.max_rel_error, r.max_rel_error);
    }
    entry.passed = entry.max_rel_error < options.tolerance;
    report.passed = report.passed && entry.passed;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace vitals
