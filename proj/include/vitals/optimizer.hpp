#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "vitals/model.hpp"

namespace vitals {

using GradMap = std::map<std::string, Tensor<float>>;

struct AdamOptions {
  double learning_rate = 5e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moments are stored in float so the whole state round-trips through a
// checkpoint; the update itself is evaluated in double.
struct AdamState {
  std::map<std::string, Tensor<float>> m;
  std::map<std::string, Tensor<float>> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ModelParams<float>& params);
  bool operator==(const AdamState&) const = default;
};

// One Adam step with bias correction. Weight decay is coupled: wd * param is
// added to the gradient before the moment updates. Throws TrainingError
// naming the parameter when a gradient is not finite, before touching any
// state.
void adam_step(ModelParams<float>& params, const GradMap& grads, AdamState& state,
               const AdamOptions& options);

// Scales all gradients so their joint L2 norm is at most max_norm. Returns
// the norm before scaling.
double clip_grad_norm(GradMap& grads, double max_norm);

}  // namespace vitals
