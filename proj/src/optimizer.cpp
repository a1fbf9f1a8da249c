#include "vitals/optimizer.hpp"

#include <cmath>

#include "vitals/error.hpp"

namespace vitals {

AdamState AdamState::zeros_like(const ModelParams<float>& params) {
  AdamState s;
  for (const auto& [name, t] : params.tensors()) {
    s.m.emplace(name, Tensor<float>(t.shape()));
    s.v.emplace(name, Tensor<float>(t.shape()));
  }
  return s;
}

void adam_step(ModelParams<float>& params, const GradMap& grads, AdamState& state,
               const AdamOptions& o) {
  for (const auto& [name, p] : params.tensors()) {
    const auto g = grads.find(name);
    if (g == grads.end()) throw ContractError("no gradient for parameter " + name);
    if (g->second.shape() != p.shape()) {
      throw ShapeError("gradient for " + name + " has shape " + shape_str(g->second.shape()) +
                       ", parameter has " + shape_str(p.shape()));
    }
    for (float x : g->second.data()) {
      if (!std::isfinite(x)) throw TrainingError("non-finite gradient in parameter " + name);
    }
    if (!state.m.contains(name) || state.m.at(name).shape() != p.shape() ||
        !state.v.contains(name) || state.v.at(name).shape() != p.shape()) {
      throw ShapeError("optimizer state does not match parameter " + name);
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (auto& [name, p] : params.tensors()) {
    const auto g = grads.at(name).data();
    auto m = state.m.at(name).data();
    auto v = state.v.at(name).data();
    auto w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]) + o.weight_decay * w[i];
      const double mi = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      const double vi = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      w[i] = static_cast<float>(w[i] - o.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + o.epsilon));
    }
  }
}

double clip_grad_norm(GradMap& grads, double max_norm) {
  double sq = 0;
  for (const auto& [name, g] : grads)
    for (float x : g.data()) sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads)
      for (float& x : g.data()) x = static_cast<float>(x * s);
  }
  return norm;
}

}  // namespace vitals
