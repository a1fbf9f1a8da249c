#include "vitals/model.hpp"

#include <cmath>

#include "vitals/error.hpp"
#include "vitals/ops.hpp"
#include "vitals/random.hpp"

namespace vitals {

void ModelConfig::validate() const {
  if (num_layers < 1) throw ConfigError("model needs at least one layer");
  if (num_layers > 62) throw ConfigError("too many layers for a 2^i schedule");
  if (num_phases < 2) throw ConfigError("model needs at least two phases");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be positive");
  if (input_dim < 1) throw ConfigError("input_dim must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout must lie in [0, 1)");
  }
  if (!(smooth_weight >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (!(smooth_clamp > 0.0)) throw ConfigError("tau must be positive");
}

std::size_t ModelConfig::dilation(std::size_t layer, std::size_t n) {
  const std::size_t full = std::size_t{1} << layer;
  return std::max<std::size_t>(1, std::min(full, n));
}

namespace {

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in;
};

void add_linear(std::vector<ParamSpec>& specs, const std::string& prefix,
                std::size_t in, std::size_t out) {
  specs.push_back({prefix + ".weight", {in, out}, in});
  specs.push_back({prefix + ".bias", {out}, in});
}

void add_block(std::vector<ParamSpec>& specs, const std::string& prefix,
               std::size_t h) {
  specs.push_back({prefix + ".conv.weight", {ops::kConvTaps, h, h}, ops::kConvTaps * h});
  specs.push_back({prefix + ".conv.bias", {h}, ops::kConvTaps * h});
  for (const char* role : {"query", "key", "value", "output"}) {
    specs.push_back({prefix + ".attn." + role, {h, h}, h});
  }
  add_linear(specs, prefix + ".out", h, h);
}

std::string block_prefix(std::size_t stage, std::size_t layer) {
  const std::string owner =
      stage == 0 ? std::string("encoder") : "decoder" + std::to_string(stage);
  return owner + ".block" + std::to_string(layer);
}

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  c.validate();
  const std::size_t h = c.hidden_dim, k = c.num_phases;
  std::vector<ParamSpec> specs;
  add_linear(specs, "input", c.input_dim, h);
  for (std::size_t i = 1; i <= c.num_layers; ++i) add_block(specs, block_prefix(0, i), h);
  add_linear(specs, "encoder.fusion", c.num_layers * h, k);
  for (std::size_t j = 1; j <= c.num_decoders; ++j) {
    const std::string d = "decoder" + std::to_string(j);
    add_linear(specs, d + ".embed", k, h);
    for (std::size_t i = 1; i <= c.num_layers; ++i) add_block(specs, block_prefix(j, i), h);
    add_linear(specs, d + ".classifier", h, k);
  }
  return specs;
}

}  // namespace

template <typename T>
typename ModelParams<T>::Layout ModelParams<T>::layout(const ModelConfig& config) {
  Layout out;
  for (auto& spec : param_specs(config)) out.emplace_back(spec.name, spec.shape);
  return out;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  std::map<std::string, Tensor<T>> tensors;
  for (auto& spec : param_specs(config)) {
    Tensor<T> t(spec.shape);
    const double bound = std::sqrt(1.0 / static_cast<double>(spec.fan_in));
    for (T& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    tensors.emplace(spec.name, std::move(t));
  }
  return ModelParams(std::move(tensors));
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& config) {
  std::map<std::string, Tensor<T>> tensors;
  for (auto& spec : param_specs(config)) tensors.emplace(spec.name, Tensor<T>(spec.shape));
  return ModelParams(std::move(tensors));
}

template <typename T>
const Tensor<T>& ModelParams<T>::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
Tensor<T>& ModelParams<T>::at(const std::string& name) {
  return const_cast<Tensor<T>&>(std::as_const(*this).at(name));
}

template <typename T>
std::size_t ModelParams<T>::num_scalars() const {
  std::size_t total = 0;
  for (const auto& [name, t] : tensors_) total += t.numel();
  return total;
}

template <typename T>
void ModelParams<T>::check_layout(const ModelConfig& config) const {
  const auto expected = layout(config);
  if (expected.size() != tensors_.size()) {
    throw ConfigError("parameter set has " + std::to_string(tensors_.size()) +
                      " tensors, config expects " + std::to_string(expected.size()));
  }
  for (const auto& [name, shape] : expected) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ConfigError("missing parameter '" + name + "'");
    if (it->second.shape() != shape) {
      throw ConfigError("parameter '" + name + "' has shape " +
                        shape_str(it->second.shape()) + ", config expects " +
                        shape_str(shape));
    }
  }
}

template class ModelParams<float>;
template class ModelParams<double>;

template <typename T>
BoundParams BoundParams::bind(Tape<T>& tape, const ModelParams<T>& params,
                              bool requires_grad) {
  BoundParams out;
  for (const auto& [name, t] : params.tensors()) {
    out.vars_[name] = tape.leaf(t, requires_grad);
  }
  return out;
}

template BoundParams BoundParams::bind<float>(Tape<float>&, const ModelParams<float>&, bool);
template BoundParams BoundParams::bind<double>(Tape<double>&, const ModelParams<double>&, bool);

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ConfigError("parameter '" + name + "' is not bound");
  return it->second;
}

AttentionWeights AttentionWeights::from(const BoundParams& params,
                                        const std::string& prefix) {
  return {params[prefix + ".query"], params[prefix + ".key"],
          params[prefix + ".value"], params[prefix + ".output"]};
}

template <typename T>
Var cross_attention(Tape<T>& tape, Var query_source, Var features,
                    std::size_t window, const AttentionWeights& w) {
  const Tensor<T>& u = tape.value(query_source);
  const Tensor<T>& f = tape.value(features);
  if (u.rank() != 2 || f.rank() != 2 || u.rows() != f.rows()) {
    throw ShapeError("cross_attention: query source " + shape_str(u.shape()) +
                     " and features " + shape_str(f.shape()) + " differ in length");
  }
  if (f.rows() == 0) throw EmptySequenceError("attention over empty sequence");
  const Var q = ops::matmul(tape, query_source, w.query);
  const Var k = ops::matmul(tape, features, w.key);
  const Var v = ops::matmul(tape, features, w.value);
  return ops::matmul(tape, ops::chunked_attention(tape, q, k, v, window), w.output);
}

template <typename T>
Var windowed_self_attention(Tape<T>& tape, Var features, std::size_t window,
                            const AttentionWeights& w) {
  return cross_attention(tape, features, features, window, w);
}

namespace {

// conv -> relu -> attention -> projection -> dropout, added back onto x.
template <typename T>
Var block_forward(Tape<T>& tape, Var x, Var query_source, std::size_t stage,
                  std::size_t layer, const BoundParams& params,
                  const ModelConfig& config, const ForwardOptions& options) {
  const std::string prefix = block_prefix(stage, layer);
  const std::size_t n = tape.value(x).rows();
  const std::size_t span = ModelConfig::dilation(layer, n);
  Var f = ops::dilated_conv1d(tape, x, params[prefix + ".conv.weight"], span);
  f = ops::relu(tape, ops::add_bias(tape, f, params[prefix + ".conv.bias"]));
  const AttentionWeights attn = AttentionWeights::from(params, prefix + ".attn");
  const Var a = query_source.valid()
                    ? cross_attention(tape, query_source, f, span, attn)
                    : windowed_self_attention(tape, f, span, attn);
  Var o = ops::add_bias(tape, ops::matmul(tape, a, params[prefix + ".out.weight"]),
                        params[prefix + ".out.bias"]);
  const std::uint64_t site = stage * 1024 + layer;
  o = ops::dropout(tape, o, config.dropout_rate, Rng::derive(options.seed, site),
                   options.training);
  return ops::add(tape, x, o);
}

}  // namespace

template <typename T>
EncoderOutput encoder_forward(Tape<T>& tape, Var features,
                              const BoundParams& params,
                              const ModelConfig& config,
                              const ForwardOptions& options) {
  const Tensor<T>& e = tape.value(features);
  if (e.rank() != 2 || e.rows() == 0) {
    throw EmptySequenceError("encoder input has no frames");
  }
  if (e.cols() != config.input_dim) {
    throw ShapeError("encoder input has feature dimension " +
                     std::to_string(e.cols()) + ", model expects " +
                     std::to_string(config.input_dim));
  }
  Var x = ops::add_bias(tape, ops::matmul(tape, features, params["input.weight"]),
                        params["input.bias"]);
  EncoderOutput out;
  for (std::size_t i = 1; i <= config.num_layers; ++i) {
    x = block_forward(tape, x, Var{}, 0, i, params, config, options);
    out.layers.push_back(x);
  }
  out.logits = ops::add_bias(
      tape, ops::matmul(tape, ops::concat_cols(tape, out.layers),
                        params["encoder.fusion.weight"]),
      params["encoder.fusion.bias"]);
  return out;
}

template <typename T>
Var decoder_stage_forward(Tape<T>& tape, Var prev_logits, std::size_t stage,
                          const BoundParams& params, const ModelConfig& config,
                          const ForwardOptions& options) {
  if (stage < 1 || stage > config.num_decoders) {
    throw ConfigError("decoder stage " + std::to_string(stage) + " does not exist");
  }
  const std::string d = "decoder" + std::to_string(stage);
  const Var source = config.decoder_query == QuerySource::kProbabilities
                         ? ops::softmax_rows(tape, prev_logits)
                         : prev_logits;
  const Var u = ops::add_bias(tape, ops::matmul(tape, source, params[d + ".embed.weight"]),
                              params[d + ".embed.bias"]);
  Var x = u;
  for (std::size_t i = 1; i <= config.num_layers; ++i) {
    x = block_forward(tape, x, u, stage, i, params, config, options);
  }
  return ops::add_bias(tape, ops::matmul(tape, x, params[d + ".classifier.weight"]),
                       params[d + ".classifier.bias"]);
}

template <typename T>
StageVars model_forward(Tape<T>& tape, Var features, const BoundParams& params,
                        const ModelConfig& config, const ForwardOptions& options) {
  config.validate();
  StageVars out;
  out.logits.push_back(encoder_forward(tape, features, params, config, options).logits);
  for (std::size_t j = 1; j <= config.num_decoders; ++j) {
    out.logits.push_back(
        decoder_stage_forward(tape, out.logits.back(), j, params, config, options));
  }
  for (Var l : out.logits) out.probs.push_back(ops::softmax_rows(tape, l));
  return out;
}

template <typename T>
SmoothAnchors<T> smooth_anchors(const Tape<T>& tape, const StageVars& stages) {
  SmoothAnchors<T> out;
  for (Var l : stages.logits) out.push_back(ops::log_softmax_rows_value(tape.value(l)));
  return out;
}

template <typename T>
Var cross_entropy_loss(Tape<T>& tape, Var logits, std::span<const int> labels,
                       std::span<const double> class_weights) {
  return ops::cross_entropy(tape, logits, labels, class_weights);
}

template <typename T>
Var smoothing_loss(Tape<T>& tape, Var logits, double tau, const Tensor<T>* anchor) {
  return ops::smoothing_loss(tape, logits, tau, anchor);
}

template <typename T>
Var total_loss(Tape<T>& tape, const StageVars& stages, std::span<const int> labels,
               const ModelConfig& config, std::span<const double> class_weights,
               const SmoothAnchors<T>* anchors) {
  if (stages.logits.empty()) throw ContractError("total_loss over zero stages");
  if (anchors && anchors->size() != stages.logits.size()) {
    throw ShapeError("total_loss: anchor count does not match stage count");
  }
  Var total;
  for (std::size_t s = 0; s < stages.logits.size(); ++s) {
    Var term = cross_entropy_loss(tape, stages.logits[s], labels, class_weights);
    if (config.smooth_weight > 0.0) {
      const Var smooth = smoothing_loss(tape, stages.logits[s], config.smooth_clamp,
                                        anchors ? &(*anchors)[s] : nullptr);
      term = ops::add(tape, term,
                      ops::scale(tape, smooth, static_cast<T>(config.smooth_weight)));
    }
    total = total.valid() ? ops::add(tape, total, term) : term;
  }
  return total;
}

std::vector<int> StagePredictions::argmax(std::size_t stage) const {
  return ops::argmax_rows(logits.at(stage));
}

StagePredictions predict(const ModelParams<float>& params, const ModelConfig& config,
                         const Tensor<float>& features) {
  Tape<float> tape;
  const BoundParams bound = BoundParams::bind(tape, params, false);
  const Var e = tape.leaf(features, false);
  const StageVars stages = model_forward(tape, e, bound, config, ForwardOptions{});
  StagePredictions out;
  for (std::size_t s = 0; s < stages.logits.size(); ++s) {
    out.logits.push_back(tape.value(stages.logits[s]));
    out.probs.push_back(tape.value(stages.probs[s]));
  }
  return out;
}

#define VITALS_INSTANTIATE_MODEL(T)                                                \
  template Var windowed_self_attention<T>(Tape<T>&, Var, std::size_t,              \
                                          const AttentionWeights&);                \
  template Var cross_attention<T>(Tape<T>&, Var, Var, std::size_t,                 \
                                  const AttentionWeights&);                        \
  template EncoderOutput encoder_forward<T>(Tape<T>&, Var, const BoundParams&,     \
                                            const ModelConfig&,                    \
                                            const ForwardOptions&);                \
  template Var decoder_stage_forward<T>(Tape<T>&, Var, std::size_t,                \
                                        const BoundParams&, const ModelConfig&,    \
                                        const ForwardOptions&);                    \
  template StageVars model_forward<T>(Tape<T>&, Var, const BoundParams&,           \
                                      const ModelConfig&, const ForwardOptions&);  \
  template SmoothAnchors<T> smooth_anchors<T>(const Tape<T>&, const StageVars&);   \
  template Var cross_entropy_loss<T>(Tape<T>&, Var, std::span<const int>,          \
                                     std::span<const double>);                     \
  template Var smoothing_loss<T>(Tape<T>&, Var, double, const Tensor<T>*);         \
  template Var total_loss<T>(Tape<T>&, const StageVars&, std::span<const int>,     \
                             const ModelConfig&, std::span<const double>,          \
                             const SmoothAnchors<T>*);

VITALS_INSTANTIATE_MODEL(float)
VITALS_INSTANTIATE_MODEL(double)

#undef VITALS_INSTANTIATE_MODEL

}  // namespace vitals
