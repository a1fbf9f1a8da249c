#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vitals/tape.hpp"
#include "vitals/tensor.hpp"

namespace vitals {

// What the decoder builds its attention query from.
enum class QuerySource { kProbabilities, kLogits };

struct ModelConfig {
  std::size_t input_dim = 2048;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 10;
  std::size_t num_decoders = 3;
  std::size_t num_phases = 7;
  double dropout_rate = 0.3;
  double smooth_weight = 0.15;
  double smooth_clamp = 4.0;
  QuerySource decoder_query = QuerySource::kProbabilities;

  // Throws ConfigError when any invariant is violated.
  void validate() const;

  std::size_t num_stages() const { return num_decoders + 1; }

  // Dilation and attention window of block `layer` (1-based): 2^layer,
  // capped at the sequence length.
  static std::size_t dilation(std::size_t layer, std::size_t n);

  bool operator==(const ModelConfig&) const = default;
};

// Named parameter tensors. The name set and shapes depend on the config only.
template <typename T>
class ModelParams {
 public:
  using Layout = std::vector<std::pair<std::string, Shape>>;

  ModelParams() = default;
  explicit ModelParams(std::map<std::string, Tensor<T>> tensors)
      : tensors_(std::move(tensors)) {}

  static Layout layout(const ModelConfig& config);

  // Uniform in +-sqrt(1/fan_in) for every weight and its bias.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  // Zero-filled parameters of the right shapes.
  static ModelParams zeros(const ModelConfig& config);

  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.contains(name); }
  std::size_t size() const { return tensors_.size(); }
  std::size_t num_scalars() const;

  const std::map<std::string, Tensor<T>>& tensors() const { return tensors_; }
  std::map<std::string, Tensor<T>>& tensors() { return tensors_; }

  // Throws ConfigError unless names and shapes match `config` exactly.
  void check_layout(const ModelConfig& config) const;

  template <typename U>
  ModelParams<U> cast() const {
    std::map<std::string, Tensor<U>> out;
    for (const auto& [name, t] : tensors_) out.emplace(name, t.template cast<U>());
    return ModelParams<U>(std::move(out));
  }

  bool operator==(const ModelParams&) const = default;

 private:
  std::map<std::string, Tensor<T>> tensors_;
};

// Parameters placed on a tape as leaves.
class BoundParams {
 public:
  BoundParams() = default;

  template <typename T>
  static BoundParams bind(Tape<T>& tape, const ModelParams<T>& params,
                          bool requires_grad);

  void set(const std::string& name, Var v) { vars_[name] = v; }
  Var operator[](const std::string& name) const;
  const std::map<std::string, Var>& vars() const { return vars_; }

 private:
  std::map<std::string, Var> vars_;
};

struct AttentionWeights {
  Var query;
  Var key;
  Var value;
  Var output;

  // Looks up "<prefix>.query" etc.
  static AttentionWeights from(const BoundParams& params,
                               const std::string& prefix);
};

struct ForwardOptions {
  bool training = false;
  // Dropout masks derive from this seed and the block position.
  std::uint64_t seed = 0;
};

template <typename T>
Var windowed_self_attention(Tape<T>& tape, Var features, std::size_t window,
                            const AttentionWeights& weights);

// Query from `query_source`, keys and values from `features`.
template <typename T>
Var cross_attention(Tape<T>& tape, Var query_source, Var features,
                    std::size_t window, const AttentionWeights& weights);

struct EncoderOutput {
  Var logits;
  std::vector<Var> layers;
};

template <typename T>
EncoderOutput encoder_forward(Tape<T>& tape, Var features,
                              const BoundParams& params,
                              const ModelConfig& config,
                              const ForwardOptions& options);

// `stage` is 1-based.
template <typename T>
Var decoder_stage_forward(Tape<T>& tape, Var prev_logits, std::size_t stage,
                          const BoundParams& params, const ModelConfig& config,
                          const ForwardOptions& options);

struct StageVars {
  std::vector<Var> logits;
  std::vector<Var> probs;
};

template <typename T>
StageVars model_forward(Tape<T>& tape, Var features, const BoundParams& params,
                        const ModelConfig& config,
                        const ForwardOptions& options);

// Frozen previous-frame log-probabilities per stage, used by gradient checks
// to evaluate the smoothing term against fixed targets.
template <typename T>
using SmoothAnchors = std::vector<Tensor<T>>;

template <typename T>
SmoothAnchors<T> smooth_anchors(const Tape<T>& tape, const StageVars& stages);

template <typename T>
Var cross_entropy_loss(Tape<T>& tape, Var logits, std::span<const int> labels,
                       std::span<const double> class_weights);

template <typename T>
Var smoothing_loss(Tape<T>& tape, Var logits, double tau,
                   const Tensor<T>* anchor = nullptr);

// Sum over stages of cross-entropy + smooth_weight * smoothing loss.
template <typename T>
Var total_loss(Tape<T>& tape, const StageVars& stages,
               std::span<const int> labels, const ModelConfig& config,
               std::span<const double> class_weights,
               const SmoothAnchors<T>* anchors = nullptr);

// Per-stage outputs of one inference pass.
struct StagePredictions {
  std::vector<Tensor<float>> logits;
  std::vector<Tensor<float>> probs;

  std::size_t num_stages() const { return logits.size(); }
  std::vector<int> argmax(std::size_t stage) const;
  std::vector<int> final_argmax() const { return argmax(num_stages() - 1); }
};

// Inference with dropout off. Pure given its inputs; safe to call
// concurrently on shared parameters.
StagePredictions predict(const ModelParams<float>& params,
                         const ModelConfig& config,
                         const Tensor<float>& features);

}  // namespace vitals
