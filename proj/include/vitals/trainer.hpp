#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vitals/checkpoint.hpp"
#include "vitals/data.hpp"
#include "vitals/metrics.hpp"
#include "vitals/random.hpp"

namespace vitals {

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0;
  double acc_stage0 = 0;
  double acc_final = 0;

  // epoch=<i> loss=<f> acc_stage0=<f> acc_final=<f>
  std::string line() const;
};

// Owns the training state. One optimizer step per video; video order is
// reshuffled every epoch from the trainer's own generator, which also
// supplies the dropout seed of every step.
class Trainer {
 public:
  // Videos are subsampled to max_frames here. Throws DataError on empty or
  // inconsistent data and ConfigError when the data does not fit the model.
  Trainer(const RunConfig& config, std::vector<LabeledVideo> videos);

  // Continues from a checkpoint, including optimizer and generator state.
  Trainer(const Checkpoint& resume_from, std::vector<LabeledVideo> videos);

  EpochLog run_epoch();
  bool finished() const { return epoch_ >= config_.train.epochs; }
  std::size_t epoch() const { return epoch_; }

  const ModelParams<float>& params() const { return params_; }
  Checkpoint checkpoint() const;

 private:
  void check_data();

  RunConfig config_;
  std::vector<LabeledVideo> videos_;
  std::vector<std::vector<double>> weights_;
  ModelParams<float> params_;
  AdamState adam_;
  Rng rng_;
  std::size_t epoch_ = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Runs the remaining epochs and returns the final checkpoint.
Checkpoint train(Trainer& trainer, const EpochCallback& on_epoch = {});

// Manifest entries of one split, loaded with the phase bound unchecked so
// that a label/model mismatch surfaces as a ConfigError at use time.
std::vector<LabeledVideo> load_split(std::span<const ManifestEntry> manifest, Split split);

struct Evaluation {
  MetricsReport final_stage;
  MetricsReport stage0;
};

// Dropout off; argmax per frame. Videos are processed concurrently, up to
// VITALS_THREADS workers (default: hardware concurrency). Throws ConfigError
// when labels or feature width do not fit the checkpoint, MetricError when
// `videos` is empty.
Evaluation evaluate(const Checkpoint& ckpt, std::span<const LabeledVideo> videos);

std::size_t worker_count(std::size_t jobs);

}  // namespace vitals
