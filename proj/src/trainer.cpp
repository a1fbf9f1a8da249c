#include "vitals/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <thread>

#include "vitals/error.hpp"
#include "vitals/ops.hpp"
#include "vitals/text.hpp"

namespace vitals {

namespace {

double frame_accuracy_of(const Tensor<float>& logits, std::span<const int> labels) {
  const std::vector<int> pred = ops::argmax_rows(logits);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < labels.size(); ++t) correct += pred[t] == labels[t];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

void check_fit(const LabeledVideo& v, const ModelConfig& model) {
  const std::string& id = v.features.video_id;
  if (v.features.d() != model.input_dim) {
    throw ConfigError(id + ": features have width " + std::to_string(v.features.d()) +
                      " but the model expects " + std::to_string(model.input_dim));
  }
  if (v.labels.size() != v.features.n()) {
    throw DataError(id + ": " + std::to_string(v.labels.size()) + " labels for " +
                    std::to_string(v.features.n()) + " frames");
  }
  for (int l : v.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= model.num_phases) {
      throw ConfigError(id + ": annotation uses phase " + std::to_string(l) +
                        " but the model has " + std::to_string(model.num_phases) + " phases");
    }
  }
}

}  // namespace

std::string EpochLog::line() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch=%zu loss=%.6f acc_stage0=%.6f acc_final=%.6f", epoch, loss,
                acc_stage0, acc_final);
  return buf;
}

Trainer::Trainer(const RunConfig& config, std::vector<LabeledVideo> videos)
    : config_(config), videos_(std::move(videos)), rng_(Rng::derive(config.train.seed, 2)) {
  config_.validate();
  check_data();
  params_ = ModelParams<float>::init(config_.model, Rng::derive(config_.train.seed, 1));
  adam_ = AdamState::zeros_like(params_);
}

Trainer::Trainer(const Checkpoint& ckpt, std::vector<LabeledVideo> videos)
    : config_(ckpt.config),
      videos_(std::move(videos)),
      params_(ckpt.params),
      adam_(ckpt.adam ? *ckpt.adam : AdamState::zeros_like(ckpt.params)),
      epoch_(ckpt.epoch) {
  config_.validate();
  params_.check_layout(config_.model);
  rng_.set_state(ckpt.rng_state);
  check_data();
}

void Trainer::check_data() {
  if (videos_.empty()) throw DataError("no training videos");
  for (LabeledVideo& v : videos_) {
    if (v.labels.size() != v.features.n()) {
      throw DataError(v.features.video_id + ": " + std::to_string(v.labels.size()) +
                      " labels for " + std::to_string(v.features.n()) + " frames");
    }
    v = downsample(v, config_.train.max_frames);
    check_fit(v, config_.model);
    weights_.push_back(config_.train.balancing == Balancing::kClassWeights
                           ? class_weights(v.labels, config_.model.num_phases)
                           : std::vector<double>(config_.model.num_phases, 1.0));
  }
}

EpochLog Trainer::run_epoch() {
  if (finished()) throw ContractError("training already ran all " +
                                      std::to_string(config_.train.epochs) + " epochs");
  std::vector<std::size_t> order(videos_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);

  const AdamOptions adam{config_.train.learning_rate, config_.train.weight_decay};
  EpochLog log;
  log.epoch = epoch_ + 1;
  for (std::size_t idx : order) {
    const LabeledVideo& v = videos_[idx];
    Tape<float> tape;
    const BoundParams bound = BoundParams::bind(tape, params_, true);
    const Var e = tape.leaf(v.features.data, false);
    const StageVars stages =
        model_forward(tape, e, bound, config_.model, ForwardOptions{true, rng_.next_u64()});
    const Var loss = total_loss(tape, stages, v.labels, config_.model, weights_[idx]);
    const double value = tape.value(loss)[0];
    if (!std::isfinite(value)) {
      throw TrainingError("non-finite loss at epoch " + std::to_string(log.epoch) + " on video " +
                          v.features.video_id + " (adam step " + std::to_string(adam_.step) + ")");
    }
    tape.backward(loss);
    GradMap grads;
    for (const auto& [name, var] : bound.vars()) grads.emplace(name, tape.grad(var));
    if (config_.train.grad_clip > 0) clip_grad_norm(grads, config_.train.grad_clip);
    adam_step(params_, grads, adam_, adam);

    log.loss += value;
    log.acc_stage0 += frame_accuracy_of(tape.value(stages.logits.front()), v.labels);
    log.acc_final += frame_accuracy_of(tape.value(stages.logits.back()), v.labels);
  }
  const double count = static_cast<double>(videos_.size());
  log.loss /= count;
  log.acc_stage0 /= count;
  log.acc_final /= count;
  ++epoch_;
  return log;
}

Checkpoint Trainer::checkpoint() const {
  return Checkpoint{config_, params_, adam_, rng_.state(), epoch_};
}

Checkpoint train(Trainer& trainer, const EpochCallback& on_epoch) {
  while (!trainer.finished()) {
    const EpochLog log = trainer.run_epoch();
    if (on_epoch) on_epoch(log);
  }
  return trainer.checkpoint();
}

std::vector<LabeledVideo> load_split(std::span<const ManifestEntry> manifest, Split split) {
  std::vector<LabeledVideo> out;
  for (const ManifestEntry& e : manifest) {
    if (e.split == split) out.push_back(load_video(e, std::numeric_limits<int>::max()));
  }
  return out;
}

std::size_t worker_count(std::size_t jobs) {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("VITALS_THREADS"); env && *env) {
    const auto v = text::parse_number<std::size_t>(env);
    if (!v || *v == 0) {
      throw ConfigError(std::string("VITALS_THREADS must be a positive integer, got '") + env + "'");
    }
    cap = *v;
  }
  return std::max<std::size_t>(1, std::min(cap, jobs));
}

Evaluation evaluate(const Checkpoint& ckpt, std::span<const LabeledVideo> videos) {
  if (videos.empty()) throw MetricError("no videos to evaluate");
  const ModelConfig& model = ckpt.config.model;
  ckpt.params.check_layout(model);
  for (const LabeledVideo& v : videos) check_fit(v, model);

  std::vector<VideoMetrics> final_stage(videos.size()), stage0(videos.size());
  std::vector<std::exception_ptr> errors(videos.size());
  const auto job = [&](std::size_t i) {
    try {
      const LabeledVideo v = downsample(videos[i], ckpt.config.train.max_frames);
      const StagePredictions pred = predict(ckpt.params, model, v.features.data);
      const std::string& id = v.features.video_id;
      final_stage[i] = video_metrics(id, v.labels, pred.final_argmax(), model.num_phases);
      stage0[i] = video_metrics(id, v.labels, pred.argmax(0), model.num_phases);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const std::size_t workers = worker_count(videos.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < videos.size(); ++i) job(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < videos.size(); i += workers) job(i);
      });
    }
    for (std::thread& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return {make_report(std::move(final_stage)), make_report(std::move(stage0))};
}

}  // namespace vitals
