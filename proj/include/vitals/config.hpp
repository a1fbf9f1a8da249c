#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "vitals/model.hpp"

namespace vitals {

enum class Balancing { kClassWeights, kNone };

std::string balancing_name(Balancing b);

struct TrainConfig {
  double learning_rate = 5e-4;
  double weight_decay = 1e-5;
  std::size_t epochs = 150;
  std::uint64_t seed = 0;
  Balancing balancing = Balancing::kClassWeights;
  // Global gradient-norm cap; 0 disables clipping.
  double grad_clip = 0.0;
  // Longer videos are subsampled to this many frames.
  std::size_t max_frames = 15000;

  // Throws ConfigError.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  void validate() const {
    model.validate();
    train.validate();
  }

  bool operator==(const RunConfig&) const = default;
};

// Keys: learning_rate weight_decay epochs dropout seed lambda tau layers
// decoders hidden_dim phases balancing grad_clip. Unknown or repeated keys
// raise ConfigError. input_dim is not a key; it comes from the data.
RunConfig parse_run_config(std::istream& in, const std::string& source);
RunConfig load_run_config(const std::filesystem::path& path);

// Every field, including input_dim and the internal ones, so that
// parse_config_blob(write_config_blob(c)) == c.
// Keys the config does not know go to `extra` when given, else raise.
std::string write_config_blob(const RunConfig& config);
RunConfig parse_config_blob(const std::string& blob,
                            std::map<std::string, std::string>* extra = nullptr);

}  // namespace vitals
