#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vitals/data.hpp"
#include "vitals/tensor.hpp"

namespace vitals {

struct PhaseStats {
  std::string name;
  double mean_minutes = 1.0;
  double std_minutes = 0.0;
  double skip_prob = 0.0;

  bool operator==(const PhaseStats&) const = default;
};

// A video is the phases in order, each skipped with its own probability,
// each lasting a Gaussian number of minutes. Frames are the phase centroid
// plus isotropic Gaussian noise.
struct SyntheticSpec {
  std::vector<PhaseStats> phases;
  std::uint32_t fps = 1;
  std::size_t feature_dim = 64;
  double separation = 4.0;
  double noise = 1.0;
  std::uint64_t centroid_seed = 0;

  std::size_t num_phases() const { return phases.size(); }

  // Throws ConfigError.
  void validate() const;

  bool operator==(const SyntheticSpec&) const = default;

  // The eleven-phase cholecystectomy duration table.
  static SyntheticSpec cholec_default();
};

// key = value text; each `phase = name, mean, std, skip` line appends a phase.
SyntheticSpec parse_synthetic_spec(std::istream& in, const std::string& source);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);
void write_synthetic_spec(std::ostream& out, const SyntheticSpec& spec);

// K x feature_dim: orthonormal rows (Gram-Schmidt on a seeded Gaussian
// matrix) scaled by the separation, so every pair is separation * sqrt(2)
// apart. Requires feature_dim >= K.
Tensor<double> synthetic_centroids(const SyntheticSpec& spec);

// Frames for one phase lasting `minutes`: max(1, floor(minutes * 60 * fps)).
std::size_t duration_frames(double minutes, std::uint32_t fps);

LabeledVideo generate_synthetic_video(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace vitals
