#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "vitals/tensor.hpp"

namespace vitals {

// Per-frame feature vectors of one video, n x d row-major.
struct FeatureSequence {
  std::string video_id;
  std::uint32_t fps = 1;
  Tensor<float> data;

  std::size_t n() const { return data.rows(); }
  std::size_t d() const { return data.cols(); }
};

inline constexpr std::size_t kDefaultTargetFrames = 15000;

// Binary layout, little-endian:
//   "VTAF" | u32 version | u64 n | u32 d | u32 fps | n*d f32
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 24;

void save_features(const std::filesystem::path& path, const FeatureSequence& seq);

// video_id is the file stem. Bad magic, version or shape -> FormatError;
// truncation or trailing bytes -> CorruptionError with the byte offset.
FeatureSequence load_features(const std::filesystem::path& path);

// Inclusive frame range [start, end] labeled `phase`.
struct PhaseSegment {
  std::size_t start = 0;
  std::size_t end = 0;
  int phase = 0;

  std::size_t length() const { return end - start + 1; }
  bool operator==(const PhaseSegment&) const = default;
};

// Reads `phase,start,end` lines. `source` is used in error messages.
std::vector<PhaseSegment> read_segments(std::istream& in, const std::string& source);

// Expands segments to n per-frame labels. Segments may come in any order but
// must tile [0, n) exactly: gaps and overlaps raise CoverageError naming the
// frames, phases outside [0, K) raise DataError.
std::vector<int> labels_from_segments(std::span<const PhaseSegment> segments,
                                      std::size_t n, std::size_t num_phases);

std::vector<int> parse_annotations(const std::filesystem::path& path,
                                   std::size_t n, std::size_t num_phases);

// Maximal runs of equal labels.
std::vector<PhaseSegment> segments_from_labels(std::span<const int> labels);

void write_annotations(std::ostream& out, std::span<const int> labels);
void write_annotations(const std::filesystem::path& path, std::span<const int> labels);

// Frame indices kept when subsampling n frames to at most `target` at equal
// spacing w = n / target: floor(i * w) for i in [0, target).
std::vector<std::size_t> downsample_indices(std::size_t n,
                                            std::size_t target = kDefaultTargetFrames);

// n / (K * count_k) for phases present, 0 for absent ones.
std::vector<double> class_weights(std::span<const int> labels, std::size_t num_phases);

enum class Split { kTrain, kTest };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct ManifestEntry {
  Split split = Split::kTrain;
  std::filesystem::path features;
  std::filesystem::path annotations;
};

// `split<TAB>features<TAB>annotations` per line. Relative paths resolve
// against the manifest's directory. Missing files raise DataError.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

// Writes paths as given.
void write_manifest(const std::filesystem::path& path,
                    std::span<const ManifestEntry> entries);

struct LabeledVideo {
  FeatureSequence features;
  std::vector<int> labels;
};

LabeledVideo load_video(const ManifestEntry& entry, std::size_t num_phases);

// Keeps the frames chosen by downsample_indices in both features and labels.
LabeledVideo downsample(const LabeledVideo& video,
                        std::size_t target = kDefaultTargetFrames);

}  // namespace vitals
