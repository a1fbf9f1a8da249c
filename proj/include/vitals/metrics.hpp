#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vitals {

// counts[gt][pred].
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_phases)
      : k_(num_phases), counts_(num_phases * num_phases, 0) {}

  // Throws ShapeError on length mismatch and DataError on labels outside [0, K).
  static ConfusionMatrix from_labels(std::span<const int> gt, std::span<const int> pred,
                                     std::size_t num_phases);

  std::size_t num_phases() const { return k_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * k_ + pred]; }
  std::uint64_t& at(std::size_t gt, std::size_t pred) { return counts_[gt * k_ + pred]; }
  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t gt) const;
  std::uint64_t col_sum(std::size_t pred) const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

// trace / total. Throws MetricError on an empty matrix.
double frame_accuracy(const ConfusionMatrix& m);

// Undefined (0/0) entries are empty and left out of macro averages.
struct PhaseMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> jaccard;
};

struct PhaseSummary {
  std::vector<PhaseMetrics> per_phase;
  double precision_macro = 0;
  double recall_macro = 0;
  double jaccard_macro = 0;
};

// Recall and Jaccard are defined for phases present in the ground truth,
// precision for phases that were predicted at least once.
PhaseSummary per_phase_metrics(const ConfusionMatrix& m);

struct VideoMetrics {
  std::string video_id;
  double accuracy = 0;
  PhaseSummary phases;
};

VideoMetrics video_metrics(const std::string& video_id, std::span<const int> gt,
                           std::span<const int> pred, std::size_t num_phases);

struct MeanStd {
  double mean = 0;  // percent
  double std = 0;   // percent, population
};

struct Aggregate {
  MeanStd accuracy;
  MeanStd precision;
  MeanStd recall;
  MeanStd jaccard;
};

// Unweighted across videos. Throws MetricError when empty.
Aggregate aggregate(std::span<const VideoMetrics> videos);

struct MetricsReport {
  std::vector<VideoMetrics> videos;
  Aggregate summary;
  // Mean of each per-phase metric over the videos where it is defined.
  std::vector<PhaseMetrics> per_phase;
};

MetricsReport make_report(std::vector<VideoMetrics> videos);

// key = value document. `extra` (e.g. encoder-stage results) is written
// under its prefix with the same schema.
void write_report(std::ostream& out, const MetricsReport& report,
                  const MetricsReport* extra = nullptr,
                  const std::string& extra_prefix = "stage0");

// "accuracy=89.80±4.10% precision=... recall=... jaccard=..."
std::string summary_line(const MetricsReport& report);

}  // namespace vitals
