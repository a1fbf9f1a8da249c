#include "vitals/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "vitals/error.hpp"
#include "vitals/text.hpp"

namespace vitals {

namespace {

double mean_of(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

MeanStd percent_stats(const std::vector<double>& fractions) {
  const double mean = mean_of(fractions);
  double var = 0;
  for (double x : fractions) var += (x - mean) * (x - mean);
  var /= static_cast<double>(fractions.size());
  return {100.0 * mean, 100.0 * std::sqrt(var)};
}

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

void write_block(std::ostream& out, const std::string& prefix, const MetricsReport& r) {
  const auto put = [&](const std::string& key, double v) {
    out << prefix << key << " = " << text::format_number(v) << '\n';
  };
  put("videos", static_cast<double>(r.videos.size()));
  put("accuracy", r.summary.accuracy.mean / 100.0);
  put("precision_macro", r.summary.precision.mean / 100.0);
  put("recall_macro", r.summary.recall.mean / 100.0);
  put("jaccard_macro", r.summary.jaccard.mean / 100.0);
  for (std::size_t k = 0; k < r.per_phase.size(); ++k) {
    const PhaseMetrics& p = r.per_phase[k];
    const std::string base = "per_phase." + std::to_string(k) + ".";
    if (p.precision) put(base + "pr", *p.precision);
    if (p.recall) put(base + "re", *p.recall);
    if (p.jaccard) put(base + "ja", *p.jaccard);
  }
  const std::pair<const char*, MeanStd> stats[] = {
      {"accuracy", r.summary.accuracy},
      {"precision_macro", r.summary.precision},
      {"recall_macro", r.summary.recall},
      {"jaccard_macro", r.summary.jaccard}};
  for (const auto& [name, s] : stats) {
    put(std::string("aggregate.mean.") + name, s.mean);
    put(std::string("aggregate.std.") + name, s.std);
  }
  for (const VideoMetrics& v : r.videos) {
    const std::string base = "video." + v.video_id + ".";
    put(base + "accuracy", v.accuracy);
    put(base + "precision_macro", v.phases.precision_macro);
    put(base + "recall_macro", v.phases.recall_macro);
    put(base + "jaccard_macro", v.phases.jaccard_macro);
  }
}

}  // namespace

ConfusionMatrix ConfusionMatrix::from_labels(std::span<const int> gt, std::span<const int> pred,
                                             std::size_t num_phases) {
  if (gt.size() != pred.size()) {
    throw ShapeError("confusion matrix: " + std::to_string(gt.size()) + " ground-truth labels vs " +
                     std::to_string(pred.size()) + " predictions");
  }
  ConfusionMatrix m(num_phases);
  for (std::size_t t = 0; t < gt.size(); ++t) {
    for (const int l : {gt[t], pred[t]}) {
      if (l < 0 || static_cast<std::size_t>(l) >= num_phases) {
        throw DataError("label " + std::to_string(l) + " at frame " + std::to_string(t) +
                        " outside [0, " + std::to_string(num_phases) + ")");
      }
    }
    ++m.at(static_cast<std::size_t>(gt[t]), static_cast<std::size_t>(pred[t]));
  }
  return m;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (std::uint64_t c : counts_) s += c;
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t k = 0; k < k_; ++k) s += at(k, k);
  return s;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t gt) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < k_; ++p) s += at(gt, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::uint64_t s = 0;
  for (std::size_t g = 0; g < k_; ++g) s += at(g, pred);
  return s;
}

double frame_accuracy(const ConfusionMatrix& m) {
  const std::uint64_t n = m.total();
  if (n == 0) throw MetricError("accuracy of an empty sequence is undefined");
  return static_cast<double>(m.trace()) / static_cast<double>(n);
}

PhaseSummary per_phase_metrics(const ConfusionMatrix& m) {
  PhaseSummary s;
  std::vector<double> pr, re, ja;
  for (std::size_t k = 0; k < m.num_phases(); ++k) {
    const std::uint64_t tp = m.at(k, k);
    const std::uint64_t gt = m.row_sum(k), predicted = m.col_sum(k);
    PhaseMetrics p;
    p.precision = ratio(tp, predicted);
    if (gt > 0) {
      p.recall = ratio(tp, gt);
      p.jaccard = ratio(tp, gt + predicted - tp);
    }
    if (p.precision) pr.push_back(*p.precision);
    if (p.recall) re.push_back(*p.recall);
    if (p.jaccard) ja.push_back(*p.jaccard);
    s.per_phase.push_back(p);
  }
  s.precision_macro = mean_of(pr);
  s.recall_macro = mean_of(re);
  s.jaccard_macro = mean_of(ja);
  return s;
}

VideoMetrics video_metrics(const std::string& video_id, std::span<const int> gt,
                           std::span<const int> pred, std::size_t num_phases) {
  const ConfusionMatrix m = ConfusionMatrix::from_labels(gt, pred, num_phases);
  return {video_id, frame_accuracy(m), per_phase_metrics(m)};
}

Aggregate aggregate(std::span<const VideoMetrics> videos) {
  if (videos.empty()) throw MetricError("cannot aggregate an empty set of videos");
  std::vector<double> ac, pr, re, ja;
  for (const VideoMetrics& v : videos) {
    ac.push_back(v.accuracy);
    pr.push_back(v.phases.precision_macro);
    re.push_back(v.phases.recall_macro);
    ja.push_back(v.phases.jaccard_macro);
  }
  return {percent_stats(ac), percent_stats(pr), percent_stats(re), percent_stats(ja)};
}

MetricsReport make_report(std::vector<VideoMetrics> videos) {
  std::sort(videos.begin(), videos.end(),
            [](const VideoMetrics& a, const VideoMetrics& b) { return a.video_id < b.video_id; });
  MetricsReport r;
  r.summary = aggregate(videos);
  std::size_t k = 0;
  for (const VideoMetrics& v : videos) k = std::max(k, v.phases.per_phase.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> pr, re, ja;
    for (const VideoMetrics& v : videos) {
      if (i >= v.phases.per_phase.size()) continue;
      const PhaseMetrics& p = v.phases.per_phase[i];
      if (p.precision) pr.push_back(*p.precision);
      if (p.recall) re.push_back(*p.recall);
      if (p.jaccard) ja.push_back(*p.jaccard);
    }
    PhaseMetrics m;
    if (!pr.empty()) m.precision = mean_of(pr);
    if (!re.empty()) m.recall = mean_of(re);
    if (!ja.empty()) m.jaccard = mean_of(ja);
    r.per_phase.push_back(m);
  }
  r.videos = std::move(videos);
  return r;
}

void write_report(std::ostream& out, const MetricsReport& report, const MetricsReport* extra,
                  const std::string& extra_prefix) {
  write_block(out, "", report);
  if (extra) write_block(out, extra_prefix + ".", *extra);
}

std::string summary_line(const MetricsReport& report) {
  char buf[256];
  const Aggregate& a = report.summary;
  std::snprintf(buf, sizeof buf,
                "accuracy=%.2f±%.2f%% precision=%.2f±%.2f%% recall=%.2f±%.2f%% "
                "jaccard=%.2f±%.2f%%",
                a.accuracy.mean, a.accuracy.std, a.precision.mean, a.precision.std, a.recall.mean,
                a.recall.std, a.jaccard.mean, a.jaccard.std);
  return buf;
}

}  // namespace vitals
