#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "vitals/error.hpp"
#include "vitals/metrics.hpp"
#include "vitals/random.hpp"
#include "vitals/text.hpp"

using namespace vitals;

namespace {

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<int> l(n);
  for (int& x : l) x = static_cast<int>(rng.below(k));
  return l;
}

// Counts straight from the frames, no confusion matrix.
struct Direct {
  double accuracy;
  std::vector<std::optional<double>> pr, re, ja;
  double pr_macro, re_macro, ja_macro;
};

Direct brute_force(const std::vector<int>& gt, const std::vector<int>& pred, std::size_t k) {
  Direct d{};
  std::uint64_t correct = 0;
  for (std::size_t t = 0; t < gt.size(); ++t) correct += gt[t] == pred[t];
  d.accuracy = static_cast<double>(correct) / static_cast<double>(gt.size());
  double sp = 0, sr = 0, sj = 0;
  int np = 0, nr = 0, nj = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const int ci = static_cast<int>(c);
    std::uint64_t tp = 0, in_gt = 0, in_pred = 0, in_union = 0;
    for (std::size_t t = 0; t < gt.size(); ++t) {
      tp += gt[t] == ci && pred[t] == ci;
      in_gt += gt[t] == ci;
      in_pred += pred[t] == ci;
      in_union += gt[t] == ci || pred[t] == ci;
    }
    std::optional<double> p, r, j;
    if (in_pred) p = static_cast<double>(tp) / static_cast<double>(in_pred);
    if (in_gt) {
      r = static_cast<double>(tp) / static_cast<double>(in_gt);
      j = static_cast<double>(tp) / static_cast<double>(in_union);
    }
    if (p) sp += *p, ++np;
    if (r) sr += *r, ++nr;
    if (j) sj += *j, ++nj;
    d.pr.push_back(p);
    d.re.push_back(r);
    d.ja.push_back(j);
  }
  d.pr_macro = sp / np;
  d.re_macro = sr / nr;
  d.ja_macro = sj / nj;
  return d;
}

}  // namespace

TEST(ConfusionMatrix, Examples) {
  const std::vector<int> a{0, 1, 2, 2, 1};
  const auto m = ConfusionMatrix::from_labels(a, a, 3);
  EXPECT_EQ(m.trace(), 5u);
  EXPECT_EQ(m.at(0, 1), 0u);

  const std::vector<int> gt{0, 1}, pred{1, 0};
  const auto anti = ConfusionMatrix::from_labels(gt, pred, 2);
  EXPECT_EQ(anti.at(0, 1), 1u);
  EXPECT_EQ(anti.at(1, 0), 1u);
  EXPECT_EQ(anti.trace(), 0u);
}

TEST(ConfusionMatrix, RowSumsAreGroundTruthCounts) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto gt = random_labels(rng, 200, 5), pred = random_labels(rng, 200, 5);
    const auto m = ConfusionMatrix::from_labels(gt, pred, 5);
    EXPECT_EQ(m.total(), 200u);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_EQ(m.row_sum(k), static_cast<std::uint64_t>(std::count(gt.begin(), gt.end(), k)));
      EXPECT_EQ(m.col_sum(k), static_cast<std::uint64_t>(std::count(pred.begin(), pred.end(), k)));
    }
  }
}

TEST(ConfusionMatrix, Errors) {
  const std::vector<int> a{0, 1}, b{0}, c{0, 3};
  EXPECT_THROW(ConfusionMatrix::from_labels(a, b, 2), ShapeError);
  EXPECT_THROW(ConfusionMatrix::from_labels(a, c, 2), DataError);
  EXPECT_THROW(frame_accuracy(ConfusionMatrix(3)), MetricError);
}

TEST(Metrics, WorkedExample) {
  const std::vector<int> gt{0, 0, 1, 1}, pred{0, 1, 1, 1};
  const VideoMetrics v = video_metrics("v", gt, pred, 2);
  EXPECT_DOUBLE_EQ(v.accuracy, 0.75);
  const auto& p = v.phases.per_phase;
  EXPECT_DOUBLE_EQ(*p[0].precision, 1.0);
  EXPECT_DOUBLE_EQ(*p[0].recall, 0.5);
  EXPECT_DOUBLE_EQ(*p[0].jaccard, 0.5);
  EXPECT_DOUBLE_EQ(*p[1].precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*p[1].recall, 1.0);
  EXPECT_DOUBLE_EQ(*p[1].jaccard, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(v.phases.precision_macro, 5.0 / 6.0);
}

TEST(Metrics, PerfectPrediction) {
  const std::vector<int> gt{0, 0, 2, 2, 1, 3};
  const VideoMetrics v = video_metrics("v", gt, gt, 5);
  EXPECT_EQ(v.accuracy, 1.0);
  EXPECT_EQ(v.phases.precision_macro, 1.0);
  EXPECT_EQ(v.phases.recall_macro, 1.0);
  EXPECT_EQ(v.phases.jaccard_macro, 1.0);
  EXPECT_FALSE(v.phases.per_phase[4].precision.has_value());
  EXPECT_FALSE(v.phases.per_phase[4].recall.has_value());
}

TEST(Metrics, AbsentPhaseContributesPrecisionOnly) {
  const std::vector<int> gt{0, 0, 0, 0}, pred{0, 0, 1, 1};
  const VideoMetrics v = video_metrics("v", gt, pred, 3);
  const auto& p = v.phases.per_phase;
  EXPECT_DOUBLE_EQ(*p[1].precision, 0.0);
  EXPECT_FALSE(p[1].recall.has_value());
  EXPECT_FALSE(p[1].jaccard.has_value());
  EXPECT_FALSE(p[2].precision.has_value());
  EXPECT_DOUBLE_EQ(v.phases.precision_macro, 0.5);
  EXPECT_DOUBLE_EQ(v.phases.recall_macro, 0.5);
  EXPECT_DOUBLE_EQ(v.phases.jaccard_macro, 0.5);
}

TEST(Metrics, MatchBruteForceExactly) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.below(7);
    const std::size_t n = 1 + rng.below(300);
    // Mix uniform and sticky predictions so some phases go missing.
    const auto gt = random_labels(rng, n, k);
    auto pred = random_labels(rng, n, trial % 3 == 0 ? k - 1 : k);
    if (trial % 2) {
      for (std::size_t t = 0; t < n; ++t) {
        if (rng.uniform() < 0.7) pred[t] = gt[t];
      }
    }
    const VideoMetrics v = video_metrics("v", gt, pred, k);
    const Direct d = brute_force(gt, pred, k);
    ASSERT_EQ(v.accuracy, d.accuracy);
    ASSERT_EQ(v.phases.precision_macro, d.pr_macro);
    ASSERT_EQ(v.phases.recall_macro, d.re_macro);
    ASSERT_EQ(v.phases.jaccard_macro, d.ja_macro);
    for (std::size_t c = 0; c < k; ++c) {
      const PhaseMetrics& p = v.phases.per_phase[c];
      ASSERT_EQ(p.precision, d.pr[c]);
      ASSERT_EQ(p.recall, d.re[c]);
      ASSERT_EQ(p.jaccard, d.ja[c]);
    }
  }
}

TEST(Metrics, BoundsAndJaccardOrdering) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.below(6);
    ConfusionMatrix m(k);
    for (std::size_t g = 0; g < k; ++g)
      for (std::size_t p = 0; p < k; ++p) m.at(g, p) = rng.below(4) == 0 ? 0 : rng.below(50);
    if (m.total() == 0) continue;
    const double ac = frame_accuracy(m);
    ASSERT_GE(ac, 0.0);
    ASSERT_LE(ac, 1.0);
    for (const PhaseMetrics& p : per_phase_metrics(m).per_phase) {
      for (const auto& x : {p.precision, p.recall, p.jaccard}) {
        if (x) {
          ASSERT_GE(*x, 0.0);
          ASSERT_LE(*x, 1.0);
        }
      }
      if (p.jaccard) {
        ASSERT_LE(*p.jaccard, *p.recall);
        if (p.precision) ASSERT_LE(*p.jaccard, *p.precision);
      }
    }
  }
}

TEST(Metrics, UniformRandomAccuracyIsOneOverK) {
  Rng rng(4);
  const auto gt = random_labels(rng, 100000, 7), pred = random_labels(rng, 100000, 7);
  EXPECT_NEAR(video_metrics("v", gt, pred, 7).accuracy, 1.0 / 7.0, 0.01);
}

TEST(Aggregate, MeanAndPopulationStdInPercent) {
  std::vector<VideoMetrics> v(2);
  v[0].accuracy = 0.8;
  v[1].accuracy = 0.9;
  const Aggregate a = aggregate(v);
  EXPECT_NEAR(a.accuracy.mean, 85.0, 1e-12);
  EXPECT_NEAR(a.accuracy.std, 5.0, 1e-12);

  const Aggregate one = aggregate(std::span(v).first(1));
  EXPECT_DOUBLE_EQ(one.accuracy.mean, 80.0);
  EXPECT_EQ(one.accuracy.std, 0.0);
  EXPECT_THROW(aggregate(std::span<const VideoMetrics>{}), MetricError);
}

TEST(Aggregate, OrderInvariant) {
  Rng rng(5);
  std::vector<VideoMetrics> v;
  for (int i = 0; i < 9; ++i) {
    const auto gt = random_labels(rng, 50, 4), pred = random_labels(rng, 50, 4);
    v.push_back(video_metrics("v" + std::to_string(i), gt, pred, 4));
  }
  const MetricsReport a = make_report(v);
  std::reverse(v.begin(), v.end());
  std::swap(v[2], v[5]);
  const MetricsReport b = make_report(v);
  std::ostringstream sa, sb;
  write_report(sa, a);
  write_report(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Report, DocumentSchema) {
  const std::vector<int> gt{0, 0, 1, 1}, pred{0, 1, 1, 1};
  const MetricsReport r = make_report({video_metrics("a", gt, pred, 3), video_metrics("b", gt, gt, 3)});
  const MetricsReport stage0 = make_report({video_metrics("a", gt, pred, 3)});
  std::stringstream doc;
  write_report(doc, r, &stage0);
  std::map<std::string, double> kv;
  for (const auto& e : text::parse_key_values(doc, "report")) {
    const auto v = text::parse_number<double>(e.value);
    ASSERT_TRUE(v) << e.key;
    kv[e.key] = *v;
  }
  for (const char* key : {"accuracy", "precision_macro", "recall_macro", "jaccard_macro",
                          "per_phase.0.pr", "per_phase.0.re", "per_phase.0.ja", "per_phase.1.pr",
                          "aggregate.mean.accuracy", "aggregate.std.accuracy",
                          "aggregate.mean.precision_macro", "aggregate.std.jaccard_macro",
                          "stage0.accuracy", "stage0.aggregate.mean.accuracy", "video.a.accuracy"}) {
    EXPECT_TRUE(kv.contains(key)) << key;
  }
  EXPECT_FALSE(kv.contains("per_phase.2.re"));
  EXPECT_DOUBLE_EQ(kv["accuracy"], 0.875);
  EXPECT_DOUBLE_EQ(kv["aggregate.mean.accuracy"], 87.5);
  EXPECT_DOUBLE_EQ(kv["aggregate.std.accuracy"], 12.5);
  EXPECT_DOUBLE_EQ(kv["stage0.accuracy"], 0.75);
  EXPECT_EQ(summary_line(r).rfind("accuracy=87.50±12.50%", 0), 0u) << summary_line(r);
}
