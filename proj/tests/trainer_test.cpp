#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include "vitals/checkpoint.hpp"
#include "vitals/config.hpp"
#include "vitals/error.hpp"
#include "vitals/optimizer.hpp"
#include "vitals/synthetic.hpp"
#include "vitals/trainer.hpp"

using namespace vitals;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            (std::string("vitals_train_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary | std::ios::trunc).write(s.data(), static_cast<std::streamsize>(s.size()));
}

SyntheticSpec tiny_spec() {
  SyntheticSpec s;
  s.phases = {{"A", 0.25, 0.05, 0.0}, {"B", 0.2, 0.05, 0.0}, {"C", 0.3, 0.05, 0.0}};
  s.feature_dim = 6;
  s.separation = 3.0;
  s.noise = 0.5;
  s.centroid_seed = 5;
  return s;
}

std::vector<LabeledVideo> tiny_videos(std::size_t count, std::uint64_t seed = 0) {
  std::vector<LabeledVideo> v;
  for (std::size_t i = 0; i < count; ++i) {
    v.push_back(generate_synthetic_video(tiny_spec(), seed + i));
    v.back().features.video_id = "vid" + std::to_string(i);
  }
  return v;
}

RunConfig tiny_config(std::size_t epochs = 4) {
  RunConfig c;
  c.model.input_dim = 6;
  c.model.hidden_dim = 8;
  c.model.num_layers = 3;
  c.model.num_decoders = 1;
  c.model.num_phases = 3;
  c.train.epochs = epochs;
  c.train.seed = 17;
  c.train.learning_rate = 5e-3;
  return c;
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    ::setenv(name, value, 1);
  }
  ~ScopedEnv() {
    if (old_) ::setenv(name_, old_->c_str(), 1);
    else ::unsetenv(name_);
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

// Textbook scalar Adam with coupled weight decay, all in double.
struct ScalarAdam {
  double p, m = 0, v = 0;
  int t = 0;
  void step(double g, double lr, double wd) {
    ++t;
    g += wd * p;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    p -= lr * mh / (std::sqrt(vh) + 1e-8);
  }
};

ModelParams<float> one_param(float value, std::size_t n = 1) {
  std::map<std::string, Tensor<float>> t;
  t.emplace("w", Tensor<float>({n}, std::vector<float>(n, value)));
  return ModelParams<float>(std::move(t));
}

}  // namespace

TEST(RunConfig, DefaultsFollowTrainingProtocol) {
  const RunConfig c;
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 5e-4);
  EXPECT_DOUBLE_EQ(c.train.weight_decay, 1e-5);
  EXPECT_EQ(c.train.epochs, 150u);
  EXPECT_DOUBLE_EQ(c.model.dropout_rate, 0.3);
  EXPECT_EQ(c.train.balancing, Balancing::kClassWeights);
  EXPECT_EQ(c.train.grad_clip, 0.0);
  EXPECT_EQ(c.train.max_frames, 15000u);
}

TEST(RunConfig, ParsesEveryKey) {
  std::istringstream in(
      "# run\nlearning_rate = 1e-3\nweight_decay = 0\nepochs = 12\ndropout = 0.1\nseed = 42\n"
      "lambda = 0.2\ntau = 3\nlayers = 4\ndecoders = 2\nhidden_dim = 16\nphases = 5\n"
      "balancing = none\ngrad_clip = 5\n");
  const RunConfig c = parse_run_config(in, "cfg");
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 1e-3);
  EXPECT_EQ(c.train.weight_decay, 0.0);
  EXPECT_EQ(c.train.epochs, 12u);
  EXPECT_DOUBLE_EQ(c.model.dropout_rate, 0.1);
  EXPECT_EQ(c.train.seed, 42u);
  EXPECT_DOUBLE_EQ(c.model.smooth_weight, 0.2);
  EXPECT_DOUBLE_EQ(c.model.smooth_clamp, 3.0);
  EXPECT_EQ(c.model.num_layers, 4u);
  EXPECT_EQ(c.model.num_decoders, 2u);
  EXPECT_EQ(c.model.hidden_dim, 16u);
  EXPECT_EQ(c.model.num_phases, 5u);
  EXPECT_EQ(c.train.balancing, Balancing::kNone);
  EXPECT_DOUBLE_EQ(c.train.grad_clip, 5.0);
}

TEST(RunConfig, RejectsBadInput) {
  for (const char* bad : {"learning_rte = 1\n", "epochs = 0\n", "learning_rate = -1\n",
                          "epochs = 3\nepochs = 4\n", "balancing = resample\n", "layers = two\n",
                          "epochs\n", "input_dim = 5\n"}) {
    std::istringstream in(bad);
    EXPECT_THROW(parse_run_config(in, "cfg"), ConfigError) << bad;
  }
  std::istringstream typo("learning_rte = 1\n");
  try {
    parse_run_config(typo, "cfg");
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rte"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("cfg:1"), std::string::npos);
  }
}

TEST(RunConfig, BlobRoundTripsExactly) {
  RunConfig c = tiny_config();
  c.train.learning_rate = 0.1 + 0.2;
  c.model.smooth_weight = 1.0 / 3.0;
  c.model.decoder_query = QuerySource::kLogits;
  c.train.max_frames = 777;
  c.train.seed = std::numeric_limits<std::uint64_t>::max();
  EXPECT_EQ(parse_config_blob(write_config_blob(c)), c);
}

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
  auto p = one_param(0.75f, 3);
  AdamState s = AdamState::zeros_like(p);
  GradMap g{{"w", Tensor<float>({3})}};
  adam_step(p, g, s, AdamOptions{1e-3, 0.0});
  EXPECT_EQ(p, one_param(0.75f, 3));
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  for (float g : {2.5f, -0.01f, 400.0f}) {
    auto p = one_param(1.0f);
    AdamState s = AdamState::zeros_like(p);
    adam_step(p, GradMap{{"w", Tensor<float>({1}, {g})}}, s, AdamOptions{1e-2, 0.0});
    EXPECT_NEAR(p.at("w")[0] - 1.0f, g > 0 ? -1e-2 : 1e-2, 1e-7) << g;
  }
}

TEST(Adam, MatchesScalarReferenceOverHundredSteps) {
  Rng rng(3);
  const std::size_t n = 16;
  std::map<std::string, Tensor<float>> init;
  Tensor<float> w({n});
  for (float& x : w.data()) x = static_cast<float>(rng.uniform(-1, 1));
  init.emplace("w", w);
  ModelParams<float> p(init);
  AdamState s = AdamState::zeros_like(p);
  std::vector<ScalarAdam> ref;
  for (float x : w.data()) ref.push_back({x});

  for (int step = 0; step < 100; ++step) {
    Tensor<float> g({n});
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = static_cast<float>(rng.normal() + 0.5 * std::sin(step * 0.1 + i));
      ref[i].step(g[i], 5e-3, 1e-2);
    }
    adam_step(p, GradMap{{"w", g}}, s, AdamOptions{5e-3, 1e-2});
  }
  EXPECT_EQ(s.step, 100u);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(p.at("w")[i], ref[i].p, 1e-6) << i;
}

TEST(Adam, TwoConstantStepsMatchHandRolled) {
  auto p = one_param(0.5f);
  AdamState s = AdamState::zeros_like(p);
  for (int i = 0; i < 2; ++i) adam_step(p, GradMap{{"w", Tensor<float>({1}, {0.2f})}}, s, AdamOptions{0.1, 0.0});
  // Constant gradient: bias-corrected m/sqrt(v) is exactly g/|g| each step.
  EXPECT_NEAR(p.at("w")[0], 0.5 - 2 * 0.1 * 0.2 / (0.2 + 1e-8), 1e-6);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  std::map<std::string, Tensor<float>> t;
  t.emplace("alpha", Tensor<float>({2}, {1, 2}));
  t.emplace("beta", Tensor<float>({2}, {3, 4}));
  ModelParams<float> p(t);
  AdamState s = AdamState::zeros_like(p);
  GradMap g{{"alpha", Tensor<float>({2}, {0.1f, 0.1f})},
            {"beta", Tensor<float>({2}, {std::numeric_limits<float>::quiet_NaN(), 0})}};
  try {
    adam_step(p, g, s, AdamOptions{});
    FAIL() << "no error";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
  }
  EXPECT_EQ(s.step, 0u);
  EXPECT_EQ(p, ModelParams<float>(t));
}

TEST(Adam, GradientClipping) {
  GradMap g{{"a", Tensor<float>({2}, {3, 0})}, {"b", Tensor<float>({1}, {4})}};
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 10.0), 5.0);
  EXPECT_EQ(g.at("a")[0], 3.0f);
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g.at("a")[0], 0.6f, 1e-7);
  EXPECT_NEAR(g.at("b")[0], 0.8f, 1e-7);
}

TEST(Checkpoint, RoundTripAndIdenticalPredictions) {
  TempDir dir;
  Trainer t(tiny_config(2), tiny_videos(2));
  const Checkpoint ck = train(t);
  save_checkpoint(dir / "a.ck", ck);
  const Checkpoint back = load_checkpoint(dir / "a.ck");
  EXPECT_EQ(back, ck);
  const auto video = tiny_videos(1, 99)[0];
  const auto p1 = predict(ck.params, ck.config.model, video.features.data);
  const auto p2 = predict(back.params, back.config.model, video.features.data);
  for (std::size_t s = 0; s < p1.num_stages(); ++s) EXPECT_EQ(p1.logits[s], p2.logits[s]);
  EXPECT_EQ(read_bytes(dir / "a.ck").substr(0, 4), "VTCK");
}

TEST(Checkpoint, WithoutOptimizerState) {
  TempDir dir;
  Checkpoint ck{tiny_config(), ModelParams<float>::init(tiny_config().model, 1), std::nullopt, 5, 0};
  save_checkpoint(dir / "a.ck", ck);
  EXPECT_EQ(load_checkpoint(dir / "a.ck"), ck);
}

TEST(Checkpoint, Errors) {
  TempDir dir;
  Trainer t(tiny_config(1), tiny_videos(1));
  save_checkpoint(dir / "a.ck", train(t));
  const std::string good = read_bytes(dir / "a.ck");

  std::string v2 = good;
  v2[4] = 2;
  write_bytes(dir / "b.ck", v2);
  EXPECT_THROW(load_checkpoint(dir / "b.ck"), VersionError);

  std::string magic = good;
  magic[0] = 'X';
  write_bytes(dir / "b.ck", magic);
  EXPECT_THROW(load_checkpoint(dir / "b.ck"), FormatError);

  for (std::size_t cut : {std::size_t{6}, std::size_t{30}, good.size() / 2, good.size() - 1}) {
    write_bytes(dir / "b.ck", good.substr(0, cut));
    EXPECT_THROW(load_checkpoint(dir / "b.ck"), CorruptionError) << cut;
  }
  write_bytes(dir / "b.ck", good + "junk");
  EXPECT_THROW(load_checkpoint(dir / "b.ck"), CorruptionError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ck"), DataError);
}

TEST(Trainer, LogLineFormat) {
  const EpochLog l{3, 1.25, 0.5, 0.75};
  EXPECT_TRUE(std::regex_match(l.line(), std::regex(R"(epoch=3 loss=[0-9.]+ acc_stage0=[0-9.]+ acc_final=[0-9.]+)")))
      << l.line();
}

TEST(Trainer, SameSeedIsBitIdentical) {
  auto run = [] {
    Trainer t(tiny_config(3), tiny_videos(3));
    std::string logs;
    const Checkpoint ck = train(t, [&](const EpochLog& l) { logs += l.line() + "\n"; });
    return std::make_pair(ck, logs);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);

  RunConfig other = tiny_config(3);
  other.train.seed = 18;
  Trainer t(other, tiny_videos(3));
  EXPECT_NE(train(t).params, a.first.params);
}

TEST(Trainer, ResumeEqualsUninterruptedRun) {
  TempDir dir;
  Trainer straight(tiny_config(6), tiny_videos(3));
  std::vector<std::string> logs_a;
  const Checkpoint a = train(straight, [&](const EpochLog& l) { logs_a.push_back(l.line()); });

  Trainer first(tiny_config(6), tiny_videos(3));
  std::vector<std::string> logs_b;
  for (int i = 0; i < 3; ++i) logs_b.push_back(first.run_epoch().line());
  save_checkpoint(dir / "mid.ck", first.checkpoint());
  Trainer second(load_checkpoint(dir / "mid.ck"), tiny_videos(3));
  EXPECT_EQ(second.epoch(), 3u);
  const Checkpoint b = train(second, [&](const EpochLog& l) { logs_b.push_back(l.line()); });

  EXPECT_EQ(a, b);
  EXPECT_EQ(logs_a, logs_b);
  save_checkpoint(dir / "a.ck", a);
  save_checkpoint(dir / "b.ck", b);
  EXPECT_EQ(read_bytes(dir / "a.ck"), read_bytes(dir / "b.ck"));
}

TEST(Trainer, LossTrendsDown) {
  Trainer t(tiny_config(30), tiny_videos(3));
  std::vector<double> loss;
  train(t, [&](const EpochLog& l) { loss.push_back(l.loss); });
  ASSERT_EQ(loss.size(), 30u);
  double early = 0, late = 0;
  for (int i = 0; i < 5; ++i) early += loss[i], late += loss[25 + i];
  EXPECT_GT(early, late);
  EXPECT_GE(loss[0], (loss[20] + loss[21] + loss[22] + loss[23] + loss[24]) / 5);
}

TEST(Trainer, RejectsMismatchedData) {
  EXPECT_THROW(Trainer(tiny_config(), {}), DataError);

  RunConfig wide = tiny_config();
  wide.model.input_dim = 7;
  EXPECT_THROW(Trainer(wide, tiny_videos(1)), ConfigError);

  RunConfig two = tiny_config();
  two.model.num_phases = 2;
  EXPECT_THROW(Trainer(two, tiny_videos(1)), ConfigError);

  auto v = tiny_videos(1);
  v[0].labels.pop_back();
  EXPECT_THROW(Trainer(tiny_config(), v), DataError);
}

TEST(Trainer, NonFiniteLossAborts) {
  auto v = tiny_videos(1);
  v[0].features.data[3] = std::numeric_limits<float>::infinity();
  Trainer t(tiny_config(), v);
  try {
    t.run_epoch();
    FAIL() << "no error";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("vid0"), std::string::npos) << e.what();
  }
}

TEST(Trainer, LongVideosAreDownsampled) {
  RunConfig c = tiny_config(1);
  c.train.max_frames = 10;
  Trainer t(c, tiny_videos(1));
  EXPECT_NO_THROW(t.run_epoch());
}

TEST(Trainer, BalancingNoneStillTrains) {
  RunConfig c = tiny_config(2);
  c.train.balancing = Balancing::kNone;
  Trainer t(c, tiny_videos(2));
  EXPECT_NO_THROW(train(t));
}

TEST(Evaluate, ReportsBothStagesAndChecksFit) {
  Trainer t(tiny_config(2), tiny_videos(2));
  const Checkpoint ck = train(t);
  const auto videos = tiny_videos(3, 50);
  const Evaluation ev = evaluate(ck, videos);
  EXPECT_EQ(ev.final_stage.videos.size(), 3u);
  EXPECT_EQ(ev.stage0.videos.size(), 3u);
  EXPECT_EQ(ev.final_stage.videos[0].video_id, "vid0");

  EXPECT_THROW(evaluate(ck, std::span<const LabeledVideo>{}), MetricError);
  auto bad = tiny_videos(1);
  bad[0].labels[0] = 3;
  EXPECT_THROW(evaluate(ck, bad), ConfigError);
  auto narrow = tiny_videos(1);
  narrow[0].features.data = Tensor<float>({narrow[0].labels.size(), 5});
  EXPECT_THROW(evaluate(ck, narrow), ConfigError);
}

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
  Trainer t(tiny_config(2), tiny_videos(2));
  const Checkpoint ck = train(t);
  const auto videos = tiny_videos(5, 70);
  std::string one, many;
  {
    ScopedEnv env("VITALS_THREADS", "1");
    EXPECT_EQ(worker_count(5), 1u);
    std::ostringstream out;
    write_report(out, evaluate(ck, videos).final_stage);
    one = out.str();
  }
  {
    ScopedEnv env("VITALS_THREADS", "4");
    EXPECT_EQ(worker_count(5), 4u);
    EXPECT_EQ(worker_count(2), 2u);
    std::ostringstream out;
    write_report(out, evaluate(ck, videos).final_stage);
    many = out.str();
  }
  EXPECT_EQ(one, many);
  ScopedEnv env("VITALS_THREADS", "zero");
  EXPECT_THROW(worker_count(3), ConfigError);
}

TEST(Pipeline, ManifestTrainingLeavesInputsUntouched) {
  TempDir dir;
  std::vector<ManifestEntry> entries;
  const auto videos = tiny_videos(3);
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const std::string id = "v" + std::to_string(i);
    save_features(dir / (id + ".vtaf"), videos[i].features);
    write_annotations(dir / (id + ".txt"), videos[i].labels);
    entries.push_back({i == 2 ? Split::kTest : Split::kTrain, id + ".vtaf", id + ".txt"});
  }
  write_manifest(dir / "manifest.tsv", entries);
  std::map<std::string, std::string> before;
  for (const auto& f : fs::directory_iterator(dir / "")) before[f.path().filename()] = read_bytes(f.path());

  const auto manifest = load_manifest(dir / "manifest.tsv");
  Trainer t(tiny_config(2), load_split(manifest, Split::kTrain));
  const Checkpoint ck = train(t);
  const auto test = load_split(manifest, Split::kTest);
  ASSERT_EQ(test.size(), 1u);
  EXPECT_EQ(evaluate(ck, test).final_stage.videos[0].video_id, "v2");

  for (const auto& [name, bytes] : before) EXPECT_EQ(read_bytes(dir / name), bytes) << name;
}
