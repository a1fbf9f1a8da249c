#include "vitals/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "vitals/checkpoint.hpp"
#include "vitals/error.hpp"
#include "vitals/gradcheck_suite.hpp"
#include "vitals/synthetic.hpp"
#include "vitals/trainer.hpp"

namespace vitals {

namespace fs = std::filesystem;

namespace {

struct TrainArgs {
  std::string manifest, config, out_checkpoint, log, resume;
};

struct EvalArgs {
  std::string checkpoint, manifest, split = "test", report;
};

struct PredictArgs {
  std::string checkpoint, features, out;
  bool dump_stages = false;
};

struct SynthArgs {
  std::string spec, out_dir, emit_default_spec;
  std::size_t videos = 0, test_videos = 0;
  std::uint64_t seed = 0;
};

struct GradcheckArgs {
  std::size_t seeds = 10;
  std::string corrupt;
  double factor = 2.0;
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw DataError("cannot write " + p.string());
  return f;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto manifest = load_manifest(a.manifest);
  std::vector<LabeledVideo> videos = load_split(manifest, Split::kTrain);
  if (videos.empty()) throw DataError(a.manifest + ": no train entries");

  std::optional<Trainer> trainer;
  if (!a.resume.empty()) {
    if (!a.config.empty()) throw UsageError("--config and --resume are mutually exclusive");
    trainer.emplace(load_checkpoint(a.resume), std::move(videos));
  } else {
    RunConfig config = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    config.model.input_dim = videos.front().features.d();
    trainer.emplace(config, std::move(videos));
  }

  std::ofstream log_file;
  if (!a.log.empty()) log_file = open_out(a.log);
  std::ostream& log = a.log.empty() ? out : log_file;
  const Checkpoint ckpt = train(*trainer, [&](const EpochLog& l) { log << l.line() << '\n' << std::flush; });
  save_checkpoint(a.out_checkpoint, ckpt);
  return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const auto manifest = load_manifest(a.manifest);
  const auto videos = load_split(manifest, split_from_name(a.split));
  if (videos.empty()) throw MetricError("split '" + a.split + "' of " + a.manifest + " is empty");
  const Evaluation ev = evaluate(ckpt, videos);
  if (!a.report.empty()) {
    std::ofstream f = open_out(a.report);
    write_report(f, ev.final_stage, &ev.stage0);
  }
  out << summary_line(ev.final_stage) << '\n';
  return kExitOk;
}

int cmd_predict(const PredictArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const FeatureSequence f = load_features(a.features);
  if (f.d() != ckpt.config.model.input_dim) {
    throw ConfigError(a.features + ": feature width " + std::to_string(f.d()) +
                      " but the checkpoint expects " + std::to_string(ckpt.config.model.input_dim));
  }
  const StagePredictions pred = predict(ckpt.params, ckpt.config.model, f.data);
  write_annotations(fs::path(a.out), pred.final_argmax());
  if (a.dump_stages) {
    for (std::size_t s = 0; s < pred.num_stages(); ++s) {
      std::ofstream csv = open_out(a.out + ".stage" + std::to_string(s) + ".prob");
      const Tensor<float>& p = pred.probs[s];
      char buf[32];
      for (std::size_t t = 0; t < p.rows(); ++t) {
        for (std::size_t k = 0; k < p.cols(); ++k) {
          std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(p.at(t, k)));
          csv << (k ? "," : "") << buf;
        }
        csv << '\n';
      }
    }
  }
  return kExitOk;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const SyntheticSpec spec = a.spec.empty() ? SyntheticSpec::cholec_default() : load_synthetic_spec(a.spec);
  if (!a.emit_default_spec.empty()) {
    std::ofstream f = open_out(a.emit_default_spec);
    write_synthetic_spec(f, SyntheticSpec::cholec_default());
    if (a.videos == 0) return kExitOk;
  }
  if (a.videos == 0) throw UsageError("--videos must be at least 1");
  if (a.out_dir.empty()) throw UsageError("--out-dir is required with --videos");
  if (a.test_videos > a.videos) throw UsageError("--test-videos exceeds --videos");
  spec.validate();
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < a.videos; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "video_%03zu", i);
    LabeledVideo v = generate_synthetic_video(spec, Rng::derive(a.seed, i));
    const std::string feat = std::string(id) + ".vtaf", ann = std::string(id) + ".txt";
    save_features(dir / feat, v.features);
    write_annotations(dir / ann, v.labels);
    entries.push_back({i + a.test_videos >= a.videos ? Split::kTest : Split::kTrain, feat, ann});
  }
  write_manifest(dir / "manifest.tsv", entries);
  out << "wrote " << a.videos << " videos (" << spec.num_phases() << " phases, d="
      << spec.feature_dim << ") to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  GradCheckSuiteOptions opts;
  opts.seeds = a.seeds;
  if (!a.corrupt.empty()) {
    const auto kind = op_from_name(a.corrupt);
    if (!kind) throw UsageError("unknown op '" + a.corrupt + "' for --corrupt");
    opts.corrupt = std::make_pair(*kind, a.factor);
  }
  const GradCheckSuiteReport report = run_gradcheck_suite(opts);
  char buf[128];
  for (const GradCheckSuiteEntry& e : report.entries) {
    std::snprintf(buf, sizeof buf, "%-24s max_rel_error=%.3e %s", e.name.c_str(), e.max_rel_error,
                  e.passed ? "ok" : "FAIL");
    out << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "gradcheck %s over %zu seeds (tolerance %.0e)",
                report.passed ? "passed" : "FAILED", a.seeds, opts.tolerance);
  out << buf << '\n';
  return report.passed ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-stage encoder-decoder for surgical phase recognition", "vitals"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train on the train split of a manifest");
  train_cmd->add_option("--manifest", train_args.manifest, "Dataset manifest")->required();
  train_cmd->add_option("--config", train_args.config, "key = value run config");
  train_cmd->add_option("--out-checkpoint", train_args.out_checkpoint, "Where to write the checkpoint")->required();
  train_cmd->add_option("--log", train_args.log, "Epoch log file (default: stdout)");
  train_cmd->add_option("--resume", train_args.resume, "Continue from this checkpoint");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--manifest", eval_args.manifest)->required();
  eval_cmd->add_option("--split", eval_args.split, "train or test")->capture_default_str();
  eval_cmd->add_option("--report", eval_args.report, "Write the key = value report here");

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "Label every frame of one feature file");
  predict_cmd->add_option("--checkpoint", predict_args.checkpoint)->required();
  predict_cmd->add_option("--features", predict_args.features)->required();
  predict_cmd->add_option("--out", predict_args.out, "Annotation output")->required();
  predict_cmd->add_flag("--dump-stages", predict_args.dump_stages,
                        "Also write <out>.stage<j>.prob per stage");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--spec", synth_args.spec, "Synthetic spec file (default: built-in table)");
  synth_cmd->add_option("--videos", synth_args.videos, "Number of videos");
  synth_cmd->add_option("--test-videos", synth_args.test_videos, "How many of them go to the test split");
  synth_cmd->add_option("--seed", synth_args.seed)->capture_default_str();
  synth_cmd->add_option("--out-dir", synth_args.out_dir);
  synth_cmd->add_option("--emit-default-spec", synth_args.emit_default_spec,
                        "Write the built-in spec to this file");

  GradcheckArgs gc_args;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  gc_cmd->add_option("--seeds", gc_args.seeds)->capture_default_str()->check(CLI::PositiveNumber);
  gc_cmd->add_option("--corrupt", gc_args.corrupt, "Scale this op's backward (negative control)");
  gc_cmd->add_option("--corrupt-factor", gc_args.factor)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*predict_cmd) return cmd_predict(predict_args);
    if (*synth_cmd) return cmd_synth(synth_args, out);
    if (*gc_cmd) return cmd_gradcheck(gc_args, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace vitals
