#include "vitals/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "vitals/error.hpp"
#include "vitals/random.hpp"
#include "vitals/text.hpp"

namespace vitals {

namespace {

constexpr int kMaxSkipRetries = 1000;

double to_real(const text::KeyValue& kv, std::string_view field, const std::string& source) {
  const auto v = text::parse_number<double>(field);
  if (!v) {
    throw ConfigError(source + ":" + std::to_string(kv.line) + ": bad number '" +
                      std::string(text::trim(field)) + "' for " + kv.key);
  }
  return *v;
}

template <typename U>
U to_uint(const text::KeyValue& kv, const std::string& source) {
  const auto v = text::parse_number<U>(kv.value);
  if (!v) {
    throw ConfigError(source + ":" + std::to_string(kv.line) + ": bad integer '" + kv.value +
                      "' for " + kv.key);
  }
  return *v;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (phases.size() < 2) throw ConfigError("synthetic spec needs at least 2 phases");
  for (const PhaseStats& p : phases) {
    if (!(p.mean_minutes > 0)) throw ConfigError("phase " + p.name + ": mean must be positive");
    if (!(p.std_minutes >= 0)) throw ConfigError("phase " + p.name + ": std must be >= 0");
    if (!(p.skip_prob >= 0 && p.skip_prob < 1)) {
      throw ConfigError("phase " + p.name + ": skip probability must be in [0, 1)");
    }
  }
  if (fps == 0) throw ConfigError("fps must be positive");
  if (feature_dim < phases.size()) {
    throw ConfigError("feature_dim " + std::to_string(feature_dim) + " is smaller than the " +
                      std::to_string(phases.size()) + " phase centroids it must separate");
  }
  if (!(separation > 0)) throw ConfigError("separation must be positive");
  if (!(noise >= 0)) throw ConfigError("noise must be >= 0");
}

SyntheticSpec SyntheticSpec::cholec_default() {
  SyntheticSpec s;
  s.phases = {
      {"P1", 5.78, 3.84, 0.0},   {"P2", 2.29, 1.93, 0.0},  {"P3", 2.52, 1.61, 0.0},
      {"P4", 2.09, 2.38, 0.0},   {"P5", 30.26, 13.84, 0.0}, {"P6", 8.35, 3.58, 0.0},
      {"P7", 10.58, 5.59, 0.0},  {"P8", 1.02, 0.63, 0.0},  {"P9", 7.33, 5.44, 0.0},
      {"P10", 1.40, 1.87, 0.0},  {"P11", 25.18, 10.33, 0.0},
  };
  return s;
}

SyntheticSpec parse_synthetic_spec(std::istream& in, const std::string& source) {
  SyntheticSpec spec;
  for (const text::KeyValue& kv : text::parse_key_values(in, source)) {
    if (kv.key == "phase") {
      const auto f = text::split(kv.value, ',');
      if (f.size() != 4) {
        throw ConfigError(source + ":" + std::to_string(kv.line) +
                          ": expected phase = name, mean, std, skip");
      }
      spec.phases.push_back({std::string(text::trim(f[0])), to_real(kv, f[1], source),
                             to_real(kv, f[2], source), to_real(kv, f[3], source)});
    } else if (kv.key == "fps") {
      spec.fps = to_uint<std::uint32_t>(kv, source);
    } else if (kv.key == "feature_dim") {
      spec.feature_dim = to_uint<std::size_t>(kv, source);
    } else if (kv.key == "separation") {
      spec.separation = to_real(kv, kv.value, source);
    } else if (kv.key == "noise") {
      spec.noise = to_real(kv, kv.value, source);
    } else if (kv.key == "centroid_seed") {
      spec.centroid_seed = to_uint<std::uint64_t>(kv, source);
    } else {
      throw ConfigError(source + ":" + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
    }
  }
  spec.validate();
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open spec " + path.string());
  return parse_synthetic_spec(in, path.string());
}

void write_synthetic_spec(std::ostream& out, const SyntheticSpec& spec) {
  out << "# phase = name, mean minutes, std minutes, skip probability\n";
  out << "fps = " << spec.fps << '\n';
  out << "feature_dim = " << spec.feature_dim << '\n';
  out << "separation = " << text::format_number(spec.separation) << '\n';
  out << "noise = " << text::format_number(spec.noise) << '\n';
  out << "centroid_seed = " << spec.centroid_seed << '\n';
  for (const PhaseStats& p : spec.phases) {
    out << "phase = " << p.name << ", " << text::format_number(p.mean_minutes) << ", "
        << text::format_number(p.std_minutes) << ", " << text::format_number(p.skip_prob) << '\n';
  }
}

Tensor<double> synthetic_centroids(const SyntheticSpec& spec) {
  const std::size_t k = spec.num_phases(), d = spec.feature_dim;
  if (d < k) throw ConfigError("feature_dim must be at least the number of phases");
  Rng rng(spec.centroid_seed);
  Tensor<double> c({k, d});
  for (std::size_t i = 0; i < k; ++i) {
    auto row = c.row(i);
    // Redraw in the (measure-zero) event of a dependent row.
    while (true) {
      for (double& v : row) v = rng.normal();
      for (std::size_t j = 0; j < i; ++j) {
        const auto prev = c.row(j);
        double dot = 0;
        for (std::size_t t = 0; t < d; ++t) dot += row[t] * prev[t];
        for (std::size_t t = 0; t < d; ++t) row[t] -= dot * prev[t];
      }
      double norm = 0;
      for (double v : row) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 1e-6) {
        for (double& v : row) v /= norm;
        break;
      }
    }
  }
  for (double& v : c.data()) v *= spec.separation;
  return c;
}

std::size_t duration_frames(double minutes, std::uint32_t fps) {
  const double frames = std::floor(minutes * 60.0 * static_cast<double>(fps));
  return frames < 1.0 ? 1 : static_cast<std::size_t>(frames);
}

LabeledVideo generate_synthetic_video(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<PhaseSegment> segments;
  for (int attempt = 0; segments.empty(); ++attempt) {
    if (attempt == kMaxSkipRetries) {
      throw ConfigError("every phase was skipped in " + std::to_string(kMaxSkipRetries) +
                        " attempts; lower the skip probabilities");
    }
    std::size_t t = 0;
    for (std::size_t k = 0; k < spec.num_phases(); ++k) {
      const PhaseStats& p = spec.phases[k];
      const bool skip = rng.uniform() < p.skip_prob;
      const double minutes = rng.normal(p.mean_minutes, p.std_minutes);
      if (skip) continue;
      const std::size_t len = duration_frames(minutes, spec.fps);
      segments.push_back({t, t + len - 1, static_cast<int>(k)});
      t += len;
    }
  }

  const Tensor<double> centroids = synthetic_centroids(spec);
  const std::size_t n = segments.back().end + 1, d = spec.feature_dim;
  LabeledVideo v;
  v.features.fps = spec.fps;
  v.features.data = Tensor<float>({n, d});
  v.labels = labels_from_segments(segments, n, spec.num_phases());
  for (std::size_t t = 0; t < n; ++t) {
    const auto c = centroids.row(static_cast<std::size_t>(v.labels[t]));
    auto row = v.features.data.row(t);
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = static_cast<float>(c[j] + (spec.noise > 0 ? spec.noise * rng.normal() : 0.0));
    }
  }
  return v;
}

}  // namespace vitals
