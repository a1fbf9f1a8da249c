#include "vitals/data.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "vitals/error.hpp"
#include "vitals/text.hpp"

namespace vitals {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace fs = std::filesystem;

namespace {

constexpr char kFeatureMagic[4] = {'V', 'T', 'A', 'F'};

template <typename T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t offset) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string range_str(std::size_t a, std::size_t b) {
  return std::to_string(a) + ".." + std::to_string(b);
}

}  // namespace

void save_features(const fs::path& path, const FeatureSequence& seq) {
  if (seq.data.rank() != 2 || seq.n() == 0 || seq.d() == 0) {
    throw ShapeError("feature sequence must be a non-empty n x d matrix, got " +
                     shape_str(seq.data.shape()));
  }
  if (seq.d() > std::numeric_limits<std::uint32_t>::max()) {
    throw ShapeError("feature dimension does not fit in 32 bits");
  }
  std::string buf;
  buf.reserve(kFeatureHeaderBytes + seq.data.numel() * sizeof(float));
  buf.append(kFeatureMagic, 4);
  put<std::uint32_t>(buf, kFeatureVersion);
  put<std::uint64_t>(buf, seq.n());
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(seq.d()));
  put<std::uint32_t>(buf, seq.fps);
  const auto payload = seq.data.data();
  buf.append(reinterpret_cast<const char*>(payload.data()), payload.size_bytes());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

FeatureSequence load_features(const fs::path& path) {
  const std::string buf = read_file(path);
  const std::string where = path.string() + ": ";
  if (buf.size() < 4 || std::memcmp(buf.data(), kFeatureMagic, 4) != 0) {
    throw FormatError(where + "not a feature file (bad magic)");
  }
  if (buf.size() < kFeatureHeaderBytes) {
    throw CorruptionError(where + "header truncated at byte " + std::to_string(buf.size()));
  }
  const auto version = get<std::uint32_t>(buf, 4);
  if (version != kFeatureVersion) {
    throw FormatError(where + "unsupported feature format version " + std::to_string(version));
  }
  const auto n = get<std::uint64_t>(buf, 8);
  const auto d = get<std::uint32_t>(buf, 16);
  const auto fps = get<std::uint32_t>(buf, 20);
  if (n == 0 || d == 0) {
    throw FormatError(where + "empty feature matrix (n=" + std::to_string(n) +
                      ", d=" + std::to_string(d) + ")");
  }
  const std::size_t available = buf.size() - kFeatureHeaderBytes;
  if (n > available / sizeof(float) / d) {
    throw CorruptionError(where + "payload truncated at byte " + std::to_string(buf.size()) +
                          ", expected " + std::to_string(n) + "x" + std::to_string(d) + " floats");
  }
  const std::size_t expected = kFeatureHeaderBytes + n * d * sizeof(float);
  if (buf.size() != expected) {
    throw CorruptionError(where + "trailing bytes at offset " + std::to_string(expected));
  }
  FeatureSequence seq;
  seq.video_id = path.stem().string();
  seq.fps = fps;
  seq.data = Tensor<float>({static_cast<std::size_t>(n), d});
  std::memcpy(seq.data.data().data(), buf.data() + kFeatureHeaderBytes, n * d * sizeof(float));
  return seq;
}

std::vector<PhaseSegment> read_segments(std::istream& in, const std::string& source) {
  std::vector<PhaseSegment> segments;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto fields = text::split(line, ',');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (fields.size() != 3) throw FormatError(where + "expected phase,start,end");
    const auto phase = text::parse_number<int>(fields[0]);
    const auto start = text::parse_number<std::size_t>(fields[1]);
    const auto end = text::parse_number<std::size_t>(fields[2]);
    if (!phase || !start || !end) throw FormatError(where + "non-integer field");
    if (*start > *end) throw FormatError(where + "segment start after end");
    segments.push_back({*start, *end, *phase});
  }
  return segments;
}

std::vector<int> labels_from_segments(std::span<const PhaseSegment> segments,
                                      std::size_t n, std::size_t num_phases) {
  std::vector<PhaseSegment> sorted(segments.begin(), segments.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const PhaseSegment& a, const PhaseSegment& b) { return a.start < b.start; });
  std::vector<int> labels(n);
  std::size_t next = 0;
  for (const PhaseSegment& s : sorted) {
    if (s.phase < 0 || static_cast<std::size_t>(s.phase) >= num_phases) {
      throw DataError("phase " + std::to_string(s.phase) + " outside [0, " +
                      std::to_string(num_phases) + ") in segment " + range_str(s.start, s.end));
    }
    if (s.start > next) {
      throw CoverageError("frames " + range_str(next, std::min(s.start, n) - 1) + " not covered");
    }
    if (s.start < next) {
      throw CoverageError("frames " + range_str(s.start, std::min(s.end, next - 1)) +
                          " covered more than once");
    }
    if (s.end >= n) {
      throw CoverageError("frames " + range_str(std::max(s.start, n), s.end) +
                          " beyond sequence length " + std::to_string(n));
    }
    std::fill(labels.begin() + static_cast<std::ptrdiff_t>(s.start),
              labels.begin() + static_cast<std::ptrdiff_t>(s.end) + 1, s.phase);
    next = s.end + 1;
  }
  if (next < n) throw CoverageError("frames " + range_str(next, n - 1) + " not covered");
  return labels;
}

std::vector<int> parse_annotations(const fs::path& path, std::size_t n, std::size_t num_phases) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  const auto segments = read_segments(in, path.string());
  try {
    return labels_from_segments(segments, n, num_phases);
  } catch (const CoverageError& e) {
    throw CoverageError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<PhaseSegment> segments_from_labels(std::span<const int> labels) {
  std::vector<PhaseSegment> segments;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (segments.empty() || segments.back().phase != labels[t]) {
      segments.push_back({t, t, labels[t]});
    } else {
      segments.back().end = t;
    }
  }
  return segments;
}

void write_annotations(std::ostream& out, std::span<const int> labels) {
  for (const PhaseSegment& s : segments_from_labels(labels)) {
    out << s.phase << ',' << s.start << ',' << s.end << '\n';
  }
}

void write_annotations(const fs::path& path, std::span<const int> labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_annotations(out, labels);
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<std::size_t> downsample_indices(std::size_t n, std::size_t target) {
  if (target == 0) throw ParameterError("downsample target must be positive");
  const std::size_t m = std::min(n, target);
  std::vector<std::size_t> idx(m);
  // floor(i * n / m) split as i*q + floor(i*r/m) so nothing overflows.
  const std::size_t q = n / m, r = n % m;
  for (std::size_t i = 0; i < m; ++i) idx[i] = i * q + i * r / m;
  return idx;
}

std::vector<double> class_weights(std::span<const int> labels, std::size_t num_phases) {
  std::vector<std::size_t> counts(num_phases, 0);
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] < 0 || static_cast<std::size_t>(labels[t]) >= num_phases) {
      throw DataError("label " + std::to_string(labels[t]) + " at frame " + std::to_string(t) +
                      " outside [0, " + std::to_string(num_phases) + ")");
    }
    ++counts[static_cast<std::size_t>(labels[t])];
  }
  std::vector<double> w(num_phases, 0.0);
  const double n = static_cast<double>(labels.size());
  for (std::size_t k = 0; k < num_phases; ++k) {
    if (counts[k] > 0) w[k] = n / (static_cast<double>(num_phases) * static_cast<double>(counts[k]));
  }
  return w;
}

std::string split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split '" + name + "' (expected train or test)");
}

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    const auto fields = text::split(line, '\t');
    if (fields.size() != 3) throw DataError(where + "expected split<TAB>features<TAB>annotations");
    ManifestEntry e;
    try {
      e.split = split_from_name(std::string(text::trim(fields[0])));
    } catch (const DataError& err) {
      throw DataError(where + err.what());
    }
    e.features = base / fs::path(std::string(text::trim(fields[1])));
    e.annotations = base / fs::path(std::string(text::trim(fields[2])));
    for (const fs::path& p : {e.features, e.annotations}) {
      if (!fs::exists(p)) throw DataError(where + "missing file " + p.string());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const fs::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const ManifestEntry& e : entries) {
    out << split_name(e.split) << '\t' << e.features.string() << '\t'
        << e.annotations.string() << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

LabeledVideo load_video(const ManifestEntry& entry, std::size_t num_phases) {
  LabeledVideo v;
  v.features = load_features(entry.features);
  v.labels = parse_annotations(entry.annotations, v.features.n(), num_phases);
  return v;
}

LabeledVideo downsample(const LabeledVideo& video, std::size_t target) {
  const std::size_t n = video.features.n();
  if (video.labels.size() != n) {
    throw DataError(video.features.video_id + ": " + std::to_string(video.labels.size()) +
                    " labels for " + std::to_string(n) + " frames");
  }
  if (n <= target) return video;
  const auto idx = downsample_indices(n, target);
  const std::size_t d = video.features.d();
  LabeledVideo out;
  out.features.video_id = video.features.video_id;
  out.features.fps = video.features.fps;
  out.features.data = Tensor<float>({idx.size(), d});
  out.labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = video.features.data.row(idx[i]);
    std::copy(src.begin(), src.end(), out.features.data.row(i).begin());
    out.labels[i] = video.labels[idx[i]];
  }
  return out;
}

}  // namespace vitals
