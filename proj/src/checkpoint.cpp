#include "vitals/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "vitals/error.hpp"
#include "vitals/text.hpp"

namespace vitals {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'V', 'T', 'C', 'K'};
constexpr std::uint32_t kMaxRank = 8;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf_.append(b, sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void tensor(const std::string& name, const Tensor<float>& t) {
    put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(d);
    bytes(t.data().data(), t.data().size_bytes());
  }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::string where) : buf_(buf), where_(std::move(where)) {}

  bool done() const { return pos_ == buf_.size(); }
  std::size_t pos() const { return pos_; }

  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) {
      throw CorruptionError(where_ + "truncated at byte " + std::to_string(buf_.size()) +
                            " (needed " + std::to_string(n) + " bytes at offset " +
                            std::to_string(pos_) + ")");
    }
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::pair<std::string, Tensor<float>> tensor() {
    const std::size_t start = pos_;
    const std::string name = str(get<std::uint32_t>());
    const auto rank = get<std::uint32_t>();
    if (rank == 0 || rank > kMaxRank) {
      throw CorruptionError(where_ + "record '" + name + "' at offset " + std::to_string(start) +
                            " has rank " + std::to_string(rank));
    }
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = get<std::uint64_t>();
      // Anything larger than the rest of the file is truncation; checking
      // here also keeps numel from overflowing.
      if (d != 0 && numel > (buf_.size() - pos_) / sizeof(float) / d) {
        need(buf_.size());
      }
      shape.push_back(static_cast<std::size_t>(d));
      numel *= static_cast<std::size_t>(d);
    }
    need(numel * sizeof(float));
    Tensor<float> t(shape);
    std::memcpy(t.data().data(), buf_.data() + pos_, numel * sizeof(float));
    pos_ += numel * sizeof(float);
    return {name, std::move(t)};
  }

 private:
  const std::string& buf_;
  std::string where_;
  std::size_t pos_ = 0;
};

template <typename T>
T state_value(const std::map<std::string, std::string>& extra, const std::string& key,
              const std::string& where) {
  const auto it = extra.find(key);
  if (it == extra.end()) throw CorruptionError(where + "missing '" + key + "' in header");
  const auto v = text::parse_number<T>(it->second);
  if (!v) throw CorruptionError(where + "bad '" + key + "' in header");
  return *v;
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  std::string blob = write_config_blob(ckpt.config);
  blob += "epoch = " + std::to_string(ckpt.epoch) + "\n";
  blob += "rng_state = " + std::to_string(ckpt.rng_state) + "\n";
  blob += "optimizer = " + std::string(ckpt.adam ? "adam" : "none") + "\n";
  if (ckpt.adam) blob += "adam_step = " + std::to_string(ckpt.adam->step) + "\n";

  Writer w;
  w.bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(blob.size());
  w.bytes(blob.data(), blob.size());
  for (const auto& [name, t] : ckpt.params.tensors()) w.tensor("param/" + name, t);
  if (ckpt.adam) {
    for (const auto& [name, t] : ckpt.adam->m) w.tensor("adam.m/" + name, t);
    for (const auto& [name, t] : ckpt.adam->v) w.tensor("adam.v/" + name, t);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
  if (!out) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string buf(std::istreambuf_iterator<char>(in), {});
  const std::string where = path.string() + ": ";
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw FormatError(where + "not a checkpoint (bad magic)");
  }
  Reader r(buf, where);
  r.str(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError(where + "checkpoint version " + std::to_string(version) +
                       ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  const auto blob_len = r.get<std::uint64_t>();
  r.need(blob_len);
  const std::string blob = r.str(static_cast<std::size_t>(blob_len));

  Checkpoint ckpt;
  std::map<std::string, std::string> extra;
  try {
    ckpt.config = parse_config_blob(blob, &extra);
  } catch (const ConfigError& e) {
    throw CorruptionError(where + e.what());
  }
  ckpt.epoch = state_value<std::size_t>(extra, "epoch", where);
  ckpt.rng_state = state_value<std::uint64_t>(extra, "rng_state", where);
  const bool has_adam = extra.contains("optimizer") && extra.at("optimizer") == "adam";
  if (has_adam) {
    ckpt.adam.emplace();
    ckpt.adam->step = state_value<std::uint64_t>(extra, "adam_step", where);
  }

  while (!r.done()) {
    auto [name, t] = r.tensor();
    const auto slash = name.find('/');
    const std::string kind = name.substr(0, slash), key = slash == std::string::npos ? "" : name.substr(slash + 1);
    if (kind == "param") {
      ckpt.params.tensors().emplace(key, std::move(t));
    } else if (has_adam && kind == "adam.m") {
      ckpt.adam->m.emplace(key, std::move(t));
    } else if (has_adam && kind == "adam.v") {
      ckpt.adam->v.emplace(key, std::move(t));
    } else {
      throw CorruptionError(where + "unexpected record '" + name + "'");
    }
  }

  try {
    ckpt.params.check_layout(ckpt.config.model);
    if (ckpt.adam) {
      for (const auto* moments : {&ckpt.adam->m, &ckpt.adam->v}) {
        ModelParams<float>(*moments).check_layout(ckpt.config.model);
      }
    }
  } catch (const ConfigError& e) {
    throw CorruptionError(where + "records do not match the stored config: " + e.what());
  }
  return ckpt;
}

}  // namespace vitals
