#include "vitals/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "vitals/error.hpp"
#include "vitals/text.hpp"

namespace vitals {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

template <typename T>
T number(const std::string& key, const std::string& value) {
  const auto v = text::parse_number<T>(value);
  if (!v) throw ConfigError("bad value '" + value + "' for " + key);
  return *v;
}

std::map<std::string, Setter> public_keys() {
  std::map<std::string, Setter> k;
  k["learning_rate"] = [](RunConfig& c, const std::string& v) {
    c.train.learning_rate = number<double>("learning_rate", v);
  };
  k["weight_decay"] = [](RunConfig& c, const std::string& v) {
    c.train.weight_decay = number<double>("weight_decay", v);
  };
  k["epochs"] = [](RunConfig& c, const std::string& v) {
    c.train.epochs = number<std::size_t>("epochs", v);
  };
  k["dropout"] = [](RunConfig& c, const std::string& v) {
    c.model.dropout_rate = number<double>("dropout", v);
  };
  k["seed"] = [](RunConfig& c, const std::string& v) {
    c.train.seed = number<std::uint64_t>("seed", v);
  };
  k["lambda"] = [](RunConfig& c, const std::string& v) {
    c.model.smooth_weight = number<double>("lambda", v);
  };
  k["tau"] = [](RunConfig& c, const std::string& v) {
    c.model.smooth_clamp = number<double>("tau", v);
  };
  k["layers"] = [](RunConfig& c, const std::string& v) {
    c.model.num_layers = number<std::size_t>("layers", v);
  };
  k["decoders"] = [](RunConfig& c, const std::string& v) {
    c.model.num_decoders = number<std::size_t>("decoders", v);
  };
  k["hidden_dim"] = [](RunConfig& c, const std::string& v) {
    c.model.hidden_dim = number<std::size_t>("hidden_dim", v);
  };
  k["phases"] = [](RunConfig& c, const std::string& v) {
    c.model.num_phases = number<std::size_t>("phases", v);
  };
  k["balancing"] = [](RunConfig& c, const std::string& v) {
    if (v == "class-weights") {
      c.train.balancing = Balancing::kClassWeights;
    } else if (v == "none") {
      c.train.balancing = Balancing::kNone;
    } else {
      throw ConfigError("balancing must be class-weights or none, got '" + v + "'");
    }
  };
  k["grad_clip"] = [](RunConfig& c, const std::string& v) {
    c.train.grad_clip = number<double>("grad_clip", v);
  };
  return k;
}

std::map<std::string, Setter> blob_keys() {
  std::map<std::string, Setter> k = public_keys();
  k["input_dim"] = [](RunConfig& c, const std::string& v) {
    c.model.input_dim = number<std::size_t>("input_dim", v);
  };
  k["max_frames"] = [](RunConfig& c, const std::string& v) {
    c.train.max_frames = number<std::size_t>("max_frames", v);
  };
  k["decoder_query"] = [](RunConfig& c, const std::string& v) {
    if (v == "probabilities") {
      c.model.decoder_query = QuerySource::kProbabilities;
    } else if (v == "logits") {
      c.model.decoder_query = QuerySource::kLogits;
    } else {
      throw ConfigError("unknown decoder_query '" + v + "'");
    }
  };
  return k;
}

RunConfig apply(const std::vector<text::KeyValue>& entries,
                const std::map<std::string, Setter>& keys, const std::string& source) {
  RunConfig c;
  std::set<std::string> seen;
  for (const text::KeyValue& kv : entries) {
    const std::string where = source + ":" + std::to_string(kv.line) + ": ";
    const auto it = keys.find(kv.key);
    if (it == keys.end()) throw ConfigError(where + "unknown key '" + kv.key + "'");
    if (!seen.insert(kv.key).second) throw ConfigError(where + "repeated key '" + kv.key + "'");
    try {
      it->second(c, kv.value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

}  // namespace

std::string balancing_name(Balancing b) {
  return b == Balancing::kClassWeights ? "class-weights" : "none";
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(grad_clip >= 0)) throw ConfigError("grad_clip must be >= 0");
  if (max_frames < 1) throw ConfigError("max_frames must be positive");
}

RunConfig parse_run_config(std::istream& in, const std::string& source) {
  return apply(text::parse_key_values(in, source), public_keys(), source);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_run_config(in, path.string());
}

std::string write_config_blob(const RunConfig& c) {
  std::ostringstream out;
  const auto put = [&](const char* key, const std::string& v) { out << key << " = " << v << '\n'; };
  const auto num = [](double v) { return text::format_number(v); };
  put("input_dim", std::to_string(c.model.input_dim));
  put("hidden_dim", std::to_string(c.model.hidden_dim));
  put("layers", std::to_string(c.model.num_layers));
  put("decoders", std::to_string(c.model.num_decoders));
  put("phases", std::to_string(c.model.num_phases));
  put("dropout", num(c.model.dropout_rate));
  put("lambda", num(c.model.smooth_weight));
  put("tau", num(c.model.smooth_clamp));
  put("decoder_query",
      c.model.decoder_query == QuerySource::kLogits ? "logits" : "probabilities");
  put("learning_rate", num(c.train.learning_rate));
  put("weight_decay", num(c.train.weight_decay));
  put("epochs", std::to_string(c.train.epochs));
  put("seed", std::to_string(c.train.seed));
  put("balancing", balancing_name(c.train.balancing));
  put("grad_clip", num(c.train.grad_clip));
  put("max_frames", std::to_string(c.train.max_frames));
  return out.str();
}

RunConfig parse_config_blob(const std::string& blob, std::map<std::string, std::string>* extra) {
  std::istringstream in(blob);
  const auto keys = blob_keys();
  std::vector<text::KeyValue> known;
  for (text::KeyValue& kv : text::parse_key_values(in, "checkpoint config")) {
    if (extra && !keys.contains(kv.key)) {
      (*extra)[kv.key] = kv.value;
    } else {
      known.push_back(std::move(kv));
    }
  }
  return apply(known, keys, "checkpoint config");
}

}  // namespace vitals
