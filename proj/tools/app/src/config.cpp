#include "partedit/app/config.hpp"

#include "partedit/checkpoint.hpp"

#include <fstream>
#include <set>

namespace partedit::app {

namespace {

using Json = nlohmann::json;

// Reads the keys of one object, rejecting any key not consumed.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }
  ~Reader() = default;
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError(where() + key + ": " + e.what());
    }
  }
  [[nodiscard]] const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  [[nodiscard]] std::string prefix(const char* key) const { return where() + key; }
  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key " + where() + k);
    }
  }

 private:
  [[nodiscard]] std::string where() const { return path_.empty() ? "" : path_ + "."; }
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

nlohmann::ordered_json dataset_json(const DatasetConfig& d) {
  return {{"contexts", d.contexts},
          {"multi_axis_fraction", d.multi_axis_fraction},
          {"second_labeler_probability", d.second_labeler_probability},
          {"factor_min", d.factor_min},
          {"factor_max", d.factor_max},
          {"chair_fraction", d.chair_fraction},
          {"arms_probability", d.arms_probability},
          {"labeler_pool", d.labeler_pool},
          {"adverb_probability", d.adverb_probability}};
}

void read_dataset_config(const Json& j, DatasetConfig& d) {
  Reader r(j, "dataset");
  r.get("contexts", d.contexts);
  r.get("multi_axis_fraction", d.multi_axis_fraction);
  r.get("second_labeler_probability", d.second_labeler_probability);
  r.get("factor_min", d.factor_min);
  r.get("factor_max", d.factor_max);
  r.get("chair_fraction", d.chair_fraction);
  r.get("arms_probability", d.arms_probability);
  r.get("labeler_pool", d.labeler_pool);
  r.get("adverb_probability", d.adverb_probability);
  r.finish();
}

nlohmann::ordered_json autoencoder_json(const AutoencoderConfig& a) {
  return {{"latent_dim", a.latent_dim},         {"hidden", a.hidden},
          {"epochs", a.epochs},                 {"batch_size", a.batch_size},
          {"learning_rate", a.learning_rate},   {"final_learning_rate", a.final_learning_rate},
          {"target_mse", a.target_mse}};
}

void read_autoencoder_config(const Json& j, AutoencoderConfig& a) {
  Reader r(j, "autoencoder");
  r.get("latent_dim", a.latent_dim);
  r.get("hidden", a.hidden);
  r.get("epochs", a.epochs);
  r.get("batch_size", a.batch_size);
  r.get("learning_rate", a.learning_rate);
  r.get("final_learning_rate", a.final_learning_rate);
  r.get("target_mse", a.target_mse);
  r.finish();
}

nlohmann::ordered_json jointspace_json(const JointSpaceConfig& c) {
  return {{"experts", c.experts},         {"joint_dim", c.joint_dim},   {"embed_dim", c.embed_dim},
          {"max_tokens", c.max_tokens},   {"layers", c.layers},         {"heads", c.heads},
          {"ff_dim", c.ff_dim},           {"expert_hidden", c.expert_hidden},
          {"epochs", c.epochs},           {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate}};
}

void read_jointspace_config(const Json& j, JointSpaceConfig& c) {
  Reader r(j, "jointspace");
  r.get("experts", c.experts);
  r.get("joint_dim", c.joint_dim);
  r.get("embed_dim", c.embed_dim);
  r.get("max_tokens", c.max_tokens);
  r.get("layers", c.layers);
  r.get("heads", c.heads);
  r.get("ff_dim", c.ff_dim);
  r.get("expert_hidden", c.expert_hidden);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("learning_rate", c.learning_rate);
  r.finish();
}

nlohmann::ordered_json edit_json(const EditConfig& e) {
  return {{"neighbors", e.neighbors},           {"steps", e.steps},
          {"gamma", e.gamma},                   {"delta", e.delta},
          {"nse_enabled", e.nse_enabled},       {"odessa_enabled", e.odessa_enabled},
          {"fixed_step", e.fixed_step},         {"eta_cap_factor", e.eta_cap_factor}};
}

void read_edit_config(const Json& j, EditConfig& e) {
  Reader r(j, "edit");
  r.get("neighbors", e.neighbors);
  r.get("steps", e.steps);
  r.get("gamma", e.gamma);
  r.get("delta", e.delta);
  r.get("nse_enabled", e.nse_enabled);
  r.get("odessa_enabled", e.odessa_enabled);
  r.get("fixed_step", e.fixed_step);
  r.get("eta_cap_factor", e.eta_cap_factor);
  r.finish();
}

}  // namespace

void RunConfig::validate() const {
  dataset.validate();
  try {
    autoencoder.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  jointspace.validate();
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (variants.empty()) throw ConfigError("variants must list at least one variant");
  std::set<std::string> names;
  for (const auto& v : variants) {
    if (v.name.empty()) throw ConfigError("variant name must not be empty");
    if (!names.insert(v.name).second) throw ConfigError("duplicate variant name " + v.name);
    if (!(v.lambda >= 0.0)) throw ConfigError("variant " + v.name + ": lambda must be >= 0");
  }
  if (edit.neighbors == 0) throw ConfigError("edit.neighbors must be at least 1");
  if (!(edit.gamma > 0.0)) throw ConfigError("edit.gamma must be positive");
  if (!(edit.delta >= 0.0)) throw ConfigError("edit.delta must be >= 0 (0 derives it)");
  if (!(edit.fixed_step > 0.0)) throw ConfigError("edit.fixed_step must be positive");
  if (!(edit.eta_cap_factor > 0.0)) throw ConfigError("edit.eta_cap_factor must be positive");
  if (!(delta_fraction > 0.0)) throw ConfigError("delta_fraction must be positive");
  if (benchmark_edits == 0) throw ConfigError("benchmark_edits must be positive");
  if (rounds == 0) throw ConfigError("rounds must be positive");
  if (!(swell >= 0.0)) throw ConfigError("swell must be >= 0");
}

const VariantSpec& RunConfig::variant(std::string_view name) const {
  for (const auto& v : variants) {
    if (v.name == name) return v;
  }
  throw ConfigError("no variant named " + std::string(name));
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["dataset"] = dataset_json(c.dataset);
  j["autoencoder"] = autoencoder_json(c.autoencoder);
  j["jointspace"] = jointspace_json(c.jointspace);
  auto& vs = j["variants"] = nlohmann::ordered_json::array();
  for (const auto& v : c.variants) {
    vs.push_back({{"name", v.name}, {"mining", to_string(v.mining)}, {"lambda", v.lambda}});
  }
  j["edit"] = edit_json(c.edit);
  j["delta_fraction"] = c.delta_fraction;
  j["benchmark_edits"] = c.benchmark_edits;
  j["rounds"] = c.rounds;
  j["swell"] = c.swell;
  j["out"] = c.out.string();
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  Reader r(j, "");
  r.get("seed", c.seed);
  r.get("seeds", c.seeds);
  if (const auto* d = r.child("dataset")) read_dataset_config(*d, c.dataset);
  if (const auto* a = r.child("autoencoder")) read_autoencoder_config(*a, c.autoencoder);
  if (const auto* s = r.child("jointspace")) read_jointspace_config(*s, c.jointspace);
  if (const auto* vs = r.child("variants")) {
    if (!vs->is_array()) throw ConfigError("variants must be an array");
    c.variants.clear();
    for (const auto& v : *vs) {
      Reader vr(v, "variants[]");
      VariantSpec spec;
      std::string mining = "multiutterance";
      vr.get("name", spec.name);
      vr.get("mining", mining);
      vr.get("lambda", spec.lambda);
      vr.finish();
      try {
        spec.mining = mining_from_string(mining);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("variants[].mining: ") + e.what());
      }
      c.variants.push_back(std::move(spec));
    }
  }
  if (const auto* e = r.child("edit")) read_edit_config(*e, c.edit);
  r.get("delta_fraction", c.delta_fraction);
  r.get("benchmark_edits", c.benchmark_edits);
  r.get("rounds", c.rounds);
  r.get("swell", c.swell);
  std::string out = c.out.string();
  r.get("out", out);
  c.out = out;
  r.finish();
  c.jointspace.mining = c.variants.front().mining;
  c.jointspace.lambda = c.variants.front().lambda;
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const RunConfig& c) {
  auto j = to_json(c);
  j.erase("out");
  // nlohmann::json keeps object keys sorted, so the dump is canonical.
  return sha256_hex(nlohmann::json(j).dump());
}

}  // namespace partedit::app
