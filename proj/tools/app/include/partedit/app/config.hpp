#pragma once

#include "partedit/autoencoder.hpp"
#include "partedit/dataset.hpp"
#include "partedit/editor.hpp"
#include "partedit/jointspace.hpp"

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace partedit::app {

/// One joint-space training variant. lambda = 0 is the no-LADIS baseline.
struct VariantSpec {
  std::string name;
  MiningStrategy mining = MiningStrategy::multiutterance;
  double lambda = 1.0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  /// Joint-space training seeds for the three-seed protocol.
  std::vector<std::uint64_t> seeds{1, 2, 3};
  DatasetConfig dataset;
  AutoencoderConfig autoencoder;
  JointSpaceConfig jointspace;
  std::vector<VariantSpec> variants{{"multiutterance", MiningStrategy::multiutterance, 1.0},
                                    {"shared_context", MiningStrategy::shared_context, 1.0},
                                    {"random", MiningStrategy::random, 1.0},
                                    {"none", MiningStrategy::multiutterance, 0.0}};
  /// edit.delta = 0 means: derive it from the training shapes with delta_fraction.
  EditConfig edit;
  double delta_fraction = 0.005;
  std::size_t benchmark_edits = 200;
  std::size_t rounds = 5;
  double swell = 0.02;
  std::filesystem::path out = "run";

  /// Throws ConfigError on the first invalid field.
  void validate() const;
  [[nodiscard]] const VariantSpec& variant(std::string_view name) const;
};

nlohmann::ordered_json to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// SHA-256 of the compact, key-sorted JSON form (the output directory is excluded).
std::string config_hash(const RunConfig& c);

}  // namespace partedit::app
