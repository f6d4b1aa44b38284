#pragma once

#include "partedit/app/config.hpp"

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

namespace partedit::app {

// Output layout under RunConfig::out.
std::filesystem::path dataset_path(const RunConfig& c);
std::filesystem::path autoencoder_path(const RunConfig& c);
std::filesystem::path jointspace_path(const RunConfig& c, const VariantSpec& v, std::uint64_t seed);

/// {"config_hash", "seed"} stamped into every output.
nlohmann::ordered_json provenance(const RunConfig& c);

struct CommandOptions {
  /// Keep an existing checkpoint whose provenance matches this config instead of retraining.
  bool reuse = false;
  /// Progress lines go here when set.
  std::ostream* log = nullptr;
};

void cmd_generate(const RunConfig& c, const CommandOptions& opt = {});
void cmd_pretrain(const RunConfig& c, const CommandOptions& opt = {});
/// Trains every configured variant for every seed in c.seeds.
void cmd_train(const RunConfig& c, const CommandOptions& opt = {});

/// Accuracy rows per variant and seed, untrained baselines and per-variant medians.
nlohmann::ordered_json cmd_eval(const RunConfig& c, const CommandOptions& opt = {});
/// Single-edit mPEP/mDv table, iterative rounds table and NSE/ODESSA ablations.
nlohmann::ordered_json cmd_benchmark(const RunConfig& c, const CommandOptions& opt = {});
/// Expert activation, orthogonality statistics and raw embedding export.
nlohmann::ordered_json cmd_report(const RunConfig& c, const CommandOptions& opt = {});

struct EditRequest {
  std::string variant;
  /// "chair" or "table" (midpoint shapes), "test:<i>" (i-th benchmark source),
  /// or a path to a params JSON file.
  std::string source = "chair";
  std::string utterance;
  std::optional<std::size_t> steps;
};
/// Writes edit-trace.jsonl and edit-pep.jsonl; returns the PEP report entry.
nlohmann::ordered_json cmd_edit(const RunConfig& c, const EditRequest& req, const CommandOptions& opt = {});

/// Writes content atomically after stamping it with provenance.
void write_json_output(const RunConfig& c, const std::string& name, nlohmann::ordered_json content);

}  // namespace partedit::app
