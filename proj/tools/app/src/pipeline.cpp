#include "partedit/app/pipeline.hpp"

#include "partedit/app/harness.hpp"
#include "partedit/checkpoint.hpp"
#include "partedit/json_io.hpp"
#include "partedit/nn.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

namespace partedit::app {

namespace {

constexpr std::uint64_t kAutoencoderStream = 0xAE01;
constexpr std::uint64_t kBenchmarkStream = 0xBE01;
constexpr std::uint64_t kEditStream = 0xED01;

void log(const CommandOptions& opt, const std::string& line) {
  if (opt.log) *opt.log << line << std::endl;
}

std::string header_line(const RunConfig& c) {
  auto h = provenance(c);
  nlohmann::ordered_json j{{"record", "header"}};
  for (const auto& [k, v] : h.items()) j[k] = v;
  return j.dump() + "\n";
}

std::vector<Triplet> load_run_dataset(const RunConfig& c) {
  const auto path = dataset_path(c);
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("missing dataset " + path.string() + " (run generate first)");
  }
  return load_dataset(path);
}

Autoencoder load_run_autoencoder(const RunConfig& c) {
  const auto path = autoencoder_path(c);
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("missing autoencoder " + path.string() + " (run pretrain first)");
  }
  return Autoencoder::from_checkpoint(read_file(path));
}

JointSpaceModel load_run_model(const RunConfig& c, const VariantSpec& v, std::uint64_t seed) {
  const auto path = jointspace_path(c, v, seed);
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("missing joint-space checkpoint " + path.string() + " (run train first)");
  }
  return JointSpaceModel::from_checkpoint(read_file(path));
}

bool matches(const nlohmann::ordered_json& stored, const nlohmann::ordered_json& wanted) {
  if (!stored.is_object()) return false;
  for (const auto& [k, v] : wanted.items()) {
    if (!stored.contains(k) || stored.at(k) != v) return false;
  }
  return true;
}

nlohmann::ordered_json row_identity(const RunConfig& c, const VariantSpec& v, std::uint64_t seed) {
  return {{"variant", v.name},
          {"mining", to_string(v.mining)},
          {"lambda", v.lambda},
          {"seed", seed},
          {"checkpoint", jointspace_path(c, v, seed).filename().string()}};
}

nlohmann::ordered_json aggregate_json(std::span<const PepEntry> entries) {
  nlohmann::ordered_json j;
  try {
    const auto a = aggregate(entries);
    j["mpep"] = a.mpep;
    j["mdv"] = a.mdv;
    j["defined"] = a.defined;
    j["flagged"] = a.flagged;
  } catch (const AggregationError& e) {
    j["mpep"] = nullptr;
    j["mdv"] = nullptr;
    j["error"] = e.what();
  }
  return j;
}

double fraction(std::size_t a, std::size_t n) {
  return n == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(n);
}

// Shared inputs of the editing commands.
struct EditWorld {
  std::vector<Triplet> data;
  Autoencoder ae;
  NeighborIndex index;
  ValidityEnvelope envelope;
  EditConfig edit;

  explicit EditWorld(const RunConfig& c)
      : data(load_run_dataset(c)),
        ae(load_run_autoencoder(c)),
        index(build_neighbor_index(ae, data)),
        envelope(distinct_shapes(data, Split::train)),
        edit(resolve_edit_config(c.edit, data, c.delta_fraction)) {}
};

}  // namespace

std::filesystem::path dataset_path(const RunConfig& c) { return c.out / "dataset.jsonl"; }
std::filesystem::path autoencoder_path(const RunConfig& c) { return c.out / "autoencoder.ckpt"; }
std::filesystem::path jointspace_path(const RunConfig& c, const VariantSpec& v, std::uint64_t seed) {
  return c.out / ("jointspace-" + v.name + "-s" + std::to_string(seed) + ".ckpt");
}

nlohmann::ordered_json provenance(const RunConfig& c) {
  return {{"config_hash", config_hash(c)}, {"seed", c.seed}};
}

void write_json_output(const RunConfig& c, const std::string& name, nlohmann::ordered_json content) {
  auto j = provenance(c);
  for (const auto& [k, v] : content.items()) j[k] = v;
  std::filesystem::create_directories(c.out);
  write_file_atomic(c.out / name, j.dump(2) + "\n");
}

void cmd_generate(const RunConfig& c, const CommandOptions& opt) {
  c.validate();
  const auto data = generate_dataset(c.dataset, c.seed);
  std::ostringstream out;
  out << header_line(c);
  write_dataset(out, data);
  std::filesystem::create_directories(c.out);
  write_file_atomic(dataset_path(c), out.str());
  log(opt, "generate: " + std::to_string(data.size()) + " triplets -> " + dataset_path(c).string());
}

void cmd_pretrain(const RunConfig& c, const CommandOptions& opt) {
  c.validate();
  const auto path = autoencoder_path(c);
  const auto prov = provenance(c);
  if (opt.reuse && std::filesystem::exists(path)) {
    const auto existing = Autoencoder::from_checkpoint(read_file(path));
    if (matches(existing.metadata.provenance, prov)) {
      log(opt, "pretrain: reusing " + path.string());
      return;
    }
  }
  const auto data = load_run_dataset(c);
  const auto shapes = autoencoder_shapes(data);
  const auto t0 = std::chrono::steady_clock::now();
  auto ae = train_autoencoder(shapes.train, shapes.holdout, c.autoencoder,
                              nn::derive_seed(c.seed, kAutoencoderStream));
  ae.metadata.provenance = prov;
  write_file_atomic(path, ae.checkpoint_bytes());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log(opt, "pretrain: held-out mse " + std::to_string(ae.metadata.holdout_mse) + " in " +
               std::to_string(secs) + " s -> " + path.string());
}

void cmd_train(const RunConfig& c, const CommandOptions& opt) {
  c.validate();
  const auto data = load_run_dataset(c);
  const auto ae = load_run_autoencoder(c);
  for (std::uint64_t seed : c.seeds) {
    for (const auto& v : c.variants) {
      const auto path = jointspace_path(c, v, seed);
      auto prov = provenance(c);
      prov["variant"] = v.name;
      prov["training_seed"] = seed;
      if (opt.reuse && std::filesystem::exists(path)) {
        const auto existing = JointSpaceModel::from_checkpoint(read_file(path));
        if (matches(existing.metadata.provenance, prov)) {
          log(opt, "train: reusing " + path.string());
          continue;
        }
      }
      JointSpaceConfig cfg = c.jointspace;
      cfg.mining = v.mining;
      cfg.lambda = v.lambda;
      const auto t0 = std::chrono::steady_clock::now();
      auto model = train_jointspace(data, ae, cfg, seed);
      model.metadata.provenance = prov;
      write_file_atomic(path, model.checkpoint_bytes());
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log(opt, "train: " + v.name + " seed " + std::to_string(seed) + " val acc " +
                   std::to_string(model.metadata.best_val_accuracy) + " in " + std::to_string(secs) +
                   " s -> " + path.string());
    }
  }
}

nlohmann::ordered_json cmd_eval(const RunConfig& c, const CommandOptions& opt) {
  c.validate();
  const auto data = load_run_dataset(c);
  const auto ae = load_run_autoencoder(c);
  const auto latents = encode_triplets(ae, data);

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::map<std::string, std::vector<double>> by_variant;
  for (std::uint64_t seed : c.seeds) {
    for (const auto& v : c.variants) {
      const auto model = load_run_model(c, v, seed);
      auto row = row_identity(c, v, seed);
      row["test_accuracy"] = evaluate_accuracy(model, data, latents, Split::test);
      row["val_accuracy"] = model.metadata.best_val_accuracy;
      row["best_epoch"] = model.metadata.best_epoch;
      by_variant[v.name].push_back(row["test_accuracy"].get<double>());
      log(opt, "eval: " + v.name + " seed " + std::to_string(seed) + " test acc " +
                   std::to_string(row["test_accuracy"].get<double>()));
      rows.push_back(std::move(row));
    }
  }
  nlohmann::ordered_json untrained = nlohmann::ordered_json::array();
  std::vector<double> untrained_acc;
  for (std::uint64_t seed : c.seeds) {
    const JointSpaceModel fresh(c.jointspace, ae.latent_dim(), seed);
    const double acc = evaluate_accuracy(fresh, data, latents, Split::test);
    untrained_acc.push_back(acc);
    untrained.push_back({{"seed", seed}, {"test_accuracy", acc}});
  }
  nlohmann::ordered_json medians = nlohmann::ordered_json::array();
  for (const auto& v : c.variants) {
    medians.push_back({{"variant", v.name}, {"test_accuracy", median(by_variant[v.name])}});
  }
  nlohmann::ordered_json out{{"rows", rows},
                             {"untrained", untrained},
                             {"untrained_median", median(untrained_acc)},
                             {"medians", medians}};
  write_json_output(c, "eval.json", out);
  return out;
}

nlohmann::ordered_json cmd_benchmark(const RunConfig& c, const CommandOptions& opt) {
  c.validate();
  const EditWorld world(c);
  const auto items = benchmark_items(world.data, c.benchmark_edits);
  const std::uint64_t edit_seed = nn::derive_seed(c.seed, kBenchmarkStream);

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::map<std::string, std::vector<double>> mpep, mdv, validity;
  std::map<std::string, std::vector<std::vector<double>>> round_mpep;
  nlohmann::ordered_json ablations = nlohmann::ordered_json::array();
  std::map<std::string, std::vector<double>> ablation_mdv, ablation_validity;
  const VariantSpec& ablated = c.variants.front();

  for (std::uint64_t seed : c.seeds) {
    for (const auto& v : c.variants) {
      const auto model = load_run_model(c, v, seed);
      const EditInputs in{model, world.ae, world.index};
      const auto t0 = std::chrono::steady_clock::now();
      const auto single = run_edits(in, items, world.edit, world.envelope, c.swell, edit_seed);
      const auto iter = run_iterative(in, items, world.edit, world.envelope, c.swell, c.rounds, edit_seed);

      auto row = row_identity(c, v, seed);
      const auto agg = aggregate_json(single.entries);
      for (const auto& [k, val] : agg.items()) row[k] = val;
      row["validity"] = single.validity();
      row["failed"] = single.failed;
      row["steps"] = step_stats_json(single.stats);
      nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
      std::vector<double> per_round;
      for (std::size_t r = 0; r < c.rounds; ++r) {
        auto rj = aggregate_json(iter.rounds[r]);
        rj["round"] = r + 1;
        rj["validity"] = fraction(iter.valid[r], items.size());
        per_round.push_back(rj["mpep"].is_number() ? rj["mpep"].get<double>() : std::nan(""));
        rounds.push_back(std::move(rj));
      }
      row["rounds"] = rounds;
      round_mpep[v.name].push_back(per_round);
      if (row["mpep"].is_number()) {
        mpep[v.name].push_back(row["mpep"].get<double>());
        mdv[v.name].push_back(row["mdv"].get<double>());
      }
      validity[v.name].push_back(single.validity());
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log(opt, "benchmark: " + v.name + " seed " + std::to_string(seed) + " mPEP " +
                   (row["mpep"].is_number() ? std::to_string(row["mpep"].get<double>()) : "undefined") +
                   " in " + std::to_string(secs) + " s");

      if (&v == &ablated) {
        ablation_mdv["full"].push_back(row["mdv"].is_number() ? row["mdv"].get<double>() : std::nan(""));
        ablation_validity["full"].push_back(single.validity());
        ablations.push_back({{"variant", v.name}, {"seed", seed}, {"mode", "full"}, {"mpep", row["mpep"]},
                             {"mdv", row["mdv"]}, {"validity", single.validity()}});
        for (const char* mode : {"no_odessa", "no_nse"}) {
          EditConfig cfg = world.edit;
          if (std::string_view(mode) == "no_odessa") cfg.odessa_enabled = false;
          if (std::string_view(mode) == "no_nse") cfg.nse_enabled = false;
          const auto res = run_edits(in, items, cfg, world.envelope, c.swell, edit_seed);
          auto aj = aggregate_json(res.entries);
          ablation_mdv[mode].push_back(aj["mdv"].is_number() ? aj["mdv"].get<double>() : std::nan(""));
          ablation_validity[mode].push_back(res.validity());
          ablations.push_back({{"variant", v.name}, {"seed", seed}, {"mode", mode}, {"mpep", aj["mpep"]},
                               {"mdv", aj["mdv"]}, {"validity", res.validity()}});
        }
      }
      rows.push_back(std::move(row));
    }
  }

  nlohmann::ordered_json medians = nlohmann::ordered_json::array();
  for (const auto& v : c.variants) {
    nlohmann::ordered_json m{{"variant", v.name}};
    m["mpep"] = mpep[v.name].empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(median(mpep[v.name]));
    m["mdv"] = mdv[v.name].empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(median(mdv[v.name]));
    m["validity"] = median(validity[v.name]);
    nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < c.rounds; ++r) {
      std::vector<double> vals;
      for (const auto& per_seed : round_mpep[v.name]) vals.push_back(per_seed[r]);
      rounds.push_back(median(vals));
    }
    m["round_mpep"] = rounds;
    medians.push_back(std::move(m));
  }
  nlohmann::ordered_json ablation_medians;
  for (const char* mode : {"full", "no_odessa", "no_nse"}) {
    ablation_medians[mode] = {{"mdv", median(ablation_mdv[mode])},
                              {"validity", median(ablation_validity[mode])}};
  }
  nlohmann::ordered_json out{{"delta", world.edit.delta},
                             {"edits", items.size()},
                             {"rounds", c.rounds},
                             {"swell", c.swell},
                             {"rows", rows},
                             {"medians", medians},
                             {"ablations", {{"variant", ablated.name}, {"rows", ablations},
                                            {"medians", ablation_medians}}}};
  write_json_output(c, "benchmark.json", out);
  return out;
}

nlohmann::ordered_json cmd_report(const RunConfig& c, const CommandOptions& opt) {
  c.validate();
  const auto data = load_run_dataset(c);
  std::vector<Triplet> test;
  for (const auto& t : data) {
    if (t.split == Split::test) test.push_back(t);
  }
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::map<std::string, std::vector<double>> indep, spec;
  for (std::uint64_t seed : c.seeds) {
    for (const auto& v : c.variants) {
      const auto model = load_run_model(c, v, seed);
      const auto orth = orthogonality_report(model, test);
      const auto act = expert_activation_report(model, test);
      auto row = row_identity(c, v, seed);
      row["independent_mean_abs_cos"] = orth.independent_mean;
      row["independent_pairs"] = orth.independent_pairs;
      row["independent_histogram"] = orth.independent_histogram;
      row["same_axis_mean_abs_cos"] = orth.same_axis_mean;
      row["same_axis_pairs"] = orth.same_axis_pairs;
      row["same_axis_histogram"] = orth.same_axis_histogram;
      row["specialization"] = act.specialization;
      nlohmann::ordered_json table = nlohmann::ordered_json::array();
      for (std::size_t a = 0; a < act.adjectives.size(); ++a) {
        table.push_back({{"adjective", act.adjectives[a]}, {"count", act.counts[a]}, {"weights", act.rows[a]}});
      }
      row["expert_activation"] = table;
      const std::string emb_name = "embeddings-" + v.name + "-s" + std::to_string(seed) + ".jsonl";
      std::ostringstream emb;
      emb << header_line(c);
      for (const auto& e : orth.embeddings) {
        nlohmann::ordered_json ej{{"text", e.text},
                                  {"part", to_string(e.part)},
                                  {"attribute", to_string(e.attribute)},
                                  {"direction", to_string(e.direction)},
                                  {"vector", e.vector}};
        emb << ej.dump() << '\n';
      }
      std::filesystem::create_directories(c.out);
      write_file_atomic(c.out / emb_name, emb.str());
      row["embeddings"] = emb_name;
      indep[v.name].push_back(orth.independent_mean);
      spec[v.name].push_back(act.specialization);
      log(opt, "report: " + v.name + " seed " + std::to_string(seed) + " independent |cos| " +
                   std::to_string(orth.independent_mean) + " specialization " +
                   std::to_string(act.specialization));
      rows.push_back(std::move(row));
    }
  }
  nlohmann::ordered_json medians = nlohmann::ordered_json::array();
  for (const auto& v : c.variants) {
    medians.push_back({{"variant", v.name},
                       {"independent_mean_abs_cos", median(indep[v.name])},
                       {"specialization", median(spec[v.name])}});
  }
  nlohmann::ordered_json out{{"rows", rows}, {"medians", medians}};
  write_json_output(c, "report.json", out);
  return out;
}

nlohmann::ordered_json cmd_edit(const RunConfig& c, const EditRequest& req, const CommandOptions& opt) {
  c.validate();
  if (req.utterance.empty()) throw ConfigError("edit needs an utterance");
  const EditWorld world(c);
  const auto& v = req.variant.empty() ? c.variants.front() : c.variant(req.variant);
  const auto model = load_run_model(c, v, c.seeds.front());

  ShapeParams source;
  if (req.source == "chair") {
    source = midpoint_chair();
  } else if (req.source == "table") {
    source = midpoint_table();
  } else if (req.source.rfind("test:", 0) == 0) {
    const auto i = std::stoul(req.source.substr(5));
    source = benchmark_items(world.data, i + 1).back().source;
  } else {
    std::ifstream in(req.source);
    if (!in) throw ConfigError("cannot open source params " + req.source);
    source = params_from_json(nlohmann::json::parse(in));
  }
  validate(source);

  EditConfig cfg = world.edit;
  if (req.steps) cfg.steps = *req.steps;
  const EditInputs in{model, world.ae, world.index};
  const auto trace = edit(in, world.ae.encode(source), source, req.utterance, cfg,
                          nn::derive_seed(c.seed, kEditStream));

  std::ostringstream tr;
  tr << header_line(c);
  write_edit_trace(tr, trace);
  std::filesystem::create_directories(c.out);
  write_file_atomic(c.out / "edit-trace.jsonl", tr.str());

  const auto entry = pep_entry(realize_shape(trace.source_params), realize_shape(trace.final_step().params),
                               req.utterance, c.swell);
  std::ostringstream pep;
  pep << header_line(c);
  auto extra = provenance(c);
  extra["checkpoint"] = jointspace_path(c, v, c.seeds.front()).filename().string();
  std::vector<PepEntry> entries{entry};
  write_pep_report(pep, entries, c.swell, extra);
  write_file_atomic(c.out / "edit-pep.jsonl", pep.str());
  log(opt, "edit: h " + std::to_string(trace.steps.front().h) + " -> " + std::to_string(trace.final_step().h) +
               ", pep flag " + std::string(to_string(entry.flag)));
  return pep_entry_to_json(entry);
}

}  // namespace partedit::app
