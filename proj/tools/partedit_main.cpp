// partedit: dataset generation, training, evaluation, editing and the edit server.

#include "partedit/app/config.hpp"
#include "partedit/app/harness.hpp"
#include "partedit/app/http_server.hpp"
#include "partedit/app/pipeline.hpp"
#include "partedit/app/service.hpp"
#include "partedit/checkpoint.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

namespace {

using namespace partedit;

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

app::HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

struct ServeArgs {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::string checkpoint;
  std::string autoencoder;
  std::string dataset;
  std::string cors = "*";
};

int serve(const app::RunConfig& cfg, const ServeArgs& args) {
  for (const auto* p : {&args.checkpoint, &args.autoencoder, &args.dataset}) {
    if (p->empty()) throw ConfigError("serve needs --checkpoint, --autoencoder and --dataset");
    if (!std::filesystem::exists(*p)) throw std::runtime_error("missing file " + *p);
  }
  const std::string ckpt_hash = file_sha256(args.checkpoint);
  const std::string ae_hash = file_sha256(args.autoencoder);
  auto model = std::make_shared<const JointSpaceModel>(JointSpaceModel::from_checkpoint(read_file(args.checkpoint)));
  auto ae = std::make_shared<const Autoencoder>(Autoencoder::from_checkpoint(read_file(args.autoencoder)));
  const auto data = load_dataset(args.dataset);
  auto index = std::make_shared<const NeighborIndex>(app::build_neighbor_index(*ae, data));
  app::ServiceOptions opts;
  opts.edit = app::resolve_edit_config(cfg.edit, data, cfg.delta_fraction);
  opts.swell = cfg.swell;
  opts.seed = cfg.seed;
  opts.checkpoint_hash = ckpt_hash;
  app::EditService service(model, ae, index, opts);
  app::HttpServer server(service, args.cors);
  const int port = server.bind(args.host, args.port);
  if (port < 0) throw std::runtime_error("cannot bind " + args.host + ":" + std::to_string(args.port));
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "serving on " << args.host << ":" << port << std::endl;
  server.listen();
  g_server = nullptr;
  if (file_sha256(args.checkpoint) != ckpt_hash || file_sha256(args.autoencoder) != ae_hash) {
    std::cerr << "error: checkpoint files changed while serving" << std::endl;
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Language-driven part-local shape editing"};
  cli.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool reuse = false;
  cli.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  cli.add_option("--seed", seed, "Overrides the configured run seed");
  cli.add_option("--out", out, "Output directory (overrides the configured one)");
  cli.add_flag("--reuse", reuse, "Keep checkpoints already trained under the same config hash");

  auto* config_cmd = cli.add_subcommand("config", "Print the effective configuration and its hash");
  auto* generate = cli.add_subcommand("generate", "Generate the synthetic triplet dataset");
  auto* pretrain = cli.add_subcommand("pretrain", "Train the shape autoencoder");
  auto* train = cli.add_subcommand("train", "Train every configured joint-space variant and seed");
  auto* eval = cli.add_subcommand("eval", "Source/target classification accuracy table");
  auto* benchmark = cli.add_subcommand("benchmark", "Edit locality, iterative and ablation tables");
  auto* report = cli.add_subcommand("report", "Expert activation, orthogonality and embeddings");
  auto* pipeline = cli.add_subcommand("pipeline", "generate, pretrain, train, eval, benchmark and report");

  auto* edit_cmd = cli.add_subcommand("edit", "Run one edit and write its trace and PEP");
  app::EditRequest edit_req;
  std::size_t edit_steps = 0;
  edit_cmd->add_option("utterance", edit_req.utterance, "Edit description")->required();
  edit_cmd->add_option("--variant", edit_req.variant, "Variant name (default: first configured)");
  edit_cmd->add_option("--source", edit_req.source, "chair, table, test:<i> or a params JSON file");
  auto* steps_opt = edit_cmd->add_option("--steps", edit_steps, "Optimization steps");

  auto* serve_cmd = cli.add_subcommand("serve", "HTTP edit server");
  ServeArgs serve_args;
  serve_cmd->add_option("--host", serve_args.host);
  serve_cmd->add_option("--port", serve_args.port)->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--checkpoint", serve_args.checkpoint, "Joint-space checkpoint");
  serve_cmd->add_option("--autoencoder", serve_args.autoencoder, "Autoencoder checkpoint");
  serve_cmd->add_option("--dataset", serve_args.dataset, "Dataset for the neighbour index");
  serve_cmd->add_option("--cors-origin", serve_args.cors, "Allowed browser origin");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    app::RunConfig cfg = config_path.empty() ? app::RunConfig{} : app::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.out = out;
    cfg.validate();
    app::CommandOptions opt{reuse, &std::cerr};

    if (config_cmd->parsed()) {
      auto j = app::to_json(cfg);
      j["config_hash"] = app::config_hash(cfg);
      std::cout << j.dump(2) << '\n';
    } else if (generate->parsed()) {
      app::cmd_generate(cfg, opt);
    } else if (pretrain->parsed()) {
      app::cmd_pretrain(cfg, opt);
    } else if (train->parsed()) {
      app::cmd_train(cfg, opt);
    } else if (eval->parsed()) {
      std::cout << app::cmd_eval(cfg, opt).dump(2) << '\n';
    } else if (benchmark->parsed()) {
      std::cout << app::cmd_benchmark(cfg, opt).at("medians").dump(2) << '\n';
    } else if (report->parsed()) {
      std::cout << app::cmd_report(cfg, opt).at("medians").dump(2) << '\n';
    } else if (pipeline->parsed()) {
      app::cmd_generate(cfg, opt);
      app::cmd_pretrain(cfg, opt);
      app::cmd_train(cfg, opt);
      app::cmd_eval(cfg, opt);
      app::cmd_benchmark(cfg, opt);
      app::cmd_report(cfg, opt);
    } else if (edit_cmd->parsed()) {
      if (steps_opt->count() > 0) edit_req.steps = edit_steps;
      std::cout << app::cmd_edit(cfg, edit_req, opt).dump(2) << '\n';
    } else if (serve_cmd->parsed()) {
      return serve(cfg, serve_args);
    }
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ValidityError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
