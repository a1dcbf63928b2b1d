// foc: generate synthetic fuzzy data, train, evaluate and export reports.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "foc/commands.hpp"
#include "foc/data.hpp"
#include "foc/trainer.hpp"

namespace {

foc::RunConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  foc::RunConfig cfg = path.empty() ? foc::RunConfig{} : foc::load_run_config(path);
  if (seed) cfg.seed = *seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fuzzy overclustering: semi-supervised training with normal and overclustering heads"};
  app.set_version_flag("--version", foc::version());
  app.require_subcommand(1);

  std::string config, data, out, checkpoint, metrics, eval_doc, scatter;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic fuzzy-mixture dataset (CSV)");
  gen->add_option("--config", config, "Run configuration (INI)");
  gen->add_option("--out", out, "Output CSV path")->required();
  gen->add_option("--seed", seed, "Override the config seed");

  auto* train = app.add_subcommand("train", "Train a model and write checkpoint, metrics log and manifest");
  train->add_option("--config", config, "Run configuration (INI)");
  train->add_option("--data", data, "Dataset CSV")->required();
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--checkpoint", checkpoint, "Initialise from this checkpoint");
  train->add_option("--seed", seed, "Override the config seed");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint; prints a JSON metrics document");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data, "Dataset CSV")->required();
  eval->add_option("--config", config, "Run configuration (INI)");
  eval->add_option("--out", out, "Also write the document to this path");

  auto* report = app.add_subcommand("report", "Convert a metrics log into plot-ready CSV");
  report->add_option("--metrics", metrics, "Metrics log (JSON lines)")->required();
  report->add_option("--out", out, "Output CSV")->required();
  report->add_option("--eval", eval_doc, "Eval document with 2-D points for a scatter export");
  report->add_option("--scatter", scatter, "Scatter CSV path (default: <out>.scatter.csv)");

  auto* defaults = app.add_subcommand("defaults", "Print every configuration key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? foc::kExitOk : foc::kExitUsage;
  }

  try {
    if (*gen) {
      foc::cmd_gen_data(load_config(config, seed), out, std::cout);
    } else if (*train) {
      const auto cfg = load_config(config, seed);
      std::optional<std::filesystem::path> init;
      if (!checkpoint.empty()) init = checkpoint;
      foc::cmd_train(cfg, data, out, init, std::cout);
    } else if (*eval) {
      const std::string doc = foc::cmd_eval(checkpoint, data, load_config(config, std::nullopt));
      std::cout << doc << '\n';
      if (!out.empty()) {
        std::ofstream f(out, std::ios::binary);
        if (!(f << doc << '\n')) throw std::runtime_error("cannot write '" + out + "'");
      }
    } else if (*report) {
      std::optional<std::filesystem::path> ev, sc;
      if (!eval_doc.empty()) ev = eval_doc;
      if (!scatter.empty()) sc = scatter;
      foc::cmd_report(metrics, out, ev, sc);
    } else if (*defaults) {
      std::cout << foc::default_config_text();
    }
  } catch (const foc::ConfigError& e) {
    std::cerr << "foc: " << e.what() << '\n';
    return foc::kExitUsage;
  } catch (const foc::DataError& e) {
    std::cerr << "foc: " << e.what() << '\n';
    return foc::kExitUsage;
  } catch (const foc::CheckpointError& e) {
    std::cerr << "foc: " << e.what() << '\n';
    return foc::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "foc: " << e.what() << '\n';
    return foc::kExitRuntime;
  }
  return foc::kExitOk;
}
