#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "camstyle/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace camstyle;

constexpr const char* kCommands =
    "stages:      train-cyclegan generate train-reid evaluate\n"
    "experiments: few-cameras loss-ablation ratio-sweep partial-bank augmentation-grid\n"
    "other:       export-synth (writes the configured dataset in bounding_box_train/query/bounding_box_test layout)\n";

int usage_error(const std::string& msg) {
  std::cerr << "camstyle: " << msg << "\n"
            << "usage: camstyle <stage|experiment> --config <file> [--set key=value ...] --out <dir> [--force]\n"
            << kCommands;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camera style adaptation lab for person re-identification"};
  std::string command;
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::string out;
  bool force = false, quiet = false, version = false;
  app.add_option("command", command, "stage or experiment to run");
  app.add_option("--config,-c", config, "JSON config file");
  app.add_option("--set,-s", sets, "override, e.g. --set ide.total_epochs=10")->take_all();
  app.add_option("--out,-o", out, "output directory");
  app.add_flag("--force,-f", force, "overwrite existing artifacts");
  app.add_flag("--quiet,-q", quiet, "no progress output");
  app.add_flag("--version", version, "print the version and exit");
  app.footer(kCommands);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return usage_error(e.what());
  }
  if (version) {
    std::cout << "camstyle " << pipeline::version_string() << "\n";
    return 0;
  }
  if (command.empty()) return usage_error("missing command");
  const auto stage = pipeline::parse_stage(command);
  const auto experiment = pipeline::parse_experiment(command);
  if (!stage && !experiment && command != "export-synth") return usage_error("unknown command '" + command + "'");
  if (out.empty()) return usage_error("--out is required");

  pipeline::Logger log;
  if (!quiet) log = [](const std::string& m) { std::cerr << m << std::endl; };

  pipeline::ExperimentConfig cfg;
  try {
    std::optional<fs::path> file;
    if (config) file = *config;
    cfg = pipeline::load_config(file, sets);
  } catch (const std::exception& e) {
    std::cerr << "camstyle: config error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (stage) {
      const auto r = pipeline::run_stage(*stage, cfg, out, force, log);
      std::cout << r.summary.dump(2) << "\nmanifest: " << r.manifest.string() << "\n";
    } else if (experiment) {
      const auto r = pipeline::run_experiment(*experiment, cfg, out, force, log);
      std::cout << "rows: " << r.rows.size() << "\n";
      for (const auto& p : r.plots) std::cout << "plot: " << p.string() << "\n";
    } else {
      const auto ds = pipeline::load_dataset(cfg.resolved());
      data::export_market_format(ds, out, force);
      std::cout << "wrote " << ds.records.size() << " images to " << out << "\n";
    }
  } catch (const pipeline::ConfigError& e) {
    std::cerr << "camstyle: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "camstyle: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
