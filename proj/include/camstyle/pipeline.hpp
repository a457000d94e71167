#ifndef CAMSTYLE_PIPELINE_HPP_
#define CAMSTYLE_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "camstyle/cyclegan.hpp"
#include "camstyle/data.hpp"
#include "camstyle/eval.hpp"
#include "camstyle/reid.hpp"
#include "camstyle/sampler.hpp"
#include "camstyle/stylebank.hpp"

namespace camstyle::pipeline {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a stage or experiment needs. The top-level seed is mixed into every component
/// seed (see resolved()).
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string dataset = "synth";  // "synth" or "market"
  data::SynthConfig synth;
  std::string market_root;
  /// Restrict the dataset to these cameras (empty: all).
  std::vector<int> cameras;
  /// Cameras that get translators (empty: all dataset cameras).
  std::vector<int> bank_cameras;
  cyclegan::CycleGanConfig cyclegan;
  reid::IdeConfig ide;
  sampler::BatchSpec batch;
  reid::LossConfig loss;
  reid::AugmentConfig augment;
  std::string fake_resolution = "cyclegan_square";
  std::vector<int> ks{1, 5, 10};

  /// Experiment grid knobs.
  std::vector<std::uint64_t> seeds;         // empty: {seed}
  std::vector<std::string> methods;         // few-cameras columns (empty: all four)
  std::vector<std::string> ratios{"1:3", "1:2", "1:1", "2:1", "3:1", "4:1"};

  /// Optional artifact locations; empty means the stage default under --out.
  std::string bank_dir, fakes_dir, model_path, query_features, gallery_features;

  /// Copy whose component seeds are derived from `seed` and their own configured values.
  ExperimentConfig resolved() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Defaults, then the file (if any), then each `key.path=value` override. Values parse as JSON
/// and fall back to plain strings.
nlohmann::json load_config_json(const std::optional<std::filesystem::path>& file, std::span<const std::string> overrides);
ExperimentConfig load_config(const std::optional<std::filesystem::path>& file, std::span<const std::string> overrides);
/// Sets `a.b.c` inside `j`, creating objects along the way.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// 16 hex digits of FNV-1a over the compact JSON dump.
std::string config_hash(const nlohmann::json& j);
std::string version_string();

/// Dataset described by the config, restricted to `cameras` when set.
data::CameraDataset load_dataset(const ExperimentConfig& cfg);

using Logger = std::function<void(const std::string&)>;

// Stages --------------------------------------------------------------------------------------

enum class Stage { train_cyclegan, generate, train_reid, evaluate };

const char* stage_name(Stage s);
std::optional<Stage> parse_stage(const std::string& name);

struct StageResult {
  std::filesystem::path manifest;
  nlohmann::json summary;
};

/// Runs one stage, writing artifacts and `manifest_<stage>.json` under `out`.
StageResult run_stage(Stage stage, const ExperimentConfig& cfg, const std::filesystem::path& out, bool force = false,
                      const Logger& log = {});

// In-memory building blocks ------------------------------------------------------------------

struct ReidOutcome {
  reid::TrainingReport report;
  eval::RankingEvaluation evaluation;
};

/// Trains an IDE model on the dataset's train records (+ fakes) and evaluates it on its
/// query/gallery split.
ReidOutcome train_and_evaluate(const ExperimentConfig& cfg, const data::CameraDataset& dataset,
                               std::span<const data::ImageRecord> fakes, const Logger& log = {});

// Experiments ---------------------------------------------------------------------------------

enum class Experiment { few_cameras, loss_ablation, ratio_sweep, partial_bank, augmentation_grid };

const char* experiment_name(Experiment e);
std::optional<Experiment> parse_experiment(const std::string& name);

struct ExperimentResult {
  std::vector<nlohmann::json> rows;  // also written to results.jsonl
  std::vector<std::filesystem::path> plots;
};

ExperimentResult run_experiment(Experiment experiment, const ExperimentConfig& cfg, const std::filesystem::path& out,
                                bool force = false, const Logger& log = {});

}  // namespace camstyle::pipeline

#endif  // CAMSTYLE_PIPELINE_HPP_
