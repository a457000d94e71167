#include "camstyle/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "camstyle/core/random.hpp"
#include "camstyle/plot.hpp"

#ifndef CAMSTYLE_VERSION
#define CAMSTYLE_VERSION "0.1.0"
#endif

namespace camstyle::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream f(file);
  if (!f) throw ConfigError("cannot write " + file.string());
  f << text;
}

void write_json(const fs::path& file, const json& j) { write_text(file, j.dump(2) + "\n"); }

/// Reports keys in `given` that the defaults do not know about.
void check_known_keys(const json& defaults, const json& given, const std::string& prefix) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (defaults.at(key).is_object()) check_known_keys(defaults.at(key), value, path);
  }
}

std::pair<int, int> parse_ratio(const std::string& text) {
  int m = 0, n = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d:%d%c", &m, &n, &tail) != 2 || m < 1 || n < 0) {
    throw ConfigError("ratio '" + text + "' is not of the form M:N with M >= 1, N >= 0");
  }
  return {m, n};
}

struct Method {
  const char* name;
  const char* label;
  bool fakes;
  reid::TargetKind real;
  reid::TargetKind fake;
};

constexpr Method kMethods[] = {
    {"baseline", "Real/CrossE", false, reid::TargetKind::cross_entropy, reid::TargetKind::cross_entropy},
    {"baseline_lsr", "Real/LSR", false, reid::TargetKind::lsr, reid::TargetKind::lsr},
    {"camstyle_vanilla", "Real+Fake/CrossE", true, reid::TargetKind::cross_entropy, reid::TargetKind::cross_entropy},
    {"camstyle_lsr", "Real+Fake/LSR", true, reid::TargetKind::cross_entropy, reid::TargetKind::lsr},
};

const Method& method_named(const std::string& name) {
  for (const auto& m : kMethods)
    if (name == m.name) return m;
  throw ConfigError("unknown method '" + name + "' (baseline, baseline_lsr, camstyle_vanilla, camstyle_lsr)");
}

/// Config for one grid cell trained with `method`.
ExperimentConfig with_method(ExperimentConfig c, const Method& m) {
  c.loss.real = m.real;
  c.loss.fake = m.fake;
  if (!m.fakes) {
    c.batch.ratio_fake = 0;
  } else if (c.batch.ratio_fake == 0) {
    c.batch.ratio_fake = 1;
  }
  return c;
}

std::vector<data::ImageRecord> records_of(const data::CameraDataset& ds, data::Role role) {
  std::vector<data::ImageRecord> out;
  for (auto i : ds.indices(role)) out.push_back(ds.records[i]);
  return out;
}

std::vector<ImageF> images_of(const data::CameraDataset& ds, data::Role role) {
  std::vector<ImageF> out;
  for (auto i : ds.indices(role)) out.push_back(ds.records[i].pixels);
  return out;
}

json metrics_json(const eval::RankingEvaluation& ev, std::span<const int> ks) {
  json j;
  for (int k : ks) j["rank" + std::to_string(k)] = ev.rank(k);
  j["map"] = ev.map;
  j["num_valid_queries"] = ev.num_valid_queries;
  return j;
}

fs::path or_default(const std::string& configured, const fs::path& fallback) {
  return configured.empty() ? fallback : fs::path(configured);
}

void write_manifest(const fs::path& file, const std::string& what, const ExperimentConfig& cfg, double seconds,
                    const json& summary) {
  json cj = cfg;
  json m{{"stage", what},
         {"version", version_string()},
         {"config_hash", config_hash(cj)},
         {"config", cj},
         {"finished_at", utc_now()},
         {"wall_seconds", seconds},
         {"summary", summary}};
  write_json(file, m);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

stylebank::PairProgress pair_logger(const Logger& log) {
  if (!log) return {};
  return [log](const stylebank::CameraPair& p, const cyclegan::EpochLog& e) {
    log("cyclegan pair " + std::to_string(p.first) + "-" + std::to_string(p.second) + " epoch " +
        std::to_string(e.epoch) + " total " + fmt("%.4f", e.generator.total) + " cycle " +
        fmt("%.4f", 0.5 * (e.generator.cycle_a + e.generator.cycle_b)));
  };
}

}  // namespace

// Config -------------------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig r = *this;
  r.synth.seed = derive_seed(seed, {fnv1a("synth"), synth.seed});
  r.cyclegan.seed = derive_seed(seed, {fnv1a("cyclegan"), cyclegan.seed});
  r.ide.seed = derive_seed(seed, {fnv1a("ide"), ide.seed});
  r.batch.seed = derive_seed(seed, {fnv1a("batch"), batch.seed});
  r.ide.batch_size = batch.batch_size;
  return r;
}

void ExperimentConfig::validate() const {
  if (dataset == "synth") {
    synth.validate();
  } else if (dataset == "market") {
    if (market_root.empty()) throw ConfigError("dataset 'market' needs market_root");
  } else {
    throw ConfigError("dataset must be 'synth' or 'market' (got '" + dataset + "')");
  }
  if (!cameras.empty() && cameras.size() < 2) throw ConfigError("cameras: need at least two");
  if (!bank_cameras.empty()) {
    if (bank_cameras.size() < 2) throw ConfigError("bank_cameras: need at least two");
    if (!cameras.empty())
      for (int c : bank_cameras)
        if (std::find(cameras.begin(), cameras.end(), c) == cameras.end())
          throw ConfigError("bank_cameras: camera " + std::to_string(c) + " is not in cameras");
  }
  cyclegan.validate();
  batch.validate();
  if (loss.epsilon < 0 || loss.epsilon >= 1) throw ConfigError("loss.epsilon must lie in [0, 1)");
  try {
    stylebank::parse_resolution(fake_resolution);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("fake_resolution: ") + e.what());
  }
  if (ks.empty()) throw ConfigError("ks must not be empty");
  for (int k : ks)
    if (k < 1) throw ConfigError("ks entries must be >= 1");
  for (const auto& m : methods) method_named(m);
  for (const auto& r : ratios) parse_ratio(r);
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"seed", c.seed},
           {"dataset", c.dataset},
           {"synth", c.synth},
           {"market_root", c.market_root},
           {"cameras", c.cameras},
           {"bank_cameras", c.bank_cameras},
           {"cyclegan", c.cyclegan},
           {"ide", c.ide},
           {"batch", c.batch},
           {"loss", c.loss},
           {"augment", c.augment},
           {"fake_resolution", c.fake_resolution},
           {"ks", c.ks},
           {"seeds", c.seeds},
           {"methods", c.methods},
           {"ratios", c.ratios},
           {"bank_dir", c.bank_dir},
           {"fakes_dir", c.fakes_dir},
           {"model_path", c.model_path},
           {"query_features", c.query_features},
           {"gallery_features", c.gallery_features}};
}

void from_json(const json& j, ExperimentConfig& c) {
  const ExperimentConfig d;
  c.seed = j.value("seed", d.seed);
  c.dataset = j.value("dataset", d.dataset);
  c.synth = j.value("synth", d.synth);
  c.market_root = j.value("market_root", d.market_root);
  c.cameras = j.value("cameras", d.cameras);
  c.bank_cameras = j.value("bank_cameras", d.bank_cameras);
  c.cyclegan = j.value("cyclegan", d.cyclegan);
  c.ide = j.value("ide", d.ide);
  c.batch = j.value("batch", d.batch);
  c.loss = j.value("loss", d.loss);
  c.augment = j.value("augment", d.augment);
  c.fake_resolution = j.value("fake_resolution", d.fake_resolution);
  c.ks = j.value("ks", d.ks);
  c.seeds = j.value("seeds", d.seeds);
  c.methods = j.value("methods", d.methods);
  c.ratios = j.value("ratios", d.ratios);
  c.bank_dir = j.value("bank_dir", d.bank_dir);
  c.fakes_dir = j.value("fakes_dir", d.fakes_dir);
  c.model_path = j.value("model_path", d.model_path);
  c.query_features = j.value("query_features", d.query_features);
  c.gallery_features = j.value("gallery_features", d.gallery_features);
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

json load_config_json(const std::optional<fs::path>& file, std::span<const std::string> overrides) {
  const json defaults = ExperimentConfig{};
  json merged = defaults;
  if (file) {
    std::ifstream f(*file);
    if (!f) throw ConfigError("cannot open config " + file->string());
    json given = json::parse(f, nullptr, false, true);
    if (given.is_discarded() || !given.is_object())
      throw ConfigError("config " + file->string() + " is not a JSON object");
    check_known_keys(defaults, given, "");
    merged.merge_patch(given);
  }
  for (const auto& o : overrides) apply_override(merged, o);
  check_known_keys(defaults, merged, "");
  return merged;
}

ExperimentConfig load_config(const std::optional<fs::path>& file, std::span<const std::string> overrides) {
  const json j = load_config_json(file, overrides);
  ExperimentConfig c;
  try {
    c = j.get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config has a value of the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_hash(const json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

std::string version_string() { return CAMSTYLE_VERSION; }

data::CameraDataset load_dataset(const ExperimentConfig& cfg) {
  data::CameraDataset ds =
      cfg.dataset == "market" ? data::load_market_format(cfg.market_root) : data::synth_generate(cfg.synth);
  if (!cfg.cameras.empty()) ds = data::restrict_cameras(ds, std::set<int>(cfg.cameras.begin(), cfg.cameras.end()));
  return ds;
}

// Stages -------------------------------------------------------------------------------------

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::train_cyclegan: return "train-cyclegan";
    case Stage::generate: return "generate";
    case Stage::train_reid: return "train-reid";
    case Stage::evaluate: return "evaluate";
  }
  return "?";
}

std::optional<Stage> parse_stage(const std::string& name) {
  for (Stage s : {Stage::train_cyclegan, Stage::generate, Stage::train_reid, Stage::evaluate})
    if (name == stage_name(s)) return s;
  return std::nullopt;
}

ReidOutcome train_and_evaluate(const ExperimentConfig& cfg, const data::CameraDataset& dataset,
                               std::span<const data::ImageRecord> fakes, const Logger& log) {
  reid::IdeConfig ic = cfg.ide;
  ic.num_classes = dataset.num_classes;
  auto model = reid::build_ide(ic);
  const auto reals = records_of(dataset, data::Role::train);
  ReidOutcome out;
  out.report = reid::train_reid(*model, reals, fakes, cfg.batch, cfg.loss, cfg.augment, dataset.num_cameras(),
                                [&](const reid::EpochReport& e) {
                                  say(log, "reid epoch " + std::to_string(e.epoch) + " loss " +
                                               fmt("%.4f", e.total_loss));
                                });
  const auto qf = reid::extract_features(*model, images_of(dataset, data::Role::query));
  const auto gf = reid::extract_features(*model, images_of(dataset, data::Role::gallery));
  const auto qm = eval::metadata(dataset, data::Role::query);
  const auto gm = eval::metadata(dataset, data::Role::gallery);
  out.evaluation = eval::evaluate(eval::distance_matrix(qf, gf), qm, gm);
  return out;
}

namespace {

json stage_train_cyclegan(const ExperimentConfig& cfg, const fs::path& out, bool force, const Logger& log) {
  const fs::path dir = or_default(cfg.bank_dir, out / "bank");
  if (fs::exists(dir / stylebank::kBankIndex) && !force)
    throw ConfigError("style bank already exists at " + dir.string() + " (use --force to overwrite)");
  const auto ds = load_dataset(cfg);
  std::optional<std::set<int>> subset;
  if (!cfg.bank_cameras.empty()) subset = std::set<int>(cfg.bank_cameras.begin(), cfg.bank_cameras.end());
  const auto bank = stylebank::train_all_pairs(ds, subset, cfg.cyclegan, pair_logger(log));
  bank.save(dir);
  json pairs = json::array();
  for (const auto& [p, model] : bank.pairs()) pairs.push_back({p.first, p.second});
  return {{"bank_dir", dir.string()}, {"pairs", pairs}, {"num_pairs", bank.size()}};
}

json stage_generate(const ExperimentConfig& cfg, const fs::path& out, bool force, const Logger& log) {
  const fs::path bank_dir = or_default(cfg.bank_dir, out / "bank");
  if (!fs::exists(bank_dir / stylebank::kBankIndex))
    throw ConfigError("generate: missing style bank checkpoint index " + (bank_dir / stylebank::kBankIndex).string() +
                      " (run train-cyclegan first)");
  const fs::path dir = or_default(cfg.fakes_dir, out / "fakes");
  const auto ds = load_dataset(cfg);
  const auto bank = stylebank::StyleBank::load(bank_dir);
  const auto gen = stylebank::generate_fakes(ds, bank, stylebank::parse_resolution(cfg.fake_resolution));
  if (gen.skipped > 0)
    say(log, "warning: " + std::to_string(gen.skipped) + " source/target combinations have no trained pair");
  stylebank::export_fakes(gen, dir, force);
  return {{"fakes_dir", dir.string()},
          {"num_fakes", gen.fakes.size()},
          {"num_real_train", ds.count(data::Role::train)},
          {"skipped", gen.skipped}};
}

json stage_train_reid(const ExperimentConfig& cfg, const fs::path& out, bool force, const Logger& log) {
  const fs::path model_path = or_default(cfg.model_path, out / "reid" / "model.ckpt");
  if (fs::exists(model_path) && !force)
    throw ConfigError("model already exists at " + model_path.string() + " (use --force to overwrite)");
  const auto ds = load_dataset(cfg);
  std::vector<data::ImageRecord> fakes;
  if (cfg.batch.ratio_fake > 0) {
    const fs::path dir = or_default(cfg.fakes_dir, out / "fakes");
    if (!fs::exists(dir / stylebank::kManifestName))
      throw ConfigError("train-reid: batch.ratio_fake > 0 but no fakes at " + dir.string() +
                        " (run generate first, or set batch.ratio_fake=0)");
    fakes = stylebank::load_fakes(dir, &ds);
  }
  reid::IdeConfig ic = cfg.ide;
  ic.num_classes = ds.num_classes;
  auto model = reid::build_ide(ic);
  const auto reals = records_of(ds, data::Role::train);
  auto report = reid::train_reid(*model, reals, fakes, cfg.batch, cfg.loss, cfg.augment, ds.num_cameras(),
                                 [&](const reid::EpochReport& e) {
                                   say(log, "reid epoch " + std::to_string(e.epoch) + " loss " +
                                                fmt("%.4f", e.total_loss));
                                 });
  fs::create_directories(out / "reid");
  if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
  reid::save_checkpoint(model_path, *model, ic.total_epochs);
  report.checkpoint = model_path.string();
  write_json(out / "reid" / "report.json", json(report));
  json s{{"model", model_path.string()}, {"num_real", reals.size()}, {"num_fakes", fakes.size()}};
  if (!report.epochs.empty()) {
    s["first_loss"] = report.epochs.front().total_loss;
    s["final_loss"] = report.epochs.back().total_loss;
  }
  return s;
}

json stage_evaluate(const ExperimentConfig& cfg, const fs::path& out, bool force, const Logger& log) {
  const fs::path dir = out / "eval";
  if (fs::exists(dir / "metrics.json") && !force)
    throw ConfigError("evaluation already exists at " + dir.string() + " (use --force to overwrite)");
  fs::create_directories(dir);
  fs::path qbase, gbase;
  if (!cfg.query_features.empty() || !cfg.gallery_features.empty()) {
    if (cfg.query_features.empty() || cfg.gallery_features.empty())
      throw ConfigError("evaluate: set both query_features and gallery_features");
    qbase = cfg.query_features;
    gbase = cfg.gallery_features;
  } else {
    const fs::path model_path = or_default(cfg.model_path, out / "reid" / "model.ckpt");
    if (!fs::exists(model_path))
      throw ConfigError("evaluate: missing model checkpoint " + model_path.string() + " (run train-reid first)");
    auto loaded = reid::load_checkpoint(model_path);
    const auto ds = load_dataset(cfg);
    qbase = dir / "query_features";
    gbase = dir / "gallery_features";
    say(log, "extracting features");
    reid::write_features(qbase, reid::extract_features(*loaded.model, images_of(ds, data::Role::query)),
                         eval::metadata(ds, data::Role::query));
    reid::write_features(gbase, reid::extract_features(*loaded.model, images_of(ds, data::Role::gallery)),
                         eval::metadata(ds, data::Role::gallery));
  }
  const auto q = reid::read_features(qbase);
  const auto g = reid::read_features(gbase);
  const auto ev = eval::evaluate(eval::distance_matrix(q.features, g.features), q.meta, g.meta);
  write_text(dir / "report.txt", eval::format_report(ev, cfg.ks));
  write_text(dir / "per_query.tsv", eval::format_per_query(ev, q.meta));
  const json m = metrics_json(ev, cfg.ks);
  write_json(dir / "metrics.json", m);
  say(log, eval::format_report(ev, cfg.ks));
  return m;
}

}  // namespace

StageResult run_stage(Stage stage, const ExperimentConfig& cfg_in, const fs::path& out, bool force, const Logger& log) {
  cfg_in.validate();
  const ExperimentConfig cfg = cfg_in.resolved();
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out);
  json summary;
  switch (stage) {
    case Stage::train_cyclegan: summary = stage_train_cyclegan(cfg, out, force, log); break;
    case Stage::generate: summary = stage_generate(cfg, out, force, log); break;
    case Stage::train_reid: summary = stage_train_reid(cfg, out, force, log); break;
    case Stage::evaluate: summary = stage_evaluate(cfg, out, force, log); break;
  }
  StageResult r;
  r.manifest = out / (std::string("manifest_") + stage_name(stage) + ".json");
  r.summary = summary;
  write_manifest(r.manifest, stage_name(stage), cfg_in, seconds_since(t0), summary);
  return r;
}

// Experiments --------------------------------------------------------------------------------

const char* experiment_name(Experiment e) {
  switch (e) {
    case Experiment::few_cameras: return "few-cameras";
    case Experiment::loss_ablation: return "loss-ablation";
    case Experiment::ratio_sweep: return "ratio-sweep";
    case Experiment::partial_bank: return "partial-bank";
    case Experiment::augmentation_grid: return "augmentation-grid";
  }
  return "?";
}

std::optional<Experiment> parse_experiment(const std::string& name) {
  for (Experiment e : {Experiment::few_cameras, Experiment::loss_ablation, Experiment::ratio_sweep,
                       Experiment::partial_bank, Experiment::augmentation_grid})
    if (name == experiment_name(e)) return e;
  return std::nullopt;
}

namespace {

/// Per-seed state shared by every cell of an experiment.
struct SeedContext {
  std::uint64_t seed = 0;
  ExperimentConfig cfg;  // resolved
  data::CameraDataset dataset;
};

class Runner {
 public:
  Runner(Experiment e, const ExperimentConfig& cfg, fs::path out, const Logger& log)
      : experiment_(e), cfg_(cfg), out_(std::move(out)), log_(log) {}

  void run_cell(const SeedContext& sc, const json& cell, const ExperimentConfig& cell_cfg,
                std::span<const data::ImageRecord> fakes, json extra = json::object()) {
    const auto t0 = std::chrono::steady_clock::now();
    say(log_, std::string(experiment_name(experiment_)) + " seed " + std::to_string(sc.seed) + " " + cell.dump());
    const bool uses_fakes = cell_cfg.batch.ratio_fake > 0;
    const auto outcome = train_and_evaluate(cell_cfg, sc.dataset,
                                            uses_fakes ? fakes : std::span<const data::ImageRecord>{}, {});
    json row{{"experiment", experiment_name(experiment_)}, {"seed", sc.seed}, {"cell", cell}};
    row["config_hash"] = config_hash(json{{"config", json(cell_cfg)}, {"cell", cell}});
    row["metrics"] = metrics_json(outcome.evaluation, cell_cfg.ks);
    row["num_fakes"] = uses_fakes ? fakes.size() : 0;
    if (!outcome.report.epochs.empty()) {
      row["first_loss"] = outcome.report.epochs.front().total_loss;
      row["final_loss"] = outcome.report.epochs.back().total_loss;
    }
    row["wall_seconds"] = seconds_since(t0);
    for (const auto& [k, v] : extra.items()) row[k] = v;
    say(log_, "  rank1 " + fmt("%.4f", outcome.evaluation.rank(1)) + " mAP " + fmt("%.4f", outcome.evaluation.map));
    char index[16];
    std::snprintf(index, sizeof index, "%03zu_", rows_.size());
    const auto cell_dir = out_ / "cells" / (index + row["config_hash"].get<std::string>());
    fs::create_directories(cell_dir);
    write_json(cell_dir / "row.json", row);
    write_text(cell_dir / "report.txt", eval::format_report(outcome.evaluation, cell_cfg.ks));
    std::ofstream(out_ / "results.jsonl", std::ios::app) << row.dump() << "\n";
    rows_.push_back(std::move(row));
  }

  SeedContext seed_context(std::uint64_t seed) const {
    SeedContext sc;
    sc.seed = seed;
    ExperimentConfig c = cfg_;
    c.seed = seed;
    sc.cfg = c.resolved();
    sc.dataset = load_dataset(sc.cfg);
    return sc;
  }

  stylebank::StyleBank train_bank(const SeedContext& sc, const std::set<int>& cams) const {
    say(log_, "training style bank on cameras " + json(cams).dump());
    return stylebank::train_all_pairs(sc.dataset, cams, sc.cfg.cyclegan, pair_logger(log_));
  }

  stylebank::GeneratedFakes fakes_for(const SeedContext& sc, const data::CameraDataset& ds,
                                      const stylebank::StyleBank& bank) const {
    auto gen = stylebank::generate_fakes(ds, bank, stylebank::parse_resolution(sc.cfg.fake_resolution));
    if (gen.skipped > 0)
      say(log_, "warning: " + std::to_string(gen.skipped) + " source/target combinations have no trained pair");
    return gen;
  }

  /// Mean and sample std of a metric over the seeds of each cell, in first-seen cell order.
  struct Aggregate {
    json cell;
    std::map<std::string, std::vector<double>> values;
  };

  std::vector<Aggregate> aggregate() const {
    std::vector<Aggregate> out;
    for (const auto& row : rows_) {
      auto it = std::find_if(out.begin(), out.end(), [&](const Aggregate& a) { return a.cell == row["cell"]; });
      if (it == out.end()) {
        out.push_back({row["cell"], {}});
        it = std::prev(out.end());
      }
      for (const auto& [k, v] : row["metrics"].items())
        if (k != "num_valid_queries") it->values[k].push_back(v.get<double>());
    }
    return out;
  }

  static double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? NAN : s / static_cast<double>(v.size());
  }

  static double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0;
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  }

  /// table.tsv plus summary.json.
  std::vector<Aggregate> write_table() const {
    const auto agg = aggregate();
    std::ostringstream os;
    std::vector<std::string> cell_keys;
    if (!agg.empty())
      for (const auto& [k, v] : agg.front().cell.items()) cell_keys.push_back(k);
    for (const auto& k : cell_keys) os << k << "\t";
    std::vector<std::string> metrics;
    if (!agg.empty())
      for (const auto& [k, v] : agg.front().values) metrics.push_back(k);
    for (const auto& m : metrics) os << m << "_mean\t" << m << "_std\t";
    os << "seeds\n";
    json summary = json::array();
    for (const auto& a : agg) {
      json s{{"cell", a.cell}};
      for (const auto& k : cell_keys) os << (a.cell[k].is_string() ? a.cell[k].get<std::string>() : a.cell[k].dump()) << "\t";
      std::size_t n = 0;
      for (const auto& m : metrics) {
        const auto& v = a.values.at(m);
        os << fmt("%.4f", mean(v)) << "\t" << fmt("%.4f", stddev(v)) << "\t";
        s[m + "_mean"] = mean(v);
        s[m + "_std"] = stddev(v);
        n = v.size();
      }
      os << n << "\n";
      s["seeds"] = n;
      summary.push_back(s);
    }
    write_text(out_ / "table.tsv", os.str());
    write_json(out_ / "summary.json", summary);
    return agg;
  }

  std::vector<json>& rows() { return rows_; }

 private:
  Experiment experiment_;
  ExperimentConfig cfg_;
  fs::path out_;
  Logger log_;
  std::vector<json> rows_;
};

std::vector<std::uint64_t> seeds_of(const ExperimentConfig& cfg) {
  return cfg.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : cfg.seeds;
}

std::vector<std::string> methods_of(const ExperimentConfig& cfg) {
  if (!cfg.methods.empty()) return cfg.methods;
  std::vector<std::string> all;
  for (const auto& m : kMethods) all.emplace_back(m.name);
  return all;
}

double cell_mean(const std::vector<Runner::Aggregate>& agg, const json& cell, const std::string& metric) {
  for (const auto& a : agg)
    if (a.cell == cell && a.values.count(metric)) return Runner::mean(a.values.at(metric));
  return NAN;
}

bool any_uses_fakes(const std::vector<std::string>& methods) {
  return std::any_of(methods.begin(), methods.end(), [](const std::string& m) { return method_named(m).fakes; });
}

void few_cameras(Runner& r, const ExperimentConfig& cfg, const fs::path& out, ExperimentResult& res) {
  const auto methods = methods_of(cfg);
  std::vector<int> ks_cams;
  for (auto seed : seeds_of(cfg)) {
    const auto sc = r.seed_context(seed);
    const std::vector<int> cams(sc.dataset.cameras.begin(), sc.dataset.cameras.end());
    std::optional<stylebank::StyleBank> bank;
    if (any_uses_fakes(methods)) bank = r.train_bank(sc, sc.dataset.cameras);
    for (std::size_t k = 2; k <= cams.size(); ++k) {
      const std::set<int> keep(cams.begin(), cams.begin() + static_cast<std::ptrdiff_t>(k));
      SeedContext sub{sc.seed, sc.cfg, k == cams.size() ? sc.dataset : data::restrict_cameras(sc.dataset, keep)};
      stylebank::GeneratedFakes gen;
      if (bank) gen = r.fakes_for(sc, sub.dataset, bank->restricted_to(keep));
      for (const auto& m : methods) {
        r.run_cell(sub, json{{"cameras", static_cast<int>(k)}, {"method", m}}, with_method(sc.cfg, method_named(m)),
                   gen.fakes);
      }
      if (std::find(ks_cams.begin(), ks_cams.end(), static_cast<int>(k)) == ks_cams.end())
        ks_cams.push_back(static_cast<int>(k));
    }
  }
  const auto agg = r.write_table();
  std::vector<std::string> labels;
  for (int k : ks_cams) labels.push_back(std::to_string(k) + " cams");
  for (const std::string metric : {"rank1", "map"}) {
    std::vector<plot::Series> series;
    for (const auto& m : methods) {
      plot::Series s{m, {}};
      for (int k : ks_cams) s.values.push_back(cell_mean(agg, json{{"cameras", k}, {"method", m}}, metric));
      series.push_back(s);
    }
    const fs::path file = out / ("few_cameras_" + metric + ".png");
    plot::line_chart(file, "Accuracy vs number of cameras", labels, series, metric);
    res.plots.push_back(file);
  }
}

void loss_ablation(Runner& r, const ExperimentConfig& cfg, const fs::path& out, ExperimentResult& res) {
  for (auto seed : seeds_of(cfg)) {
    const auto sc = r.seed_context(seed);
    const auto bank = r.train_bank(sc, sc.dataset.cameras);
    const auto gen = r.fakes_for(sc, sc.dataset, bank);
    for (const auto& m : kMethods)
      r.run_cell(sc, json{{"method", m.name}, {"label", m.label}}, with_method(sc.cfg, m), gen.fakes);
  }
  const auto agg = r.write_table();
  std::vector<std::string> labels;
  plot::Series r1{"rank-1", {}}, mp{"mAP", {}};
  for (const auto& m : kMethods) {
    const json cell{{"method", m.name}, {"label", m.label}};
    labels.emplace_back(m.label);
    r1.values.push_back(cell_mean(agg, cell, "rank1"));
    mp.values.push_back(cell_mean(agg, cell, "map"));
  }
  const fs::path file = out / "loss_ablation.png";
  plot::bar_chart(file, "Loss ablation", labels, {r1, mp}, "accuracy");
  res.plots.push_back(file);
}

void ratio_sweep(Runner& r, const ExperimentConfig& cfg, const fs::path& out, ExperimentResult& res) {
  const Method& cam = method_named("camstyle_lsr");
  for (auto seed : seeds_of(cfg)) {
    const auto sc = r.seed_context(seed);
    const auto bank = r.train_bank(sc, sc.dataset.cameras);
    const auto gen = r.fakes_for(sc, sc.dataset, bank);
    r.run_cell(sc, json{{"ratio", "baseline"}}, with_method(sc.cfg, method_named("baseline")), gen.fakes);
    for (const auto& ratio : cfg.ratios) {
      const auto [m, n] = parse_ratio(ratio);
      ExperimentConfig c = sc.cfg;
      c.batch.ratio_real = m;
      c.batch.ratio_fake = n;
      c = with_method(c, cam);
      c.batch.ratio_fake = n;
      r.run_cell(sc, json{{"ratio", ratio}}, c, gen.fakes);
    }
  }
  const auto agg = r.write_table();
  for (const std::string metric : {"rank1", "map"}) {
    plot::Series cs{"CamStyle", {}}, base{"baseline", {}};
    const double b = cell_mean(agg, json{{"ratio", "baseline"}}, metric);
    for (const auto& ratio : cfg.ratios) {
      cs.values.push_back(cell_mean(agg, json{{"ratio", ratio}}, metric));
      base.values.push_back(b);
    }
    const fs::path file = out / ("ratio_sweep_" + metric + ".png");
    plot::line_chart(file, "Accuracy vs real:fake ratio (M:N)", cfg.ratios, {cs, base}, metric);
    res.plots.push_back(file);
  }
}

void partial_bank(Runner& r, const ExperimentConfig& cfg, const fs::path& out, ExperimentResult& res) {
  std::vector<std::string> labels;
  for (auto seed : seeds_of(cfg)) {
    const auto sc = r.seed_context(seed);
    const std::vector<int> cams(sc.dataset.cameras.begin(), sc.dataset.cameras.end());
    r.run_cell(sc, json{{"bank", "none"}}, with_method(sc.cfg, method_named("baseline")), {});
    // Banks grow by one camera at a time, so the full bank is trained once and restricted.
    const auto full = r.train_bank(sc, sc.dataset.cameras);
    for (std::size_t k = 2; k <= cams.size(); ++k) {
      const std::set<int> keep(cams.begin(), cams.begin() + static_cast<std::ptrdiff_t>(k));
      std::string label;
      for (int c : keep) label += (label.empty() ? "" : "+") + std::to_string(c);
      const auto gen = r.fakes_for(sc, sc.dataset, full.restricted_to(keep));
      r.run_cell(sc, json{{"bank", label}}, with_method(sc.cfg, method_named("camstyle_lsr")), gen.fakes,
                 json{{"skipped", gen.skipped}, {"bank_pairs", stylebank::pair_count(static_cast<int>(k))}});
    }
  }
  const auto agg = r.write_table();
  plot::Series r1{"rank-1", {}}, mp{"mAP", {}};
  for (const auto& a : agg) {
    labels.push_back(a.cell["bank"].get<std::string>());
    r1.values.push_back(Runner::mean(a.values.at("rank1")));
    mp.values.push_back(Runner::mean(a.values.at("map")));
  }
  const fs::path file = out / "partial_bank.png";
  plot::bar_chart(file, "Accuracy vs cameras covered by the style bank", labels, {r1, mp}, "accuracy");
  res.plots.push_back(file);
}

void augmentation_grid(Runner& r, const ExperimentConfig& cfg, const fs::path& out, ExperimentResult& res) {
  struct Aug {
    const char* name;
    bool flip_crop;
    bool erasing;
  };
  constexpr Aug kAugs[] = {{"none", false, false}, {"RF+RC", true, false}, {"RE", false, true}, {"RF+RC+RE", true, true}};
  const char* methods[] = {"baseline", "camstyle_lsr"};
  for (auto seed : seeds_of(cfg)) {
    const auto sc = r.seed_context(seed);
    const auto bank = r.train_bank(sc, sc.dataset.cameras);
    const auto gen = r.fakes_for(sc, sc.dataset, bank);
    for (const auto& a : kAugs)
      for (const char* m : methods) {
        ExperimentConfig c = with_method(sc.cfg, method_named(m));
        c.augment.flip_crop = a.flip_crop;
        c.augment.random_erasing = a.erasing;
        r.run_cell(sc, json{{"augment", a.name}, {"method", m}}, c, gen.fakes);
      }
  }
  const auto agg = r.write_table();
  std::vector<std::string> labels;
  for (const auto& a : kAugs) labels.emplace_back(a.name);
  for (const std::string metric : {"rank1", "map"}) {
    std::vector<plot::Series> series;
    for (const char* m : methods) {
      plot::Series s{m, {}};
      for (const auto& a : kAugs) s.values.push_back(cell_mean(agg, json{{"augment", a.name}, {"method", m}}, metric));
      series.push_back(s);
    }
    const fs::path file = out / ("augmentation_grid_" + metric + ".png");
    plot::bar_chart(file, "Augmentation grid", labels, series, metric);
    res.plots.push_back(file);
  }
}

}  // namespace

ExperimentResult run_experiment(Experiment experiment, const ExperimentConfig& cfg, const fs::path& out, bool force,
                                const Logger& log) {
  cfg.validate();
  if (fs::exists(out / "results.jsonl")) {
    if (!force) throw ConfigError("results already exist in " + out.string() + " (use --force to overwrite)");
    fs::remove(out / "results.jsonl");
    fs::remove_all(out / "cells");
  }
  fs::create_directories(out);
  const auto t0 = std::chrono::steady_clock::now();
  Runner runner(experiment, cfg, out, log);
  ExperimentResult res;
  switch (experiment) {
    case Experiment::few_cameras: few_cameras(runner, cfg, out, res); break;
    case Experiment::loss_ablation: loss_ablation(runner, cfg, out, res); break;
    case Experiment::ratio_sweep: ratio_sweep(runner, cfg, out, res); break;
    case Experiment::partial_bank: partial_bank(runner, cfg, out, res); break;
    case Experiment::augmentation_grid: augmentation_grid(runner, cfg, out, res); break;
  }
  res.rows = std::move(runner.rows());
  json plots = json::array();
  for (const auto& p : res.plots) plots.push_back(p.filename().string());
  write_manifest(out / "manifest_experiment.json", experiment_name(experiment), cfg, seconds_since(t0),
                 json{{"rows", res.rows.size()}, {"results", "results.jsonl"}, {"table", "table.tsv"}, {"plots", plots}});
  return res;
}

}  // namespace camstyle::pipeline
