#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"

#include "camstyle/pipeline.hpp"

using namespace camstyle;
using namespace camstyle::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("camstyle_test_" + name);
  fs::remove_all(dir);
  return dir;
}

const std::vector<std::string> kTiny{
    "synth.num_identities=4",         "synth.images_per_identity_per_camera=2",
    "synth.test_identities=3",        "synth.height=16",
    "synth.width=16",                 "cyclegan.image_size=8",
    "cyclegan.residual_blocks=1",     "cyclegan.generator_filters=2",
    "cyclegan.discriminator_filters=2", "cyclegan.downsampling=1",
    "cyclegan.discriminator_layers=1", "cyclegan.outer_kernel=3",
    "cyclegan.epochs_constant=1",     "cyclegan.epochs_decay=0",
    "ide.backbone=tiny_cnn",          "ide.tiny_depth=2",
    "ide.tiny_width=4",               "ide.embed_dim=8",
    "ide.input_height=16",            "ide.input_width=8",
    "ide.total_epochs=2",             "ide.lr_decay_epoch=1",
    "batch.batch_size=8",             "ks=[1,2]"};

ExperimentConfig tiny(std::vector<std::string> extra = {}) {
  auto o = kTiny;
  o.insert(o.end(), extra.begin(), extra.end());
  return load_config(std::nullopt, o);
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  return json::parse(f);
}

}  // namespace

TEST_CASE("config defaults, files and overrides") {
  const auto d = load_config(std::nullopt, {});
  CHECK(d.batch.batch_size == 128);
  CHECK(d.loss.epsilon == doctest::Approx(0.1));

  const auto dir = fresh_dir("config");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << R"({"seed": 4, "batch": {"ratio_real": 2}})";
  const std::vector<std::string> o{"batch.ratio_real=5", "dataset=synth", "ide.backbone=tiny_cnn"};
  const auto c = load_config(dir / "c.json", o);
  CHECK(c.seed == 4);
  CHECK(c.batch.ratio_real == 5);
  CHECK(c.batch.ratio_fake == 1);
  CHECK(c.ide.backbone == reid::Backbone::tiny_cnn);

  std::ofstream(dir / "bad.json") << R"({"batch": {"ratio_rael": 2}})";
  try {
    load_config(dir / "bad.json", {});
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("batch.ratio_rael") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config(std::nullopt, std::vector<std::string>{"nonsense"}), ConfigError);
  CHECK_THROWS_AS(load_config(std::nullopt, std::vector<std::string>{"batch.batch_size=\"x\""}), ConfigError);
  CHECK_THROWS_AS(load_config(std::nullopt, std::vector<std::string>{"loss.epsilon=1"}), ConfigError);
  CHECK_THROWS_AS(load_config(std::nullopt, std::vector<std::string>{"ratios=[\"3-1\"]"}), ConfigError);
  CHECK_THROWS(load_config(dir / "absent.json", {}));
  fs::remove_all(dir);
}

TEST_CASE("override parsing") {
  json j = json::object();
  apply_override(j, "a.b.c=3");
  apply_override(j, "a.s=hello");
  apply_override(j, "a.l=[1,2]");
  CHECK(j["a"]["b"]["c"] == 3);
  CHECK(j["a"]["s"] == "hello");
  CHECK(j["a"]["l"].size() == 2);
  CHECK_THROWS_AS(apply_override(j, "a..b=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(j, "a.b.c.d=1"), ConfigError);
}

TEST_CASE("config hash and seed derivation") {
  const json a = ExperimentConfig{};
  json b = a;
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b["seed"] = 1;
  CHECK(config_hash(a) != config_hash(b));

  ExperimentConfig c;
  c.batch.batch_size = 32;
  const auto r0 = c.resolved();
  c.seed = 1;
  const auto r1 = c.resolved();
  CHECK(r0.ide.seed != r1.ide.seed);
  CHECK(r0.ide.seed != r0.cyclegan.seed);
  CHECK(r0.ide.batch_size == 32);
  CHECK(r0.resolved().ide.seed != r0.ide.seed);
}

TEST_CASE("stage and experiment names") {
  for (auto s : {Stage::train_cyclegan, Stage::generate, Stage::train_reid, Stage::evaluate})
    CHECK(parse_stage(stage_name(s)) == s);
  CHECK_FALSE(parse_stage("train"));
  for (auto e : {Experiment::few_cameras, Experiment::loss_ablation, Experiment::ratio_sweep, Experiment::partial_bank,
                 Experiment::augmentation_grid})
    CHECK(parse_experiment(experiment_name(e)) == e);
  CHECK_FALSE(parse_experiment("everything"));
}

TEST_CASE("generate without a bank names the missing checkpoint") {
  const auto out = fresh_dir("nobank");
  try {
    run_stage(Stage::generate, tiny(), out);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("bank.json") != std::string::npos);
  }
  fs::remove_all(out);
}

TEST_CASE("four stages chain through their artifacts") {
  const auto out = fresh_dir("stages");
  const auto cfg = tiny();
  for (auto s : {Stage::train_cyclegan, Stage::generate, Stage::train_reid, Stage::evaluate}) {
    const auto r = run_stage(s, cfg, out);
    CHECK(fs::exists(r.manifest));
    const auto m = read_json(r.manifest);
    CHECK(m["stage"] == stage_name(s));
    CHECK(m["config_hash"].get<std::string>().size() == 16);
    CHECK(m.contains("version"));
  }
  CHECK(fs::exists(out / "bank" / "bank.json"));
  CHECK(fs::exists(out / "reid" / "model.ckpt"));
  const auto metrics = read_json(out / "eval" / "metrics.json");
  CHECK(metrics.contains("rank1"));
  CHECK(metrics.contains("rank2"));
  CHECK(metrics["map"].get<double>() >= 0.0);
  CHECK_THROWS(run_stage(Stage::train_cyclegan, cfg, out));
  CHECK_NOTHROW(run_stage(Stage::train_reid, cfg, out, true));
  fs::remove_all(out);
}

TEST_CASE("loss ablation emits four hashed rows and isolated cells") {
  const auto out = fresh_dir("ablation");
  const auto res = run_experiment(Experiment::loss_ablation, tiny(), out);
  REQUIRE(res.rows.size() == 4);
  std::set<std::string> labels, hashes;
  for (const auto& row : res.rows) {
    labels.insert(row["cell"]["label"].get<std::string>());
    hashes.insert(row["config_hash"].get<std::string>());
    CHECK(row["metrics"].contains("map"));
  }
  CHECK(labels == std::set<std::string>{"Real/CrossE", "Real/LSR", "Real+Fake/CrossE", "Real+Fake/LSR"});
  CHECK(hashes.size() == 4);
  CHECK(res.rows[0]["num_fakes"] == 0);
  CHECK(res.rows[2]["num_fakes"].get<int>() > 0);
  std::size_t cells = 0;
  for (const auto& e : fs::directory_iterator(out / "cells")) cells += fs::exists(e.path() / "row.json");
  CHECK(cells == 4);
  CHECK(fs::exists(out / "table.tsv"));
  CHECK(fs::exists(out / "manifest_experiment.json"));
  CHECK_THROWS_AS(run_experiment(Experiment::loss_ablation, tiny(), out), ConfigError);
  fs::remove_all(out);
}

TEST_CASE("ratio sweep covers the baseline and every ratio") {
  const auto out = fresh_dir("ratio");
  const auto res = run_experiment(Experiment::ratio_sweep, tiny({"ratios=[\"1:3\",\"3:1\"]"}), out);
  REQUIRE(res.rows.size() == 3);
  CHECK(res.rows[0]["cell"]["ratio"] == "baseline");
  CHECK(res.rows[2]["cell"]["ratio"] == "3:1");
  fs::remove_all(out);
}

TEST_CASE("partial bank counts skipped translations") {
  const auto out = fresh_dir("partial");
  const auto res = run_experiment(Experiment::partial_bank, tiny({"synth.num_cameras=3"}), out);
  REQUIRE(res.rows.size() == 3);
  CHECK(res.rows[1]["skipped"].get<int>() > 0);
  CHECK(res.rows[2]["skipped"] == 0);
  CHECK(res.rows[2]["bank_pairs"] == 3);
  fs::remove_all(out);
}
