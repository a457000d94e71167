#include <filesystem>
#include <fstream>
#include <memory>

#include "doctest.h"

#include "camstyle/stylebank.hpp"

using namespace camstyle;
using namespace camstyle::stylebank;
namespace fs = std::filesystem;

namespace {

cyclegan::CycleGanConfig tiny_gan() {
  cyclegan::CycleGanConfig c;
  c.image_size = 8;
  c.residual_blocks = 1;
  c.generator_filters = 2;
  c.discriminator_filters = 2;
  c.downsampling = 1;
  c.discriminator_layers = 1;
  c.outer_kernel = 3;
  c.epochs_constant = 1;
  c.epochs_decay = 0;
  return c;
}

std::shared_ptr<CameraPairModel> untrained(int a, int b) {
  const auto c = tiny_gan();
  Rng rng(static_cast<std::uint64_t>(a * 10 + b));
  return std::make_shared<CameraPairModel>(CameraPair::of(a, b), c, cyclegan::build_generator<float>(c, rng),
                                           cyclegan::build_generator<float>(c, rng));
}

data::CameraDataset synth(int cams) {
  data::SynthConfig c;
  c.num_cameras = cams;
  c.num_identities = 3;
  c.images_per_identity_per_camera = 2;
  c.test_identities = 2;
  c.height = c.width = 16;
  return data::synth_generate(c);
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("camstyle_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("pair enumeration") {
  CHECK(pair_count(2) == 1);
  CHECK(pair_count(6) == 15);
  CHECK(pair_count(8) == 28);
  const auto pairs = all_pairs({3, 1, 2});
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0] == CameraPair{1, 2});
  CHECK(pairs[2] == CameraPair{2, 3});
}

TEST_CASE("direction selection") {
  CHECK(direction_for(1, 2) == Direction::g);
  CHECK(direction_for(2, 1) == Direction::f);
  CHECK(direction_for(5, 3) == Direction::f);
}

TEST_CASE("bank bookkeeping") {
  StyleBank bank;
  bank.add(untrained(1, 2));
  bank.add(untrained(2, 3));
  CHECK_THROWS_AS(bank.add(untrained(1, 2)), BankError);
  CHECK(bank.covers(2, 1));
  CHECK_FALSE(bank.covers(1, 3));
  CHECK(bank.cameras_covered() == std::set<int>{1, 2, 3});
  const auto sub = bank.restricted_to({1, 2});
  CHECK(sub.size() == 1);
  CHECK(sub.cameras_covered() == std::set<int>{1, 2});
}

TEST_CASE("full bank yields L-1 fakes per image with labels preserved") {
  const auto ds = synth(3);
  StyleBank bank;
  for (const auto& p : all_pairs(ds.cameras)) bank.add(untrained(p.first, p.second));
  const auto gen = generate_fakes(ds, bank);
  CHECK(gen.fakes.size() == ds.count(data::Role::train) * 2);
  CHECK(gen.skipped == 0);
  for (std::size_t i = 0; i < gen.fakes.size(); ++i) {
    const auto& f = gen.fakes[i];
    const auto& src = ds.records[gen.provenance[i].source_index];
    CHECK(f.identity == src.identity);
    CHECK(f.label == src.label);
    CHECK(f.camera != src.camera);
    CHECK(f.source_camera == src.camera);
    CHECK(f.origin == data::Origin::fake);
    CHECK(gen.provenance[i].direction == direction_for(src.camera, f.camera));
  }
}

TEST_CASE("single image with two cameras gives one flipped fake") {
  auto ds = synth(2);
  const auto first = ds.indices(data::Role::train)[0];
  std::vector<data::ImageRecord> keep{ds.records[first]};
  for (auto i : ds.indices(data::Role::query)) keep.push_back(ds.records[i]);
  ds.records = keep;
  StyleBank bank;
  bank.add(untrained(1, 2));
  const auto gen = generate_fakes(ds, bank, FakeResolution::source_size);
  REQUIRE(gen.fakes.size() == 1);
  CHECK(gen.fakes[0].identity == keep[0].identity);
  CHECK(gen.fakes[0].camera == 3 - keep[0].camera);
  CHECK(gen.fakes[0].pixels.height == keep[0].pixels.height);
}

TEST_CASE("partial bank skips uncovered targets and counts them") {
  const auto ds = synth(3);
  StyleBank bank;
  bank.add(untrained(1, 2));
  const auto gen = generate_fakes(ds, bank);
  std::size_t cam12 = 0, cam3 = 0;
  for (auto i : ds.indices(data::Role::train)) (ds.records[i].camera == 3 ? cam3 : cam12)++;
  CHECK(gen.fakes.size() == cam12);
  CHECK(gen.skipped == cam3 * 2);
  for (const auto& f : gen.fakes) CHECK(f.source_camera != 3);
}

TEST_CASE("fake export round trip") {
  const auto ds = synth(2);
  StyleBank bank;
  bank.add(untrained(1, 2));
  auto gen = generate_fakes(ds, bank);
  gen.fakes.resize(10);
  gen.provenance.resize(10);
  const auto dir = fresh_dir("fakes");
  export_fakes(gen, dir);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / data::kTrainDir)) files += e.is_regular_file();
  CHECK(files == 10);
  CHECK(fs::exists(dir / kManifestName));
  std::ifstream manifest(dir / kManifestName);
  std::size_t lines = 0;
  for (std::string line; std::getline(manifest, line);) lines += !line.empty();
  CHECK(lines == 10);
  CHECK_THROWS(export_fakes(gen, dir));
  CHECK_NOTHROW(export_fakes(gen, dir, true));

  const auto back = load_fakes(dir, &ds);
  REQUIRE(back.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(back[i].identity == gen.fakes[i].identity);
    CHECK(back[i].camera == gen.fakes[i].camera);
    CHECK(back[i].source_camera == gen.fakes[i].source_camera);
    CHECK(back[i].label == gen.fakes[i].label);
  }
  fs::remove_all(dir);
}

TEST_CASE("bank training, saving and loading") {
  auto ds = synth(2);
  const auto bank = train_all_pairs(ds, std::nullopt, tiny_gan());
  CHECK(bank.size() == 1);
  const auto dir = fresh_dir("bank");
  bank.save(dir);
  const auto back = StyleBank::load(dir);
  REQUIRE(back.size() == 1);
  CHECK(back.find(1, 2)->parameter_vector() == bank.find(1, 2)->parameter_vector());
  fs::remove(dir / kBankIndex);
  try {
    StyleBank::load(dir);
    FAIL("expected an error");
  } catch (const BankError& e) {
    CHECK(std::string(e.what()).find(kBankIndex) != std::string::npos);
  }
  fs::remove_all(dir);

  std::vector<data::ImageRecord> keep;
  for (const auto& r : ds.records)
    if (!(r.role == data::Role::train && r.camera == 2)) keep.push_back(r);
  ds.records = keep;
  try {
    train_all_pairs(ds, std::nullopt, tiny_gan());
    FAIL("expected an error");
  } catch (const BankError& e) {
    CHECK(std::string(e.what()).find('2') != std::string::npos);
  }
}
