#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"

#include "camstyle/data.hpp"

using namespace camstyle;
using namespace camstyle::data;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("camstyle_test_" + name);
  fs::remove_all(dir);
  return dir;
}

SynthConfig small_synth(int cams = 2) {
  SynthConfig c;
  c.num_cameras = cams;
  c.num_identities = 4;
  c.images_per_identity_per_camera = 2;
  c.test_identities = 3;
  c.height = c.width = 16;
  c.seed = 3;
  return c;
}

ImageF gray(int h, int w, float v) {
  ImageF img(h, w);
  img.pixels.setConstant(v);
  return img;
}

}  // namespace

TEST_CASE("market filename parsing") {
  const auto n = parse_market_filename("0002_c1s1_000451_03.jpg");
  REQUIRE(n);
  CHECK(n->identity == 2);
  CHECK(n->camera == 1);
  const auto d = parse_market_filename("-1_c3s2_000100_00.jpg");
  REQUIRE(d);
  CHECK(d->identity == -1);
  CHECK_FALSE(parse_market_filename("Thumbs.db"));
  CHECK_FALSE(parse_market_filename("0002_x1.jpg"));
  CHECK(market_filename(2, 1, 1, 451) == "0002_c1s1_000451_00.png");
}

TEST_CASE("hand-built market fixture loads") {
  const auto root = fresh_dir("fixture");
  for (const char* d : {kTrainDir, kQueryDir, kGalleryDir}) fs::create_directories(root / d);
  write_image(root / kTrainDir / "0002_c1s1_000451_03.png", gray(8, 4, 0.5f));
  write_image(root / kTrainDir / "0002_c2s1_000452_01.png", gray(8, 4, 0.25f));
  write_image(root / kTrainDir / "0007_c1s1_000001_00.png", gray(8, 4, 0.75f));
  write_image(root / kQueryDir / "0010_c1s1_000001_00.png", gray(8, 4, 0.5f));
  write_image(root / kGalleryDir / "0010_c2s1_000001_00.png", gray(8, 4, 0.5f));
  write_image(root / kGalleryDir / "0000_c2s1_000002_00.png", gray(8, 4, 0.5f));
  write_image(root / kGalleryDir / "-1_c1s1_000003_00.png", gray(8, 4, 0.5f));
  std::ofstream(root / kTrainDir / "notes.txt") << "ignored";

  const auto ds = load_market_format(root);
  CHECK(ds.count(Role::train) == 3);
  CHECK(ds.num_classes == 2);
  CHECK(ds.cameras == std::set<int>{1, 2});
  CHECK(ds.label_of(2) == 0);
  CHECK(ds.label_of(7) == 1);
  CHECK(ds.label_of(10) == -1);
  std::map<int, IdentityFlag> flags;
  for (auto i : ds.indices(Role::gallery)) flags[ds.records[i].identity] = ds.records[i].flag;
  CHECK(flags[0] == IdentityFlag::junk);
  CHECK(flags[-1] == IdentityFlag::distractor);
  CHECK(flags[10] == IdentityFlag::none);

  std::ofstream(root / kTrainDir / "garbage.png") << "x";
  try {
    load_market_format(root);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("garbage.png") != std::string::npos);
  }
  fs::remove_all(root);
}

TEST_CASE("market loading errors") {
  const auto root = fresh_dir("missing");
  fs::create_directories(root / kTrainDir);
  fs::create_directories(root / kQueryDir);
  try {
    load_market_format(root);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(kGalleryDir) != std::string::npos);
  }
  fs::create_directories(root / kGalleryDir);
  try {
    load_market_format(root);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("no train records") != std::string::npos);
  }
  fs::remove_all(root);
}

TEST_CASE("synthetic dataset counts and determinism") {
  SynthConfig c;
  c.num_cameras = 2;
  c.num_identities = 20;
  c.images_per_identity_per_camera = 4;
  c.test_identities = 2;
  c.height = c.width = 16;
  const auto a = synth_generate(c);
  CHECK(a.count(Role::train) == 160);
  CHECK(a.num_classes == 20);
  CHECK(a.count(Role::query) == 4);
  CHECK_NOTHROW(a.validate());
  const auto b = synth_generate(c);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].pixels == b.records[i].pixels);
  c.seed = 1;
  CHECK_FALSE(synth_generate(c).records[0].pixels == a.records[0].pixels);
}

TEST_CASE("synthetic config validation") {
  SynthConfig c = small_synth();
  c.num_cameras = 1;
  CHECK_THROWS(c.validate());
  c = small_synth();
  c.styles = {CameraStyle{0.1, 1.0, 0.0, 0.0}, CameraStyle{0.1, 1.0, 0.0, 0.0}};
  CHECK_THROWS(c.validate());
  c.styles[1].gamma = 0.8;
  CHECK_NOTHROW(c.validate());
  CHECK(small_synth(8).resolved_styles().size() == 8);
  CHECK(small_synth(10).resolved_styles().size() == 10);
  CHECK_NOTHROW(small_synth(10).validate());
}

TEST_CASE("camera style keeps pixels in range") {
  ImageF img = gray(8, 8, 0.5f);
  img.at(0, 0, 0) = 1.0f;
  const auto out = apply_camera_style(img, CameraStyle{0.3, 0.5, 1.0, 0.2}, 9);
  CHECK(out.in_unit_range());
  CHECK(apply_camera_style(img, CameraStyle{}, 1) == img);
}

TEST_CASE("restrict cameras") {
  const auto ds = synth_generate(small_synth(6));
  const auto two = restrict_cameras(ds, {1, 2});
  CHECK(two.num_cameras() == 2);
  for (const auto& r : two.records) CHECK((r.camera == 1 || r.camera == 2));
  CHECK_NOTHROW(two.validate());
  const auto all = restrict_cameras(ds, ds.cameras);
  CHECK(all.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    CHECK(all.records[i].identity == ds.records[i].identity);
    CHECK(all.records[i].camera == ds.records[i].camera);
  }
  CHECK_THROWS(restrict_cameras(ds, {1}));
  CHECK_THROWS(restrict_cameras(ds, {1, 9}));
}

TEST_CASE("market export round trip") {
  const auto ds = synth_generate(small_synth());
  const auto root = fresh_dir("roundtrip");
  export_market_format(ds, root);
  CHECK_THROWS(export_market_format(ds, root));
  const auto back = load_market_format(root);
  CHECK(back.count(Role::train) == ds.count(Role::train));
  CHECK(back.count(Role::query) == ds.count(Role::query));
  CHECK(back.count(Role::gallery) == ds.count(Role::gallery));
  CHECK(back.num_classes == ds.num_classes);
  std::multiset<std::pair<int, int>> before, after;
  for (const auto& r : ds.records) before.insert({r.identity, r.camera});
  for (const auto& r : back.records) after.insert({r.identity, r.camera});
  CHECK(before == after);
  const auto& r0 = back.records[back.indices(Role::train)[0]];
  CHECK(r0.pixels.height == 16);
  fs::remove_all(root);
}

TEST_CASE("bilinear resize uses half-pixel centers") {
  ImageF row(1, 2);
  row.at(0, 1, 0) = 1.0f;
  const auto up = resize_bilinear(row, 1, 4);
  CHECK(up.at(0, 0, 0) == doctest::Approx(0.0));
  CHECK(up.at(0, 1, 0) == doctest::Approx(0.25));
  CHECK(up.at(0, 2, 0) == doctest::Approx(0.75));
  CHECK(up.at(0, 3, 0) == doctest::Approx(1.0));
  CHECK(up.at(0, 2, 1) == 0.0f);
  const auto flat = resize_bilinear(gray(8, 4, 0.3f), 5, 7);
  CHECK(flat.pixels.minCoeff() == doctest::Approx(0.3));
  CHECK(flat.pixels.maxCoeff() == doctest::Approx(0.3));
  CHECK_THROWS(resize_bilinear(row, 0, 4));
}
