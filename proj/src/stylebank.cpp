#include "camstyle/stylebank.hpp"

#include <fstream>

namespace camstyle::stylebank {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<CameraPair> all_pairs(const std::set<int>& cameras) {
  std::vector<CameraPair> out;
  for (auto a = cameras.begin(); a != cameras.end(); ++a)
    for (auto b = std::next(a); b != cameras.end(); ++b) out.push_back(CameraPair::of(*a, *b));
  return out;
}

void StyleBank::add(std::shared_ptr<const CameraPairModel> model) {
  const CameraPair p = model->cameras();
  if (pairs_.contains(p)) throw BankError("StyleBank: pair " + p.id() + " already has a model");
  cameras_.insert(p.first);
  cameras_.insert(p.second);
  pairs_.emplace(p, std::move(model));
}

const CameraPairModel* StyleBank::find(int camera_a, int camera_b) const {
  if (camera_a == camera_b) return nullptr;
  auto it = pairs_.find(CameraPair::of(camera_a, camera_b));
  return it == pairs_.end() ? nullptr : it->second.get();
}

StyleBank StyleBank::restricted_to(const std::set<int>& cameras) const {
  StyleBank out;
  for (const auto& [pair, model] : pairs_)
    if (cameras.contains(pair.first) && cameras.contains(pair.second)) out.add(model);
  return out;
}

std::string checkpoint_name(const CameraPair& pair) { return "pair_" + pair.id() + ".ckpt"; }

void StyleBank::save(const fs::path& dir) const {
  fs::create_directories(dir);
  json index{{"pairs", json::array()}, {"cameras", cameras_}};
  for (const auto& [pair, model] : pairs_) {
    const std::string name = checkpoint_name(pair);
    model->save(dir / name);
    index["pairs"].push_back({{"camera_a", pair.first}, {"camera_b", pair.second}, {"checkpoint", name}});
  }
  std::ofstream os(dir / kBankIndex);
  os << index.dump(2) << '\n';
  if (!os) throw BankError("cannot write " + (dir / kBankIndex).string());
}

StyleBank StyleBank::load(const fs::path& dir) {
  const fs::path index_file = dir / kBankIndex;
  std::ifstream is(index_file);
  if (!is) throw BankError("missing style bank checkpoint index " + index_file.string());
  const json index = json::parse(is);
  StyleBank bank;
  for (const auto& entry : index.at("pairs")) {
    const fs::path ckpt = dir / entry.at("checkpoint").get<std::string>();
    if (!fs::exists(ckpt)) throw BankError("missing pair checkpoint " + ckpt.string());
    bank.add(std::make_shared<const CameraPairModel>(CameraPairModel::load(ckpt)));
  }
  return bank;
}

StyleBank train_all_pairs(const data::CameraDataset& dataset, const std::optional<std::set<int>>& subset,
                          const cyclegan::CycleGanConfig& config, const PairProgress& progress) {
  const std::set<int> cameras = subset && !subset->empty() ? *subset : dataset.cameras;
  std::map<int, std::vector<ImageF>> per_camera;
  for (int c : cameras) {
    if (!dataset.cameras.contains(c)) throw BankError("train_all_pairs: camera " + std::to_string(c) + " not in dataset");
    per_camera[c];
  }
  for (const auto& r : dataset.records)
    if (r.role == data::Role::train && r.origin == data::Origin::real && cameras.contains(r.camera))
      per_camera[r.camera].push_back(r.pixels);
  for (const auto& [c, images] : per_camera)
    if (images.empty()) throw BankError("train_all_pairs: camera " + std::to_string(c) + " has no train images");

  StyleBank bank;
  for (const CameraPair& pair : all_pairs(cameras)) {
    cyclegan::EpochCallback cb;
    if (progress) cb = [&](const cyclegan::EpochLog& e) { progress(pair, e); };
    bank.add(std::make_shared<const CameraPairModel>(
        cyclegan::train_pair(per_camera[pair.first], per_camera[pair.second], config, pair, cb)));
  }
  return bank;
}

Direction direction_for(int source_camera, int target_camera) {
  return CameraPair::of(source_camera, target_camera).first == source_camera ? Direction::g : Direction::f;
}

const char* resolution_name(FakeResolution r) {
  return r == FakeResolution::cyclegan_square ? "cyclegan_square" : "source_size";
}

FakeResolution parse_resolution(const std::string& name) {
  if (name == "cyclegan_square") return FakeResolution::cyclegan_square;
  if (name == "source_size") return FakeResolution::source_size;
  throw BankError("unknown fake resolution '" + name + "' (expected cyclegan_square or source_size)");
}

GeneratedFakes generate_fakes(const data::CameraDataset& dataset, const StyleBank& bank, FakeResolution resolution) {
  GeneratedFakes out;
  const std::set<int>& targets = bank.cameras_covered();
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& src = dataset.records[i];
    if (src.role != data::Role::train || src.origin != data::Origin::real) continue;
    for (int target : targets) {
      if (target == src.camera) continue;
      const CameraPairModel* model = bank.find(src.camera, target);
      if (!model) {
        ++out.skipped;
        continue;
      }
      const Direction d = direction_for(src.camera, target);
      const int s = model->config().image_size;
      ImageF translated = model->translate(resize_bilinear(src.pixels, s, s), d);
      if (resolution == FakeResolution::source_size) {
        translated = resize_bilinear(translated, src.pixels.height, src.pixels.width);
      }
      data::ImageRecord fake;
      fake.pixels = std::move(translated);
      fake.identity = src.identity;
      fake.camera = target;
      fake.role = data::Role::train;
      fake.origin = data::Origin::fake;
      fake.source_camera = src.camera;
      fake.label = src.label;
      fake.filename = data::market_filename(src.identity, target, src.camera, static_cast<int>(out.fakes.size()));
      out.provenance.push_back({i, src.filename, model->cameras(), d});
      out.fakes.push_back(std::move(fake));
    }
  }
  return out;
}

fs::path export_fakes(const GeneratedFakes& fakes, const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw BankError("export_fakes: " + dir.string() + " already exists and is not empty (use force to overwrite)");
  }
  const fs::path images = dir / data::kTrainDir;
  if (force && fs::exists(images)) fs::remove_all(images);
  fs::create_directories(images);
  std::ofstream manifest(dir / kManifestName);
  if (!manifest) throw BankError("export_fakes: cannot write " + (dir / kManifestName).string());
  for (std::size_t i = 0; i < fakes.fakes.size(); ++i) {
    const auto& f = fakes.fakes[i];
    const auto& p = fakes.provenance.at(i);
    try {
      data::write_image(images / f.filename, f.pixels);
    } catch (const std::exception& e) {
      throw BankError(std::string("export_fakes: fake ") + std::to_string(i) + ": " + e.what());
    }
    json line{{"file", f.filename},
              {"source", p.source_filename},
              {"source_index", p.source_index},
              {"identity", f.identity},
              {"source_camera", *f.source_camera},
              {"target_camera", f.camera},
              {"pair", p.pair.id()},
              {"direction", cyclegan::direction_name(p.direction)}};
    manifest << line.dump() << '\n';
  }
  if (!manifest) throw BankError("export_fakes: failed writing manifest in " + dir.string());
  return dir;
}

std::vector<data::ImageRecord> load_fakes(const fs::path& dir, const data::CameraDataset* reference) {
  std::ifstream manifest(dir / kManifestName);
  if (!manifest) throw BankError("load_fakes: missing " + (dir / kManifestName).string());
  std::vector<data::ImageRecord> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    data::ImageRecord r;
    r.filename = j.at("file").get<std::string>();
    r.pixels = data::read_image(dir / data::kTrainDir / r.filename);
    r.identity = j.at("identity").get<int>();
    r.camera = j.at("target_camera").get<int>();
    r.source_camera = j.at("source_camera").get<int>();
    r.role = data::Role::train;
    r.origin = data::Origin::fake;
    if (reference) r.label = reference->label_of(r.identity);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace camstyle::stylebank
