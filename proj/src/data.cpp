#include "camstyle/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <regex>

#include "camstyle/core/random.hpp"

namespace camstyle::data {

namespace fs = std::filesystem;
using nlohmann::json;

const char* role_name(Role r) {
  switch (r) {
    case Role::train: return "train";
    case Role::query: return "query";
    case Role::gallery: return "gallery";
  }
  return "?";
}

const char* origin_name(Origin o) { return o == Origin::real ? "real" : "fake"; }

std::vector<std::size_t> CameraDataset::indices(Role role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].role == role) out.push_back(i);
  return out;
}

int CameraDataset::label_of(int identity) const {
  auto it = std::lower_bound(class_identities.begin(), class_identities.end(), identity);
  if (it == class_identities.end() || *it != identity) return -1;
  return static_cast<int>(it - class_identities.begin());
}

void CameraDataset::reindex() {
  std::set<int> ids;
  for (const auto& r : records)
    if (r.role == Role::train) ids.insert(r.identity);
  class_identities.assign(ids.begin(), ids.end());
  num_classes = static_cast<int>(class_identities.size());
  for (auto& r : records) r.label = r.role == Role::train ? label_of(r.identity) : -1;
}

void CameraDataset::validate() const {
  std::set<int> ids;
  for (const auto& r : records) {
    const std::string where = r.filename.empty() ? std::string("record") : r.filename;
    if (!cameras.contains(r.camera)) {
      throw DataError(where + ": camera " + std::to_string(r.camera) + " not in the dataset's camera set");
    }
    if (r.origin == Origin::fake && (!r.source_camera || *r.source_camera == r.camera)) {
      throw DataError(where + ": fake record needs a source camera different from its camera");
    }
    if (!r.pixels.in_unit_range()) throw DataError(where + ": pixel values outside [0, 1]");
    if (r.role == Role::train) ids.insert(r.identity);
  }
  if (static_cast<int>(ids.size()) != num_classes) {
    throw DataError("num_classes " + std::to_string(num_classes) + " does not match " + std::to_string(ids.size()) +
                    " distinct train identities");
  }
}

// ---------------------------------------------------------------------------------------------
// Market-1501 layout

std::optional<MarketName> parse_market_filename(const std::string& filename) {
  static const std::regex pattern(R"(^(-?\d+)_c(\d+).*$)");
  std::smatch m;
  if (!std::regex_match(filename, m, pattern)) return std::nullopt;
  try {
    return MarketName{std::stoi(m[1].str()), std::stoi(m[2].str())};
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

static bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp" || ext == ".ppm";
}

std::vector<ImageRecord> load_market_split(const fs::path& dir, Role role) {
  if (!fs::is_directory(dir)) {
    throw DataError(std::string("missing ") + role_name(role) + " split directory: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<std::string> bad;
  std::vector<ImageRecord> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    auto parsed = parse_market_filename(name);
    if (!parsed) {
      bad.push_back(name);
      continue;
    }
    ImageRecord r;
    r.identity = parsed->identity;
    r.camera = parsed->camera;
    r.role = role;
    r.filename = name;
    if (r.identity == 0) r.flag = IdentityFlag::junk;
    if (r.identity < 0) r.flag = IdentityFlag::distractor;
    if (role == Role::train && r.flag != IdentityFlag::none) {
      throw DataError("junk/distractor identity in train split: " + name);
    }
    r.pixels = read_image(f);
    out.push_back(std::move(r));
  }
  if (!bad.empty()) {
    std::string msg = "unparsable filenames in " + dir.string() + ":";
    for (const auto& b : bad) msg += " " + b;
    throw DataError(msg);
  }
  return out;
}

CameraDataset load_market_format(const fs::path& root) {
  const std::array<std::pair<const char*, Role>, 3> splits{
      {{kTrainDir, Role::train}, {kQueryDir, Role::query}, {kGalleryDir, Role::gallery}}};
  for (const auto& [dir, role] : splits) {
    if (!fs::is_directory(root / dir)) {
      throw DataError(std::string("missing ") + role_name(role) + " split: " + (root / dir).string());
    }
  }
  CameraDataset ds;
  ds.name = root.filename().string();
  for (const auto& [dir, role] : splits) {
    auto recs = load_market_split(root / dir, role);
    if (role == Role::train && recs.empty()) throw DataError("no train records in " + (root / dir).string());
    for (auto& r : recs) {
      ds.cameras.insert(r.camera);
      ds.records.push_back(std::move(r));
    }
  }
  ds.reindex();
  return ds;
}

std::string market_filename(int identity, int camera, int sequence, int index, const std::string& ext) {
  char buf[96];
  if (identity < 0) {
    std::snprintf(buf, sizeof buf, "-1_c%ds%d_%06d_00", camera, sequence, index);
  } else {
    std::snprintf(buf, sizeof buf, "%04d_c%ds%d_%06d_00", identity, camera, sequence, index);
  }
  return std::string(buf) + ext;
}

void export_market_format(const CameraDataset& dataset, const fs::path& root, bool force) {
  if (fs::exists(root) && !fs::is_empty(root) && !force) {
    throw DataError("export target " + root.string() + " is not empty (pass force to overwrite)");
  }
  for (const char* d : {kTrainDir, kQueryDir, kGalleryDir}) fs::create_directories(root / d);
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    const char* dir = r.role == Role::train ? kTrainDir : r.role == Role::query ? kQueryDir : kGalleryDir;
    write_image(root / dir / market_filename(r.identity, r.camera, 1, static_cast<int>(i)), r.pixels);
  }
}

// ---------------------------------------------------------------------------------------------
// Synthetic multi-camera people

std::vector<CameraStyle> SynthConfig::resolved_styles() const {
  if (!styles.empty()) return styles;
  static const std::vector<CameraStyle> presets{
      {0.00, 1.00, 0, 0.01}, {0.18, 0.60, 1, 0.03},  {-0.14, 1.50, 0, 0.02}, {0.30, 0.80, 2, 0.01},
      {-0.26, 1.25, 1, 0.04}, {0.45, 0.70, 0, 0.02}, {0.08, 1.80, 1, 0.01},  {-0.40, 0.90, 2, 0.03}};
  std::vector<CameraStyle> out;
  for (int c = 0; c < num_cameras; ++c) {
    if (c < static_cast<int>(presets.size())) {
      out.push_back(presets[c]);
    } else {
      const double k = c;
      out.push_back({std::fmod(0.37 * k, 1.0) - 0.5, 0.6 + std::fmod(0.23 * k, 1.2), std::fmod(k, 3.0),
                     0.01 + 0.01 * std::fmod(k, 4.0)});
    }
  }
  return out;
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw DataError("SynthConfig: " + m); };
  if (num_cameras < 2) fail("need at least 2 cameras, got " + std::to_string(num_cameras));
  if (num_identities < 1 || images_per_identity_per_camera < 1) fail("counts must be >= 1");
  if (test_identities < 0) fail("test_identities must be >= 0");
  if (height < 8 || width < 8) fail("image size must be at least 8x8");
  if (!styles.empty() && static_cast<int>(styles.size()) != num_cameras) {
    fail("expected " + std::to_string(num_cameras) + " camera styles, got " + std::to_string(styles.size()));
  }
  const auto s = resolved_styles();
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].gamma <= 0 || s[i].blur_radius < 0 || s[i].noise_sigma < 0) fail("invalid style parameters");
    for (std::size_t j = i + 1; j < s.size(); ++j)
      if (s[i] == s[j]) fail("cameras " + std::to_string(i + 1) + " and " + std::to_string(j + 1) + " share a style");
  }
}

void to_json(json& j, const SynthConfig& c) {
  json styles = json::array();
  for (const auto& s : c.styles)
    styles.push_back({{"hue_shift", s.hue_shift}, {"gamma", s.gamma}, {"blur_radius", s.blur_radius},
                      {"noise_sigma", s.noise_sigma}});
  j = json{{"num_cameras", c.num_cameras},
           {"num_identities", c.num_identities},
           {"images_per_identity_per_camera", c.images_per_identity_per_camera},
           {"test_identities", c.test_identities},
           {"height", c.height},
           {"width", c.width},
           {"styles", styles},
           {"seed", c.seed},
           {"name", c.name}};
}

void from_json(const json& j, SynthConfig& c) {
  SynthConfig d;
  c.num_cameras = j.value("num_cameras", d.num_cameras);
  c.num_identities = j.value("num_identities", d.num_identities);
  c.images_per_identity_per_camera = j.value("images_per_identity_per_camera", d.images_per_identity_per_camera);
  c.test_identities = j.value("test_identities", d.test_identities);
  c.height = j.value("height", d.height);
  c.width = j.value("width", d.width);
  c.seed = j.value("seed", d.seed);
  c.name = j.value("name", d.name);
  c.styles.clear();
  if (j.contains("styles")) {
    for (const auto& s : j.at("styles")) {
      c.styles.push_back({s.value("hue_shift", 0.0), s.value("gamma", 1.0), s.value("blur_radius", 0.0),
                          s.value("noise_sigma", 0.0)});
    }
  }
}

namespace {

using Rgb = std::array<double, 3>;

Rgb hsv(double h, double s, double v) {
  h = std::fmod(h, 1.0);
  if (h < 0) h += 1.0;
  const double x = h * 6.0;
  const int i = static_cast<int>(x) % 6;
  const double f = x - std::floor(x);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

struct Appearance {
  Rgb upper, lower, skin, shoes, stripe, bag;
  bool stripes = false;
  double stripe_period = 0.05;  // fraction of figure height
  bool has_bag = false;
  bool bag_left = false;
  double body_width = 0.36;
  double scale = 0.95;
};

struct Variation {
  double dx = 0, dy = 0;
  double leg_gap = 0.03;
  double brightness = 0;
  Rgb background{0.5, 0.5, 0.5};
  double gradient = 0;
};

Rgb random_color(Rng& rng) { return hsv(rng.uniform(), rng.uniform(0.35, 1.0), rng.uniform(0.3, 1.0)); }

Appearance draw_appearance(Rng& rng) {
  Appearance a;
  a.upper = random_color(rng);
  a.lower = random_color(rng);
  a.skin = hsv(rng.uniform(0.03, 0.1), rng.uniform(0.3, 0.6), rng.uniform(0.5, 0.95));
  a.shoes = hsv(rng.uniform(), rng.uniform(0.0, 0.5), rng.uniform(0.1, 0.6));
  a.stripe = random_color(rng);
  a.bag = random_color(rng);
  a.stripes = rng.bernoulli(0.5);
  a.stripe_period = rng.uniform(0.03, 0.07);
  a.has_bag = rng.bernoulli(0.5);
  a.bag_left = rng.bernoulli(0.5);
  a.body_width = rng.uniform(0.30, 0.44);
  a.scale = rng.uniform(0.86, 1.0);
  return a;
}

Variation draw_variation(Rng& rng, int h, int w) {
  Variation v;
  v.dx = rng.uniform(-0.06, 0.06) * w;
  v.dy = rng.uniform(-0.04, 0.04) * h;
  v.leg_gap = rng.uniform(0.0, 0.08);
  v.brightness = rng.uniform(-0.08, 0.08);
  const double g = rng.uniform(0.3, 0.7);
  v.background = {g + rng.uniform(-0.05, 0.05), g + rng.uniform(-0.05, 0.05), g + rng.uniform(-0.05, 0.05)};
  v.gradient = rng.uniform(-0.15, 0.15);
  return v;
}

ImageF render(const Appearance& a, const Variation& v, int h, int w, Rng& texture) {
  ImageF img(h, w);
  auto put = [&](int y, int x, const Rgb& c, double gain) {
    if (y < 0 || y >= h || x < 0 || x >= w) return;
    for (int k = 0; k < 3; ++k) img.at(y, x, k) = static_cast<float>(std::clamp(c[k] * gain, 0.0, 1.0));
  };
  for (int y = 0; y < h; ++y) {
    const double shade = v.gradient * (static_cast<double>(y) / h - 0.5);
    for (int x = 0; x < w; ++x) {
      const double n = texture.uniform(-0.03, 0.03);
      for (int k = 0; k < 3; ++k) img.at(y, x, k) = static_cast<float>(std::clamp(v.background[k] + shade + n, 0.0, 1.0));
    }
  }
  const double gain = 1.0 + v.brightness;
  const double cx = 0.5 * w + v.dx;
  const double top = 0.06 * h + v.dy;
  const double fh = 0.88 * h * a.scale;
  const double bw = a.body_width * w;
  const double lw = 0.12 * w;
  const double gap = v.leg_gap * w;
  auto fill_rect = [&](double x0, double x1, double y0, double y1, auto&& color_at) {
    for (int y = static_cast<int>(std::floor(y0)); y < static_cast<int>(std::ceil(y1)); ++y)
      for (int x = static_cast<int>(std::floor(x0)); x < static_cast<int>(std::ceil(x1)); ++x) put(y, x, color_at(y), gain);
  };
  // Bag behind the torso edge.
  if (a.has_bag) {
    const double bx0 = a.bag_left ? cx - bw / 2 - 0.10 * w : cx + bw / 2 - 0.02 * w;
    fill_rect(bx0, bx0 + 0.12 * w, top + 0.30 * fh, top + 0.50 * fh, [&](int) { return a.bag; });
  }
  // Torso with optional horizontal stripes.
  const double t0 = top + 0.16 * fh;
  const double period = std::max(1.0, a.stripe_period * fh);
  fill_rect(cx - bw / 2, cx + bw / 2, t0, top + 0.52 * fh, [&](int y) {
    const bool band = a.stripes && static_cast<int>(std::floor((y - t0) / period)) % 2 == 1;
    return band ? a.stripe : a.upper;
  });
  // Legs and shoes.
  for (double side : {-1.0, 1.0}) {
    const double x0 = side < 0 ? cx - gap / 2 - lw : cx + gap / 2;
    fill_rect(x0, x0 + lw, top + 0.52 * fh, top + 0.92 * fh, [&](int) { return a.lower; });
    fill_rect(x0, x0 + lw, top + 0.92 * fh, top + 0.97 * fh, [&](int) { return a.shoes; });
  }
  // Head.
  const double hy = top + 0.08 * fh, ry = 0.075 * fh, rx = 0.09 * w;
  for (int y = static_cast<int>(hy - ry); y <= static_cast<int>(hy + ry) + 1; ++y)
    for (int x = static_cast<int>(cx - rx); x <= static_cast<int>(cx + rx) + 1; ++x) {
      const double ny = (y + 0.5 - hy) / ry, nx = (x + 0.5 - cx) / rx;
      if (nx * nx + ny * ny <= 1.0) put(y, x, a.skin, gain);
    }
  return img;
}

ImageF box_blur(const ImageF& src, int r) {
  if (r <= 0) return src;
  ImageF tmp(src.height, src.width), out(src.height, src.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x) {
        double s = 0;
        int n = 0;
        for (int k = std::max(0, x - r); k <= std::min(src.width - 1, x + r); ++k, ++n) s += src.at(y, k, c);
        tmp.at(y, x, c) = static_cast<float>(s / n);
      }
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x) {
        double s = 0;
        int n = 0;
        for (int k = std::max(0, y - r); k <= std::min(src.height - 1, y + r); ++k, ++n) s += tmp.at(k, x, c);
        out.at(y, x, c) = static_cast<float>(s / n);
      }
  }
  return out;
}

}  // namespace

ImageF apply_camera_style(const ImageF& image, const CameraStyle& style, std::uint64_t noise_seed) {
  // Hue rotation: rotate RGB about the gray axis (Rodrigues).
  const double theta = 2.0 * std::numbers::pi * style.hue_shift;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double k = 1.0 / 3.0, sq = std::sqrt(k);
  Eigen::Matrix3d rot;
  rot << cs + (1 - cs) * k, (1 - cs) * k - sq * sn, (1 - cs) * k + sq * sn,  //
      (1 - cs) * k + sq * sn, cs + (1 - cs) * k, (1 - cs) * k - sq * sn,    //
      (1 - cs) * k - sq * sn, (1 - cs) * k + sq * sn, cs + (1 - cs) * k;
  ImageF out(image.height, image.width);
  Eigen::MatrixX3d px = image.pixels.cast<double>() * rot.transpose();
  px = px.cwiseMax(0.0).cwiseMin(1.0).array().pow(style.gamma).matrix();
  out.pixels = px.cast<float>();
  out = box_blur(out, static_cast<int>(std::lround(style.blur_radius)));
  if (style.noise_sigma > 0) {
    Rng rng(noise_seed);
    for (Eigen::Index i = 0; i < out.pixels.size(); ++i) {
      out.pixels.data()[i] = static_cast<float>(
          std::clamp(static_cast<double>(out.pixels.data()[i]) + rng.normal(0.0, style.noise_sigma), 0.0, 1.0));
    }
  }
  return out;
}

CameraDataset synth_generate(const SynthConfig& config) {
  config.validate();
  const auto styles = config.resolved_styles();
  CameraDataset ds;
  ds.name = config.name;
  for (int c = 1; c <= config.num_cameras; ++c) ds.cameras.insert(c);

  const int total_ids = config.num_identities + config.test_identities;
  const int test_per_cam = std::max(2, config.images_per_identity_per_camera);
  for (int id = 1; id <= total_ids; ++id) {
    const bool train = id <= config.num_identities;
    Rng app_rng(derive_seed(config.seed, {0xa9, static_cast<std::uint64_t>(id)}));
    const Appearance app = draw_appearance(app_rng);
    const int per_cam = train ? config.images_per_identity_per_camera : test_per_cam;
    for (int cam = 1; cam <= config.num_cameras; ++cam) {
      for (int k = 0; k < per_cam; ++k) {
        const auto key = {static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(cam), static_cast<std::uint64_t>(k)};
        Rng var_rng(derive_seed(config.seed ^ 0x51ULL, key));
        const Variation var = draw_variation(var_rng, config.height, config.width);
        Rng texture(derive_seed(config.seed ^ 0x7eULL, key));
        ImageRecord r;
        r.pixels = apply_camera_style(render(app, var, config.height, config.width, texture), styles[cam - 1],
                                      derive_seed(config.seed ^ 0x9fULL, key));
        r.identity = id;
        r.camera = cam;
        r.role = train ? Role::train : (k == 0 ? Role::query : Role::gallery);
        r.filename = market_filename(id, cam, 1, static_cast<int>(ds.records.size()));
        ds.records.push_back(std::move(r));
      }
    }
  }
  ds.reindex();
  return ds;
}

CameraDataset restrict_cameras(const CameraDataset& dataset, const std::set<int>& keep) {
  if (keep.size() < 2) throw DataError("restrict_cameras: cross-camera retrieval needs at least 2 cameras");
  for (int c : keep)
    if (!dataset.cameras.contains(c)) throw DataError("restrict_cameras: camera " + std::to_string(c) + " not in dataset");
  CameraDataset out;
  out.name = dataset.name;
  out.cameras = keep;
  for (const auto& r : dataset.records)
    if (keep.contains(r.camera)) out.records.push_back(r);
  out.reindex();
  return out;
}

}  // namespace camstyle::data
