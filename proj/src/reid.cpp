#include "camstyle/reid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "camstyle/losses.hpp"

namespace camstyle::reid {

namespace fs = std::filesystem;
using nlohmann::json;

const char* backbone_name(Backbone b) { return b == Backbone::tiny_cnn ? "tiny_cnn" : "reference_resnet50"; }

Backbone parse_backbone(const std::string& name) {
  if (name == "tiny_cnn") return Backbone::tiny_cnn;
  if (name == "reference_resnet50") return Backbone::reference_resnet50;
  throw ReidError("unknown backbone '" + name + "' (expected reference_resnet50 or tiny_cnn)");
}

int IdeConfig::feature_dim() const { return backbone == Backbone::tiny_cnn ? tiny_width << (tiny_depth - 1) : 2048; }

void IdeConfig::validate() const {
  auto fail = [](const std::string& m) { throw ReidError("IdeConfig: " + m); };
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (dropout_p < 0 || dropout_p >= 1) fail("dropout_p must be in [0, 1)");
  if (total_epochs < 1 || lr_decay_epoch < 0 || total_epochs < lr_decay_epoch) {
    fail("need total_epochs >= lr_decay_epoch >= 0 and total_epochs >= 1");
  }
  if (lr_base <= 0 || lr_head <= 0) fail("learning rates must be > 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (backbone == Backbone::tiny_cnn) {
    if (tiny_depth < 1 || tiny_width < 1) fail("tiny_cnn needs depth >= 1 and width >= 1");
    const int shrink = 1 << tiny_depth;
    if (input_height < shrink || input_width < shrink) fail("input too small for tiny_cnn depth");
  } else if (input_height < 32 || input_width < 32) {
    fail("reference backbone needs inputs of at least 32x32");
  }
}

void to_json(json& j, const IdeConfig& c) {
  j = json{{"backbone", backbone_name(c.backbone)},
           {"tiny_depth", c.tiny_depth},
           {"tiny_width", c.tiny_width},
           {"embed_dim", c.embed_dim},
           {"num_classes", c.num_classes},
           {"dropout_p", c.dropout_p},
           {"input_height", c.input_height},
           {"input_width", c.input_width},
           {"lr_base", c.lr_base},
           {"lr_head", c.lr_head},
           {"lr_decay_epoch", c.lr_decay_epoch},
           {"total_epochs", c.total_epochs},
           {"batch_size", c.batch_size},
           {"momentum", c.momentum},
           {"weight_decay", c.weight_decay},
           {"nesterov", c.nesterov},
           {"freeze_backbone_bn", c.freeze_backbone_bn},
           {"pretrained_path", c.pretrained_path},
           {"seed", c.seed}};
}

void from_json(const json& j, IdeConfig& c) {
  const IdeConfig d;
  c.backbone = parse_backbone(j.value("backbone", std::string(backbone_name(d.backbone))));
  c.tiny_depth = j.value("tiny_depth", d.tiny_depth);
  c.tiny_width = j.value("tiny_width", d.tiny_width);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.dropout_p = j.value("dropout_p", d.dropout_p);
  c.input_height = j.value("input_height", d.input_height);
  c.input_width = j.value("input_width", d.input_width);
  c.lr_base = j.value("lr_base", d.lr_base);
  c.lr_head = j.value("lr_head", d.lr_head);
  c.lr_decay_epoch = j.value("lr_decay_epoch", d.lr_decay_epoch);
  c.total_epochs = j.value("total_epochs", d.total_epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.momentum = j.value("momentum", d.momentum);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.nesterov = j.value("nesterov", d.nesterov);
  c.freeze_backbone_bn = j.value("freeze_backbone_bn", d.freeze_backbone_bn);
  c.pretrained_path = j.value("pretrained_path", d.pretrained_path);
  c.seed = j.value("seed", d.seed);
}

std::pair<double, double> learning_rates(const IdeConfig& cfg, int epoch) {
  const double scale = epoch >= cfg.lr_decay_epoch ? 0.1 : 1.0;
  return {cfg.lr_base * scale, cfg.lr_head * scale};
}

std::unique_ptr<IdeModel> build_ide(const IdeConfig& cfg) {
  auto model = std::make_unique<IdeModel>(cfg);
  Rng rng(derive_seed(cfg.seed, "ide-init"));
  nn::initialize(model->backbone(), nn::InitScheme::kaiming, rng);
  nn::initialize(model->head(), nn::InitScheme::kaiming, rng);
  auto& w = model->classifier().parameters().front()->value;
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(rng.normal(0.0, 0.001));
  if (!cfg.pretrained_path.empty()) {
    std::ifstream is(cfg.pretrained_path, std::ios::binary);
    if (!is) throw ReidError("cannot open pretrained backbone blob " + cfg.pretrained_path);
    nn::read_blob(is, model->backbone());
  }
  return model;
}

Eigen::MatrixXd class_probabilities(const Tensor<float>& logits) {
  const auto rows = logits.rows();
  Eigen::MatrixXd out(rows.rows(), rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    out.row(i) = losses::softmax(rows.row(i).transpose().cast<double>()).transpose();
  return out;
}

// ---------------------------------------------------------------------------------------------

void to_json(json& j, const AugmentConfig& c) {
  j = json{{"flip_crop", c.flip_crop},
           {"crop_padding", c.crop_padding},
           {"random_erasing", c.random_erasing},
           {"erasing_p", c.erasing_p},
           {"erasing_area_lo", c.erasing_area_lo},
           {"erasing_area_hi", c.erasing_area_hi},
           {"erasing_aspect", c.erasing_aspect},
           {"erasing_attempts", c.erasing_attempts}};
}

void from_json(const json& j, AugmentConfig& c) {
  const AugmentConfig d;
  c.flip_crop = j.value("flip_crop", d.flip_crop);
  c.crop_padding = j.value("crop_padding", d.crop_padding);
  c.random_erasing = j.value("random_erasing", d.random_erasing);
  c.erasing_p = j.value("erasing_p", d.erasing_p);
  c.erasing_area_lo = j.value("erasing_area_lo", d.erasing_area_lo);
  c.erasing_area_hi = j.value("erasing_area_hi", d.erasing_area_hi);
  c.erasing_aspect = j.value("erasing_aspect", d.erasing_aspect);
  c.erasing_attempts = j.value("erasing_attempts", d.erasing_attempts);
}

ImageF apply_flip_crop(const ImageF& image, int out_h, int out_w, int pad, const FlipCropDraw& draw) {
  const int ph = image.height + 2 * pad, pw = image.width + 2 * pad;
  if (ph < out_h || pw < out_w) throw ReidError("flip_crop: image smaller than the crop after padding");
  if (draw.offset_y < 0 || draw.offset_x < 0 || draw.offset_y + out_h > ph || draw.offset_x + out_w > pw) {
    throw ReidError("flip_crop: crop offset outside the padded image");
  }
  const ImageF src = draw.flip ? flip_horizontal(image) : image;
  ImageF out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = y + draw.offset_y - pad;
    if (sy < 0 || sy >= src.height) continue;
    for (int x = 0; x < out_w; ++x) {
      const int sx = x + draw.offset_x - pad;
      if (sx < 0 || sx >= src.width) continue;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(sy, sx, c);
    }
  }
  return out;
}

ImageF augment_flip_crop(const ImageF& image, int out_h, int out_w, int pad, Rng& rng) {
  FlipCropDraw d;
  d.flip = rng.bernoulli(0.5);
  d.offset_y = rng.uniform_int(0, image.height + 2 * pad - out_h);
  d.offset_x = rng.uniform_int(0, image.width + 2 * pad - out_w);
  return apply_flip_crop(image, out_h, out_w, pad, d);
}

ImageF random_erasing(const ImageF& image, double p, double area_lo, double area_hi, double aspect, Rng& rng,
                      int attempts) {
  if (p < 0 || p > 1) throw ReidError("random_erasing: p must be in [0, 1]");
  if (!(area_lo > 0 && area_lo <= area_hi && area_hi < 1)) throw ReidError("random_erasing: need 0 < lo <= hi < 1");
  if (!(aspect > 0 && aspect <= 1)) throw ReidError("random_erasing: aspect must be in (0, 1]");
  if (!rng.bernoulli(p)) return image;
  const double area = static_cast<double>(image.height) * image.width;
  for (int t = 0; t < attempts; ++t) {
    const double target = rng.uniform(area_lo, area_hi) * area;
    const double ratio = rng.uniform(aspect, 1.0 / aspect);
    const int h = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int w = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    const double share = static_cast<double>(h) * w / area;
    if (h < 1 || w < 1 || h > image.height || w > image.width || share < area_lo || share > area_hi) continue;
    const int y0 = rng.uniform_int(0, image.height - h);
    const int x0 = rng.uniform_int(0, image.width - w);
    ImageF out = image;
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = static_cast<float>(1.0 - rng.uniform());
    return out;
  }
  return image;
}

// ---------------------------------------------------------------------------------------------

const char* target_name(TargetKind k) { return k == TargetKind::lsr ? "lsr" : "cross_entropy"; }

TargetKind parse_target(const std::string& name) {
  if (name == "lsr") return TargetKind::lsr;
  if (name == "cross_entropy") return TargetKind::cross_entropy;
  throw ReidError("unknown loss kind '" + name + "' (expected cross_entropy or lsr)");
}

void to_json(json& j, const LossConfig& c) {
  j = json{{"real", target_name(c.real)}, {"fake", target_name(c.fake)}, {"epsilon", c.epsilon}};
}

void from_json(const json& j, LossConfig& c) {
  const LossConfig d;
  c.real = parse_target(j.value("real", std::string(target_name(d.real))));
  c.fake = parse_target(j.value("fake", std::string(target_name(d.fake))));
  c.epsilon = j.value("epsilon", d.epsilon);
}

void to_json(json& j, const TrainingReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"real_loss", e.real_loss},
                      {"fake_loss", e.fake_loss ? json(*e.fake_loss) : json(nullptr)},
                      {"total_loss", e.total_loss},
                      {"lr_base", e.lr_base},
                      {"lr_head", e.lr_head},
                      {"batches", e.batches}});
  }
  j = json{{"epochs", epochs}, {"checkpoint", r.checkpoint}};
}

namespace {

std::vector<ImageF> resized(std::span<const data::ImageRecord> records, int h, int w) {
  std::vector<ImageF> out;
  out.reserve(records.size());
  for (const auto& r : records)
    out.push_back(r.pixels.height == h && r.pixels.width == w ? r.pixels : resize_bilinear(r.pixels, h, w));
  return out;
}

void check_labels(std::span<const data::ImageRecord> records, int classes, const char* what) {
  for (const auto& r : records) {
    if (r.label < 0 || r.label >= classes) {
      throw ReidError(std::string("train_reid: ") + what + " record '" + r.filename + "' has label " +
                      std::to_string(r.label) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

losses::LabelDistribution<double> target_for(TargetKind kind, int label, int classes, double epsilon) {
  return kind == TargetKind::lsr ? losses::lsr_distribution(label, classes, epsilon) : losses::one_hot(label, classes);
}

}  // namespace

TrainingReport train_reid(IdeModel& model, std::span<const data::ImageRecord> reals,
                          std::span<const data::ImageRecord> fakes, const sampler::BatchSpec& spec,
                          const LossConfig& loss, const AugmentConfig& augment, int num_cameras,
                          const ReidEpochCallback& on_epoch) {
  const IdeConfig& cfg = model.config();
  const int classes = cfg.num_classes;
  if (reals.empty()) throw ReidError("train_reid: no real training images");
  check_labels(reals, classes, "real");
  check_labels(fakes, classes, "fake");
  const bool use_fakes = spec.ratio_fake > 0 && !fakes.empty();
  sampler::BatchSpec plan_spec = spec;
  if (!use_fakes) plan_spec.ratio_fake = 0;
  plan_spec.validate();

  const int h = cfg.input_height, w = cfg.input_width;
  const std::vector<ImageF> real_images = resized(reals, h, w);
  const std::vector<ImageF> fake_images = use_fakes ? resized(fakes, h, w) : std::vector<ImageF>{};

  auto params = model.parameters();
  nn::Sgd<float> sgd(params, cfg.momentum, cfg.weight_decay, cfg.nesterov);
  TrainingReport report;

  for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const auto [lr_base, lr_head] = learning_rates(cfg, epoch);
    const double group_lr[2] = {lr_base, lr_head};
    const auto plan = sampler::epoch_plan(reals.size(), fake_images.size(), plan_spec, num_cameras, epoch);
    Rng aug_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), 0xa1}));
    Rng drop_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), 0xd2}));

    EpochReport er;
    er.epoch = epoch;
    er.lr_base = lr_base;
    er.lr_head = lr_head;
    double real_sum = 0, fake_sum = 0, total_sum = 0;
    int fake_batches = 0;
    for (const auto& batch : plan.batches) {
      std::vector<ImageF> images;
      std::vector<int> labels;
      images.reserve(batch.real.size() + batch.fake.size());
      auto add = [&](const ImageF& img, int label) {
        ImageF x = augment.flip_crop ? augment_flip_crop(img, h, w, augment.crop_padding, aug_rng) : img;
        if (augment.random_erasing) {
          x = random_erasing(x, augment.erasing_p, augment.erasing_area_lo, augment.erasing_area_hi,
                             augment.erasing_aspect, aug_rng, augment.erasing_attempts);
        }
        images.push_back(std::move(x));
        labels.push_back(label);
      };
      for (std::size_t i : batch.real) add(real_images[i], reals[i].label);
      for (std::size_t i : batch.fake) add(fake_images[i], fakes[i].label);

      const Tensor<float> x = to_tensor<float>(std::span<const ImageF>(images));
      nn::Context<float> ctx(true, &drop_rng);
      sgd.zero_grad();
      auto out = model.forward(x, ctx);
      Tensor<float> grad(out.logits.shape);
      const std::size_t m = batch.real.size(), n = batch.fake.size();
      std::vector<double> real_losses, fake_losses;
      for (std::size_t i = 0; i < m + n; ++i) {
        const bool is_real = i < m;
        const auto q = target_for(is_real ? loss.real : loss.fake, labels[i], classes, loss.epsilon);
        const Eigen::VectorXd z = out.logits.rows().row(static_cast<Eigen::Index>(i)).transpose().cast<double>();
        const double li = losses::cross_entropy(losses::predict(z), q);
        (is_real ? real_losses : fake_losses).push_back(li);
        const double scale = 1.0 / static_cast<double>(is_real ? m : n);
        grad.rows().row(static_cast<Eigen::Index>(i)) =
            (losses::cross_entropy_logit_grad(z, q) * scale).transpose().cast<float>();
      }
      const double total = losses::mixed_batch_loss(real_losses, fake_losses);
      model.backward(grad, ctx);
      sgd.step(group_lr);

      const double real_mean = losses::mixed_batch_loss(real_losses, {});
      real_sum += real_mean;
      if (n > 0) {
        fake_sum += total - real_mean;
        ++fake_batches;
      }
      total_sum += total;
      ++er.batches;
    }
    er.real_loss = real_sum / er.batches;
    if (fake_batches > 0) er.fake_loss = fake_sum / fake_batches;
    er.total_loss = total_sum / er.batches;
    report.epochs.push_back(er);
    if (on_epoch) on_epoch(er);
  }
  return report;
}

Eigen::MatrixXf extract_features(IdeModel& model, std::span<const ImageF> images, int batch) {
  const IdeConfig& cfg = model.config();
  Eigen::MatrixXf out(static_cast<Eigen::Index>(images.size()), cfg.feature_dim());
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(images.size(), start + static_cast<std::size_t>(batch));
    std::vector<ImageF> chunk;
    for (std::size_t i = start; i < end; ++i) {
      const ImageF& img = images[i];
      chunk.push_back(img.height == cfg.input_height && img.width == cfg.input_width
                          ? img
                          : resize_bilinear(img, cfg.input_height, cfg.input_width));
    }
    nn::Context<float> ctx(false, nullptr);
    const Tensor<float> f = model.backbone().forward(to_tensor<float>(std::span<const ImageF>(chunk)), ctx);
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = f.rows();
  }
  return out;
}

// ---------------------------------------------------------------------------------------------

static constexpr const char* kIdeMagic = "camstyle-ide-checkpoint";

void save_checkpoint(const fs::path& file, IdeModel& model, int epoch) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw ReidError("cannot write checkpoint " + file.string());
  const json header{{"format_version", kIdeCheckpointVersion},
                    {"config", model.config()},
                    {"epoch", epoch},
                    {"num_classes", model.config().num_classes},
                    {"blob_floats", nn::blob_size(model.backbone()) + nn::blob_size(model.head())}};
  os << kIdeMagic << '\n' << header.dump() << '\n';
  nn::write_blob(os, model.backbone());
  nn::write_blob(os, model.head());
  if (!os) throw ReidError("failed writing checkpoint " + file.string());
}

LoadedModel load_checkpoint(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw ReidError("cannot open re-id checkpoint " + file.string());
  std::string magic, line;
  std::getline(is, magic);
  if (magic != kIdeMagic) throw ReidError(file.string() + ": not a re-id checkpoint");
  std::getline(is, line);
  const json header = json::parse(line);
  if (header.at("format_version").get<int>() != kIdeCheckpointVersion) {
    throw ReidError(file.string() + ": unsupported checkpoint version");
  }
  IdeConfig cfg = header.at("config").get<IdeConfig>();
  cfg.pretrained_path.clear();
  LoadedModel out;
  out.model = std::make_unique<IdeModel>(cfg);
  if (header.at("blob_floats").get<std::size_t>() != nn::blob_size(out.model->backbone()) + nn::blob_size(out.model->head())) {
    throw ReidError(file.string() + ": parameter count does not match the recorded config");
  }
  nn::read_blob(is, out.model->backbone());
  nn::read_blob(is, out.model->head());
  out.epoch = header.at("epoch").get<int>();
  return out;
}

void write_features(const fs::path& base, const Eigen::MatrixXf& features, std::span<const eval::ItemMeta> meta) {
  if (static_cast<Eigen::Index>(meta.size()) != features.rows()) throw ReidError("write_features: metadata/row mismatch");
  fs::path bin = base, side = base;
  bin += ".bin";
  side += ".json";
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = features;
  std::ofstream os(bin, std::ios::binary);
  os.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(float)));
  if (!os) throw ReidError("cannot write " + bin.string());
  json items = json::array();
  for (const auto& m : meta) {
    items.push_back({{"identity", m.identity}, {"camera", m.camera}, {"flag", static_cast<int>(m.flag)}});
  }
  std::ofstream js(side);
  js << json{{"rows", features.rows()}, {"cols", features.cols()}, {"dtype", "float32"}, {"order", "row-major"},
             {"items", items}}
            .dump()
     << '\n';
  if (!js) throw ReidError("cannot write " + side.string());
}

FeatureSet read_features(const fs::path& base) {
  fs::path bin = base, side = base;
  bin += ".bin";
  side += ".json";
  std::ifstream js(side);
  if (!js) throw ReidError("missing feature sidecar " + side.string());
  const json header = json::parse(js);
  const auto rows = header.at("rows").get<Eigen::Index>(), cols = header.at("cols").get<Eigen::Index>();
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  std::ifstream is(bin, std::ios::binary);
  if (!is) throw ReidError("missing feature matrix " + bin.string());
  is.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(float)));
  if (!is) throw ReidError(bin.string() + " is shorter than its sidecar says");
  FeatureSet out;
  out.features = rm;
  for (const auto& item : header.at("items")) {
    out.meta.push_back({item.at("identity").get<int>(), item.at("camera").get<int>(),
                        static_cast<data::IdentityFlag>(item.at("flag").get<int>())});
  }
  return out;
}

}  // namespace camstyle::reid
