#include "camstyle/cyclegan.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace camstyle::cyclegan {

using nlohmann::json;

void CycleGanConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("CycleGanConfig: " + msg); };
  if (!(lr_generator > 0) || !(lr_discriminator > 0)) fail("learning rates must be > 0");
  if (lambda_cyc < 0 || lambda_identity < 0) fail("loss weights must be >= 0");
  if (residual_blocks < 1) fail("residual_blocks must be >= 1");
  if (epochs_constant < 0 || epochs_decay < 0 || total_epochs() < 1) fail("need at least one epoch");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (generator_filters < 1 || discriminator_filters < 1) fail("filter counts must be >= 1");
  if (downsampling < 0) fail("downsampling must be >= 0");
  if (discriminator_layers < 1) fail("discriminator_layers must be >= 1");
  if (outer_kernel < 1 || outer_kernel % 2 == 0) fail("outer_kernel must be odd");
  const int factor = 1 << downsampling;
  if (image_size < 1 || image_size % factor != 0) {
    fail("image_size " + std::to_string(image_size) + " is not divisible by the down/upsampling factor " +
         std::to_string(factor));
  }
  if (outer_kernel / 2 >= image_size) fail("image_size too small for outer_kernel");
  if (image_size / factor < 2) fail("image_size too small for the residual stage");
  int grid = image_size;
  for (int n = 0; n <= discriminator_layers + 1; ++n) {
    const int stride = n < discriminator_layers ? 2 : 1;
    grid = grid + 2 < 4 ? 0 : (grid + 2 - 4) / stride + 1;
  }
  if (grid < 1) {
    fail("image_size " + std::to_string(image_size) + " leaves no discriminator output with " +
         std::to_string(discriminator_layers) + " discriminator layers");
  }
  if (history_pool && history_pool_size < 1) fail("history_pool_size must be >= 1");
}

void to_json(json& j, const CycleGanConfig& c) {
  j = json{{"lambda_cyc", c.lambda_cyc},
           {"lambda_identity", c.lambda_identity},
           {"residual_blocks", c.residual_blocks},
           {"image_size", c.image_size},
           {"lr_generator", c.lr_generator},
           {"lr_discriminator", c.lr_discriminator},
           {"epochs_constant", c.epochs_constant},
           {"epochs_decay", c.epochs_decay},
           {"batch_size", c.batch_size},
           {"seed", c.seed},
           {"generator_filters", c.generator_filters},
           {"discriminator_filters", c.discriminator_filters},
           {"downsampling", c.downsampling},
           {"discriminator_layers", c.discriminator_layers},
           {"outer_kernel", c.outer_kernel},
           {"identity_bypass", c.identity_bypass},
           {"history_pool", c.history_pool},
           {"history_pool_size", c.history_pool_size},
           {"flip_augment", c.flip_augment},
           {"adam_beta1", c.adam_beta1},
           {"adam_beta2", c.adam_beta2}};
}

void from_json(const json& j, CycleGanConfig& c) {
  CycleGanConfig d;
  c.lambda_cyc = j.value("lambda_cyc", d.lambda_cyc);
  c.lambda_identity = j.value("lambda_identity", d.lambda_identity);
  c.residual_blocks = j.value("residual_blocks", d.residual_blocks);
  c.image_size = j.value("image_size", d.image_size);
  c.lr_generator = j.value("lr_generator", d.lr_generator);
  c.lr_discriminator = j.value("lr_discriminator", d.lr_discriminator);
  c.epochs_constant = j.value("epochs_constant", d.epochs_constant);
  c.epochs_decay = j.value("epochs_decay", d.epochs_decay);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.generator_filters = j.value("generator_filters", d.generator_filters);
  c.discriminator_filters = j.value("discriminator_filters", d.discriminator_filters);
  c.downsampling = j.value("downsampling", d.downsampling);
  c.discriminator_layers = j.value("discriminator_layers", d.discriminator_layers);
  c.outer_kernel = j.value("outer_kernel", d.outer_kernel);
  c.identity_bypass = j.value("identity_bypass", d.identity_bypass);
  c.history_pool = j.value("history_pool", d.history_pool);
  c.history_pool_size = j.value("history_pool_size", d.history_pool_size);
  c.flip_augment = j.value("flip_augment", d.flip_augment);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
}

static json terms_json(const ObjectiveTerms& t) {
  return json{{"adversarial_g", t.adversarial_g}, {"adversarial_f", t.adversarial_f}, {"cycle_a", t.cycle_a},
              {"cycle_b", t.cycle_b},             {"identity_g", t.identity_g},       {"identity_f", t.identity_f},
              {"total", t.total}};
}

void to_json(json& j, const EpochLog& e) {
  j = json{{"epoch", e.epoch},
           {"lr_generator", e.lr_generator},
           {"lr_discriminator", e.lr_discriminator},
           {"generator", terms_json(e.generator)},
           {"discriminator_a", e.discriminator_a},
           {"discriminator_b", e.discriminator_b}};
}

void from_json(const json& j, EpochLog& e) {
  e.epoch = j.at("epoch").get<int>();
  e.lr_generator = j.at("lr_generator").get<double>();
  e.lr_discriminator = j.at("lr_discriminator").get<double>();
  const json& g = j.at("generator");
  e.generator.adversarial_g = g.at("adversarial_g").get<double>();
  e.generator.adversarial_f = g.at("adversarial_f").get<double>();
  e.generator.cycle_a = g.at("cycle_a").get<double>();
  e.generator.cycle_b = g.at("cycle_b").get<double>();
  e.generator.identity_g = g.at("identity_g").get<double>();
  e.generator.identity_f = g.at("identity_f").get<double>();
  e.generator.total = g.at("total").get<double>();
  e.discriminator_a = j.at("discriminator_a").get<double>();
  e.discriminator_b = j.at("discriminator_b").get<double>();
}

double scheduled_lr(double base, int epoch, int epochs_constant, int epochs_decay) {
  if (epoch < epochs_constant) return base;
  if (epochs_decay <= 0) return base;
  const double remaining = static_cast<double>(epochs_constant + epochs_decay - epoch) / epochs_decay;
  return base * std::clamp(remaining, 0.0, 1.0);
}

// ---------------------------------------------------------------------------------------------

CameraPairModel::CameraPairModel(CameraPair cameras, CycleGanConfig config, std::shared_ptr<Generator<float>> g,
                                 std::shared_ptr<Generator<float>> f, std::vector<EpochLog> log)
    : cameras_(cameras), config_(std::move(config)), g_(std::move(g)), f_(std::move(f)), log_(std::move(log)) {
  if (cameras_.first >= cameras_.second) throw std::invalid_argument("CameraPairModel: pair must be canonical");
  if (!g_ || !f_) throw std::invalid_argument("CameraPairModel: missing generator");
}

ImageF CameraPairModel::translate(const ImageF& image, Direction d) const {
  const int s = config_.image_size;
  if (image.height != s || image.width != s) {
    throw std::invalid_argument("translate: expected " + std::to_string(s) + "x" + std::to_string(s) + " image");
  }
  Tensor<float> y = generator(d).infer(to_tensor<float>(image));
  return from_tensor<float>(y, 0);
}

Vector<float> CameraPairModel::parameter_vector() const {
  Vector<float> a = nn::flatten_values(g_->parameters());
  Vector<float> b = nn::flatten_values(f_->parameters());
  Vector<float> out(a.size() + b.size());
  out << a, b;
  return out;
}

static constexpr const char* kMagic = "camstyle-cyclegan-checkpoint";

void CameraPairModel::save(const std::filesystem::path& file) const {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + file.string());
  json header{{"format_version", kCheckpointVersion},
              {"camera_a", cameras_.first},
              {"camera_b", cameras_.second},
              {"config", config_},
              {"blob_floats", nn::blob_size(*g_) + nn::blob_size(*f_)},
              {"training_log", log_}};
  os << kMagic << '\n' << header.dump() << '\n';
  nn::write_blob(os, *g_);
  nn::write_blob(os, *f_);
  if (!os) throw std::runtime_error("failed writing checkpoint " + file.string());
}

CameraPairModel CameraPairModel::load(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + file.string());
  std::string magic, header_line;
  std::getline(is, magic);
  if (magic != kMagic) throw std::runtime_error(file.string() + ": not a cyclegan checkpoint");
  std::getline(is, header_line);
  const json header = json::parse(header_line);
  const int version = header.at("format_version").get<int>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error(file.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto cfg = header.at("config").get<CycleGanConfig>();
  auto g = std::make_shared<Generator<float>>(cfg);
  auto f = std::make_shared<Generator<float>>(cfg);
  if (header.at("blob_floats").get<std::size_t>() != nn::blob_size(*g) + nn::blob_size(*f)) {
    throw std::runtime_error(file.string() + ": parameter count does not match the recorded config");
  }
  nn::read_blob(is, *g);
  nn::read_blob(is, *f);
  auto log = header.at("training_log").get<std::vector<EpochLog>>();
  return CameraPairModel(CameraPair::of(header.at("camera_a").get<int>(), header.at("camera_b").get<int>()), cfg,
                         std::move(g), std::move(f), std::move(log));
}

// ---------------------------------------------------------------------------------------------

namespace {

/// Buffer of previously generated images; the discriminator sees a mix of current and
/// historical fakes.
class HistoryPool {
 public:
  HistoryPool(int capacity, bool enabled) : capacity_(capacity), enabled_(enabled) {}

  Tensor<float> query(const Tensor<float>& fakes, Rng& rng) {
    if (!enabled_) return fakes;
    Tensor<float> out(fakes.shape);
    for (int i = 0; i < fakes.shape.n; ++i) {
      Matrix<float> img = fakes.sample(i);
      if (static_cast<int>(stored_.size()) < capacity_) {
        stored_.push_back(img);
        out.sample(i) = img;
      } else if (rng.uniform() > 0.5) {
        const int k = rng.uniform_int(0, capacity_ - 1);
        out.sample(i) = stored_[k];
        stored_[k] = std::move(img);
      } else {
        out.sample(i) = img;
      }
    }
    return out;
  }

 private:
  int capacity_;
  bool enabled_;
  std::vector<Matrix<float>> stored_;
};

std::vector<ImageF> prepare(std::span<const ImageF> images, int size) {
  std::vector<ImageF> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(resize_bilinear(img, size, size));
  return out;
}

Tensor<float> gather(const std::vector<ImageF>& pool, const std::vector<std::size_t>& order, std::size_t start,
                     int count, bool flip, Rng& rng) {
  std::vector<ImageF> batch;
  batch.reserve(count);
  for (int i = 0; i < count; ++i) {
    const ImageF& img = pool[order[(start + i) % order.size()]];
    batch.push_back(flip && rng.bernoulli(0.5) ? flip_horizontal(img) : img);
  }
  return to_tensor<float>(std::span<const ImageF>(batch));
}

}  // namespace

CameraPairModel train_pair(std::span<const ImageF> data_a, std::span<const ImageF> data_b, const CycleGanConfig& cfg,
                           CameraPair cameras, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data_a.empty() || data_b.empty()) {
    throw std::invalid_argument("train_pair: camera pair " + cameras.id() + " has an empty domain");
  }
  cameras = CameraPair::of(cameras.first, cameras.second);
  const std::vector<ImageF> a = prepare(data_a, cfg.image_size);
  const std::vector<ImageF> b = prepare(data_b, cfg.image_size);

  Rng init_rng(derive_seed(cfg.seed, {0x1417, static_cast<std::uint64_t>(cameras.first),
                                      static_cast<std::uint64_t>(cameras.second)}));
  Rng rng(derive_seed(cfg.seed, {0x7a41, static_cast<std::uint64_t>(cameras.first),
                                 static_cast<std::uint64_t>(cameras.second)}));
  auto nets = CycleGanNetworks<float>::build(cfg, init_rng);
  nn::Adam<float> opt_g(nets.generator_parameters(), cfg.adam_beta1, cfg.adam_beta2);
  nn::Adam<float> opt_d(nets.discriminator_parameters(), cfg.adam_beta1, cfg.adam_beta2);
  HistoryPool pool_a(cfg.history_pool_size, cfg.history_pool);
  HistoryPool pool_b(cfg.history_pool_size, cfg.history_pool);

  const std::size_t steps_per_epoch =
      (std::max(a.size(), b.size()) + static_cast<std::size_t>(cfg.batch_size) - 1) / cfg.batch_size;
  std::vector<EpochLog> log;

  for (int epoch = 0; epoch < cfg.total_epochs(); ++epoch) {
    const double lr_g = scheduled_lr(cfg.lr_generator, epoch, cfg.epochs_constant, cfg.epochs_decay);
    const double lr_d = scheduled_lr(cfg.lr_discriminator, epoch, cfg.epochs_constant, cfg.epochs_decay);
    const auto order_a = rng.permutation(a.size());
    const auto order_b = rng.permutation(b.size());
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr_generator = lr_g;
    entry.lr_discriminator = lr_d;

    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::size_t start = step * cfg.batch_size;
      const Tensor<float> real_a = gather(a, order_a, start, cfg.batch_size, cfg.flip_augment, rng);
      const Tensor<float> real_b = gather(b, order_b, start, cfg.batch_size, cfg.flip_augment, rng);

      // Generator update.
      opt_g.zero_grad();
      Tensor<float> fake_b, fake_a;
      const ObjectiveTerms t = total_objective(nets, real_a, real_b, cfg, true, &fake_b, &fake_a);
      opt_g.step(lr_g);

      // Discriminator update on real images and (pooled) fakes from before the generator step.
      opt_d.zero_grad();
      const Tensor<float> hist_b = pool_b.query(fake_b, rng);
      const Tensor<float> hist_a = pool_a.query(fake_a, rng);
      double disc[2];
      int side = 0;
      for (auto [d, real, fake] : {std::tuple{nets.d_a.get(), &real_a, &hist_a},
                                   std::tuple{nets.d_b.get(), &real_b, &hist_b}}) {
        nn::Context<float> c_real(true, nullptr), c_fake(true, nullptr);
        const Tensor<float> s_real = d->forward(*real, c_real);
        const Tensor<float> s_fake = d->forward(*fake, c_fake);
        disc[side++] = adversarial_loss(s_real, s_fake, AdversarialSide::discriminator);
        d->backward(adversarial_discriminator_grad(s_real, true), c_real);
        d->backward(adversarial_discriminator_grad(s_fake, false), c_fake);
      }
      opt_d.step(lr_d);

      entry.generator.adversarial_g += t.adversarial_g;
      entry.generator.adversarial_f += t.adversarial_f;
      entry.generator.cycle_a += t.cycle_a;
      entry.generator.cycle_b += t.cycle_b;
      entry.generator.identity_g += t.identity_g;
      entry.generator.identity_f += t.identity_f;
      entry.generator.total += t.total;
      entry.discriminator_a += disc[0];
      entry.discriminator_b += disc[1];
    }
    const double n = static_cast<double>(steps_per_epoch);
    for (double* v : {&entry.generator.adversarial_g, &entry.generator.adversarial_f, &entry.generator.cycle_a,
                      &entry.generator.cycle_b, &entry.generator.identity_g, &entry.generator.identity_f,
                      &entry.generator.total, &entry.discriminator_a, &entry.discriminator_b}) {
      *v /= n;
    }
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }

  return CameraPairModel(cameras, cfg, std::shared_ptr<Generator<float>>(std::move(nets.g)),
                         std::shared_ptr<Generator<float>>(std::move(nets.f)), std::move(log));
}

}  // namespace camstyle::cyclegan
