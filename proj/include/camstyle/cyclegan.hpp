#ifndef CAMSTYLE_CYCLEGAN_HPP_
#define CAMSTYLE_CYCLEGAN_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "camstyle/core/image.hpp"
#include "camstyle/core/random.hpp"
#include "camstyle/nn.hpp"

namespace camstyle::cyclegan {

/// Translation-model hyperparameters. The defaults are the full-size recipe; the width, depth
/// and image-size knobs exist so desk-scale runs fit on a laptop CPU.
struct CycleGanConfig {
  double lambda_cyc = 10.0;
  double lambda_identity = 5.0;
  int residual_blocks = 9;
  int image_size = 256;
  double lr_generator = 0.0002;
  double lr_discriminator = 0.0001;
  int epochs_constant = 30;
  int epochs_decay = 20;
  int batch_size = 1;
  std::uint64_t seed = 0;

  int generator_filters = 64;
  int discriminator_filters = 64;
  int downsampling = 2;
  int discriminator_layers = 3;
  int outer_kernel = 7;
  /// Adds the input (in tanh space) to the final pre-activation, so a zero last layer is the
  /// identity map.
  bool identity_bypass = false;
  bool history_pool = true;
  int history_pool_size = 50;
  bool flip_augment = true;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;

  int total_epochs() const { return epochs_constant + epochs_decay; }
  void validate() const;
};

void to_json(nlohmann::json& j, const CycleGanConfig& c);
void from_json(const nlohmann::json& j, CycleGanConfig& c);

/// Learning rate for the 0-based epoch index: constant for epochs_constant epochs, then linear
/// decay reaching zero after the last decay epoch.
double scheduled_lr(double base, int epoch, int epochs_constant, int epochs_decay);

/// ResNet-style translator: c7 stem, stride-2 downsampling, residual units, fractionally
/// strided upsampling, c7 head, output squashed into [0,1].
template <typename Scalar>
class Generator final : public nn::Layer<Scalar> {
 public:
  explicit Generator(const CycleGanConfig& cfg) : bypass_(cfg.identity_bypass), size_(cfg.image_size) {
    cfg.validate();
    using namespace nn;
    const int k = cfg.outer_kernel;
    int ch = cfg.generator_filters;
    body_.template emplace<Affine<Scalar>>(Scalar(2), Scalar(-1));
    body_.template emplace<Conv2d<Scalar>>(3, ch, k, 1, k / 2, PadMode::reflect, false);
    body_.template emplace<InstanceNorm2d<Scalar>>();
    body_.template emplace<ReLU<Scalar>>();
    for (int i = 0; i < cfg.downsampling; ++i) {
      body_.template emplace<Conv2d<Scalar>>(ch, ch * 2, 3, 2, 1, PadMode::zeros, false);
      body_.template emplace<InstanceNorm2d<Scalar>>();
      body_.template emplace<ReLU<Scalar>>();
      ch *= 2;
    }
    for (int i = 0; i < cfg.residual_blocks; ++i) {
      auto main = std::make_unique<Sequential<Scalar>>();
      main->template emplace<Conv2d<Scalar>>(ch, ch, 3, 1, 1, PadMode::reflect, false);
      main->template emplace<InstanceNorm2d<Scalar>>();
      main->template emplace<ReLU<Scalar>>();
      main->template emplace<Conv2d<Scalar>>(ch, ch, 3, 1, 1, PadMode::reflect, false);
      main->template emplace<InstanceNorm2d<Scalar>>();
      body_.push(std::make_unique<Residual<Scalar>>(std::move(main), nullptr, false));
    }
    for (int i = 0; i < cfg.downsampling; ++i) {
      body_.template emplace<ConvTranspose2d<Scalar>>(ch, ch / 2, 3, 2, 1, 1, false);
      body_.template emplace<InstanceNorm2d<Scalar>>();
      body_.template emplace<ReLU<Scalar>>();
      ch /= 2;
    }
    head_ = &body_.template emplace<Conv2d<Scalar>>(ch, 3, k, 1, k / 2, PadMode::reflect, true);
  }

  Shape output_shape(const Shape& in) const override { return body_.output_shape(in); }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, nn::Context<Scalar>& ctx) override {
    if (x.shape.c != 3 || x.shape.h != size_ || x.shape.w != size_) {
      throw std::invalid_argument("Generator: expected N x 3 x " + std::to_string(size_) + " x " +
                                  std::to_string(size_) + ", got " + x.shape.str());
    }
    Tensor<Scalar> u = body_.forward(x, ctx.child(0));
    if (bypass_) {
      Tensor<Scalar> s(x.shape);
      s.values = (Scalar(2) * x.values.array() - Scalar(1)).min(kClamp).max(-kClamp).matrix();
      u.values.array() += s.values.array().atanh();
      ctx.tensors.assign(1, x);
    } else {
      ctx.tensors.clear();
    }
    Tensor<Scalar> t(u.shape);
    t.values = u.values.array().tanh();
    ctx.mats.assign(1, t.values);
    Tensor<Scalar> y(u.shape);
    y.values = (Scalar(0.5) * (t.values.array() + Scalar(1))).matrix();
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, nn::Context<Scalar>& ctx) override {
    const auto t = ctx.mats.front().col(0).array();
    Tensor<Scalar> gu(gy.shape);
    gu.values = (gy.values.array() * Scalar(0.5) * (Scalar(1) - t.square())).matrix();
    Tensor<Scalar> gx = body_.backward(gu, ctx.children[0]);
    if (bypass_) {
      const auto s = (Scalar(2) * ctx.tensors.front().values.array() - Scalar(1));
      const auto inside = s.abs() < kClamp;
      gx.values.array() += inside.select(Scalar(2) * gu.values.array() / (Scalar(1) - s.square()), Scalar(0));
    }
    return gx;
  }

  void collect_parameters(std::vector<nn::Parameter<Scalar>*>& out) override { body_.collect_parameters(out); }

  /// Zeroes the output convolution (weights and bias).
  void zero_output_layer() {
    for (auto* p : head_->parameters()) p->value.setZero();
  }

  int image_size() const { return size_; }

 private:
  static constexpr Scalar kClamp = Scalar(0.999);
  nn::Sequential<Scalar> body_;
  nn::Layer<Scalar>* head_ = nullptr;
  bool bypass_;
  int size_;
};

/// PatchGAN critic: strided 4x4 convolutions ending in a one-channel score grid. With three
/// strided layers the receptive field of one score is 70x70 pixels.
template <typename Scalar>
class Discriminator final : public nn::Layer<Scalar> {
 public:
  explicit Discriminator(const CycleGanConfig& cfg) : size_(cfg.image_size) {
    cfg.validate();
    using namespace nn;
    const int ndf = cfg.discriminator_filters;
    body_.template emplace<Affine<Scalar>>(Scalar(2), Scalar(-1));
    body_.template emplace<Conv2d<Scalar>>(3, ndf, 4, 2, 1, PadMode::zeros, true);
    body_.template emplace<LeakyReLU<Scalar>>(Scalar(0.2));
    int prev = ndf;
    for (int n = 1; n < cfg.discriminator_layers; ++n) {
      const int nf = ndf * std::min(1 << n, 8);
      body_.template emplace<Conv2d<Scalar>>(prev, nf, 4, 2, 1, PadMode::zeros, false);
      body_.template emplace<InstanceNorm2d<Scalar>>();
      body_.template emplace<LeakyReLU<Scalar>>(Scalar(0.2));
      prev = nf;
    }
    const int nf = ndf * std::min(1 << cfg.discriminator_layers, 8);
    body_.template emplace<Conv2d<Scalar>>(prev, nf, 4, 1, 1, PadMode::zeros, false);
    body_.template emplace<InstanceNorm2d<Scalar>>();
    body_.template emplace<LeakyReLU<Scalar>>(Scalar(0.2));
    body_.template emplace<Conv2d<Scalar>>(nf, 1, 4, 1, 1, PadMode::zeros, true);
    // Surfaces undersized inputs at construction rather than on the first batch.
    body_.output_shape(Shape{1, 3, size_, size_});
  }

  Shape output_shape(const Shape& in) const override { return body_.output_shape(in); }
  Tensor<Scalar> forward(const Tensor<Scalar>& x, nn::Context<Scalar>& ctx) override { return body_.forward(x, ctx.child(0)); }
  Tensor<Scalar> backward(const Tensor<Scalar>& gy, nn::Context<Scalar>& ctx) override {
    return body_.backward(gy, ctx.children[0]);
  }
  void collect_parameters(std::vector<nn::Parameter<Scalar>*>& out) override { body_.collect_parameters(out); }

 private:
  nn::Sequential<Scalar> body_;
  int size_;
};

template <typename Scalar>
std::unique_ptr<Generator<Scalar>> build_generator(const CycleGanConfig& cfg, Rng& rng) {
  auto g = std::make_unique<Generator<Scalar>>(cfg);
  nn::initialize(*g, nn::InitScheme::gaussian_002, rng);
  return g;
}

template <typename Scalar>
std::unique_ptr<Discriminator<Scalar>> build_discriminator(const CycleGanConfig& cfg, Rng& rng) {
  auto d = std::make_unique<Discriminator<Scalar>>(cfg);
  nn::initialize(*d, nn::InitScheme::gaussian_002, rng);
  return d;
}

// ---------------------------------------------------------------------------------------------
// Loss terms

enum class AdversarialSide { generator, discriminator };

/// Least-squares adversarial loss. Discriminator side: 0.5 * (mean((real-1)^2) + mean(fake^2)).
/// Generator side: mean((fake-1)^2); scores_real is ignored.
template <typename Scalar>
Scalar adversarial_loss(const Tensor<Scalar>& scores_real, const Tensor<Scalar>& scores_fake, AdversarialSide side) {
  if (scores_fake.values.size() == 0) throw std::invalid_argument("adversarial_loss: empty fake score grid");
  const Scalar fake_to_one = (scores_fake.values.array() - Scalar(1)).square().mean();
  if (side == AdversarialSide::generator) return fake_to_one;
  if (scores_real.values.size() == 0) throw std::invalid_argument("adversarial_loss: empty real score grid");
  const Scalar real_to_one = (scores_real.values.array() - Scalar(1)).square().mean();
  const Scalar fake_to_zero = scores_fake.values.array().square().mean();
  return Scalar(0.5) * (real_to_one + fake_to_zero);
}

/// d(generator-side loss)/d(scores_fake).
template <typename Scalar>
Tensor<Scalar> adversarial_generator_grad(const Tensor<Scalar>& scores_fake) {
  Tensor<Scalar> g(scores_fake.shape);
  g.values = (Scalar(2) / static_cast<Scalar>(scores_fake.values.size())) * (scores_fake.values.array() - Scalar(1)).matrix();
  return g;
}

/// d(discriminator-side loss)/d(scores) for the real (target 1) or fake (target 0) grid.
template <typename Scalar>
Tensor<Scalar> adversarial_discriminator_grad(const Tensor<Scalar>& scores, bool real) {
  Tensor<Scalar> g(scores.shape);
  const Scalar target = real ? Scalar(1) : Scalar(0);
  g.values = (scores.values.array() - target).matrix() / static_cast<Scalar>(scores.values.size());
  return g;
}

template <typename Scalar>
Scalar mean_absolute_difference(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* who) {
  require_same_shape(a, b, who);
  if (a.values.size() == 0) return Scalar(0);
  return (a.values - b.values).array().abs().mean();
}

/// mean |x - x_reconstructed|.
template <typename Scalar>
Scalar cycle_consistency_loss(const Tensor<Scalar>& x, const Tensor<Scalar>& x_reconstructed) {
  return mean_absolute_difference(x, x_reconstructed, "cycle_consistency_loss");
}

/// mean |model(target) - target|; the caller sums the G and F terms.
template <typename Scalar>
Scalar identity_mapping_loss(const Tensor<Scalar>& model_output_on_target, const Tensor<Scalar>& target) {
  return mean_absolute_difference(model_output_on_target, target, "identity_mapping_loss");
}

/// Gradient of mean |output - reference| with respect to output (sign(0) = 0).
template <typename Scalar>
Tensor<Scalar> l1_grad(const Tensor<Scalar>& output, const Tensor<Scalar>& reference, Scalar weight) {
  require_same_shape(output, reference, "l1_grad");
  Tensor<Scalar> g(output.shape);
  const Scalar scale = weight / static_cast<Scalar>(std::max<Eigen::Index>(1, output.values.size()));
  g.values = ((output.values - reference.values).array().sign() * scale).matrix();
  return g;
}

/// The four networks alive during training of one camera pair.
template <typename Scalar>
struct CycleGanNetworks {
  std::unique_ptr<Generator<Scalar>> g;    // A -> B
  std::unique_ptr<Generator<Scalar>> f;    // B -> A
  std::unique_ptr<Discriminator<Scalar>> d_a;
  std::unique_ptr<Discriminator<Scalar>> d_b;

  static CycleGanNetworks build(const CycleGanConfig& cfg, Rng& rng) {
    CycleGanNetworks n;
    n.g = build_generator<Scalar>(cfg, rng);
    n.f = build_generator<Scalar>(cfg, rng);
    n.d_a = build_discriminator<Scalar>(cfg, rng);
    n.d_b = build_discriminator<Scalar>(cfg, rng);
    return n;
  }

  std::vector<nn::Parameter<Scalar>*> generator_parameters() {
    auto p = g->parameters();
    auto q = f->parameters();
    p.insert(p.end(), q.begin(), q.end());
    return p;
  }

  std::vector<nn::Parameter<Scalar>*> discriminator_parameters() {
    auto p = d_a->parameters();
    auto q = d_b->parameters();
    p.insert(p.end(), q.begin(), q.end());
    return p;
  }
};

/// Named components of the generator-side objective.
struct ObjectiveTerms {
  double adversarial_g = 0;  // D_B on G(a)
  double adversarial_f = 0;  // D_A on F(b)
  double cycle_a = 0;        // |F(G(a)) - a|
  double cycle_b = 0;        // |G(F(b)) - b|
  double identity_g = 0;     // |G(b) - b|
  double identity_f = 0;     // |F(a) - a|
  double total = 0;
};

/// Evaluates adv(G,D_B) + adv(F,D_A) + lambda_cyc*(cyc_a+cyc_b) + lambda_identity*(id_g+id_f).
/// With `backprop` set, accumulates d(total)/d(params) into the generator parameters (the
/// discriminators' gradients are touched too and should be cleared before their own update).
/// The translated batches are returned through fake_b/fake_a when requested.
template <typename Scalar>
ObjectiveTerms total_objective(CycleGanNetworks<Scalar>& nets, const Tensor<Scalar>& batch_a,
                               const Tensor<Scalar>& batch_b, const CycleGanConfig& cfg, bool backprop,
                               Tensor<Scalar>* fake_b_out = nullptr, Tensor<Scalar>* fake_a_out = nullptr) {
  using Ctx = nn::Context<Scalar>;
  const Scalar lc = static_cast<Scalar>(cfg.lambda_cyc);
  const Scalar li = static_cast<Scalar>(cfg.lambda_identity);
  Ctx c_ga(true, nullptr), c_frec(true, nullptr), c_fb(true, nullptr), c_grec(true, nullptr);
  Ctx c_gid(true, nullptr), c_fid(true, nullptr), c_db(true, nullptr), c_da(true, nullptr);

  Tensor<Scalar> fake_b = nets.g->forward(batch_a, c_ga);
  Tensor<Scalar> rec_a = nets.f->forward(fake_b, c_frec);
  Tensor<Scalar> fake_a = nets.f->forward(batch_b, c_fb);
  Tensor<Scalar> rec_b = nets.g->forward(fake_a, c_grec);
  Tensor<Scalar> id_g = nets.g->forward(batch_b, c_gid);
  Tensor<Scalar> id_f = nets.f->forward(batch_a, c_fid);
  Tensor<Scalar> score_b = nets.d_b->forward(fake_b, c_db);
  Tensor<Scalar> score_a = nets.d_a->forward(fake_a, c_da);

  ObjectiveTerms t;
  const Tensor<Scalar> none;
  t.adversarial_g = adversarial_loss(none, score_b, AdversarialSide::generator);
  t.adversarial_f = adversarial_loss(none, score_a, AdversarialSide::generator);
  t.cycle_a = cycle_consistency_loss(batch_a, rec_a);
  t.cycle_b = cycle_consistency_loss(batch_b, rec_b);
  t.identity_g = identity_mapping_loss(id_g, batch_b);
  t.identity_f = identity_mapping_loss(id_f, batch_a);
  t.total = t.adversarial_g + t.adversarial_f + cfg.lambda_cyc * (t.cycle_a + t.cycle_b) +
            cfg.lambda_identity * (t.identity_g + t.identity_f);

  if (backprop) {
    Tensor<Scalar> g_fake_b = nets.d_b->backward(adversarial_generator_grad(score_b), c_db);
    Tensor<Scalar> g_fake_a = nets.d_a->backward(adversarial_generator_grad(score_a), c_da);
    if (lc != Scalar(0)) {
      g_fake_b.values += nets.f->backward(l1_grad(rec_a, batch_a, lc), c_frec).values;
      g_fake_a.values += nets.g->backward(l1_grad(rec_b, batch_b, lc), c_grec).values;
    }
    nets.g->backward(g_fake_b, c_ga);
    nets.f->backward(g_fake_a, c_fb);
    if (li != Scalar(0)) {
      nets.g->backward(l1_grad(id_g, batch_b, li), c_gid);
      nets.f->backward(l1_grad(id_f, batch_a, li), c_fid);
    }
  }
  if (fake_b_out) *fake_b_out = std::move(fake_b);
  if (fake_a_out) *fake_a_out = std::move(fake_a);
  return t;
}

// ---------------------------------------------------------------------------------------------
// Trained pair models

/// Unordered camera pair, canonicalized so first < second.
struct CameraPair {
  int first = 0;
  int second = 0;

  static CameraPair of(int a, int b) {
    if (a == b) throw std::invalid_argument("CameraPair: cameras must differ (got " + std::to_string(a) + ")");
    return a < b ? CameraPair{a, b} : CameraPair{b, a};
  }
  bool contains(int cam) const { return cam == first || cam == second; }
  std::string id() const { return std::to_string(first) + "-" + std::to_string(second); }
  friend auto operator<=>(const CameraPair&, const CameraPair&) = default;
};

/// G maps the pair's first camera to its second; F maps back.
enum class Direction { g, f };

inline const char* direction_name(Direction d) { return d == Direction::g ? "G" : "F"; }

struct EpochLog {
  int epoch = 0;
  double lr_generator = 0;
  double lr_discriminator = 0;
  ObjectiveTerms generator;  // per-iteration means
  double discriminator_a = 0;
  double discriminator_b = 0;
};

void to_json(nlohmann::json& j, const EpochLog& e);
void from_json(const nlohmann::json& j, EpochLog& e);

class CameraPairModel {
 public:
  CameraPairModel(CameraPair cameras, CycleGanConfig config, std::shared_ptr<Generator<float>> g,
                  std::shared_ptr<Generator<float>> f, std::vector<EpochLog> log = {});

  const CameraPair& cameras() const { return cameras_; }
  const CycleGanConfig& config() const { return config_; }
  const std::vector<EpochLog>& training_log() const { return log_; }

  Generator<float>& generator(Direction d) const { return d == Direction::g ? *g_ : *f_; }

  /// Translates an image already at the model's square resolution.
  ImageF translate(const ImageF& image, Direction d) const;

  /// Parameter vector of G followed by F.
  Vector<float> parameter_vector() const;

  void save(const std::filesystem::path& file) const;
  static CameraPairModel load(const std::filesystem::path& file);

 private:
  CameraPair cameras_;
  CycleGanConfig config_;
  std::shared_ptr<Generator<float>> g_;
  std::shared_ptr<Generator<float>> f_;
  std::vector<EpochLog> log_;
};

inline constexpr int kCheckpointVersion = 1;

/// Called once per finished epoch (progress reporting).
using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains G: a->b and F: b->a with alternating generator/discriminator Adam updates.
/// Images of any size are resized to the configured square resolution first.
CameraPairModel train_pair(std::span<const ImageF> data_a, std::span<const ImageF> data_b, const CycleGanConfig& cfg,
                           CameraPair cameras = CameraPair{1, 2}, const EpochCallback& on_epoch = {});

}  // namespace camstyle::cyclegan

#endif  // CAMSTYLE_CYCLEGAN_HPP_
