#ifndef CAMSTYLE_REID_HPP_
#define CAMSTYLE_REID_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "camstyle/core/image.hpp"
#include "camstyle/core/random.hpp"
#include "camstyle/data.hpp"
#include "camstyle/eval.hpp"
#include "camstyle/nn.hpp"
#include "camstyle/sampler.hpp"

namespace camstyle::reid {

class ReidError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Backbone { reference_resnet50, tiny_cnn };

const char* backbone_name(Backbone b);
Backbone parse_backbone(const std::string& name);

struct IdeConfig {
  Backbone backbone = Backbone::reference_resnet50;
  int tiny_depth = 3;  // tiny_cnn: conv stages
  int tiny_width = 32;  // tiny_cnn: channels of the first stage, doubled per stage
  int embed_dim = 1024;
  int num_classes = 0;
  double dropout_p = 0.5;
  int input_height = 256;
  int input_width = 128;
  double lr_base = 0.01;
  double lr_head = 0.1;
  int lr_decay_epoch = 40;
  int total_epochs = 50;
  int batch_size = 128;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool nesterov = true;
  /// Backbone batch-norm uses its running statistics during training.
  bool freeze_backbone_bn = false;
  /// Optional raw parameter blob for the backbone (reference backbone only).
  std::string pretrained_path;
  std::uint64_t seed = 0;

  int feature_dim() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const IdeConfig& c);
void from_json(const nlohmann::json& j, IdeConfig& c);

/// (base, head) learning rates for the 0-based epoch.
std::pair<double, double> learning_rates(const IdeConfig& cfg, int epoch);

namespace detail {

template <typename Scalar>
nn::BatchNorm<Scalar>& add_bn(nn::Sequential<Scalar>& s, int channels, std::vector<nn::BatchNorm<Scalar>*>& all) {
  auto& bn = s.template emplace<nn::BatchNorm<Scalar>>(channels);
  all.push_back(&bn);
  return bn;
}

template <typename Scalar>
nn::LayerPtr<Scalar> bottleneck(int in, int mid, int out, int stride, std::vector<nn::BatchNorm<Scalar>*>& bns) {
  using namespace nn;
  auto main = std::make_unique<Sequential<Scalar>>();
  main->template emplace<Conv2d<Scalar>>(in, mid, 1, 1, 0, PadMode::zeros, false);
  add_bn(*main, mid, bns);
  main->template emplace<ReLU<Scalar>>();
  main->template emplace<Conv2d<Scalar>>(mid, mid, 3, stride, 1, PadMode::zeros, false);
  add_bn(*main, mid, bns);
  main->template emplace<ReLU<Scalar>>();
  main->template emplace<Conv2d<Scalar>>(mid, out, 1, 1, 0, PadMode::zeros, false);
  add_bn(*main, out, bns);
  std::unique_ptr<Sequential<Scalar>> shortcut;
  if (in != out || stride != 1) {
    shortcut = std::make_unique<Sequential<Scalar>>();
    shortcut->template emplace<Conv2d<Scalar>>(in, out, 1, stride, 0, PadMode::zeros, false);
    add_bn(*shortcut, out, bns);
  }
  return std::make_unique<Residual<Scalar>>(std::move(main), std::move(shortcut), true);
}

}  // namespace detail

/// Identity classifier: backbone -> pooled feature -> FC(embed) -> BN -> ReLU -> Dropout -> FC(C).
/// The pooled feature is the retrieval descriptor. Head parameters form learning-rate group 1.
template <typename Scalar>
class Ide {
 public:
  explicit Ide(const IdeConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    using namespace nn;
    if (cfg.backbone == Backbone::tiny_cnn) {
      int in = 3;
      for (int i = 0; i < cfg.tiny_depth; ++i) {
        const int out = cfg.tiny_width << i;
        backbone_.template emplace<Conv2d<Scalar>>(in, out, 3, 1, 1, PadMode::zeros, false);
        detail::add_bn(backbone_, out, backbone_bns_);
        backbone_.template emplace<ReLU<Scalar>>();
        backbone_.template emplace<MaxPool2d<Scalar>>(2, 2);
        in = out;
      }
    } else {
      backbone_.template emplace<Conv2d<Scalar>>(3, 64, 7, 2, 3, PadMode::zeros, false);
      detail::add_bn(backbone_, 64, backbone_bns_);
      backbone_.template emplace<ReLU<Scalar>>();
      backbone_.template emplace<MaxPool2d<Scalar>>(3, 2, 1);
      const int blocks[4] = {3, 4, 6, 3};
      int in = 64;
      for (int stage = 0; stage < 4; ++stage) {
        const int mid = 64 << stage, out = mid * 4;
        for (int b = 0; b < blocks[stage]; ++b) {
          backbone_.push(detail::bottleneck<Scalar>(in, mid, out, b == 0 && stage > 0 ? 2 : 1, backbone_bns_));
          in = out;
        }
      }
    }
    backbone_.template emplace<GlobalAvgPool<Scalar>>();
    for (auto* bn : backbone_bns_) bn->set_frozen(cfg.freeze_backbone_bn);

    head_.template emplace<Linear<Scalar>>(cfg.feature_dim(), cfg.embed_dim);
    std::vector<BatchNorm<Scalar>*> head_bns;
    detail::add_bn(head_, cfg.embed_dim, head_bns);
    head_.template emplace<ReLU<Scalar>>();
    head_.template emplace<Dropout<Scalar>>(cfg.dropout_p);
    classifier_ = &head_.template emplace<Linear<Scalar>>(cfg.embed_dim, cfg.num_classes);
    head_.set_group(1);
  }

  const IdeConfig& config() const { return cfg_; }

  struct Output {
    Tensor<Scalar> features;  // N x feature_dim x 1 x 1
    Tensor<Scalar> logits;    // N x C x 1 x 1
  };

  Output forward(const Tensor<Scalar>& x, nn::Context<Scalar>& ctx) {
    Output o;
    o.features = backbone_.forward(x, ctx.child(0));
    o.logits = head_.forward(o.features, ctx.child(1));
    return o;
  }

  /// Back-propagates d(loss)/d(logits); parameter gradients accumulate.
  void backward(const Tensor<Scalar>& grad_logits, nn::Context<Scalar>& ctx) {
    Tensor<Scalar> g = head_.backward(grad_logits, ctx.children[1]);
    backbone_.backward(g, ctx.children[0]);
  }

  std::vector<nn::Parameter<Scalar>*> parameters() {
    auto p = backbone_.parameters();
    auto q = head_.parameters();
    p.insert(p.end(), q.begin(), q.end());
    return p;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  nn::Sequential<Scalar>& backbone() { return backbone_; }
  nn::Sequential<Scalar>& head() { return head_; }
  nn::Linear<Scalar>& classifier() { return *classifier_; }

 private:
  IdeConfig cfg_;
  nn::Sequential<Scalar> backbone_;
  nn::Sequential<Scalar> head_;
  std::vector<nn::BatchNorm<Scalar>*> backbone_bns_;
  nn::Linear<Scalar>* classifier_ = nullptr;
};

using IdeModel = Ide<float>;

/// Builds and initializes: He-normal convolutions and embedding, N(0, 0.001) classifier. A
/// configured pretrained blob replaces the backbone parameters.
std::unique_ptr<IdeModel> build_ide(const IdeConfig& cfg);

/// Row-wise softmax of a logits tensor (N x C).
Eigen::MatrixXd class_probabilities(const Tensor<float>& logits);

// Augmentation -------------------------------------------------------------------------------

struct AugmentConfig {
  bool flip_crop = true;
  int crop_padding = 10;
  bool random_erasing = false;
  double erasing_p = 0.5;
  double erasing_area_lo = 0.02;
  double erasing_area_hi = 0.4;
  double erasing_aspect = 0.3;
  int erasing_attempts = 100;
};

void to_json(nlohmann::json& j, const AugmentConfig& c);
void from_json(const nlohmann::json& j, AugmentConfig& c);

struct FlipCropDraw {
  bool flip = false;
  int offset_y = 0;  // top-left of the crop inside the padded image
  int offset_x = 0;
};

/// Zero-pads by `pad` on each side, then crops out_h x out_w at the drawn offset.
ImageF apply_flip_crop(const ImageF& image, int out_h, int out_w, int pad, const FlipCropDraw& draw);
/// Flip with probability 0.5 and a uniformly placed crop.
ImageF augment_flip_crop(const ImageF& image, int out_h, int out_w, int pad, Rng& rng);

/// With probability p, overwrites one rectangle whose area share lies in [area_lo, area_hi] and
/// whose aspect ratio lies in [aspect, 1/aspect] with uniform noise in (0, 1]. Gives up and
/// returns the input unchanged when no rectangle fits within `attempts` draws.
ImageF random_erasing(const ImageF& image, double p, double area_lo, double area_hi, double aspect, Rng& rng,
                      int attempts = 100);

// Training -----------------------------------------------------------------------------------

enum class TargetKind { cross_entropy, lsr };

const char* target_name(TargetKind k);
TargetKind parse_target(const std::string& name);

struct LossConfig {
  TargetKind real = TargetKind::cross_entropy;
  TargetKind fake = TargetKind::lsr;
  double epsilon = 0.1;
};

void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

struct EpochReport {
  int epoch = 0;
  double real_loss = 0;
  std::optional<double> fake_loss;  // absent when no fake was seen
  double total_loss = 0;
  double lr_base = 0;
  double lr_head = 0;
  int batches = 0;
};

struct TrainingReport {
  std::vector<EpochReport> epochs;
  std::string checkpoint;
};

void to_json(nlohmann::json& j, const TrainingReport& r);

using ReidEpochCallback = std::function<void(const EpochReport&)>;

/// Momentum SGD over epoch plans from the sampler. Loss per batch: mean real loss plus mean
/// fake loss. `num_cameras` sets the per-epoch fake share.
TrainingReport train_reid(IdeModel& model, std::span<const data::ImageRecord> reals,
                          std::span<const data::ImageRecord> fakes, const sampler::BatchSpec& spec,
                          const LossConfig& loss, const AugmentConfig& augment, int num_cameras,
                          const ReidEpochCallback& on_epoch = {});

/// Pooled descriptors in evaluation mode, one row per image. Images are resized to the model
/// input size.
Eigen::MatrixXf extract_features(IdeModel& model, std::span<const ImageF> images, int batch = 64);

// Files --------------------------------------------------------------------------------------

inline constexpr int kIdeCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& file, IdeModel& model, int epoch);
struct LoadedModel {
  std::unique_ptr<IdeModel> model;
  int epoch = 0;
};
LoadedModel load_checkpoint(const std::filesystem::path& file);

/// `<base>.bin` holds row-major float32; `<base>.json` holds rows, cols and per-row metadata.
void write_features(const std::filesystem::path& base, const Eigen::MatrixXf& features,
                    std::span<const eval::ItemMeta> meta);
struct FeatureSet {
  Eigen::MatrixXf features;
  std::vector<eval::ItemMeta> meta;
};
FeatureSet read_features(const std::filesystem::path& base);

}  // namespace camstyle::reid

#endif  // CAMSTYLE_REID_HPP_
