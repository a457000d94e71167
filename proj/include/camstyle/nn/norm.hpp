#ifndef CAMSTYLE_NN_NORM_HPP_
#define CAMSTYLE_NN_NORM_HPP_

#include <cmath>

#include "camstyle/nn/layer.hpp"

namespace camstyle::nn {

/// Per-sample, per-channel normalization over the spatial plane, without affine terms.
template <typename Scalar>
class InstanceNorm2d final : public Layer<Scalar> {
 public:
  explicit InstanceNorm2d(Scalar eps = Scalar(1e-5)) : eps_(eps) {}

  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) override {
    Tensor<Scalar> y(x.shape);
    ctx.in_shape = x.shape;
    Matrix<Scalar> inv_std(x.shape.n, x.shape.c);
    const Scalar m = static_cast<Scalar>(x.shape.plane());
    for (int i = 0; i < x.shape.n; ++i) {
      auto xs = x.sample(i);
      auto ys = y.sample(i);
      RowVector<Scalar> mean = xs.colwise().sum() / m;
      ys = xs.rowwise() - mean;
      RowVector<Scalar> var = ys.array().square().colwise().sum() / m;
      RowVector<Scalar> is = (var.array() + eps_).rsqrt();
      ys = ys * is.asDiagonal();
      inv_std.row(i) = is;
    }
    ctx.tensors.assign(1, y);
    ctx.mats.assign(1, inv_std);
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>& ctx) override {
    const Tensor<Scalar>& xhat = ctx.tensors.front();
    const Matrix<Scalar>& inv_std = ctx.mats.front();
    Tensor<Scalar> gx(gy.shape);
    const Scalar m = static_cast<Scalar>(gy.shape.plane());
    for (int i = 0; i < gy.shape.n; ++i) {
      auto g = gy.sample(i);
      auto xh = xhat.sample(i);
      RowVector<Scalar> mean_g = g.colwise().sum() / m;
      RowVector<Scalar> mean_gx = (g.array() * xh.array()).colwise().sum().matrix() / m;
      auto out = gx.sample(i);
      out = g.rowwise() - mean_g;
      out -= xh * mean_gx.asDiagonal();
      out = out * inv_std.row(i).asDiagonal();
    }
    return gx;
  }

 private:
  Scalar eps_;
};

/// Batch normalization over N*H*W per channel with learned scale/shift and running statistics.
/// With H=W=1 it is the fully-connected variant.
template <typename Scalar>
class BatchNorm final : public Layer<Scalar> {
 public:
  explicit BatchNorm(int channels, Scalar momentum = Scalar(0.1), Scalar eps = Scalar(1e-5))
      : channels_(channels),
        momentum_(momentum),
        eps_(eps),
        gamma_("bn.gamma", Matrix<Scalar>::Ones(1, channels)),
        beta_("bn.beta", Matrix<Scalar>::Zero(1, channels)),
        running_mean_(Matrix<Scalar>::Zero(1, channels)),
        running_var_(Matrix<Scalar>::Ones(1, channels)) {}

  Shape output_shape(const Shape& in) const override { return in; }

  /// Frozen layers normalize with running statistics even in training mode.
  void set_frozen(bool frozen) { frozen_ = frozen; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) override {
    if (x.shape.c != channels_) throw std::invalid_argument("BatchNorm: channel mismatch " + x.shape.str());
    const bool batch_stats = ctx.training && !frozen_;
    const int n = x.shape.n;
    const int plane = x.shape.plane();
    const Scalar count = static_cast<Scalar>(n) * plane;
    RowVector<Scalar> mean, var;
    if (batch_stats) {
      mean = RowVector<Scalar>::Zero(channels_);
      for (int i = 0; i < n; ++i) mean += x.sample(i).colwise().sum();
      mean /= count;
      var = RowVector<Scalar>::Zero(channels_);
      for (int i = 0; i < n; ++i) var += (x.sample(i).rowwise() - mean).array().square().colwise().sum().matrix();
      var /= count;
      const Scalar unbias = count > 1 ? count / (count - 1) : Scalar(1);
      running_mean_.row(0) = (1 - momentum_) * running_mean_.row(0) + momentum_ * mean;
      running_var_.row(0) = (1 - momentum_) * running_var_.row(0) + momentum_ * unbias * var;
    } else {
      mean = running_mean_.row(0);
      var = running_var_.row(0);
    }
    RowVector<Scalar> inv_std = (var.array() + eps_).rsqrt();
    Tensor<Scalar> xhat(x.shape);
    Tensor<Scalar> y(x.shape);
    for (int i = 0; i < n; ++i) {
      xhat.sample(i) = (x.sample(i).rowwise() - mean) * inv_std.asDiagonal();
      y.sample(i) = (xhat.sample(i) * gamma_.value.row(0).asDiagonal()).rowwise() + beta_.value.row(0);
    }
    ctx.in_shape = x.shape;
    ctx.tensors.assign(1, std::move(xhat));
    ctx.mats.assign(1, inv_std);
    ctx.mats.push_back(Matrix<Scalar>::Constant(1, 1, batch_stats ? Scalar(1) : Scalar(0)));
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>& ctx) override {
    const Tensor<Scalar>& xhat = ctx.tensors.front();
    const RowVector<Scalar> inv_std = ctx.mats[0].row(0);
    const bool batch_stats = ctx.mats[1](0, 0) != Scalar(0);
    const int n = gy.shape.n;
    const Scalar count = static_cast<Scalar>(n) * gy.shape.plane();

    RowVector<Scalar> sum_g = RowVector<Scalar>::Zero(channels_);
    RowVector<Scalar> sum_gx = RowVector<Scalar>::Zero(channels_);
    for (int i = 0; i < n; ++i) {
      sum_g += gy.sample(i).colwise().sum();
      sum_gx += (gy.sample(i).array() * xhat.sample(i).array()).colwise().sum().matrix();
    }
    gamma_.grad.row(0) += sum_gx;
    beta_.grad.row(0) += sum_g;

    Tensor<Scalar> gx(gy.shape);
    RowVector<Scalar> scale = (gamma_.value.row(0).array() * inv_std.array()).matrix();
    for (int i = 0; i < n; ++i) {
      auto out = gx.sample(i);
      if (batch_stats) {
        out = gy.sample(i).rowwise() - sum_g / count;
        out -= xhat.sample(i) * (sum_gx / count).asDiagonal();
        out = out * scale.asDiagonal();
      } else {
        out = gy.sample(i) * scale.asDiagonal();
      }
    }
    return gx;
  }

  void collect_parameters(std::vector<Parameter<Scalar>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_buffers(std::vector<Matrix<Scalar>*>& out) override {
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }
  void set_group(int g) override { gamma_.group = beta_.group = g; }

 private:
  int channels_;
  Scalar momentum_;
  Scalar eps_;
  bool frozen_ = false;
  Parameter<Scalar> gamma_;
  Parameter<Scalar> beta_;
  Matrix<Scalar> running_mean_;
  Matrix<Scalar> running_var_;
};

}  // namespace camstyle::nn

#endif  // CAMSTYLE_NN_NORM_HPP_
