#ifndef CAMSTYLE_NN_ACTIVATION_HPP_
#define CAMSTYLE_NN_ACTIVATION_HPP_

#include <stdexcept>

#include "camstyle/nn/layer.hpp"

namespace camstyle::nn {

/// max(x, slope*x); slope 0 is the plain rectifier.
template <typename Scalar>
class LeakyReLU final : public Layer<Scalar> {
 public:
  explicit LeakyReLU(Scalar slope = Scalar(0)) : slope_(slope) {}

  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) override {
    ctx.tensors.assign(1, x);
    Tensor<Scalar> y(x.shape);
    y.values = (x.values.array() > Scalar(0)).select(x.values, slope_ * x.values);
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>& ctx) override {
    const Tensor<Scalar>& x = ctx.tensors.front();
    Tensor<Scalar> gx(gy.shape);
    gx.values = (x.values.array() > Scalar(0)).select(gy.values, slope_ * gy.values);
    return gx;
  }

 private:
  Scalar slope_;
};

template <typename Scalar>
class ReLU final : public Layer<Scalar> {
 public:
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) override { return impl_.forward(x, ctx); }
  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>& ctx) override { return impl_.backward(gy, ctx); }

 private:
  LeakyReLU<Scalar> impl_{Scalar(0)};
};

template <typename Scalar>
class Tanh final : public Layer<Scalar> {
 public:
  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) override {
    Tensor<Scalar> y(x.shape);
    y.values = x.values.array().tanh();
    ctx.tensors.assign(1, y);
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>& ctx) override {
    const Tensor<Scalar>& y = ctx.tensors.front();
    Tensor<Scalar> gx(gy.shape);
    gx.values = gy.values.array() * (Scalar(1) - y.values.array().square());
    return gx;
  }
};

/// Elementwise scale*x + shift (pixel range conversion).
template <typename Scalar>
class Affine final : public Layer<Scalar> {
 public:
  Affine(Scalar scale, Scalar shift) : scale_(scale), shift_(shift) {}

  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>&) override {
    Tensor<Scalar> y(x.shape);
    y.values = (scale_ * x.values.array() + shift_).matrix();
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>&) override {
    Tensor<Scalar> gx(gy.shape);
    gx.values = scale_ * gy.values;
    return gx;
  }

 private:
  Scalar scale_;
  Scalar shift_;
};

/// Inverted dropout: active only in training mode, draws from the context's generator.
template <typename Scalar>
class Dropout final : public Layer<Scalar> {
 public:
  explicit Dropout(double p) : p_(p) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("Dropout: p must be in [0, 1)");
  }

  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) override {
    ctx.mats.clear();
    if (!ctx.training || p_ == 0.0) return x;
    if (ctx.rng == nullptr) throw std::logic_error("Dropout: training mode needs a generator");
    Matrix<Scalar> mask(x.values.size(), 1);
    const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - p_));
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = ctx.rng->bernoulli(p_) ? Scalar(0) : keep;
    Tensor<Scalar> y(x.shape);
    y.values = x.values.cwiseProduct(mask.col(0));
    ctx.mats.push_back(std::move(mask));
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>& ctx) override {
    if (ctx.mats.empty()) return gy;
    Tensor<Scalar> gx(gy.shape);
    gx.values = gy.values.cwiseProduct(ctx.mats.front().col(0));
    return gx;
  }

  double probability() const { return p_; }

 private:
  double p_;
};

}  // namespace camstyle::nn

#endif  // CAMSTYLE_NN_ACTIVATION_HPP_
