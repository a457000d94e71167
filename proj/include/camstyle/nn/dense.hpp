#ifndef CAMSTYLE_NN_DENSE_HPP_
#define CAMSTYLE_NN_DENSE_HPP_

#include <limits>
#include <stdexcept>
#include <string>

#include "camstyle/nn/layer.hpp"

namespace camstyle::nn {

/// Fully connected layer on flattened samples; output shape is N x out x 1 x 1.
template <typename Scalar>
class Linear final : public Layer<Scalar> {
 public:
  Linear(int in_features, int out_features)
      : in_(in_features),
        out_(out_features),
        weight_("fc.weight", Matrix<Scalar>::Zero(in_features, out_features)),
        bias_("fc.bias", Matrix<Scalar>::Zero(1, out_features)) {}

  Shape output_shape(const Shape& in) const override {
    if (in.sample_size() != in_) {
      throw std::invalid_argument("Linear: expected " + std::to_string(in_) + " features, got " + in.str());
    }
    return {in.n, out_, 1, 1};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) override {
    Tensor<Scalar> y(output_shape(x.shape));
    ctx.tensors.assign(1, x);
    y.rows().noalias() = x.rows() * weight_.value;
    y.rows().rowwise() += bias_.value.row(0);
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>& ctx) override {
    const Tensor<Scalar>& x = ctx.tensors.front();
    weight_.grad.noalias() += x.rows().transpose() * gy.rows();
    bias_.grad.row(0) += gy.rows().colwise().sum();
    Tensor<Scalar> gx(x.shape);
    gx.rows().noalias() = gy.rows() * weight_.value.transpose();
    return gx;
  }

  void collect_parameters(std::vector<Parameter<Scalar>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void set_group(int g) override { weight_.group = bias_.group = g; }

  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_;
  int out_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

/// Max pooling with -inf padding.
template <typename Scalar>
class MaxPool2d final : public Layer<Scalar> {
 public:
  MaxPool2d(int kernel, int stride, int pad = 0) : kernel_(kernel), stride_(stride), pad_(pad) {}

  Shape output_shape(const Shape& in) const override {
    Shape out{in.n, in.c, (in.h + 2 * pad_ - kernel_) / stride_ + 1, (in.w + 2 * pad_ - kernel_) / stride_ + 1};
    if (out.h < 1 || out.w < 1) throw std::invalid_argument("MaxPool2d: input too small " + in.str());
    return out;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) override {
    const Shape os = output_shape(x.shape);
    Tensor<Scalar> y(os);
    Matrix<Scalar> argmax(static_cast<Eigen::Index>(os.size()), 1);
    Eigen::Index o = 0;
    for (int i = 0; i < x.shape.n; ++i) {
      for (int c = 0; c < x.shape.c; ++c) {
        const Scalar* plane = x.sample(i).col(c).data();
        for (int oy = 0; oy < os.h; ++oy) {
          for (int ox = 0; ox < os.w; ++ox, ++o) {
            Scalar best = -std::numeric_limits<Scalar>::infinity();
            int best_at = -1;
            for (int ky = 0; ky < kernel_; ++ky) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= x.shape.h) continue;
              for (int kx = 0; kx < kernel_; ++kx) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= x.shape.w) continue;
                const int at = iy * x.shape.w + ix;
                if (plane[at] > best || best_at < 0) {
                  best = plane[at];
                  best_at = at;
                }
              }
            }
            y.values(o) = best;
            argmax(o) = static_cast<Scalar>(best_at);
          }
        }
      }
    }
    ctx.in_shape = x.shape;
    ctx.mats.assign(1, std::move(argmax));
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>& ctx) override {
    Tensor<Scalar> gx(ctx.in_shape);
    const Matrix<Scalar>& argmax = ctx.mats.front();
    const int out_plane = gy.shape.plane();
    const int in_plane = ctx.in_shape.plane();
    for (Eigen::Index o = 0; o < gy.values.size(); ++o) {
      const Eigen::Index channel_block = o / out_plane;
      gx.values(channel_block * in_plane + static_cast<Eigen::Index>(argmax(o))) += gy.values(o);
    }
    return gx;
  }

 private:
  int kernel_;
  int stride_;
  int pad_;
};

/// Spatial mean per channel: N x C x H x W -> N x C x 1 x 1.
template <typename Scalar>
class GlobalAvgPool final : public Layer<Scalar> {
 public:
  Shape output_shape(const Shape& in) const override { return {in.n, in.c, 1, 1}; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) override {
    ctx.in_shape = x.shape;
    Tensor<Scalar> y(output_shape(x.shape));
    for (int i = 0; i < x.shape.n; ++i) y.rows().row(i) = x.sample(i).colwise().mean();
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>& ctx) override {
    Tensor<Scalar> gx(ctx.in_shape);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(ctx.in_shape.plane());
    for (int i = 0; i < gx.shape.n; ++i) gx.sample(i).rowwise() = gy.rows().row(i) * inv;
    return gx;
  }
};

}  // namespace camstyle::nn

#endif  // CAMSTYLE_NN_DENSE_HPP_
