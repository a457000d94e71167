#ifndef CAMSTYLE_NN_CONV_HPP_
#define CAMSTYLE_NN_CONV_HPP_

#include <stdexcept>
#include <string>

#include "camstyle/nn/layer.hpp"

namespace camstyle::nn {

enum class PadMode { zeros, reflect };

/// Sliding-window geometry shared by the convolution and its transpose.
struct ConvGeometry {
  int channels = 0;  // channels of the image the window slides over
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  PadMode mode = PadMode::zeros;

  int out_extent(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
  int patch_size() const { return channels * kernel * kernel; }
};

namespace detail {

// Maps a padded coordinate back into [0, n); returns -1 for a zero-padded position.
inline int source_index(int i, int n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  if (mode == PadMode::zeros) return -1;
  if (i < 0) return -i;
  return 2 * (n - 1) - i;
}

/// Unfolds a planar C x H x W image into (OH*OW) x (C*K*K) patches.
template <typename Scalar>
void im2col(const Scalar* src, int h, int w, const ConvGeometry& g, int oh, int ow, Matrix<Scalar>& col) {
  const int k = g.kernel;
  col.resize(static_cast<Eigen::Index>(oh) * ow, g.patch_size());
  for (int c = 0; c < g.channels; ++c) {
    const Scalar* plane = src + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = col.col((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = source_index(oy * g.stride - g.pad + ky, h, g.mode);
          Scalar* row = dst + static_cast<std::ptrdiff_t>(oy) * ow;
          if (iy < 0) {
            std::fill(row, row + ow, Scalar(0));
            continue;
          }
          const Scalar* line = plane + static_cast<std::ptrdiff_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = source_index(ox * g.stride - g.pad + kx, w, g.mode);
            row[ox] = ix < 0 ? Scalar(0) : line[ix];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters patch values back, accumulating into dst.
template <typename Scalar>
void col2im(const Matrix<Scalar>& col, int h, int w, const ConvGeometry& g, int oh, int ow, Scalar* dst) {
  const int k = g.kernel;
  for (int c = 0; c < g.channels; ++c) {
    Scalar* plane = dst + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = col.col((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = source_index(oy * g.stride - g.pad + ky, h, g.mode);
          if (iy < 0) continue;
          const Scalar* row = src + static_cast<std::ptrdiff_t>(oy) * ow;
          Scalar* line = plane + static_cast<std::ptrdiff_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = source_index(ox * g.stride - g.pad + kx, w, g.mode);
            if (ix >= 0) line[ix] += row[ox];
          }
        }
      }
    }
  }
}

inline void check_geometry(const ConvGeometry& g, int h, int w, const char* who) {
  if (g.mode == PadMode::reflect && (g.pad >= h || g.pad >= w)) {
    throw std::invalid_argument(std::string(who) + ": reflection pad " + std::to_string(g.pad) +
                                " too large for " + std::to_string(h) + "x" + std::to_string(w));
  }
  if (g.out_extent(h) < 1 || g.out_extent(w) < 1) {
    throw std::invalid_argument(std::string(who) + ": input " + std::to_string(h) + "x" + std::to_string(w) +
                                " smaller than kernel " + std::to_string(g.kernel));
  }
}

}  // namespace detail

/// 2-D convolution. Weight is (in_channels*K*K) x out_channels so a sample's output is
/// im2col(x) * weight.
template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int pad = 0,
         PadMode mode = PadMode::zeros, bool bias = true)
      : geom_{in_channels, kernel, stride, pad, mode},
        out_channels_(out_channels),
        weight_("conv.weight", Matrix<Scalar>::Zero(geom_.patch_size(), out_channels)),
        has_bias_(bias) {
    if (bias) bias_ = Parameter<Scalar>("conv.bias", Matrix<Scalar>::Zero(1, out_channels));
  }

  Shape output_shape(const Shape& in) const override {
    detail::check_geometry(geom_, in.h, in.w, "Conv2d");
    return {in.n, out_channels_, geom_.out_extent(in.h), geom_.out_extent(in.w)};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) override {
    if (x.shape.c != geom_.channels) {
      throw std::invalid_argument("Conv2d: expected " + std::to_string(geom_.channels) + " channels, got " +
                                  x.shape.str());
    }
    const Shape os = output_shape(x.shape);
    Tensor<Scalar> y(os);
    ctx.in_shape = x.shape;
    ctx.mats.resize(x.shape.n);
    for (int i = 0; i < x.shape.n; ++i) {
      Matrix<Scalar>& col = ctx.mats[i];
      detail::im2col(x.sample(i).data(), x.shape.h, x.shape.w, geom_, os.h, os.w, col);
      auto out = y.sample(i);
      out.noalias() = col * weight_.value;
      if (has_bias_) out.rowwise() += bias_.value.row(0);
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>& ctx) override {
    const Shape& is = ctx.in_shape;
    Tensor<Scalar> gx(is);
    Matrix<Scalar> gcol;
    for (int i = 0; i < is.n; ++i) {
      const auto g = gy.sample(i);
      const Matrix<Scalar>& col = ctx.mats[i];
      weight_.grad.noalias() += col.transpose() * g;
      if (has_bias_) bias_.grad.row(0) += g.colwise().sum();
      gcol.noalias() = g * weight_.value.transpose();
      detail::col2im(gcol, is.h, is.w, geom_, gy.shape.h, gy.shape.w, gx.sample(i).data());
    }
    return gx;
  }

  void collect_parameters(std::vector<Parameter<Scalar>*>& out) override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }
  void set_group(int g) override { weight_.group = bias_.group = g; }

  const ConvGeometry& geometry() const { return geom_; }
  Parameter<Scalar>& weight() { return weight_; }

 private:
  ConvGeometry geom_;
  int out_channels_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  bool has_bias_;
};

/// Fractionally strided convolution (the adjoint of Conv2d with zero padding). Output extent
/// is (in-1)*stride - 2*pad + kernel + output_pad.
template <typename Scalar>
class ConvTranspose2d final : public Layer<Scalar> {
 public:
  ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int pad, int output_pad,
                  bool bias = true)
      : in_channels_(in_channels),
        geom_{out_channels, kernel, stride, pad, PadMode::zeros},
        output_pad_(output_pad),
        weight_("convT.weight", Matrix<Scalar>::Zero(in_channels, geom_.patch_size())),
        has_bias_(bias) {
    if (output_pad >= stride) throw std::invalid_argument("ConvTranspose2d: output_pad must be < stride");
    if (bias) bias_ = Parameter<Scalar>("convT.bias", Matrix<Scalar>::Zero(1, out_channels));
  }

  Shape output_shape(const Shape& in) const override {
    const int k = geom_.kernel;
    return {in.n, geom_.channels, (in.h - 1) * geom_.stride - 2 * geom_.pad + k + output_pad_,
            (in.w - 1) * geom_.stride - 2 * geom_.pad + k + output_pad_};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) override {
    if (x.shape.c != in_channels_) throw std::invalid_argument("ConvTranspose2d: channel mismatch " + x.shape.str());
    const Shape os = output_shape(x.shape);
    Tensor<Scalar> y(os);
    ctx.in_shape = x.shape;
    ctx.tensors.assign(1, x);
    Matrix<Scalar> col;
    for (int i = 0; i < x.shape.n; ++i) {
      col.noalias() = x.sample(i) * weight_.value;
      detail::col2im(col, os.h, os.w, geom_, x.shape.h, x.shape.w, y.sample(i).data());
      if (has_bias_) y.sample(i).rowwise() += bias_.value.row(0);
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>& ctx) override {
    const Tensor<Scalar>& x = ctx.tensors.front();
    Tensor<Scalar> gx(x.shape);
    Matrix<Scalar> gcol;
    for (int i = 0; i < x.shape.n; ++i) {
      detail::im2col(gy.sample(i).data(), gy.shape.h, gy.shape.w, geom_, x.shape.h, x.shape.w, gcol);
      weight_.grad.noalias() += x.sample(i).transpose() * gcol;
      if (has_bias_) bias_.grad.row(0) += gy.sample(i).colwise().sum();
      gx.sample(i).noalias() = gcol * weight_.value.transpose();
    }
    return gx;
  }

  void collect_parameters(std::vector<Parameter<Scalar>*>& out) override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }
  void set_group(int g) override { weight_.group = bias_.group = g; }

 private:
  int in_channels_;
  ConvGeometry geom_;
  int output_pad_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  bool has_bias_;
};

}  // namespace camstyle::nn

#endif  // CAMSTYLE_NN_CONV_HPP_
