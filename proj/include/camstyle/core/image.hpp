#ifndef CAMSTYLE_CORE_IMAGE_HPP_
#define CAMSTYLE_CORE_IMAGE_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "camstyle/core/tensor.hpp"

namespace camstyle {

/// RGB image, values in [0,1]. Pixels are stored planar: column k of `pixels` is channel k,
/// row y*width+x is the pixel at (y, x).
template <typename Scalar>
struct Image {
  using Pixels = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;

  int height = 0;
  int width = 0;
  Pixels pixels;

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(Pixels::Zero(static_cast<Eigen::Index>(h) * w, 3)) {}

  Scalar& at(int y, int x, int c) { return pixels(static_cast<Eigen::Index>(y) * width + x, c); }
  Scalar at(int y, int x, int c) const { return pixels(static_cast<Eigen::Index>(y) * width + x, c); }

  bool empty() const { return height == 0 || width == 0; }

  bool in_unit_range() const {
    return pixels.size() == 0 || (pixels.minCoeff() >= Scalar(0) && pixels.maxCoeff() <= Scalar(1));
  }

  template <typename Other>
  Image<Other> cast() const {
    Image<Other> out;
    out.height = height;
    out.width = width;
    out.pixels = pixels.template cast<Other>();
    return out;
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.height == b.height && a.width == b.width && a.pixels == b.pixels;
  }
};

using ImageF = Image<float>;

/// Bilinear resize (OpenCV INTER_LINEAR, half-pixel centers).
ImageF resize_bilinear(const ImageF& src, int out_h, int out_w);

template <typename Scalar>
Image<Scalar> flip_horizontal(const Image<Scalar>& src) {
  Image<Scalar> out(src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, src.width - 1 - x, c) = src.at(y, x, c);
  return out;
}

/// Stacks same-sized images into an N x 3 x H x W batch.
template <typename Scalar, typename ImageScalar>
Tensor<Scalar> to_tensor(std::span<const Image<ImageScalar>> images) {
  if (images.empty()) throw std::invalid_argument("to_tensor: no images");
  const int h = images.front().height;
  const int w = images.front().width;
  Tensor<Scalar> t(Shape{static_cast<int>(images.size()), 3, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height != h || images[i].width != w) throw std::invalid_argument("to_tensor: mixed image sizes");
    t.sample(static_cast<int>(i)) = images[i].pixels.template cast<Scalar>();
  }
  return t;
}

template <typename Scalar, typename ImageScalar>
Tensor<Scalar> to_tensor(const Image<ImageScalar>& image) {
  return to_tensor<Scalar, ImageScalar>(std::span<const Image<ImageScalar>>(&image, 1));
}

template <typename ImageScalar, typename Scalar>
Image<ImageScalar> from_tensor(const Tensor<Scalar>& t, int index) {
  if (t.shape.c != 3) throw std::invalid_argument("from_tensor: expected 3 channels, got " + t.shape.str());
  Image<ImageScalar> img(t.shape.h, t.shape.w);
  img.pixels = t.sample(index).template cast<ImageScalar>();
  return img;
}

}  // namespace camstyle

#endif  // CAMSTYLE_CORE_IMAGE_HPP_
