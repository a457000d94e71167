#ifndef CAMSTYLE_CORE_TENSOR_HPP_
#define CAMSTYLE_CORE_TENSOR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace camstyle {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Batch shape in NCHW order.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  int plane() const { return h * w; }
  int sample_size() const { return c * h * w; }
  std::size_t size() const { return static_cast<std::size_t>(n) * sample_size(); }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
  }
};

/// Dense NCHW activation batch. Each sample is stored planar, so sample(i) views it as an
/// (H*W) x C column-major matrix whose columns are channels.
template <typename Scalar>
struct Tensor {
  using SampleMap = Eigen::Map<Matrix<Scalar>>;
  using ConstSampleMap = Eigen::Map<const Matrix<Scalar>>;
  using RowsMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstRowsMap = Eigen::Map<const RowMatrix<Scalar>>;

  Shape shape;
  Vector<Scalar> values;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), values(Vector<Scalar>::Zero(static_cast<Eigen::Index>(s.size()))) {}

  SampleMap sample(int i) {
    return SampleMap(values.data() + static_cast<std::ptrdiff_t>(i) * shape.sample_size(), shape.plane(),
                     shape.c);
  }
  ConstSampleMap sample(int i) const {
    return ConstSampleMap(values.data() + static_cast<std::ptrdiff_t>(i) * shape.sample_size(),
                          shape.plane(), shape.c);
  }

  /// N x (C*H*W) row-major view, one sample per row.
  RowsMap rows() { return RowsMap(values.data(), shape.n, shape.sample_size()); }
  ConstRowsMap rows() const { return ConstRowsMap(values.data(), shape.n, shape.sample_size()); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.shape = shape;
    out.values = values.template cast<Other>();
    return out;
  }
};

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
  if (!(a.shape == b.shape)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape.str() + " vs " +
                                b.shape.str());
  }
}

}  // namespace camstyle

#endif  // CAMSTYLE_CORE_TENSOR_HPP_
