#ifndef CAMSTYLE_NN_SERIALIZE_HPP_
#define CAMSTYLE_NN_SERIALIZE_HPP_

#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "camstyle/nn/layer.hpp"

namespace camstyle::nn {

/// Number of float32 values write_blob emits for a layer.
template <typename Scalar>
std::size_t blob_size(Layer<Scalar>& layer) {
  std::size_t n = parameter_count(layer.parameters());
  for (const auto* b : layer.buffers()) n += static_cast<std::size_t>(b->size());
  return n;
}

/// Parameters then buffers, in collection order, as raw little-endian float32.
template <typename Scalar>
void write_blob(std::ostream& os, Layer<Scalar>& layer) {
  auto put = [&os](const Matrix<Scalar>& m) {
    std::vector<float> tmp(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) tmp[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
    os.write(reinterpret_cast<const char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * sizeof(float)));
  };
  for (const auto* p : layer.parameters()) put(p->value);
  for (const auto* b : layer.buffers()) put(*b);
  if (!os) throw std::runtime_error("write_blob: stream write failed");
}

template <typename Scalar>
void read_blob(std::istream& is, Layer<Scalar>& layer) {
  auto get = [&is](Matrix<Scalar>& m) {
    std::vector<float> tmp(static_cast<std::size_t>(m.size()));
    is.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * sizeof(float)));
    if (!is) throw std::runtime_error("read_blob: parameter blob truncated");
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(tmp[static_cast<std::size_t>(i)]);
  };
  for (auto* p : layer.parameters()) {
    get(p->value);
    p->zero_grad();
  }
  for (auto* b : layer.buffers()) get(*b);
}

}  // namespace camstyle::nn

#endif  // CAMSTYLE_NN_SERIALIZE_HPP_
