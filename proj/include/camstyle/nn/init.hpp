#ifndef CAMSTYLE_NN_INIT_HPP_
#define CAMSTYLE_NN_INIT_HPP_

#include <algorithm>
#include <cmath>
#include <string_view>

#include "camstyle/nn/layer.hpp"

namespace camstyle::nn {

enum class InitScheme {
  gaussian_002,  // N(0, 0.02) weights, zero bias (translation networks)
  kaiming,       // N(0, sqrt(2/fan_in)) weights, zero bias
  zeros,
};

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

/// Weight matrices are stored fan_in x fan_out, so rows() is the fan-in. Batch-norm scales
/// start at 1 and shifts at 0 regardless of scheme.
template <typename Scalar>
void initialize(Layer<Scalar>& layer, InitScheme scheme, Rng& rng) {
  for (auto* p : layer.parameters()) {
    if (ends_with(p->name, "gamma")) {
      p->value.setOnes();
    } else if (ends_with(p->name, "bias") || ends_with(p->name, "beta") || scheme == InitScheme::zeros) {
      p->value.setZero();
    } else {
      const double stddev = scheme == InitScheme::gaussian_002
                                ? 0.02
                                : std::sqrt(2.0 / static_cast<double>(std::max<Eigen::Index>(1, p->value.rows())));
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<Scalar>(rng.normal(0.0, stddev));
    }
    p->zero_grad();
  }
}

/// Fills every parameter (weights and biases) with N(0, stddev).
template <typename Scalar>
void randomize_all(Layer<Scalar>& layer, double stddev, Rng& rng) {
  for (auto* p : layer.parameters())
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<Scalar>(rng.normal(0.0, stddev));
}

}  // namespace camstyle::nn

#endif  // CAMSTYLE_NN_INIT_HPP_
