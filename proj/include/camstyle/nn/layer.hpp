#ifndef CAMSTYLE_NN_LAYER_HPP_
#define CAMSTYLE_NN_LAYER_HPP_

#include <memory>
#include <string>
#include <vector>

#include "camstyle/core/random.hpp"
#include "camstyle/core/tensor.hpp"

namespace camstyle::nn {

/// Trainable weight with its gradient accumulator. `group` selects the learning-rate group
/// (0 = backbone/base, 1 = newly added head).
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  int group = 0;

  Parameter() = default;
  Parameter(std::string n, Matrix<Scalar> v, int g = 0)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())), group(g) {}

  void zero_grad() { grad.setZero(); }
};

/// Per-call scratch for one forward/backward pair. Layers read parameters in forward but keep
/// every activation they need for backward here, so the same layer can be applied several
/// times before any backward pass (as the cycle losses require).
template <typename Scalar>
struct Context {
  bool training = false;
  Rng* rng = nullptr;

  Shape in_shape;
  std::vector<Tensor<Scalar>> tensors;
  std::vector<Matrix<Scalar>> mats;
  std::vector<Context> children;

  Context() = default;
  Context(bool train, Rng* r) : training(train), rng(r) {}

  Context& child(std::size_t i) {
    if (children.size() <= i) children.resize(i + 1, Context(training, rng));
    return children[i];
  }
};

template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) = 0;
  /// Accumulates parameter gradients and returns d(loss)/d(input).
  virtual Tensor<Scalar> backward(const Tensor<Scalar>& grad_out, Context<Scalar>& ctx) = 0;

  virtual void collect_parameters(std::vector<Parameter<Scalar>*>&) {}
  /// Non-trainable state that belongs in a checkpoint (batch-norm running statistics).
  virtual void collect_buffers(std::vector<Matrix<Scalar>*>&) {}
  virtual void set_group(int) {}

  std::vector<Parameter<Scalar>*> parameters() {
    std::vector<Parameter<Scalar>*> out;
    collect_parameters(out);
    return out;
  }

  std::vector<Matrix<Scalar>*> buffers() {
    std::vector<Matrix<Scalar>*> out;
    collect_buffers(out);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  Tensor<Scalar> infer(const Tensor<Scalar>& x) {
    Context<Scalar> ctx(false, nullptr);
    return forward(x, ctx);
  }
};

template <typename Scalar>
using LayerPtr = std::unique_ptr<Layer<Scalar>>;

template <typename Scalar>
std::size_t parameter_count(const std::vector<Parameter<Scalar>*>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

}  // namespace camstyle::nn

#endif  // CAMSTYLE_NN_LAYER_HPP_
