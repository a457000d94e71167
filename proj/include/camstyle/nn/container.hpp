#ifndef CAMSTYLE_NN_CONTAINER_HPP_
#define CAMSTYLE_NN_CONTAINER_HPP_

#include <memory>
#include <utility>
#include <vector>

#include "camstyle/nn/layer.hpp"

namespace camstyle::nn {

template <typename Scalar>
class Sequential final : public Layer<Scalar> {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  void push(LayerPtr<Scalar> layer) { layers_.push_back(std::move(layer)); }

  Shape output_shape(const Shape& in) const override {
    Shape s = in;
    for (const auto& l : layers_) s = l->output_shape(s);
    return s;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) override {
    if (layers_.empty()) return x;
    Tensor<Scalar> h = layers_[0]->forward(x, ctx.child(0));
    for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i]->forward(h, ctx.child(i));
    return h;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>& ctx) override {
    if (layers_.empty()) return gy;
    Tensor<Scalar> g = gy;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, ctx.children[i]);
    return g;
  }

  void collect_parameters(std::vector<Parameter<Scalar>*>& out) override {
    for (auto& l : layers_) l->collect_parameters(out);
  }
  void collect_buffers(std::vector<Matrix<Scalar>*>& out) override {
    for (auto& l : layers_) l->collect_buffers(out);
  }
  void set_group(int g) override {
    for (auto& l : layers_) l->set_group(g);
  }

  std::size_t size() const { return layers_.size(); }
  Layer<Scalar>& operator[](std::size_t i) { return *layers_[i]; }
  const Layer<Scalar>& operator[](std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<LayerPtr<Scalar>> layers_;
};

/// main(x) + shortcut(x), with an optional rectifier after the sum. An empty shortcut is the
/// identity.
template <typename Scalar>
class Residual final : public Layer<Scalar> {
 public:
  Residual(std::unique_ptr<Sequential<Scalar>> main, std::unique_ptr<Sequential<Scalar>> shortcut,
           bool relu_after)
      : main_(std::move(main)), shortcut_(std::move(shortcut)), relu_after_(relu_after) {
    if (!shortcut_) shortcut_ = std::make_unique<Sequential<Scalar>>();
  }

  Shape output_shape(const Shape& in) const override {
    const Shape a = main_->output_shape(in);
    const Shape b = shortcut_->output_shape(in);
    if (!(a == b)) throw std::invalid_argument("Residual: branch shapes differ " + a.str() + " vs " + b.str());
    return a;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Context<Scalar>& ctx) override {
    Tensor<Scalar> y = main_->forward(x, ctx.child(0));
    Tensor<Scalar> s = shortcut_->forward(x, ctx.child(1));
    require_same_shape(y, s, "Residual");
    y.values += s.values;
    if (relu_after_) {
      y.values = y.values.cwiseMax(Scalar(0));
      ctx.tensors.assign(1, y);
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& gy, Context<Scalar>& ctx) override {
    Tensor<Scalar> g = gy;
    if (relu_after_) {
      const Tensor<Scalar>& y = ctx.tensors.front();
      g.values = (y.values.array() > Scalar(0)).select(gy.values, Scalar(0));
    }
    Tensor<Scalar> gx = main_->backward(g, ctx.children[0]);
    gx.values += shortcut_->backward(g, ctx.children[1]).values;
    return gx;
  }

  void collect_parameters(std::vector<Parameter<Scalar>*>& out) override {
    main_->collect_parameters(out);
    shortcut_->collect_parameters(out);
  }
  void collect_buffers(std::vector<Matrix<Scalar>*>& out) override {
    main_->collect_buffers(out);
    shortcut_->collect_buffers(out);
  }
  void set_group(int g) override {
    main_->set_group(g);
    shortcut_->set_group(g);
  }

 private:
  std::unique_ptr<Sequential<Scalar>> main_;
  std::unique_ptr<Sequential<Scalar>> shortcut_;
  bool relu_after_;
};

}  // namespace camstyle::nn

#endif  // CAMSTYLE_NN_CONTAINER_HPP_
