#ifndef CAMSTYLE_NN_OPTIMIZER_HPP_
#define CAMSTYLE_NN_OPTIMIZER_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "camstyle/nn/layer.hpp"

namespace camstyle::nn {

/// Adam with bias correction. The learning rate is supplied per step so schedules live with
/// the caller.
template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<Parameter<Scalar>*> params, double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const Scalar step_size = static_cast<Scalar>(lr * std::sqrt(c2) / c1);
    const Scalar b1 = static_cast<Scalar>(beta1_);
    const Scalar b2 = static_cast<Scalar>(beta2_);
    const Scalar eps = static_cast<Scalar>(eps_ * std::sqrt(c2));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& g = params_[i]->grad;
      m_[i] = b1 * m_[i] + (1 - b1) * g;
      v_[i] = b2 * v_[i] + (1 - b2) * g.cwiseAbs2();
      params_[i]->value.array() -= step_size * m_[i].array() / (v_[i].array().sqrt() + eps);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  std::int64_t steps() const { return t_; }

 private:
  std::vector<Parameter<Scalar>*> params_;
  std::vector<Matrix<Scalar>> m_;
  std::vector<Matrix<Scalar>> v_;
  double beta1_;
  double beta2_;
  double eps_;
  std::int64_t t_ = 0;
};

/// Momentum SGD with per-group learning rates (indexed by Parameter::group) and L2 decay.
template <typename Scalar>
class Sgd {
 public:
  Sgd(std::vector<Parameter<Scalar>*> params, double momentum = 0.9, double weight_decay = 5e-4,
      bool nesterov = true)
      : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay), nesterov_(nesterov) {
    for (auto* p : params_) buf_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
  }

  void step(std::span<const double> group_lr) {
    const Scalar mu = static_cast<Scalar>(momentum_);
    const Scalar wd = static_cast<Scalar>(weight_decay_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* p = params_[i];
      if (p->group < 0 || static_cast<std::size_t>(p->group) >= group_lr.size()) {
        throw std::out_of_range("Sgd: no learning rate for group " + std::to_string(p->group));
      }
      const Scalar lr = static_cast<Scalar>(group_lr[p->group]);
      Matrix<Scalar> d = p->grad + wd * p->value;
      buf_[i] = mu * buf_[i] + d;
      if (nesterov_) {
        p->value -= lr * (d + mu * buf_[i]);
      } else {
        p->value -= lr * buf_[i];
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

 private:
  std::vector<Parameter<Scalar>*> params_;
  std::vector<Matrix<Scalar>> buf_;
  double momentum_;
  double weight_decay_;
  bool nesterov_;
};

/// Copies every parameter value, in collection order, into one vector.
template <typename Scalar>
Vector<Scalar> flatten_values(const std::vector<Parameter<Scalar>*>& params) {
  Vector<Scalar> out(static_cast<Eigen::Index>(parameter_count(params)));
  Eigen::Index at = 0;
  for (const auto* p : params) {
    out.segment(at, p->value.size()) = p->value.reshaped();
    at += p->value.size();
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> flatten_grads(const std::vector<Parameter<Scalar>*>& params) {
  Vector<Scalar> out(static_cast<Eigen::Index>(parameter_count(params)));
  Eigen::Index at = 0;
  for (const auto* p : params) {
    out.segment(at, p->grad.size()) = p->grad.reshaped();
    at += p->grad.size();
  }
  return out;
}

template <typename Scalar>
void assign_values(const std::vector<Parameter<Scalar>*>& params, const Vector<Scalar>& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count(params)) {
    throw std::invalid_argument("assign_values: expected " + std::to_string(parameter_count(params)) +
                                " values, got " + std::to_string(flat.size()));
  }
  Eigen::Index at = 0;
  for (auto* p : params) {
    p->value.reshaped() = flat.segment(at, p->value.size());
    at += p->value.size();
  }
}

/// Scalar pointer to the k-th flattened coordinate (for finite differences).
template <typename Scalar>
Scalar* coordinate(const std::vector<Parameter<Scalar>*>& params, std::size_t k) {
  for (auto* p : params) {
    const auto n = static_cast<std::size_t>(p->value.size());
    if (k < n) return p->value.data() + k;
    k -= n;
  }
  throw std::out_of_range("coordinate: index past parameter count");
}

template <typename Scalar>
Scalar& grad_coordinate(const std::vector<Parameter<Scalar>*>& params, std::size_t k) {
  for (auto* p : params) {
    const auto n = static_cast<std::size_t>(p->grad.size());
    if (k < n) return p->grad.data()[k];
    k -= n;
  }
  throw std::out_of_range("grad_coordinate: index past parameter count");
}

}  // namespace camstyle::nn

#endif  // CAMSTYLE_NN_OPTIMIZER_HPP_
