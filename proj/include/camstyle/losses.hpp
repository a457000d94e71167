#ifndef CAMSTYLE_LOSSES_HPP_
#define CAMSTYLE_LOSSES_HPP_

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "camstyle/core/tensor.hpp"

namespace camstyle::losses {

/// Probabilities are floored here before taking logs, never inside the model.
inline constexpr double kProbabilityFloor = 1e-12;

enum class LabelKind { one_hot, lsr };

/// Target distribution q over C identity classes.
template <typename Scalar = double>
struct LabelDistribution {
  Vector<Scalar> probs;
  LabelKind kind = LabelKind::one_hot;
  double epsilon = 0.0;
  int label = 0;

  int classes() const { return static_cast<int>(probs.size()); }
};

/// Normalized-exponential output p over C classes.
template <typename Scalar = double>
struct Prediction {
  Vector<Scalar> probs;

  int classes() const { return static_cast<int>(probs.size()); }

  /// Wraps an explicit probability vector; it must be non-negative and sum to 1 within 1e-6.
  static Prediction from_probabilities(Vector<Scalar> p) {
    if (p.size() == 0) throw std::invalid_argument("Prediction: empty probability vector");
    if ((p.array() < Scalar(0)).any()) throw std::invalid_argument("Prediction: negative probability");
    if (std::abs(static_cast<double>(p.sum()) - 1.0) > 1e-6) {
      throw std::invalid_argument("Prediction: probabilities sum to " + std::to_string(static_cast<double>(p.sum())));
    }
    return Prediction{std::move(p)};
  }
};

template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

template <typename Derived>
Prediction<typename Derived::Scalar> predict(const Eigen::MatrixBase<Derived>& logits) {
  return Prediction<typename Derived::Scalar>{softmax(logits)};
}

inline void check_label(int y, int classes) {
  if (classes < 1) throw std::invalid_argument("label distribution: need at least one class");
  if (y < 0 || y >= classes) {
    throw std::out_of_range("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  }
}

template <typename Scalar = double>
LabelDistribution<Scalar> one_hot(int y, int classes) {
  check_label(y, classes);
  LabelDistribution<Scalar> q;
  q.probs = Vector<Scalar>::Zero(classes);
  q.probs(y) = Scalar(1);
  q.kind = LabelKind::one_hot;
  q.label = y;
  return q;
}

/// 1 - eps + eps/C on the true class, eps/C elsewhere.
template <typename Scalar = double>
LabelDistribution<Scalar> lsr_distribution(int y, int classes, double epsilon) {
  check_label(y, classes);
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("lsr_distribution: epsilon " + std::to_string(epsilon) + " outside [0, 1]");
  }
  const double off = epsilon / classes;
  LabelDistribution<Scalar> q;
  q.probs = Vector<Scalar>::Constant(classes, static_cast<Scalar>(off));
  q.probs(y) = static_cast<Scalar>(1.0 - epsilon + off);
  q.kind = LabelKind::lsr;
  q.epsilon = epsilon;
  q.label = y;
  return q;
}

template <typename Scalar>
Vector<Scalar> floored_log(const Vector<Scalar>& p) {
  return p.array().max(static_cast<Scalar>(kProbabilityFloor)).log();
}

/// -sum_c q(c) log p(c).
template <typename Scalar>
Scalar cross_entropy(const Prediction<Scalar>& p, const LabelDistribution<Scalar>& q) {
  if (p.classes() != q.classes()) {
    throw std::invalid_argument("cross_entropy: prediction has " + std::to_string(p.classes()) +
                                " classes, target has " + std::to_string(q.classes()));
  }
  return -q.probs.dot(floored_log(p.probs));
}

/// -(1-eps) log p(y) - (eps/C) sum_c log p(c), evaluated directly (not through q).
template <typename Scalar>
Scalar lsr_loss(const Prediction<Scalar>& p, int y, double epsilon, int classes) {
  if (p.classes() != classes) {
    throw std::invalid_argument("lsr_loss: prediction has " + std::to_string(p.classes()) + " classes, expected " +
                                std::to_string(classes));
  }
  check_label(y, classes);
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("lsr_loss: epsilon outside [0, 1]");
  const Vector<Scalar> logp = floored_log(p.probs);
  return -static_cast<Scalar>(1.0 - epsilon) * logp(y) - static_cast<Scalar>(epsilon / classes) * logp.sum();
}

/// Gradient of cross_entropy(softmax(z), q) with respect to the logits z.
template <typename Derived, typename Scalar>
Vector<Scalar> cross_entropy_logit_grad(const Eigen::MatrixBase<Derived>& logits, const LabelDistribution<Scalar>& q) {
  return softmax(logits) * q.probs.sum() - q.probs;
}

/// Mean real-sample loss plus mean fake-sample loss; the fake term is 0 when there are none.
inline double mixed_batch_loss(std::span<const double> real_losses, std::span<const double> fake_losses) {
  if (real_losses.empty()) throw std::invalid_argument("mixed_batch_loss: at least one real sample is required");
  double real = 0.0;
  for (double v : real_losses) real += v;
  real /= static_cast<double>(real_losses.size());
  if (fake_losses.empty()) return real;
  double fake = 0.0;
  for (double v : fake_losses) fake += v;
  return real + fake / static_cast<double>(fake_losses.size());
}

}  // namespace camstyle::losses

#endif  // CAMSTYLE_LOSSES_HPP_
