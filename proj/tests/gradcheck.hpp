// Finite-difference checks of the CycleGAN objective in double precision.
#ifndef CAMSTYLE_TESTS_GRADCHECK_HPP_
#define CAMSTYLE_TESTS_GRADCHECK_HPP_

#include <algorithm>
#include <cstdio>
#include <functional>
#include <vector>

#include "camstyle/core/random.hpp"
#include "camstyle/cyclegan.hpp"
#include "camstyle/losses.hpp"
#include "oracles.hpp"

namespace gradcheck {

struct Result {
  int checked = 0;
  int passed = 0;
  double worst = 0;
  double pass_fraction() const { return checked ? static_cast<double>(passed) / checked : 0.0; }
};

/// Compares stored gradients against central differences of `loss` for every coordinate of
/// `params` (or every `stride`-th one).
inline Result compare(const std::vector<camstyle::nn::Parameter<double>*>& params, const std::function<double()>& loss,
                      double h, double tolerance, int stride = 1) {
  Result r;
  int index = 0;
  for (auto* p : params) {
    for (Eigen::Index k = 0; k < p->value.size(); ++k, ++index) {
      if (index % stride) continue;
      double& v = p->value.data()[k];
      const double saved = v;
      v = saved + h;
      const double up = loss();
      v = saved - h;
      const double down = loss();
      v = saved;
      const double numeric = (up - down) / (2 * h);
      const double err = oracle::relative_error(p->grad.data()[k], numeric, 1e-6);
      ++r.checked;
      if (err < tolerance) ++r.passed;
      r.worst = std::max(r.worst, err);
    }
  }
  return r;
}

/// The smallest translation setup: 3x3 outer kernels, one filter, no resampling, two residual
/// blocks and a one-layer PatchGAN on 8x8 inputs.
inline camstyle::cyclegan::CycleGanConfig tiny_config() {
  camstyle::cyclegan::CycleGanConfig c;
  c.image_size = 8;
  c.residual_blocks = 2;
  c.generator_filters = 1;
  c.discriminator_filters = 1;
  c.downsampling = 0;
  c.discriminator_layers = 1;
  c.outer_kernel = 3;
  return c;
}

inline std::size_t parameter_count(const std::vector<camstyle::nn::Parameter<double>*>& params) {
  std::size_t n = 0;
  for (auto* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

/// Gradient of total_objective with respect to every parameter of all four networks.
inline Result total_objective(const camstyle::cyclegan::CycleGanConfig& cfg, std::uint64_t seed, double tolerance,
                              std::size_t* num_params = nullptr) {
  using namespace camstyle;
  Rng rng(seed);
  auto nets = cyclegan::CycleGanNetworks<double>::build(cfg, rng);
  // Larger weights than the training init keep activations away from the ReLU kinks' scale.
  std::vector<nn::Parameter<double>*> params = nets.generator_parameters();
  for (auto* p : nets.discriminator_parameters()) params.push_back(p);
  for (auto* p : params)
    for (Eigen::Index k = 0; k < p->value.size(); ++k) p->value.data()[k] = rng.normal(0, 0.5);
  if (num_params) *num_params = parameter_count(params);

  Tensor<double> a(Shape{2, 3, cfg.image_size, cfg.image_size}), b(a.shape);
  for (Eigen::Index i = 0; i < a.values.size(); ++i) {
    a.values(i) = rng.uniform(0.05, 0.95);
    b.values(i) = rng.uniform(0.05, 0.95);
  }
  for (auto* p : params) p->zero_grad();
  cyclegan::total_objective(nets, a, b, cfg, true);
  auto loss = [&] { return cyclegan::total_objective(nets, a, b, cfg, false).total; };
  return compare(params, loss, 1e-6, tolerance);
}

/// Logit gradients of cross-entropy (eps = 0) and LSR, then per-element gradients of the L1 and
/// least-squares adversarial terms.
inline Result loss_terms(std::uint64_t seed, double tolerance) {
  using namespace camstyle;
  Rng rng(seed);
  Result r;
  auto tally = [&](double analytic, double numeric) {
    const double e = oracle::relative_error(analytic, numeric, 1e-9);
    ++r.checked;
    r.passed += e < tolerance;
    r.worst = std::max(r.worst, e);
  };
  for (int trial = 0; trial < 40; ++trial) {
    const int c = rng.uniform_int(2, 16);
    const int y = rng.uniform_int(0, c - 1);
    const double eps = trial % 2 ? 0.1 : 0.0;
    Vector<double> z(c);
    for (int k = 0; k < c; ++k) z(k) = rng.normal(0, 2);
    const Vector<double> g = losses::cross_entropy_logit_grad(z, losses::lsr_distribution<double>(y, c, eps));
    for (int k = 0; k < c; ++k) {
      auto f = [&](double v) {
        Vector<double> zz = z;
        zz(k) = v;
        return losses::lsr_loss(losses::predict(zz), y, eps, c);
      };
      tally(g(k), oracle::central_difference(f, z(k), 1e-5));
    }
  }
  const Shape s{1, 2, 3, 3};
  Tensor<double> out(s), ref(s), zeros(s);
  for (Eigen::Index i = 0; i < out.values.size(); ++i) {
    out.values(i) = rng.uniform(0.05, 0.95);
    ref.values(i) = rng.uniform(0.05, 0.95);
  }
  zeros.values.setZero();
  const auto g1 = cyclegan::l1_grad(out, ref, 2.5);
  const auto ga = cyclegan::adversarial_generator_grad(out);
  const auto gd = cyclegan::adversarial_discriminator_grad(out, true);
  for (Eigen::Index i = 0; i < out.values.size(); ++i) {
    auto at = [&](double v) {
      Tensor<double> o = out;
      o.values(i) = v;
      return o;
    };
    const double x0 = out.values(i);
    tally(g1.values(i), oracle::central_difference(
                            [&](double v) { return 2.5 * cyclegan::cycle_consistency_loss(ref, at(v)); }, x0, 1e-7));
    tally(ga.values(i), oracle::central_difference(
                            [&](double v) {
                              return cyclegan::adversarial_loss(Tensor<double>(), at(v),
                                                                cyclegan::AdversarialSide::generator);
                            },
                            x0, 1e-6));
    tally(gd.values(i), oracle::central_difference(
                            [&](double v) {
                              return cyclegan::adversarial_loss(at(v), zeros, cyclegan::AdversarialSide::discriminator);
                            },
                            x0, 1e-6));
  }
  return r;
}

}  // namespace gradcheck

#endif  // CAMSTYLE_TESTS_GRADCHECK_HPP_
