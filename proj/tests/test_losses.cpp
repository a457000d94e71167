#include <cmath>
#include <vector>

#include "doctest.h"

#include "camstyle/core/random.hpp"
#include "camstyle/losses.hpp"
#include "oracles.hpp"

using namespace camstyle;
using namespace camstyle::losses;

namespace {

Prediction<double> pred(std::initializer_list<double> p) {
  Vector<double> v(static_cast<Eigen::Index>(p.size()));
  Eigen::Index i = 0;
  for (double x : p) v(i++) = x;
  return Prediction<double>::from_probabilities(v);
}

Vector<double> random_logits(Rng& rng, int c) {
  Vector<double> z(c);
  for (int i = 0; i < c; ++i) z(i) = rng.normal(0, 2);
  return z;
}

}  // namespace

TEST_CASE("one_hot places the single unit mass") {
  auto q = one_hot<double>(0, 3);
  CHECK(q.probs(0) == 1.0);
  CHECK(q.probs(1) == 0.0);
  CHECK(one_hot<double>(2, 3).probs(2) == 1.0);
  CHECK_THROWS_AS(one_hot<double>(3, 3), std::out_of_range);
  CHECK_THROWS_AS(one_hot<double>(-1, 3), std::out_of_range);
}

TEST_CASE("lsr_distribution values") {
  auto q = lsr_distribution<double>(3, 10, 0.1);
  CHECK(q.probs(3) == doctest::Approx(0.91).epsilon(1e-15));
  for (int c = 0; c < 10; ++c)
    if (c != 3) CHECK(q.probs(c) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(std::abs(q.probs.sum() - 1.0) < 1e-12);
  CHECK(lsr_distribution<double>(1, 5, 0.0).probs == one_hot<double>(1, 5).probs);
  const auto u = lsr_distribution<double>(1, 5, 1.0);
  for (int c = 0; c < 5; ++c) CHECK(u.probs(c) == 0.2);
  CHECK_THROWS(lsr_distribution<double>(0, 3, -0.1));
  CHECK_THROWS(lsr_distribution<double>(0, 3, 1.5));
}

TEST_CASE("cross_entropy reference values") {
  CHECK(cross_entropy(pred({0.7, 0.2, 0.1}), one_hot<double>(0, 3)) == doctest::Approx(0.356675).epsilon(1e-6));
  CHECK(cross_entropy(pred({0.25, 0.25, 0.25, 0.25}), one_hot<double>(2, 4)) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(cross_entropy(pred({1.0, 0.0}), one_hot<double>(0, 2)) == doctest::Approx(0.0));
  // A zero probability on the true class hits the floor instead of producing infinity.
  CHECK(std::isfinite(cross_entropy(pred({0.0, 1.0}), one_hot<double>(0, 2))));
  CHECK_THROWS(cross_entropy(pred({0.5, 0.5}), one_hot<double>(0, 3)));
}

TEST_CASE("Prediction rejects non-distributions") {
  Vector<double> v(2);
  v << 0.7, 0.7;
  CHECK_THROWS(Prediction<double>::from_probabilities(v));
  v << -0.1, 1.1;
  CHECK_THROWS(Prediction<double>::from_probabilities(v));
}

TEST_CASE("lsr_loss reference values") {
  CHECK(lsr_loss(pred({0.7, 0.1, 0.1, 0.1}), 0, 0.1, 4) == doctest::Approx(0.502617).epsilon(1e-5));
  CHECK(lsr_loss(pred({0.5, 0.5}), 1, 0.1, 2) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK_THROWS(lsr_loss(pred({0.5, 0.5}), 2, 0.1, 2));
  CHECK_THROWS(lsr_loss(pred({0.5, 0.5}), 0, 0.1, 3));
}

TEST_CASE("lsr_loss agrees with cross_entropy against its target distribution") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = rng.uniform_int(1, 16);
    const int y = rng.uniform_int(0, c - 1);
    const double eps = rng.uniform();
    const auto p = predict(random_logits(rng, c));
    CHECK(std::abs(lsr_loss(p, y, 0.0, c) - cross_entropy(p, one_hot<double>(y, c))) < 1e-10);
    CHECK(std::abs(lsr_loss(p, y, eps, c) - cross_entropy(p, lsr_distribution<double>(y, c, eps))) < 1e-10);
  }
}

TEST_CASE("logit gradients match finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = rng.uniform_int(2, 12);
    const int y = rng.uniform_int(0, c - 1);
    const double eps = trial % 2 ? 0.1 : 0.0;
    Vector<double> z = random_logits(rng, c);
    const auto q = lsr_distribution<double>(y, c, eps);
    const Vector<double> g = cross_entropy_logit_grad(z, q);
    for (int k = 0; k < c; ++k) {
      auto f = [&](double v) {
        Vector<double> zz = z;
        zz(k) = v;
        return lsr_loss(predict(zz), y, eps, c);
      };
      CHECK(oracle::relative_error(g(k), oracle::central_difference(f, z(k), 1e-5), 1e-9) < 1e-6);
    }
  }
}

TEST_CASE("mixed_batch_loss sums the two means") {
  const std::vector<double> r1{0.2}, f1{0.4};
  CHECK(mixed_batch_loss(r1, f1) == doctest::Approx(0.6));
  const std::vector<double> r3{0.3, 0.3, 0.3}, f2{0.5, 0.1};
  CHECK(mixed_batch_loss(r3, f2) == doctest::Approx(0.6));
  CHECK(mixed_batch_loss(r3, {}) == doctest::Approx(0.3));
  CHECK_THROWS(mixed_batch_loss({}, f2));
}
