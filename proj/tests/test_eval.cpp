#include "doctest.h"

#include "camstyle/eval.hpp"
#include "oracles.hpp"
#include "suites.hpp"

using namespace camstyle;
using eval::ItemMeta;
using data::IdentityFlag;

TEST_CASE("distance matrix") {
  Eigen::MatrixXf q(2, 2), g(1, 2);
  q << 0, 0, 3, 4;
  g << 3, 4;
  const auto d = eval::distance_matrix(q, g);
  CHECK(d(0, 0) == doctest::Approx(5.0));
  CHECK(d(1, 0) == 0.0);
  CHECK_THROWS_AS(eval::distance_matrix(q, Eigen::MatrixXf(1, 3)), eval::EvalError);

  Rng rng(4);
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(5, 7), b = Eigen::MatrixXd::Random(6, 7);
  const auto m = eval::distance_matrix(a, b);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 6; ++j) {
      double s = 0;
      for (int k = 0; k < 7; ++k) s += (a(i, k) - b(j, k)) * (a(i, k) - b(j, k));
      CHECK(std::abs(m(i, j) - std::sqrt(s)) < 1e-12);
    }
}

TEST_CASE("protocol filter") {
  const std::vector<ItemMeta> g{{5, 2, IdentityFlag::none}, {5, 3, IdentityFlag::none}, {7, 2, IdentityFlag::none}};
  const auto m = eval::protocol_filter({5, 2, IdentityFlag::none}, g);
  CHECK(m.junk == std::vector<bool>{true, false, false});
  CHECK(m.relevant == std::vector<bool>{false, true, false});
  CHECK(m.query_valid);

  CHECK_FALSE(eval::protocol_filter({5, 2, IdentityFlag::none}, std::vector<ItemMeta>{{5, 2, IdentityFlag::none}}).query_valid);
  const auto d = eval::protocol_filter({5, 2, IdentityFlag::none}, std::vector<ItemMeta>{{-1, 3, IdentityFlag::distractor}});
  CHECK(d.junk[0]);
}

TEST_CASE("worked example") {
  const auto o = suites::metric_worked_example();
  CHECK_MESSAGE(o.ok(), o.first_failure);
}

TEST_CASE("perfect retrieval") {
  const std::vector<ItemMeta> q{{1, 1, IdentityFlag::none}, {2, 1, IdentityFlag::none}};
  const std::vector<ItemMeta> g{{1, 2, IdentityFlag::none}, {2, 2, IdentityFlag::none}, {3, 2, IdentityFlag::none}};
  Eigen::MatrixXd d(2, 3);
  d << 0.1, 0.5, 0.9, 0.5, 0.1, 0.9;
  const auto ev = eval::evaluate(d, q, g);
  CHECK(ev.map == 1.0);
  for (int k = 1; k <= 3; ++k) CHECK(ev.rank(k) == 1.0);
}

TEST_CASE("invalid queries are excluded and zero valid queries is an error") {
  const std::vector<ItemMeta> q{{1, 1, IdentityFlag::none}, {9, 1, IdentityFlag::none}};
  const std::vector<ItemMeta> g{{1, 2, IdentityFlag::none}, {2, 2, IdentityFlag::none}};
  Eigen::MatrixXd d(2, 2);
  d << 0.2, 0.1, 0.2, 0.1;
  const auto ev = eval::evaluate(d, q, g);
  CHECK(ev.num_valid_queries == 1);
  CHECK_FALSE(ev.per_query[1].valid);
  CHECK(ev.map == doctest::Approx(0.5));
  CHECK_THROWS_AS(eval::evaluate(d.bottomRows(1), std::vector<ItemMeta>{q[1]}, g), eval::EvalError);
  CHECK_THROWS_AS(eval::evaluate(d, std::vector<ItemMeta>{q[0]}, g), eval::EvalError);
}

TEST_CASE("exhaustive agreement with the counting oracle") {
  const auto o = suites::metric_exhaustive();
  CHECK(o.cases > 100000);
  CHECK_MESSAGE(o.failures == 0, o.first_failure);
}

TEST_CASE("random agreement with the counting oracle") {
  const auto o = suites::metric_random(500);
  CHECK(o.cases > 400);
  CHECK_MESSAGE(o.failures == 0, o.first_failure);
}

TEST_CASE("report formatting") {
  const std::vector<ItemMeta> q{{1, 1, IdentityFlag::none}};
  const std::vector<ItemMeta> g{{2, 2, IdentityFlag::none}, {1, 2, IdentityFlag::none}};
  Eigen::MatrixXd d(1, 2);
  d << 0.1, 0.2;
  const auto ev = eval::evaluate(d, q, g);
  const std::vector<int> ks{1, 5};
  const auto text = eval::format_report(ev, ks);
  CHECK(text.find("rank-1: 0.000000") != std::string::npos);
  CHECK(text.find("rank-5: 1.000000") != std::string::npos);
  CHECK(text.find("mAP: 0.500000") != std::string::npos);
  CHECK(eval::format_per_query(ev, q).find('\t') != std::string::npos);
}
