// Independent reference implementations shared by the unit tests and the acceptance runner.
#ifndef CAMSTYLE_TESTS_ORACLES_HPP_
#define CAMSTYLE_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "camstyle/eval.hpp"

namespace oracle {

struct Ranking {
  std::vector<bool> valid;
  std::vector<double> ap;
  std::vector<int> first;
  std::vector<double> cmc;
  double map = 0;
  int valid_queries = 0;
};

/// Retrieval metrics by counting instead of sorting: an item's position is one plus the number
/// of kept items that come before it (smaller distance, or equal distance and smaller index).
inline Ranking ranking(const Eigen::MatrixXd& dist, const std::vector<camstyle::eval::ItemMeta>& query,
                       const std::vector<camstyle::eval::ItemMeta>& gallery) {
  using camstyle::data::IdentityFlag;
  const std::size_t n = gallery.size();
  Ranking r;
  r.valid.assign(query.size(), false);
  r.ap.assign(query.size(), 0.0);
  r.first.assign(query.size(), 0);
  std::vector<int> first_counts(n + 1, 0);
  double ap_total = 0;
  for (std::size_t i = 0; i < query.size(); ++i) {
    const auto& q = query[i];
    std::vector<bool> keep(n), rel(n);
    for (std::size_t j = 0; j < n; ++j) {
      const auto& g = gallery[j];
      const bool same_view = g.identity == q.identity && g.camera == q.camera;
      keep[j] = g.flag == IdentityFlag::none && !same_view;
      rel[j] = keep[j] && q.flag == IdentityFlag::none && g.identity == q.identity;
    }
    auto before = [&](std::size_t a, std::size_t b) {
      const double da = dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a));
      const double db = dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b));
      return da < db || (da == db && a < b);
    };
    std::vector<int> pos(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
      if (!keep[j]) continue;
      pos[j] = 1;
      for (std::size_t k = 0; k < n; ++k)
        if (k != j && keep[k] && before(k, j)) ++pos[j];
    }
    int num_rel = 0;
    for (std::size_t j = 0; j < n; ++j) num_rel += rel[j];
    if (num_rel == 0) continue;
    double ap = 0;
    int best = static_cast<int>(n) + 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (!rel[j]) continue;
      int rel_at_or_before = 0;
      for (std::size_t k = 0; k < n; ++k)
        if (rel[k] && pos[k] <= pos[j]) ++rel_at_or_before;
      ap += static_cast<double>(rel_at_or_before) / pos[j];
      best = std::min(best, pos[j]);
    }
    r.valid[i] = true;
    r.ap[i] = ap / num_rel;
    r.first[i] = best;
    ap_total += r.ap[i];
    ++first_counts[static_cast<std::size_t>(best)];
    ++r.valid_queries;
  }
  r.cmc.assign(n, 0.0);
  if (r.valid_queries > 0) {
    r.map = ap_total / r.valid_queries;
    int acc = 0;
    for (std::size_t k = 1; k <= n; ++k) {
      acc += first_counts[k];
      r.cmc[k - 1] = static_cast<double>(acc) / r.valid_queries;
    }
  }
  return r;
}

/// Central difference of a scalar function of one coordinate.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

/// |a - b| relative to the larger magnitude, with `floor` guarding near-zero gradients.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace oracle

#endif  // CAMSTYLE_TESTS_ORACLES_HPP_
