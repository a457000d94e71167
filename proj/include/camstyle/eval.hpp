#ifndef CAMSTYLE_EVAL_HPP_
#define CAMSTYLE_EVAL_HPP_

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "camstyle/data.hpp"

namespace camstyle::eval {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using DistanceMatrix = Eigen::MatrixXd;

struct ItemMeta {
  int identity = 0;
  int camera = 0;
  data::IdentityFlag flag = data::IdentityFlag::none;
};

/// Pairwise Euclidean distances between feature rows. Each entry is computed from the
/// difference vector, so identical rows give exactly 0.
template <typename Derived1, typename Derived2>
DistanceMatrix distance_matrix(const Eigen::MatrixBase<Derived1>& query, const Eigen::MatrixBase<Derived2>& gallery) {
  if (query.cols() != gallery.cols()) {
    throw EvalError("distance_matrix: feature dimensions differ (" + std::to_string(query.cols()) + " vs " +
                    std::to_string(gallery.cols()) + ")");
  }
  const Eigen::MatrixXd q = query.template cast<double>();
  const Eigen::MatrixXd g = gallery.template cast<double>();
  DistanceMatrix d(q.rows(), g.rows());
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    for (Eigen::Index j = 0; j < g.rows(); ++j) d(i, j) = (q.row(i) - g.row(j)).norm();
  return d;
}

struct ProtocolMasks {
  std::vector<bool> junk;      // excluded from the ranking
  std::vector<bool> relevant;  // true cross-camera matches
  bool query_valid = false;    // at least one relevant item
};

/// Single-query rules: same identity and same camera is junk, flagged items are junk, and a
/// query without any cross-camera match is invalid.
ProtocolMasks protocol_filter(const ItemMeta& query, std::span<const ItemMeta> gallery);

struct QueryResult {
  bool valid = false;
  double average_precision = 0;
  /// 1-based position of the first match in the junk-free ranking (0 when invalid).
  int first_match_rank = 0;
};

struct RankingEvaluation {
  std::vector<QueryResult> per_query;
  /// cmc[k-1] = fraction of valid queries matched within the top k, k = 1..|gallery|.
  std::vector<double> cmc;
  double map = 0;
  int num_valid_queries = 0;

  /// CMC at rank k (clamped to the curve's length).
  double rank(int k) const;
};

RankingEvaluation evaluate(const DistanceMatrix& dist, std::span<const ItemMeta> query, std::span<const ItemMeta> gallery);

/// "rank-k: value" lines for each requested k, then mAP and the valid-query count.
std::string format_report(const RankingEvaluation& ev, std::span<const int> ks);
/// Tab-separated per-query table with a header row.
std::string format_per_query(const RankingEvaluation& ev, std::span<const ItemMeta> query);

/// Metadata of the records with the given role, in dataset order.
std::vector<ItemMeta> metadata(const data::CameraDataset& ds, data::Role role);

}  // namespace camstyle::eval

#endif  // CAMSTYLE_EVAL_HPP_
