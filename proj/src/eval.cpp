#include "camstyle/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace camstyle::eval {

ProtocolMasks protocol_filter(const ItemMeta& query, std::span<const ItemMeta> gallery) {
  ProtocolMasks m;
  m.junk.resize(gallery.size());
  m.relevant.resize(gallery.size());
  const bool query_ok = query.flag == data::IdentityFlag::none;
  for (std::size_t j = 0; j < gallery.size(); ++j) {
    const auto& g = gallery[j];
    const bool junk = g.flag != data::IdentityFlag::none || (g.identity == query.identity && g.camera == query.camera);
    m.junk[j] = junk;
    m.relevant[j] = query_ok && !junk && g.identity == query.identity;
    m.query_valid = m.query_valid || m.relevant[j];
  }
  return m;
}

double RankingEvaluation::rank(int k) const {
  if (cmc.empty() || k < 1) return 0.0;
  return cmc[static_cast<std::size_t>(std::min<int>(k, static_cast<int>(cmc.size())) - 1)];
}

RankingEvaluation evaluate(const DistanceMatrix& dist, std::span<const ItemMeta> query, std::span<const ItemMeta> gallery) {
  if (dist.rows() != static_cast<Eigen::Index>(query.size()) || dist.cols() != static_cast<Eigen::Index>(gallery.size())) {
    throw EvalError("evaluate: distance matrix is " + std::to_string(dist.rows()) + "x" + std::to_string(dist.cols()) +
                    " but metadata has " + std::to_string(query.size()) + " queries and " +
                    std::to_string(gallery.size()) + " gallery items");
  }
  RankingEvaluation ev;
  ev.per_query.resize(query.size());
  std::vector<long> hits_at(gallery.size() + 1, 0);
  double ap_sum = 0;
  std::vector<std::size_t> order(gallery.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    const ProtocolMasks m = protocol_filter(query[i], gallery);
    if (!m.query_valid) continue;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) <
             dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b));
    });
    int position = 0, hits = 0, first = 0;
    double precision_sum = 0;
    for (std::size_t j : order) {
      if (m.junk[j]) continue;
      ++position;
      if (!m.relevant[j]) continue;
      ++hits;
      precision_sum += static_cast<double>(hits) / position;
      if (first == 0) first = position;
    }
    QueryResult& r = ev.per_query[i];
    r.valid = true;
    r.average_precision = precision_sum / hits;
    r.first_match_rank = first;
    ap_sum += r.average_precision;
    ++hits_at[static_cast<std::size_t>(first)];
    ++ev.num_valid_queries;
  }
  if (ev.num_valid_queries == 0) throw EvalError("evaluate: no valid queries (no query has a cross-camera match)");
  ev.map = ap_sum / ev.num_valid_queries;
  ev.cmc.resize(gallery.size());
  long cumulative = 0;
  for (std::size_t k = 1; k <= gallery.size(); ++k) {
    cumulative += hits_at[k];
    ev.cmc[k - 1] = static_cast<double>(cumulative) / ev.num_valid_queries;
  }
  return ev;
}

std::string format_report(const RankingEvaluation& ev, std::span<const int> ks) {
  std::string out;
  char buf[96];
  for (int k : ks) {
    std::snprintf(buf, sizeof buf, "rank-%d: %.6f\n", k, ev.rank(k));
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "mAP: %.6f\nvalid_queries: %d\n", ev.map, ev.num_valid_queries);
  return out + buf;
}

std::string format_per_query(const RankingEvaluation& ev, std::span<const ItemMeta> query) {
  std::string out = "query\tidentity\tcamera\tvalid\tap\tfirst_match_rank\n";
  char buf[128];
  for (std::size_t i = 0; i < ev.per_query.size(); ++i) {
    const auto& r = ev.per_query[i];
    std::snprintf(buf, sizeof buf, "%zu\t%d\t%d\t%d\t%.6f\t%d\n", i, query[i].identity, query[i].camera, r.valid ? 1 : 0,
                  r.average_precision, r.first_match_rank);
    out += buf;
  }
  return out;
}

std::vector<ItemMeta> metadata(const data::CameraDataset& ds, data::Role role) {
  std::vector<ItemMeta> out;
  for (const auto& r : ds.records)
    if (r.role == role) out.push_back({r.identity, r.camera, r.flag});
  return out;
}

}  // namespace camstyle::eval
