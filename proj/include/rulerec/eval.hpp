#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "rulerec/graph.hpp"
#include "rulerec/model.hpp"

namespace rulerec {

// Boolean (src type, rule type, dst type) tensor marking signatures that
// occur in training data; used to prune nonsensical candidates.
struct ValidRuleFilter {
  int num_entity_types = 0;
  int num_rule_types = 0;
  std::vector<char> allow;  // (src_type * R + rule) * T + dst_type

  bool allowed(int src_type, int rule, int dst_type) const {
    return allow[(static_cast<size_t>(src_type) * num_rule_types + rule) *
                     num_entity_types +
                 dst_type] != 0;
  }
};

// Marks every signature seen among training edges across all users.
inline ValidRuleFilter build_filter(const Dataset& ds) {
  ValidRuleFilter f;
  f.num_entity_types = ds.vocab.num_entity_types();
  f.num_rule_types = ds.vocab.num_rule_types();
  f.allow.assign(static_cast<size_t>(f.num_entity_types) * f.num_rule_types *
                     f.num_entity_types,
                 0);
  for (const UserData& u : ds.users) {
    for (const Edge& e : u.train_edges()) {
      int st = u.graph.node_types[e.src];
      int dt = u.graph.node_types[e.dst];
      f.allow[(static_cast<size_t>(st) * f.num_rule_types + e.rule) *
                  f.num_entity_types +
              dt] = 1;
    }
  }
  return f;
}

// Keeps candidates whose type signature the filter allows, preserving order.
inline std::vector<Edge> apply_filter(const ValidRuleFilter& f, const EntityGraph& g,
                                      const std::vector<Edge>& candidates) {
  std::vector<Edge> kept;
  kept.reserve(candidates.size());
  for (const Edge& e : candidates)
    if (f.allowed(g.node_types[e.src], e.rule, g.node_types[e.dst]))
      kept.push_back(e);
  return kept;
}

// Mann-Whitney AUC with ties counted half. Exact: built from integer
// win/tie counts, not trapezoid sums.
inline double auc(const std::vector<double>& pos_scores,
                  const std::vector<double>& neg_scores) {
  if (pos_scores.empty() || neg_scores.empty())
    throw DataError("auc: needs at least one positive and one negative score");
  std::vector<double> neg = neg_scores;
  std::sort(neg.begin(), neg.end());
  double acc = 0.0;
  for (double p : pos_scores) {
    auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    auto hi = std::upper_bound(lo, neg.end(), p);
    double wins = static_cast<double>(lo - neg.begin());
    double ties = static_cast<double>(hi - lo);
    acc += wins + 0.5 * ties;
  }
  return acc / (static_cast<double>(pos_scores.size()) *
                static_cast<double>(neg_scores.size()));
}

namespace detail {

// Probability of each edge at its own rule index, given embeddings.
inline std::vector<double> edge_probs(const ModelParams& p, const Matrix& z,
                                      const std::vector<Edge>& edges) {
  if (edges.empty()) return {};
  Matrix u = edge_inputs(z, edges, {}, p.num_rule_types);
  PredictTrace tr = predict_trace(p, u);
  std::vector<double> probs(edges.size());
  for (size_t e = 0; e < edges.size(); ++e)
    probs[e] = tr.p(static_cast<int>(e), edges[e].rule);
  return probs;
}

}  // namespace detail

// Mean rank of each held-out edge's rule among all R rules on its node pair,
// ranked by probability, ties broken toward the lower rule index. With
// remove_train, rules the pair already has in training are not competitors.
inline double mean_rank(const ModelParams& p, const EntityGraph& train_graph,
                        const EdgeSplit& split, bool remove_train) {
  if (split.test_pos.empty()) throw DataError("mean_rank: no test edges");
  Matrix z = encode(p, train_graph);
  double acc = 0.0;
  for (const Edge& e : split.test_pos) {
    std::vector<double> probs = predict_edge(p, z, e.src, e.dst);
    if (remove_train &&
        std::binary_search(split.train_pos.begin(), split.train_pos.end(), e))
      throw DataError("mean_rank: test edge also present in training split");
    double target = probs[e.rule];
    long rank = 1;
    for (int r = 0; r < p.num_rule_types; ++r) {
      if (r == e.rule) continue;
      if (remove_train && std::binary_search(split.train_pos.begin(),
                                             split.train_pos.end(),
                                             Edge{e.src, e.dst, r}))
        continue;
      if (probs[r] > target || (probs[r] == target && r < e.rule)) ++rank;
    }
    acc += static_cast<double>(rank);
  }
  return acc / static_cast<double>(split.test_pos.size());
}

namespace detail {

// Per-user cumulative hit counts for N = 1..max_n over the ranked candidate
// list. Candidates are non-training triples (or everything, when targets are
// the training edges themselves); ranking is probability descending with
// (src, dst, rule) ascending as the tiebreak.
inline std::vector<double> hit_curve_user(const ModelParams& p, const UserData& user,
                                          int max_n, const ValidRuleFilter* filter,
                                          bool train_targets) {
  const std::vector<Edge>& targets =
      train_targets ? user.split.train_pos : user.split.test_pos;
  if (targets.empty()) throw DataError("hit_rate: user has no target edges");

  EntityGraph train_graph = with_edges(user.graph, user.train_edges());
  ScoreTensor scores = score_all(p, train_graph);
  int v = train_graph.num_nodes();
  int r = p.num_rule_types;

  struct Cand {
    double prob;
    uint64_t code;
  };
  std::vector<Cand> cands;
  cands.reserve(scores.probs.size());
  static const std::vector<Edge> kNoExclusions;
  const std::vector<Edge>& excluded =
      train_targets ? kNoExclusions : user.split.train_pos;
  size_t ei = 0;
  uint64_t code = 0;
  for (int i = 0; i < v; ++i) {
    for (int j = 0; j < v; ++j) {
      for (int k = 0; k < r; ++k, ++code) {
        if (ei < excluded.size() &&
            detail::edge_code(excluded[ei], v, r) == code) {
          ++ei;
          continue;
        }
        if (filter && !filter->allowed(train_graph.node_types[i], k,
                                       train_graph.node_types[j]))
          continue;
        cands.push_back(Cand{scores.probs[code], code});
      }
    }
  }

  auto better = [](const Cand& a, const Cand& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    return a.code < b.code;
  };
  size_t keep = std::min(static_cast<size_t>(max_n), cands.size());
  std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(), better);

  std::vector<uint64_t> target_codes;
  target_codes.reserve(targets.size());
  for (const Edge& e : targets) target_codes.push_back(detail::edge_code(e, v, r));

  std::vector<double> curve(max_n);
  double hits = 0.0;
  double denom = static_cast<double>(targets.size());
  for (int n = 0; n < max_n; ++n) {
    if (static_cast<size_t>(n) < keep &&
        std::binary_search(target_codes.begin(), target_codes.end(), cands[n].code))
      hits += 1.0;
    curve[n] = hits / denom;
  }
  return curve;
}

}  // namespace detail

// Fraction of a user's held-out edges appearing in the model's top-N
// candidates. train_targets swaps in the training edges as targets (and
// stops excluding them from the candidate list).
inline double hit_rate_at_n(const ModelParams& p, const UserData& user, int n,
                            const ValidRuleFilter* filter = nullptr,
                            bool train_targets = false) {
  if (n <= 0) throw ConfigError("hit_rate_at_n: n must be positive");
  return detail::hit_curve_user(p, user, n, filter, train_targets)[n - 1];
}

// Macro-averaged hit curve over users that have target edges.
inline std::vector<double> hit_rate_curve(const ModelParams& p, const Dataset& ds,
                                          int max_n,
                                          const ValidRuleFilter* filter = nullptr,
                                          bool train_targets = false) {
  if (max_n <= 0) throw ConfigError("hit_rate_curve: max_n must be positive");
  std::vector<double> mean(max_n, 0.0);
  int counted = 0;
  for (const UserData& u : ds.users) {
    const std::vector<Edge>& targets =
        train_targets ? u.split.train_pos : u.split.test_pos;
    if (targets.empty()) continue;
    std::vector<double> curve = detail::hit_curve_user(p, u, max_n, filter, train_targets);
    for (int i = 0; i < max_n; ++i) mean[i] += curve[i];
    ++counted;
  }
  if (counted == 0) throw DataError("hit_rate_curve: no users with target edges");
  for (double& v : mean) v /= static_cast<double>(counted);
  return mean;
}

// Macro-averaged test metrics. Users without test edges are skipped; AUC
// additionally needs at least one sampled negative (non-complete graph).
struct MetricsReport {
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  double test_auc = std::numeric_limits<double>::quiet_NaN();
  double test_mean_rank = std::numeric_limits<double>::quiet_NaN();
  double test_mean_rank_rt = std::numeric_limits<double>::quiet_NaN();
  std::map<int, double> hit_rate;  // N -> macro hit rate
  int users_scored = 0;
};

struct EvalOptions {
  uint64_t eval_seed = 0;
  std::vector<int> hit_ns;
  const ValidRuleFilter* filter = nullptr;
};

inline MetricsReport evaluate(const ModelParams& p, const Dataset& ds,
                              const EvalOptions& opts) {
  MetricsReport rep;
  double loss_acc = 0.0, auc_acc = 0.0, mr_acc = 0.0, mrt_acc = 0.0;
  int loss_users = 0, auc_users = 0;
  for (size_t ui = 0; ui < ds.users.size(); ++ui) {
    const UserData& u = ds.users[ui];
    if (u.split.test_pos.empty()) continue;
    EntityGraph train_graph = with_edges(u.graph, u.train_edges());
    Matrix z = encode(p, train_graph);

    NegativeSample negs =
        sample_negatives(u.graph, p.num_rule_types, u.split.test_pos.size(),
                         seed_stream(opts.eval_seed, "eval-neg", ui));
    loss_acc += loss(p, z, u.split.test_pos, negs.edges);
    ++loss_users;

    if (!negs.edges.empty()) {
      auc_acc += auc(detail::edge_probs(p, z, u.split.test_pos),
                     detail::edge_probs(p, z, negs.edges));
      ++auc_users;
    }
    mr_acc += mean_rank(p, train_graph, u.split, false);
    mrt_acc += mean_rank(p, train_graph, u.split, true);
  }
  if (loss_users > 0) {
    rep.test_loss = loss_acc / loss_users;
    rep.test_mean_rank = mr_acc / loss_users;
    rep.test_mean_rank_rt = mrt_acc / loss_users;
  }
  if (auc_users > 0) rep.test_auc = auc_acc / auc_users;
  rep.users_scored = loss_users;
  for (int n : opts.hit_ns)
    rep.hit_rate[n] = hit_rate_curve(p, ds, n, opts.filter, false)[n - 1];
  return rep;
}

// One ranked rule suggestion for a user.
struct Recommendation {
  int src = 0;
  int dst = 0;
  int rule = 0;
  double prob = 0.0;
};

// Top-n unknown triples for one graph, scored over the graph as given,
// optionally signature-filtered. Returns fewer than n when candidates
// run out.
inline std::vector<Recommendation> recommend_top_n(const ModelParams& p,
                                                   const EntityGraph& g, int n,
                                                   const ValidRuleFilter* filter = nullptr) {
  if (n <= 0) throw ConfigError("recommend_top_n: n must be positive");
  std::vector<Edge> cands = out_candidates(g, p.num_rule_types);
  if (filter) cands = apply_filter(*filter, g, cands);
  if (cands.empty()) return {};
  ScoreTensor scores = score_all(p, g);

  std::vector<Recommendation> recs;
  recs.reserve(cands.size());
  for (const Edge& e : cands)
    recs.push_back(Recommendation{e.src, e.dst, e.rule, scores.at(e.src, e.dst, e.rule)});
  auto better = [](const Recommendation& a, const Recommendation& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    if (a.src != b.src) return a.src < b.src;
    if (a.dst != b.dst) return a.dst < b.dst;
    return a.rule < b.rule;
  };
  size_t keep = std::min(static_cast<size_t>(n), recs.size());
  std::partial_sort(recs.begin(), recs.begin() + keep, recs.end(), better);
  recs.resize(keep);
  return recs;
}

}  // namespace rulerec
