#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rulerec/errors.hpp"
#include "rulerec/rng.hpp"

namespace rulerec {

// Shared name spaces for entity types and rule types. Index order is defined
// by the vocabulary file and must match between training and inference.
struct Vocab {
  std::vector<std::string> entity_types;
  std::vector<std::string> rule_types;

  static Vocab make(std::vector<std::string> entity_names,
                    std::vector<std::string> rule_names) {
    Vocab v;
    v.entity_types = std::move(entity_names);
    v.rule_types = std::move(rule_names);
    if (v.entity_types.empty()) throw DataError("vocab: no entity types");
    if (v.rule_types.empty()) throw DataError("vocab: no rule types");
    auto index = [](const std::vector<std::string>& names, const char* what) {
      std::unordered_map<std::string, int> m;
      for (size_t i = 0; i < names.size(); ++i) {
        if (names[i].empty())
          throw DataError(std::string("vocab: empty ") + what + " name");
        if (!m.emplace(names[i], static_cast<int>(i)).second)
          throw DataError(std::string("vocab: duplicate ") + what + " '" + names[i] + "'");
      }
      return m;
    };
    v.entity_index_ = index(v.entity_types, "entity type");
    v.rule_index_ = index(v.rule_types, "rule type");
    return v;
  }

  int num_entity_types() const { return static_cast<int>(entity_types.size()); }
  int num_rule_types() const { return static_cast<int>(rule_types.size()); }

  int entity_type_index(const std::string& name) const {
    auto it = entity_index_.find(name);
    return it == entity_index_.end() ? -1 : it->second;
  }
  int rule_type_index(const std::string& name) const {
    auto it = rule_index_.find(name);
    return it == rule_index_.end() ? -1 : it->second;
  }

 private:
  std::unordered_map<std::string, int> entity_index_;
  std::unordered_map<std::string, int> rule_index_;
};

// Directed typed edge between node indices; rule indexes into the vocabulary.
struct Edge {
  int src = 0;
  int dst = 0;
  int rule = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// One user's device graph in canonical form: nodes sorted by external id,
// edges sorted and unique. Node indices are positions in node_ids.
struct EntityGraph {
  std::string user_id;
  std::vector<std::string> node_ids;
  std::vector<int> node_types;
  std::vector<Edge> edges;
  std::vector<std::vector<int>> in_nbrs;  // distinct sources of inbound edges

  int num_nodes() const { return static_cast<int>(node_ids.size()); }

  int node_index(const std::string& id) const {
    auto it = std::lower_bound(node_ids.begin(), node_ids.end(), id);
    if (it == node_ids.end() || *it != id) return -1;
    return static_cast<int>(it - node_ids.begin());
  }
};

inline const std::vector<int>& in_neighbors(const EntityGraph& g, int node) {
  if (node < 0 || node >= g.num_nodes())
    throw DataError("in_neighbors: node " + std::to_string(node) + " out of range");
  return g.in_nbrs[node];
}

namespace detail {

inline std::vector<std::vector<int>> build_in_neighbors(int num_nodes,
                                                        const std::vector<Edge>& edges) {
  std::vector<std::vector<int>> in(num_nodes);
  for (const Edge& e : edges) in[e.dst].push_back(e.src);
  for (auto& nbrs : in) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  }
  return in;
}

}  // namespace detail

struct EntitySpec {
  std::string id;
  std::string type;
};

struct RuleSpec {
  std::string src;
  std::string rule;
  std::string dst;
};

// Canonicalizes raw per-user records into an EntityGraph. Node order is the
// sorted order of entity ids, so any permutation of the input yields the
// same graph. Duplicate rules collapse; dangling references throw.
inline EntityGraph build_graph(const std::string& user_id,
                               const std::vector<EntitySpec>& entities,
                               const std::vector<RuleSpec>& rules, const Vocab& vocab) {
  EntityGraph g;
  g.user_id = user_id;

  std::vector<int> order(entities.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return entities[a].id < entities[b].id; });

  g.node_ids.reserve(entities.size());
  g.node_types.reserve(entities.size());
  for (int i : order) {
    const EntitySpec& e = entities[i];
    if (!g.node_ids.empty() && g.node_ids.back() == e.id)
      throw DataError("user '" + user_id + "': duplicate entity id '" + e.id + "'");
    int t = vocab.entity_type_index(e.type);
    if (t < 0)
      throw DataError("user '" + user_id + "': unknown entity type '" + e.type + "'");
    g.node_ids.push_back(e.id);
    g.node_types.push_back(t);
  }

  g.edges.reserve(rules.size());
  for (const RuleSpec& r : rules) {
    int s = g.node_index(r.src);
    if (s < 0)
      throw DataError("user '" + user_id + "': rule references unknown entity '" +
                      r.src + "'");
    int d = g.node_index(r.dst);
    if (d < 0)
      throw DataError("user '" + user_id + "': rule references unknown entity '" +
                      r.dst + "'");
    int rt = vocab.rule_type_index(r.rule);
    if (rt < 0)
      throw DataError("user '" + user_id + "': unknown rule type '" + r.rule + "'");
    g.edges.push_back(Edge{s, d, rt});
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());

  g.in_nbrs = detail::build_in_neighbors(g.num_nodes(), g.edges);
  return g;
}

// Same nodes, different edge set; used to message-pass over training edges only.
inline EntityGraph with_edges(const EntityGraph& g, std::vector<Edge> edges) {
  EntityGraph out;
  out.user_id = g.user_id;
  out.node_ids = g.node_ids;
  out.node_types = g.node_types;
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  for (const Edge& e : edges)
    if (e.src < 0 || e.src >= g.num_nodes() || e.dst < 0 || e.dst >= g.num_nodes())
      throw DataError("with_edges: edge endpoint out of range");
  out.edges = std::move(edges);
  out.in_nbrs = detail::build_in_neighbors(out.num_nodes(), out.edges);
  return out;
}

// Train/test split of one user's positive edges; both halves stay sorted.
struct EdgeSplit {
  std::vector<Edge> train_pos;
  std::vector<Edge> test_pos;
};

// Seeded split holding back round(fraction * |edges|) test edges, capped so
// at least one training edge remains.
inline EdgeSplit split_edges(const EntityGraph& g, double fraction, uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw ConfigError("split_edges: fraction must be in [0,1]");
  size_t n = g.edges.size();
  if (n == 0) throw DataError("split_edges: user '" + g.user_id + "' has no edges");
  size_t test_n = static_cast<size_t>(std::llround(fraction * static_cast<double>(n)));
  if (test_n > n - 1) test_n = n - 1;

  std::vector<int> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  Rng rng(seed);
  rng.shuffle(idx);

  EdgeSplit split;
  split.test_pos.reserve(test_n);
  split.train_pos.reserve(n - test_n);
  for (size_t i = 0; i < n; ++i) {
    if (i < test_n)
      split.test_pos.push_back(g.edges[idx[i]]);
    else
      split.train_pos.push_back(g.edges[idx[i]]);
  }
  std::sort(split.train_pos.begin(), split.train_pos.end());
  std::sort(split.test_pos.begin(), split.test_pos.end());
  return split;
}

namespace detail {

inline uint64_t edge_code(const Edge& e, int num_nodes, int num_rules) {
  return (static_cast<uint64_t>(e.src) * num_nodes + e.dst) * num_rules + e.rule;
}

inline Edge edge_from_code(uint64_t code, int num_nodes, int num_rules) {
  Edge e;
  e.rule = static_cast<int>(code % num_rules);
  code /= num_rules;
  e.dst = static_cast<int>(code % num_nodes);
  e.src = static_cast<int>(code / num_nodes);
  return e;
}

}  // namespace detail

struct NegativeSample {
  std::vector<Edge> edges;  // sorted by (src, dst, rule)
  bool shortfall = false;   // candidate space was smaller than the request
};

// Draws `count` distinct edges absent from g.edges, uniformly over the
// V*V*R complement. Falls back to enumerating the complement when the
// request covers most of it; returns everything and flags shortfall when
// the complement itself is too small.
inline NegativeSample sample_negatives(const EntityGraph& g, int num_rules,
                                       size_t count, uint64_t seed) {
  NegativeSample out;
  int v = g.num_nodes();
  if (v == 0 || num_rules <= 0 || count == 0) {
    out.shortfall = count > 0;
    return out;
  }
  uint64_t space = static_cast<uint64_t>(v) * v * num_rules;
  uint64_t free_space = space - g.edges.size();
  Rng rng(seed);

  if (count >= free_space) {
    // Whole complement, by walking the code space against the sorted edges.
    out.edges.reserve(free_space);
    size_t ei = 0;
    for (uint64_t code = 0; code < space; ++code) {
      if (ei < g.edges.size() &&
          detail::edge_code(g.edges[ei], v, num_rules) == code) {
        ++ei;
        continue;
      }
      out.edges.push_back(detail::edge_from_code(code, v, num_rules));
    }
    out.shortfall = count > free_space;
    return out;
  }

  if (count * 2 <= free_space) {
    // Rejection against positives and prior draws.
    std::unordered_set<uint64_t> taken;
    taken.reserve(count * 2);
    std::vector<uint64_t> codes;
    codes.reserve(count);
    auto is_positive = [&](uint64_t code) {
      Edge e = detail::edge_from_code(code, v, num_rules);
      return std::binary_search(g.edges.begin(), g.edges.end(), e);
    };
    while (codes.size() < count) {
      uint64_t code = rng.below(space);
      if (is_positive(code) || !taken.insert(code).second) continue;
      codes.push_back(code);
    }
    std::sort(codes.begin(), codes.end());
    out.edges.reserve(count);
    for (uint64_t code : codes)
      out.edges.push_back(detail::edge_from_code(code, v, num_rules));
    return out;
  }

  // Dense request: materialize the complement and take a partial shuffle.
  std::vector<uint64_t> complement;
  complement.reserve(free_space);
  size_t ei = 0;
  for (uint64_t code = 0; code < space; ++code) {
    if (ei < g.edges.size() && detail::edge_code(g.edges[ei], v, num_rules) == code) {
      ++ei;
      continue;
    }
    complement.push_back(code);
  }
  for (size_t i = 0; i < count; ++i) {
    size_t j = i + static_cast<size_t>(rng.below(complement.size() - i));
    std::swap(complement[i], complement[j]);
  }
  complement.resize(count);
  std::sort(complement.begin(), complement.end());
  out.edges.reserve(count);
  for (uint64_t code : complement)
    out.edges.push_back(detail::edge_from_code(code, v, num_rules));
  return out;
}

// Every (src, dst, rule) triple not present in the graph, in sorted order;
// the candidate set for ranking and recommendation.
inline std::vector<Edge> out_candidates(const EntityGraph& g, int num_rules) {
  int v = g.num_nodes();
  uint64_t space = static_cast<uint64_t>(v) * v * num_rules;
  std::vector<Edge> cand;
  cand.reserve(space - g.edges.size());
  size_t ei = 0;
  for (uint64_t code = 0; code < space; ++code) {
    if (ei < g.edges.size() && detail::edge_code(g.edges[ei], v, num_rules) == code) {
      ++ei;
      continue;
    }
    cand.push_back(detail::edge_from_code(code, v, num_rules));
  }
  return cand;
}

// One user's graph plus its train/test split. An empty split means the whole
// graph is training data.
struct UserData {
  EntityGraph graph;
  EdgeSplit split;

  const std::vector<Edge>& train_edges() const {
    return split.train_pos.empty() && split.test_pos.empty() ? graph.edges
                                                             : split.train_pos;
  }
};

struct Dataset {
  Vocab vocab;
  std::vector<UserData> users;

  int find_user(const std::string& user_id) const {
    for (size_t i = 0; i < users.size(); ++i)
      if (users[i].graph.user_id == user_id) return static_cast<int>(i);
    return -1;
  }
};

// Splits every user with the per-user seed stream. fraction 0 leaves all
// edges in training. Users without edges get an empty split.
inline void prepare_splits(Dataset& ds, double fraction, uint64_t seed) {
  for (size_t i = 0; i < ds.users.size(); ++i) {
    UserData& u = ds.users[i];
    u.split = EdgeSplit{};
    if (u.graph.edges.empty()) continue;
    if (fraction == 0.0) {
      u.split.train_pos = u.graph.edges;
      continue;
    }
    u.split = split_edges(u.graph, fraction, seed_stream(seed, "split", i));
  }
}

}  // namespace rulerec
