#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "rulerec/graph.hpp"
#include "rulerec/rng.hpp"

namespace rulerec {

// Clustered synthetic data: each cluster owns a template subset of the
// (src type, rule, dst type) universe plus Dirichlet preferences over it.
// Small alpha concentrates preferences (non-IID users); large alpha with one
// cluster approaches IID.
struct GenConfig {
  int users = 100;
  int entity_types = 8;
  int rule_types = 12;
  int clusters = 4;
  int templates_per_cluster = 10;
  int entities_min = 3;
  int entities_max = 8;
  double rules_mean = 2.65;  // Poisson mean, clamped to at least one rule
  double alpha = 0.1;        // Dirichlet concentration over cluster templates
  uint64_t seed = 0;

  void validate() const {
    if (users < 1) throw ConfigError("gen: users must be >= 1");
    if (entity_types < 1) throw ConfigError("gen: entity-types must be >= 1");
    if (rule_types < 1) throw ConfigError("gen: rule-types must be >= 1");
    if (clusters < 1) throw ConfigError("gen: clusters must be >= 1");
    if (entities_min < 1 || entities_max < entities_min)
      throw ConfigError("gen: need 1 <= entities-min <= entities-max");
    if (entities_max > 900)
      throw ConfigError("gen: entities-max above 900 is not supported");
    if (!(rules_mean > 0.0)) throw ConfigError("gen: rules-mean must be positive");
    if (rules_mean > 500.0)
      throw ConfigError("gen: rules-mean above 500 is not supported");
    if (!(alpha > 0.0)) throw ConfigError("gen: alpha must be positive");
    long space = static_cast<long>(entity_types) * rule_types * entity_types;
    if (templates_per_cluster < 1 || templates_per_cluster > space)
      throw ConfigError("gen: templates-per-cluster must be in [1, T*R*T]");
  }
};

struct Template {
  int src_type = 0;
  int rule = 0;
  int dst_type = 0;
  friend auto operator<=>(const Template&, const Template&) = default;
};

struct GeneratedDataset {
  Dataset dataset;
  std::vector<int> user_cluster;
  std::vector<std::vector<Template>> cluster_templates;
  std::vector<std::vector<double>> cluster_prefs;  // parallel to templates
};

namespace detail {

inline std::string padded_name(const char* prefix, int width, int i) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, i);
  return buf;
}

}  // namespace detail

inline GeneratedDataset generate(const GenConfig& cfg) {
  cfg.validate();
  GeneratedDataset out;

  std::vector<std::string> entity_names, rule_names;
  for (int i = 0; i < cfg.entity_types; ++i)
    entity_names.push_back(detail::padded_name("EntityType", 2, i));
  for (int i = 0; i < cfg.rule_types; ++i)
    rule_names.push_back(detail::padded_name("RuleType", 3, i));
  out.dataset.vocab = Vocab::make(entity_names, rule_names);

  // Cluster template subsets and preferences.
  uint64_t space = static_cast<uint64_t>(cfg.entity_types) * cfg.rule_types *
                   cfg.entity_types;
  for (int g = 0; g < cfg.clusters; ++g) {
    Rng rng(seed_stream(cfg.seed, "cluster", static_cast<uint64_t>(g)));
    std::set<uint64_t> codes;
    while (codes.size() < static_cast<size_t>(cfg.templates_per_cluster))
      codes.insert(rng.below(space));
    std::vector<Template> templates;
    for (uint64_t code : codes) {
      Template t;
      t.dst_type = static_cast<int>(code % cfg.entity_types);
      code /= cfg.entity_types;
      t.rule = static_cast<int>(code % cfg.rule_types);
      t.src_type = static_cast<int>(code / cfg.rule_types);
      templates.push_back(t);
    }
    out.cluster_templates.push_back(std::move(templates));
    out.cluster_prefs.push_back(rng.dirichlet(cfg.alpha, cfg.templates_per_cluster));
  }

  for (int ui = 0; ui < cfg.users; ++ui) {
    Rng rng(seed_stream(cfg.seed, "user", static_cast<uint64_t>(ui)));
    int cluster = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.clusters)));
    out.user_cluster.push_back(cluster);
    const std::vector<Template>& templates = out.cluster_templates[cluster];
    const std::vector<double>& prefs = out.cluster_prefs[cluster];

    // Entity types come from the cluster's template types, so most templates
    // are instantiable.
    std::vector<int> type_pool;
    for (const Template& t : templates) {
      type_pool.push_back(t.src_type);
      type_pool.push_back(t.dst_type);
    }
    std::sort(type_pool.begin(), type_pool.end());
    type_pool.erase(std::unique(type_pool.begin(), type_pool.end()), type_pool.end());

    int span = cfg.entities_max - cfg.entities_min + 1;
    std::vector<int> types;
    std::vector<int> usable;  // template indices with at least one instance
    for (int attempt = 0; attempt < 20; ++attempt) {
      int n = cfg.entities_min + static_cast<int>(rng.below(static_cast<uint64_t>(span)));
      types.clear();
      for (int i = 0; i < n; ++i)
        types.push_back(type_pool[rng.below(type_pool.size())]);
      std::vector<int> count(cfg.entity_types, 0);
      for (int t : types) ++count[t];
      usable.clear();
      for (size_t ti = 0; ti < templates.size(); ++ti)
        if (count[templates[ti].src_type] > 0 && count[templates[ti].dst_type] > 0)
          usable.push_back(static_cast<int>(ti));
      if (!usable.empty()) break;
    }
    if (usable.empty()) {
      // Force the most-preferred template to be instantiable.
      int best = 0;
      for (size_t ti = 1; ti < prefs.size(); ++ti)
        if (prefs[ti] > prefs[best]) best = static_cast<int>(ti);
      types.push_back(templates[best].src_type);
      types.push_back(templates[best].dst_type);
      usable.push_back(best);
    }

    int n = static_cast<int>(types.size());
    std::vector<std::vector<int>> by_type(cfg.entity_types);
    for (int i = 0; i < n; ++i) by_type[types[i]].push_back(i);

    // Concrete triples available to this user, grouped by usable template.
    uint64_t instances = 0;
    std::vector<uint64_t> template_instances(usable.size());
    double pref_total = 0.0;
    for (size_t k = 0; k < usable.size(); ++k) {
      const Template& t = templates[usable[k]];
      template_instances[k] = static_cast<uint64_t>(by_type[t.src_type].size()) *
                              by_type[t.dst_type].size();
      instances += template_instances[k];
      pref_total += prefs[usable[k]];
    }

    uint64_t target = static_cast<uint64_t>(
        std::max<long long>(1, rng.poisson(cfg.rules_mean)));
    target = std::min(target, instances);

    std::set<uint64_t> chosen;  // (template slot, src index, dst index) packed
    uint64_t attempts_left = 50 * target + 100;
    while (chosen.size() < target && attempts_left > 0) {
      --attempts_left;
      double x = rng.unit() * pref_total;
      size_t k = 0;
      for (; k + 1 < usable.size(); ++k) {
        x -= prefs[usable[k]];
        if (x < 0.0) break;
      }
      const Template& t = templates[usable[k]];
      uint64_t si = rng.below(by_type[t.src_type].size());
      uint64_t di = rng.below(by_type[t.dst_type].size());
      chosen.insert((static_cast<uint64_t>(k) * n + si) * n + di);
    }
    if (chosen.size() < target) {
      // Deterministic fill from the remaining instances.
      for (size_t k = 0; k < usable.size() && chosen.size() < target; ++k) {
        const Template& t = templates[usable[k]];
        for (size_t si = 0; si < by_type[t.src_type].size(); ++si)
          for (size_t di = 0;
               di < by_type[t.dst_type].size() && chosen.size() < target; ++di)
            chosen.insert((static_cast<uint64_t>(k) * n + si) * n + di);
      }
    }

    std::vector<EntitySpec> entities;
    for (int i = 0; i < n; ++i) {
      EntitySpec e;
      e.id = detail::padded_name("e", 3, i);
      e.type = out.dataset.vocab.entity_types[types[i]];
      entities.push_back(std::move(e));
    }
    std::vector<RuleSpec> rules;
    for (uint64_t code : chosen) {
      int di = static_cast<int>(code % n);
      code /= n;
      int si = static_cast<int>(code % n);
      size_t k = static_cast<size_t>(code / n);
      const Template& t = templates[usable[k]];
      RuleSpec r;
      r.src = entities[by_type[t.src_type][si]].id;
      r.rule = out.dataset.vocab.rule_types[t.rule];
      r.dst = entities[by_type[t.dst_type][di]].id;
      rules.push_back(std::move(r));
    }

    UserData u;
    u.graph = build_graph(detail::padded_name("u", 4, ui), entities, rules,
                          out.dataset.vocab);
    out.dataset.users.push_back(std::move(u));
  }
  return out;
}

// Rule-type mixture summary: global and per-cluster histograms plus mean
// total-variation distances between user histograms within and across
// clusters.
struct HeterogeneityReport {
  std::vector<double> global_hist;                // length R
  std::vector<std::vector<double>> cluster_hist;  // G x R
  std::vector<std::vector<double>> cluster_tv;    // G x G
  double mean_intra_user_tv = 0.0;
  double mean_inter_user_tv = 0.0;
  double mean_rules_per_user = 0.0;
  double mean_entities_per_user = 0.0;
};

namespace detail {

inline double total_variation(const std::vector<double>& a,
                              const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
  return 0.5 * acc;
}

}  // namespace detail

inline HeterogeneityReport heterogeneity_report(const GeneratedDataset& gen) {
  const Dataset& ds = gen.dataset;
  int r = ds.vocab.num_rule_types();
  int g = static_cast<int>(gen.cluster_templates.size());
  HeterogeneityReport rep;
  rep.global_hist.assign(r, 0.0);
  rep.cluster_hist.assign(g, std::vector<double>(r, 0.0));

  std::vector<std::vector<double>> user_hist;
  double rules_acc = 0.0, entities_acc = 0.0;
  for (size_t ui = 0; ui < ds.users.size(); ++ui) {
    const EntityGraph& graph = ds.users[ui].graph;
    std::vector<double> h(r, 0.0);
    for (const Edge& e : graph.edges) {
      h[e.rule] += 1.0;
      rep.global_hist[e.rule] += 1.0;
      rep.cluster_hist[gen.user_cluster[ui]][e.rule] += 1.0;
    }
    double total = static_cast<double>(graph.edges.size());
    if (total > 0.0)
      for (double& x : h) x /= total;
    user_hist.push_back(std::move(h));
    rules_acc += total;
    entities_acc += graph.num_nodes();
  }
  rep.mean_rules_per_user = rules_acc / static_cast<double>(ds.users.size());
  rep.mean_entities_per_user = entities_acc / static_cast<double>(ds.users.size());

  auto normalize = [](std::vector<double>& h) {
    double total = 0.0;
    for (double x : h) total += x;
    if (total > 0.0)
      for (double& x : h) x /= total;
  };
  normalize(rep.global_hist);
  for (auto& h : rep.cluster_hist) normalize(h);

  rep.cluster_tv.assign(g, std::vector<double>(g, 0.0));
  for (int a = 0; a < g; ++a)
    for (int b = 0; b < g; ++b)
      rep.cluster_tv[a][b] =
          detail::total_variation(rep.cluster_hist[a], rep.cluster_hist[b]);

  double intra_acc = 0.0, inter_acc = 0.0;
  long intra_n = 0, inter_n = 0;
  for (size_t a = 0; a < user_hist.size(); ++a) {
    for (size_t b = a + 1; b < user_hist.size(); ++b) {
      double tv = detail::total_variation(user_hist[a], user_hist[b]);
      if (gen.user_cluster[a] == gen.user_cluster[b]) {
        intra_acc += tv;
        ++intra_n;
      } else {
        inter_acc += tv;
        ++inter_n;
      }
    }
  }
  if (intra_n > 0) rep.mean_intra_user_tv = intra_acc / intra_n;
  if (inter_n > 0) rep.mean_inter_user_tv = inter_acc / inter_n;
  return rep;
}

}  // namespace rulerec
