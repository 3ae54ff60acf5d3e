// Acceptance suite: one self-contained check per line of output, exit code is
// the number of failures. Each check states what it measured so a failure is
// diagnosable from the log alone.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rulerec/datagen.hpp"
#include "rulerec/eval.hpp"
#include "rulerec/io.hpp"
#include "rulerec/train.hpp"
#include "util.hpp"

using namespace rulerec;

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// Random graph over ids n00..nXX with distinct random edges.
EntityGraph random_graph(Rng& rng, const Vocab& vocab, int num_nodes, int num_edges) {
  std::vector<EntitySpec> ents;
  for (int i = 0; i < num_nodes; ++i) {
    EntitySpec e;
    e.id = fmt("n%02d", i);
    e.type = vocab.entity_types[rng.below(vocab.entity_types.size())];
    ents.push_back(std::move(e));
  }
  int r = static_cast<int>(vocab.rule_types.size());
  uint64_t space = static_cast<uint64_t>(num_nodes) * num_nodes * r;
  std::set<uint64_t> codes;
  size_t want = std::min<uint64_t>(static_cast<uint64_t>(num_edges), space);
  while (codes.size() < want) codes.insert(rng.below(space));
  std::vector<RuleSpec> rules;
  for (uint64_t code : codes) {
    Edge e = detail::edge_from_code(code, num_nodes, r);
    rules.push_back({fmt("n%02d", e.src), vocab.rule_types[e.rule], fmt("n%02d", e.dst)});
  }
  return build_graph("u", ents, rules, vocab);
}

ModelParams random_params(int t, int h, int r, uint64_t seed) {
  ModelParams p = init_params(t, h, r, seed);
  Rng rng(seed ^ 0x6a09e667f3bcc908ull);
  for (Matrix* b : {&p.theta1_b, &p.theta2_b, &p.phi1_b, &p.phi2_b})
    for (double& x : b->data) x = rng.uniform(-0.2, 0.2);
  return p;
}

GeneratedDataset small_population(int users, uint64_t seed) {
  GenConfig cfg;
  cfg.users = users;
  cfg.entity_types = 5;
  cfg.rule_types = 6;
  cfg.clusters = 2;
  cfg.templates_per_cluster = 8;
  cfg.entities_min = 3;
  cfg.entities_max = 5;
  cfg.rules_mean = 3.0;
  cfg.alpha = 0.3;
  cfg.seed = seed;
  return generate(cfg);
}

double max_param_diff(const ModelParams& a, const ModelParams& b) {
  double worst = 0.0;
  auto ta = tensors(a);
  auto tb = tensors(b);
  for (int t = 0; t < 8; ++t)
    for (size_t i = 0; i < ta[t]->data.size(); ++i)
      worst = std::max(worst, std::fabs(ta[t]->data[i] - tb[t]->data[i]));
  return worst;
}

// ---- 1. analytic gradients vs central finite differences ----

bool check_gradients(std::string& detail) {
  double started = now_seconds();
  const double h = 1e-5;
  double worst = 0.0;
  long checked = 0;
  for (uint64_t inst = 0; inst < 50; ++inst) {
    Rng rng(seed_stream(1000, "gradcheck", inst));
    int t = 1 + static_cast<int>(rng.below(4));
    int hid = 1 + static_cast<int>(rng.below(8));
    int r = 1 + static_cast<int>(rng.below(5));
    int v = 2 + static_cast<int>(rng.below(5));
    std::vector<std::string> et, rt;
    for (int i = 0; i < t; ++i) et.push_back(fmt("T%d", i));
    for (int i = 0; i < r; ++i) rt.push_back(fmt("R%d", i));
    Vocab vocab = Vocab::make(et, rt);
    EntityGraph g = random_graph(rng, vocab, v, 1 + static_cast<int>(rng.below(2 * v)));
    if (g.edges.empty()) continue;
    NegativeSample negs =
        sample_negatives(g, r, g.edges.size(), seed_stream(1000, "gradneg", inst));
    ModelParams p = random_params(t, hid, r, seed_stream(1000, "gradpar", inst));

    auto [grad, base] = gradients(p, g, g.edges, negs.edges);
    auto gt = tensors(grad);
    auto pt = tensors(p);
    for (int slot = 0; slot < 8; ++slot) {
      for (size_t i = 0; i < pt[slot]->data.size(); ++i) {
        double saved = pt[slot]->data[i];
        pt[slot]->data[i] = saved + h;
        double up = loss(p, encode(p, g), g.edges, negs.edges);
        pt[slot]->data[i] = saved - h;
        double down = loss(p, encode(p, g), g.edges, negs.edges);
        pt[slot]->data[i] = saved;
        double numeric = (up - down) / (2.0 * h);
        double analytic = gt[slot]->data[i];
        double rel = std::fabs(analytic - numeric) /
                     std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
        worst = std::max(worst, rel);
        ++checked;
      }
    }
  }
  double elapsed = now_seconds() - started;
  detail = fmt("%ld coordinates over 50 instances, worst rel err %.2e, %.1f s",
               checked, worst, elapsed);
  return worst < 1e-4 && elapsed < 30.0;
}

// ---- 2. trainer identities ----

bool check_trainer_identities(std::string& detail) {
  // (a) correction with zero strength reproduces plain averaging, bitwise.
  Dataset pop20 = small_population(20, 77).dataset;
  prepare_splits(pop20, 0.2, 77);
  TrainConfig fed;
  fed.mode = TrainMode::fedavg;
  fed.rounds = 20;
  fed.local_steps = 3;
  fed.lr_theta = fed.lr_phi = 0.05;
  fed.hidden = 8;
  fed.seed = 77;
  TrainResult avg = train(pop20, fed);
  TrainConfig zero = fed;
  zero.mode = TrainMode::fedrule;
  zero.lambda_theta = zero.lambda_phi = 0.0;
  TrainResult corrected = train(pop20, zero);
  if (!params_bitwise_equal(avg.model, corrected.model)) {
    detail = "zero-strength correction drifted from plain averaging";
    return false;
  }

  // (b) one client, one local sgd step: federated equals centralized, bitwise.
  Dataset solo = small_population(1, 78).dataset;
  prepare_splits(solo, 0.2, 78);
  TrainConfig central;
  central.mode = TrainMode::central;
  central.optimizer = Optimizer::sgd;
  central.rounds = 10;
  central.lr_theta = central.lr_phi = 0.05;
  central.hidden = 8;
  central.seed = 78;
  TrainResult c = train(solo, central);
  TrainConfig one = central;
  one.mode = TrainMode::fedavg;
  one.local_steps = 1;
  TrainResult f = train(solo, one);
  if (!params_bitwise_equal(c.model, f.model)) {
    detail = "single-client federation drifted from the centralized trajectory";
    return false;
  }

  // (c) tau=1 round equals one sgd step on the mean client gradient.
  Dataset pop10 = small_population(10, 79).dataset;
  TrainConfig tau1;
  tau1.mode = TrainMode::fedavg;
  tau1.rounds = 1;
  tau1.local_steps = 1;
  tau1.lr_theta = 0.05;
  tau1.lr_phi = 0.2;
  tau1.hidden = 8;
  tau1.seed = 79;
  TrainResult res = train(pop10, tau1);

  ModelParams manual = init_params(5, tau1.hidden, 6, seed_stream(tau1.seed, "init"));
  Gradients sum = zero_like(manual);
  for (size_t ui = 0; ui < pop10.users.size(); ++ui) {
    const UserData& u = pop10.users[ui];
    NegativeSample negs = sample_negatives(
        u.graph, 6, detail::negatives_for(tau1.neg_ratio, u.train_edges().size()),
        seed_stream(tau1.seed, "neg", 1, ui));
    EntityGraph tg = with_edges(u.graph, u.train_edges());
    auto [g, l] = gradients(manual, tg, u.train_edges(), negs.edges);
    auto dst = tensors(sum);
    auto src = tensors(g);
    for (int t = 0; t < 8; ++t) axpy_inplace(*dst[t], 1.0, *src[t]);
  }
  auto ps = tensors(manual);
  auto gs = tensors(sum);
  double inv = 1.0 / static_cast<double>(pop10.users.size());
  for (int t = 0; t < 8; ++t) {
    double lr = detail::half_lr(tau1, t);
    for (size_t i = 0; i < ps[t]->data.size(); ++i)
      ps[t]->data[i] -= lr * gs[t]->data[i] * inv;
  }
  double diff = max_param_diff(res.model, manual);
  detail = fmt("single-step averaging vs mean-gradient step: max diff %.2e", diff);
  return diff < 1e-12;
}

// ---- 3. control variates stay balanced ----

bool check_control_conservation(std::string& detail) {
  Dataset pop = small_population(20, 81).dataset;
  prepare_splits(pop, 0.2, 81);
  TrainConfig cfg;
  cfg.mode = TrainMode::fedrule;
  cfg.rounds = 50;
  cfg.local_steps = 3;
  cfg.lr_theta = cfg.lr_phi = 0.05;
  cfg.hidden = 8;
  cfg.seed = 81;
  TrainResult res = train(pop, cfg);
  double worst = 0.0;
  for (double norm : res.control_sum_max) worst = std::max(worst, norm);
  detail = fmt("max-norm of summed controls over %d rounds: %.2e", cfg.rounds, worst);
  return res.control_sum_max.size() == 50 && worst < 1e-9;
}

// ---- 4. federated vs centralized on clustered non-IID data ----

bool check_federated_comparison(std::string& detail) {
  double started = now_seconds();
  GenConfig gen;  // defaults: 8 entity types, 12 rule types, 4 clusters, alpha 0.1
  gen.users = 500;
  gen.seed = 4242;
  Dataset ds = generate(gen).dataset;
  prepare_splits(ds, 0.2, 4242);

  // Everything below the round/step counts stays at library defaults so the
  // three algorithms are compared without per-algorithm tuning.
  TrainConfig central;
  central.mode = TrainMode::central;
  central.rounds = 100;
  central.seed = 4242;
  TrainResult c = train(ds, central);

  TrainConfig fed;
  fed.mode = TrainMode::fedavg;
  fed.rounds = 100;
  fed.local_steps = 3;
  fed.seed = 4242;
  TrainResult avg = train(ds, fed);

  fed.mode = TrainMode::fedrule;
  TrainResult rule = train(ds, fed);

  double loss_rule = rule.log.back().test_loss;
  double loss_avg = avg.log.back().test_loss;
  double auc_rule = rule.log.back().test_auc;
  double auc_central = c.log.back().test_auc;

  double min_so_far = rule.log.front().test_loss;
  for (const RoundLog& l : rule.log) min_so_far = std::min(min_so_far, l.test_loss);
  double last10 = 0.0;
  for (size_t i = rule.log.size() - 10; i < rule.log.size(); ++i)
    last10 += rule.log[i].test_loss;
  last10 /= 10.0;

  double elapsed = now_seconds() - started;
  detail = fmt(
      "corrected loss %.4f vs plain %.4f; corrected auc %.4f vs central %.4f; "
      "last-10 %.4f vs best %.4f; %.0f s",
      loss_rule, loss_avg, auc_rule, auc_central, last10, min_so_far, elapsed);
  bool loss_ok = loss_rule <= loss_avg;
  bool auc_ok = std::fabs(auc_rule - auc_central) <= 0.03;
  bool trend_ok = last10 <= min_so_far + 0.05;
  return loss_ok && auc_ok && trend_ok && elapsed < 300.0;
}

// ---- 5. ranking metrics vs independent oracles ----

double oracle_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double acc = 0.0;
  for (double p : pos)
    for (double n : neg) acc += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return acc / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double oracle_mean_rank(const ModelParams& p, const EntityGraph& tg,
                        const EdgeSplit& split, bool remove_train) {
  Matrix z = encode(p, tg);
  double acc = 0.0;
  for (const Edge& e : split.test_pos) {
    std::vector<double> probs = predict_edge(p, z, e.src, e.dst);
    std::vector<std::pair<double, int>> order;  // (-prob, rule): sort gives the ranking
    for (int r = 0; r < p.num_rule_types; ++r) {
      if (remove_train && r != e.rule &&
          std::binary_search(split.train_pos.begin(), split.train_pos.end(),
                             Edge{e.src, e.dst, r}))
        continue;
      order.push_back({-probs[r], r});
    }
    std::sort(order.begin(), order.end());
    for (size_t i = 0; i < order.size(); ++i)
      if (order[i].second == e.rule) {
        acc += static_cast<double>(i + 1);
        break;
      }
  }
  return acc / static_cast<double>(split.test_pos.size());
}

bool check_metric_oracles(std::string& detail) {
  // AUC against the quadratic pairwise count, exactly, ties included.
  for (uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(seed_stream(2000, "auc", trial));
    std::vector<double> pos, neg;
    bool grid = trial % 2 == 0;
    size_t np = 1 + rng.below(20), nn = 1 + rng.below(20);
    for (size_t i = 0; i < np; ++i)
      pos.push_back(grid ? 0.125 * static_cast<double>(rng.below(9)) : rng.unit());
    for (size_t i = 0; i < nn; ++i)
      neg.push_back(grid ? 0.125 * static_cast<double>(rng.below(9)) : rng.unit());
    if (auc(pos, neg) != oracle_auc(pos, neg)) {
      detail = fmt("pairwise statistic mismatch on trial %llu",
                   static_cast<unsigned long long>(trial));
      return false;
    }
  }

  // Mean rank against an enumerate-and-sort oracle on random small models.
  for (uint64_t inst = 0; inst < 20; ++inst) {
    Rng rng(seed_stream(2000, "rank", inst));
    int t = 1 + static_cast<int>(rng.below(3));
    int r = 2 + static_cast<int>(rng.below(4));
    int v = 2 + static_cast<int>(rng.below(4));
    std::vector<std::string> et, rt;
    for (int i = 0; i < t; ++i) et.push_back(fmt("T%d", i));
    for (int i = 0; i < r; ++i) rt.push_back(fmt("R%d", i));
    Vocab vocab = Vocab::make(et, rt);
    EntityGraph g = random_graph(rng, vocab, v, 2 + static_cast<int>(rng.below(6)));
    while (g.edges.size() < 2)
      g = random_graph(rng, vocab, v, 2 + static_cast<int>(rng.below(6)));
    UserData user;
    user.graph = g;
    user.split = split_edges(g, 0.5, seed_stream(2000, "ranksplit", inst));
    ModelParams p = random_params(t, 1 + static_cast<int>(rng.below(6)), r,
                                  seed_stream(2000, "rankpar", inst));
    EntityGraph tg = with_edges(g, user.split.train_pos);

    double mr = mean_rank(p, tg, user.split, false);
    double mrt = mean_rank(p, tg, user.split, true);
    if (mr != oracle_mean_rank(p, tg, user.split, false) ||
        mrt != oracle_mean_rank(p, tg, user.split, true)) {
      detail = fmt("rank oracle mismatch on instance %llu",
                   static_cast<unsigned long long>(inst));
      return false;
    }
    if (mrt > mr) {
      detail = fmt("dropping known rules worsened the rank on instance %llu",
                   static_cast<unsigned long long>(inst));
      return false;
    }

    // Hit curve: nondecreasing, and certain once every candidate is listed.
    Dataset one;
    one.vocab = vocab;
    one.users.push_back(user);
    int candidates = v * v * r - static_cast<int>(user.split.train_pos.size());
    std::vector<double> curve = hit_rate_curve(p, one, candidates);
    for (size_t i = 1; i < curve.size(); ++i)
      if (curve[i] < curve[i - 1]) {
        detail = "hit curve decreased";
        return false;
      }
    if (curve.back() != 1.0) {
      detail = fmt("full candidate list missed targets on instance %llu",
                   static_cast<unsigned long long>(inst));
      return false;
    }
  }

  // Macro-level direction on a generated population.
  Dataset pop = small_population(20, 82).dataset;
  prepare_splits(pop, 0.3, 82);
  ModelParams p = random_params(5, 8, 6, 4321);
  for (const UserData& u : pop.users) {
    if (u.split.test_pos.empty()) continue;
    EntityGraph tg = with_edges(u.graph, u.train_edges());
    if (mean_rank(p, tg, u.split, true) > mean_rank(p, tg, u.split, false)) {
      detail = "dropping known rules worsened a user's mean rank";
      return false;
    }
  }
  detail = "pairwise statistic, sort-based ranks, curve shape all agree";
  return true;
}

// ---- 6. encoder invariances ----

bool check_encoder_invariances(std::string& detail) {
  // Renaming nodes permutes embedding rows and changes nothing else.
  double worst_relabel = 0.0;
  for (uint64_t inst = 0; inst < 100; ++inst) {
    Rng rng(seed_stream(3000, "relabel", inst));
    int t = 1 + static_cast<int>(rng.below(4));
    int r = 1 + static_cast<int>(rng.below(3));
    int v = 2 + static_cast<int>(rng.below(6));
    std::vector<std::string> et, rt;
    for (int i = 0; i < t; ++i) et.push_back(fmt("T%d", i));
    for (int i = 0; i < r; ++i) rt.push_back(fmt("R%d", i));
    Vocab vocab = Vocab::make(et, rt);

    std::vector<int> types;
    for (int i = 0; i < v; ++i)
      types.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(t))));
    uint64_t space = static_cast<uint64_t>(v) * v * r;
    std::set<uint64_t> codes;
    size_t edges = 1 + rng.below(std::min<uint64_t>(space, 2 * v));
    while (codes.size() < edges) codes.insert(rng.below(space));

    std::vector<int> perm(v);
    for (int i = 0; i < v; ++i) perm[i] = i;
    rng.shuffle(perm);

    std::vector<EntitySpec> ents_a, ents_b;
    for (int i = 0; i < v; ++i) {
      ents_a.push_back({fmt("n%02d", i), vocab.entity_types[types[i]]});
      ents_b.push_back({fmt("m%02d", perm[i]), vocab.entity_types[types[i]]});
    }
    std::vector<RuleSpec> rules_a, rules_b;
    for (uint64_t code : codes) {
      Edge e = detail::edge_from_code(code, v, r);
      rules_a.push_back(
          {fmt("n%02d", e.src), vocab.rule_types[e.rule], fmt("n%02d", e.dst)});
      rules_b.push_back({fmt("m%02d", perm[e.src]), vocab.rule_types[e.rule],
                         fmt("m%02d", perm[e.dst])});
    }
    EntityGraph ga = build_graph("u", ents_a, rules_a, vocab);
    EntityGraph gb = build_graph("u", ents_b, rules_b, vocab);
    ModelParams p = random_params(t, 6, r, seed_stream(3000, "relpar", inst));
    Matrix za = encode(p, ga);
    Matrix zb = encode(p, gb);
    for (int i = 0; i < v; ++i)
      for (int j = 0; j < za.cols; ++j)
        worst_relabel = std::max(worst_relabel, std::fabs(za(i, j) - zb(perm[i], j)));
  }
  if (worst_relabel > 1e-12) {
    detail = fmt("renaming nodes moved embeddings by %.2e", worst_relabel);
    return false;
  }

  // A node with no inbound edges has a two-layer closed form.
  double worst_isolated = 0.0;
  for (uint64_t inst = 0; inst < 50; ++inst) {
    Rng rng(seed_stream(3000, "iso", inst));
    int t = 1 + static_cast<int>(rng.below(4));
    int hid = 1 + static_cast<int>(rng.below(8));
    int type = static_cast<int>(rng.below(static_cast<uint64_t>(t)));
    std::vector<std::string> et;
    for (int i = 0; i < t; ++i) et.push_back(fmt("T%d", i));
    Vocab vocab = Vocab::make(et, {"R0"});
    EntityGraph g = build_graph("u", {{"solo", vocab.entity_types[type]}}, {}, vocab);
    ModelParams p = random_params(t, hid, 1, seed_stream(3000, "isopar", inst));
    Matrix z = encode(p, g);
    for (int j = 0; j < hid; ++j) {
      double a = p.theta2_b(0, j);
      for (int k = 0; k < hid; ++k) {
        double pre = p.theta1(type, k) + p.theta1_b(0, k);
        a += (pre > 0.0 ? pre : 0.0) * p.theta2(k, j);
      }
      worst_isolated = std::max(worst_isolated, std::fabs(z(0, j) - a));
    }
  }
  if (worst_isolated > 1e-12) {
    detail = fmt("zero-neighbor closed form off by %.2e", worst_isolated);
    return false;
  }

  // Structurally identical nodes share embeddings exactly.
  for (uint64_t inst = 0; inst < 30; ++inst) {
    Rng rng(seed_stream(3000, "twin", inst));
    Vocab vocab = Vocab::make({"T0", "T1"}, {"R0", "R1"});
    int base = 2 + static_cast<int>(rng.below(3));
    std::vector<EntitySpec> ents;
    for (int i = 0; i < base; ++i)
      ents.push_back({fmt("p%02d", i), vocab.entity_types[rng.below(2)]});
    std::string twin_type = vocab.entity_types[rng.below(2)];
    ents.push_back({"q1", twin_type});
    ents.push_back({"q2", twin_type});
    std::vector<RuleSpec> rules;
    for (int i = 0; i < base; ++i)
      for (int j = 0; j < base; ++j)
        if (i != j && rng.below(2))
          rules.push_back({fmt("p%02d", i), vocab.rule_types[rng.below(2)],
                           fmt("p%02d", j)});
    for (int i = 0; i < base; ++i)
      if (rng.below(2)) {
        std::string rule = vocab.rule_types[rng.below(2)];
        rules.push_back({fmt("p%02d", i), rule, "q1"});
        rules.push_back({fmt("p%02d", i), rule, "q2"});
      }
    EntityGraph g = build_graph("u", ents, rules, vocab);
    ModelParams p = random_params(2, 5, 2, seed_stream(3000, "twinpar", inst));
    Matrix z = encode(p, g);
    int a = g.node_index("q1"), b = g.node_index("q2");
    for (int j = 0; j < z.cols; ++j)
      if (z(a, j) != z(b, j)) {
        detail = fmt("identical nodes got different embeddings on instance %llu",
                     static_cast<unsigned long long>(inst));
        return false;
      }
  }
  detail = fmt("relabel max diff %.2e, closed-form max diff %.2e, twins exact",
               worst_relabel, worst_isolated);
  return true;
}

// ---- 7. byte-level reproducibility through the command line ----

bool check_reproducibility(std::string& detail) {
  testutil::TempDir a, b;
  auto gen_into = [](const testutil::TempDir& dir) {
    return testutil::run_cli({"gen-data", "--users", "15", "--entity-types", "5",
                              "--rule-types", "6", "--seed", "99", "--out-dir",
                              dir.path.string()});
  };
  if (gen_into(a).code != 0 || gen_into(b).code != 0) {
    detail = "dataset generation failed";
    return false;
  }
  if (read_file_text(a.file("dataset.jsonl")) != read_file_text(b.file("dataset.jsonl")) ||
      read_file_text(a.file("vocab.txt")) != read_file_text(b.file("vocab.txt"))) {
    detail = "same seed produced different dataset bytes";
    return false;
  }

  auto train_into = [&](const std::string& out, const std::string& metrics,
                        const char* threads) {
    return testutil::run_cli({"train", "--dataset", a.file("dataset.jsonl"), "--vocab",
                              a.file("vocab.txt"), "--out", out, "--metrics", metrics,
                              "--mode", "fedrule", "--rounds", "3", "--local-steps",
                              "2", "--hidden", "8", "--seed", "5", "--threads",
                              threads});
  };
  if (train_into(a.file("m1.json"), a.file("x1.csv"), "2").code != 0 ||
      train_into(a.file("m2.json"), a.file("x2.csv"), "2").code != 0 ||
      train_into(a.file("m3.json"), a.file("x3.csv"), "1").code != 0) {
    detail = "training run failed";
    return false;
  }
  std::string m1 = read_file_text(a.file("m1.json"));
  if (m1 != read_file_text(a.file("m2.json"))) {
    detail = "parallel runs produced different model bytes";
    return false;
  }
  if (m1 != read_file_text(a.file("m3.json"))) {
    detail = "thread count changed the model bytes";
    return false;
  }
  std::string x1 = read_file_text(a.file("x1.csv"));
  if (x1 != read_file_text(a.file("x2.csv")) || x1 != read_file_text(a.file("x3.csv"))) {
    detail = "metrics bytes differ across runs";
    return false;
  }
  detail = "dataset, model, metrics byte-identical across runs and thread counts";
  return true;
}

// ---- 8. capacity: memorize small data, export the ranking curve ----

bool check_capacity(std::string& detail) {
  GeneratedDataset gen = small_population(20, 2024);
  Dataset ds = gen.dataset;
  prepare_splits(ds, 0.2, 2024);

  TrainConfig cfg;
  cfg.mode = TrainMode::central;
  cfg.rounds = 250;
  cfg.lr_theta = cfg.lr_phi = 0.05;
  cfg.neg_ratio = 2.0;
  cfg.seed = 2024;
  TrainResult res = train(ds, cfg);

  std::vector<double> train_curve = hit_rate_curve(res.model, ds, 40, nullptr, true);
  double train_hit40 = train_curve.back();

  std::vector<double> test_curve = hit_rate_curve(res.model, ds, 40, nullptr, false);
  const char* curve_path = "acceptance_test_hit_curve.csv";
  save_hit_curve(curve_path, test_curve);
  bool monotone = true;
  for (size_t i = 1; i < test_curve.size(); ++i)
    if (test_curve[i] < test_curve[i - 1]) monotone = false;

  detail = fmt("train hit@40 %.3f, test hit@40 %.3f, curve at %s", train_hit40,
               test_curve.back(), curve_path);
  return train_hit40 >= 0.9 && monotone && test_curve.size() == 40;
}

}  // namespace

int main() {
  struct Check {
    const char* name;
    std::function<bool(std::string&)> run;
  };
  std::vector<Check> checks = {
      {"gradient fidelity against finite differences", check_gradients},
      {"trainer equivalences (averaging, single client, single step)",
       check_trainer_identities},
      {"control variate conservation under full participation",
       check_control_conservation},
      {"federated correction vs plain averaging vs centralized",
       check_federated_comparison},
      {"ranking metrics against independent oracles", check_metric_oracles},
      {"encoder invariances (relabeling, isolation, twins)",
       check_encoder_invariances},
      {"byte-level reproducibility across runs and threads", check_reproducibility},
      {"model capacity and exported ranking curve", check_capacity},
  };

  int failures = 0;
  for (size_t i = 0; i < checks.size(); ++i) {
    std::string detail;
    bool ok = false;
    try {
      ok = checks[i].run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("%s  %zu/%zu %s%s%s\n", ok ? "PASS" : "FAIL", i + 1, checks.size(),
                checks[i].name, detail.empty() ? "" : ": ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
