#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rulerec/eval.hpp"
#include "rulerec/graph.hpp"
#include "rulerec/model.hpp"
#include "rulerec/optim.hpp"
#include "rulerec/rng.hpp"

namespace rulerec {

enum class TrainMode { central, fedavg, fedrule };
enum class Optimizer { adam, sgd };

// Loss above this (or any non-finite parameter) aborts training.
inline constexpr double kDivergenceLossLimit = 1e3;

struct TrainConfig {
  TrainMode mode = TrainMode::central;
  int rounds = 100;
  int local_steps = 3;        // tau, local iterations per federated round
  double lr_theta = 0.1;      // encoder learning rate
  double lr_phi = 0.1;        // predictor learning rate
  double lambda_theta = 1.0;  // control correction strength, encoder half
  double lambda_phi = 1.0;    // control correction strength, predictor half
  std::optional<Optimizer> optimizer;  // unset: adam centrally, sgd federated
  double neg_ratio = 1.0;     // negatives per positive each round
  uint64_t seed = 0;
  double participation = 1.0;  // fraction of clients active per round
  int hidden = 16;
  int threads = 1;
  bool timing = false;  // fill elapsed_ms (off by default: logs stay byte-stable)

  Optimizer resolved_optimizer() const {
    if (optimizer) return *optimizer;
    return mode == TrainMode::central ? Optimizer::adam : Optimizer::sgd;
  }

  void validate() const {
    if (rounds < 0) throw ConfigError("rounds must be >= 0");
    if (local_steps < 1) throw ConfigError("local-steps must be >= 1");
    if (!(lr_theta > 0.0) || !(lr_phi > 0.0))
      throw ConfigError("learning rates must be positive");
    if (lambda_theta < 0.0 || lambda_phi < 0.0)
      throw ConfigError("lambda must be >= 0");
    if (neg_ratio < 0.0) throw ConfigError("neg-ratio must be >= 0");
    if (!(participation > 0.0) || participation > 1.0)
      throw ConfigError("participation must be in (0, 1]");
    if (hidden < 1) throw ConfigError("hidden must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

struct RoundLog {
  int round = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_auc = 0.0;
  double test_mean_rank = 0.0;
  double test_mean_rank_rt = 0.0;
  double elapsed_ms = 0.0;
};

struct TrainResult {
  ModelParams model;
  std::vector<RoundLog> log;
  // fedrule only: max-norm of the clientwise sum of control variates after
  // each round. Stays at rounding-noise level under full participation.
  std::vector<double> control_sum_max;
};

// Adam moments for every tensor of a ModelParams.
struct AdamSet {
  std::array<AdamState, 8> states;

  static AdamSet for_params(const ModelParams& p) {
    AdamSet s;
    auto ts = tensors(p);
    for (int i = 0; i < 8; ++i) s.states[i] = AdamState::for_param(*ts[i]);
    return s;
  }
};

// Per-client persistent state: the control variate (correction direction)
// and, when the local optimizer is Adam, its moments.
struct ClientState {
  Gradients control;
  std::optional<AdamSet> adam;
};

namespace detail {

// Runs f(0..n-1), each index writing only its own slot, so results do not
// depend on the thread count or interleaving.
template <class F>
inline void parallel_for(int n, int threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) return;
      f(i);
    }
  };
  int nthreads = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

inline double half_lr(const TrainConfig& cfg, int slot) {
  return is_phi_tensor(slot) ? cfg.lr_phi : cfg.lr_theta;
}

inline double half_lambda(const TrainConfig& cfg, int slot) {
  return is_phi_tensor(slot) ? cfg.lambda_phi : cfg.lambda_theta;
}

inline size_t negatives_for(double ratio, size_t num_pos) {
  if (ratio <= 0.0) return 0;
  auto n = static_cast<size_t>(std::llround(ratio * static_cast<double>(num_pos)));
  return n == 0 ? 1 : n;
}

// Shared per-trainer context: users that actually have training edges, with
// their train-edge message-passing graphs prebuilt.
struct TrainerData {
  std::vector<int> active;               // indices into ds.users
  std::vector<EntityGraph> train_graph;  // parallel to active
};

inline TrainerData prepare(const Dataset& ds) {
  TrainerData td;
  for (size_t i = 0; i < ds.users.size(); ++i) {
    if (ds.users[i].train_edges().empty()) continue;
    td.active.push_back(static_cast<int>(i));
    td.train_graph.push_back(
        with_edges(ds.users[i].graph, ds.users[i].train_edges()));
  }
  if (td.active.empty()) throw DataError("train: no users with training edges");
  return td;
}

inline void check_divergence(const ModelParams& p, double train_loss, int round) {
  if (!std::isfinite(train_loss) || train_loss > kDivergenceLossLimit)
    throw DivergenceError("training diverged at round " + std::to_string(round) +
                          ": loss " + std::to_string(train_loss));
  if (!params_finite(p))
    throw DivergenceError("training diverged at round " + std::to_string(round) +
                          ": non-finite parameters");
}

inline RoundLog make_round_log(int round, double train_loss, const ModelParams& p,
                               const Dataset& ds, uint64_t eval_seed) {
  EvalOptions opts;
  opts.eval_seed = eval_seed;
  MetricsReport rep = evaluate(p, ds, opts);
  RoundLog log;
  log.round = round;
  log.train_loss = train_loss;
  log.test_loss = rep.test_loss;
  log.test_auc = rep.test_auc;
  log.test_mean_rank = rep.test_mean_rank;
  log.test_mean_rank_rt = rep.test_mean_rank_rt;
  return log;
}

}  // namespace detail

// One optimizer step per round on the gradient summed over all users.
inline TrainResult central_train(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  detail::TrainerData td = detail::prepare(ds);
  int num_active = static_cast<int>(td.active.size());

  TrainResult out;
  out.model = init_params(ds.vocab.num_entity_types(), cfg.hidden,
                          ds.vocab.num_rule_types(), seed_stream(cfg.seed, "init"));
  uint64_t eval_seed = seed_stream(cfg.seed, "eval");
  Optimizer opt = cfg.resolved_optimizer();
  AdamSet adam = AdamSet::for_params(out.model);

  std::vector<Gradients> slot_grad(num_active);
  std::vector<double> slot_loss(num_active);

  for (int round = 1; round <= cfg.rounds; ++round) {
    auto started = std::chrono::steady_clock::now();
    detail::parallel_for(num_active, cfg.threads, [&](int i) {
      int ui = td.active[i];
      const UserData& u = ds.users[ui];
      NegativeSample negs = sample_negatives(
          u.graph, out.model.num_rule_types,
          detail::negatives_for(cfg.neg_ratio, u.train_edges().size()),
          seed_stream(cfg.seed, "neg", static_cast<uint64_t>(round),
                      static_cast<uint64_t>(ui)));
      auto [g, l] = gradients(out.model, td.train_graph[i], u.train_edges(), negs.edges);
      slot_grad[i] = std::move(g);
      slot_loss[i] = l;
    });

    Gradients grad_sum = zero_like(out.model);
    double loss_acc = 0.0;
    for (int i = 0; i < num_active; ++i) {
      auto dst = tensors(grad_sum);
      auto src = tensors(slot_grad[i]);
      for (int t = 0; t < 8; ++t) axpy_inplace(*dst[t], 1.0, *src[t]);
      loss_acc += slot_loss[i];
    }
    double train_loss = loss_acc / num_active;

    auto ps = tensors(out.model);
    auto gs = tensors(grad_sum);
    for (int t = 0; t < 8; ++t) {
      double lr = detail::half_lr(cfg, t);
      if (opt == Optimizer::adam)
        *ps[t] = adam_step(*ps[t], *gs[t], adam.states[t], lr);
      else
        *ps[t] = sgd_step(*ps[t], *gs[t], lr);
    }

    detail::check_divergence(out.model, train_loss, round);
    RoundLog log = detail::make_round_log(round, train_loss, out.model, ds, eval_seed);
    if (cfg.timing)
      log.elapsed_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - started)
                           .count();
    out.log.push_back(log);
  }
  return out;
}

namespace detail {

struct LocalOutcome {
  Gradients delta;      // accumulated update the client applied, start - end
  double first_loss = 0.0;  // loss at the round-start parameters
};

// Tau local steps from the global model. The correction g - lambda * control
// is applied in fedrule mode only. Delta accumulates the applied updates, so
// for sgd with tau=1 it is exactly lr * gradient.
inline LocalOutcome local_update(const ModelParams& global, const UserData& user,
                                 const EntityGraph& train_graph, int user_index,
                                 int round, ClientState& state, TrainMode mode,
                                 Optimizer opt, const TrainConfig& cfg) {
  NegativeSample negs = sample_negatives(
      user.graph, global.num_rule_types,
      negatives_for(cfg.neg_ratio, user.train_edges().size()),
      seed_stream(cfg.seed, "neg", static_cast<uint64_t>(round),
                  static_cast<uint64_t>(user_index)));

  ModelParams local = global;
  LocalOutcome out;
  out.delta = zero_like(global);

  for (int step = 0; step < cfg.local_steps; ++step) {
    auto [grad, l] = gradients(local, train_graph, user.train_edges(), negs.edges);
    if (step == 0) out.first_loss = l;

    auto gs = tensors(grad);
    if (mode == TrainMode::fedrule) {
      auto cs = tensors(state.control);
      for (int t = 0; t < 8; ++t) {
        double lambda = half_lambda(cfg, t);
        if (lambda != 0.0) axpy_inplace(*gs[t], -lambda, *cs[t]);
      }
    }

    auto ls = tensors(local);
    auto ds_ = tensors(out.delta);
    if (opt == Optimizer::sgd) {
      for (int t = 0; t < 8; ++t) {
        Matrix update = *gs[t];
        scale_inplace(update, half_lr(cfg, t));
        axpy_inplace(*ls[t], -1.0, update);
        axpy_inplace(*ds_[t], 1.0, update);
      }
    } else {
      for (int t = 0; t < 8; ++t) {
        Matrix before = *ls[t];
        *ls[t] = adam_step(*ls[t], *gs[t], state.adam->states[t], half_lr(cfg, t));
        axpy_inplace(before, -1.0, *ls[t]);  // before - after
        axpy_inplace(*ds_[t], 1.0, before);
      }
    }
  }
  return out;
}

}  // namespace detail

// Mean of client deltas, reduced in the given (ascending client) order.
inline Gradients aggregate(const std::vector<Gradients>& deltas) {
  if (deltas.empty()) throw DataError("aggregate: no client deltas");
  Gradients mean = zero_like(deltas.front());
  for (const Gradients& d : deltas) {
    auto dst = tensors(mean);
    auto src = tensors(d);
    for (int t = 0; t < 8; ++t) axpy_inplace(*dst[t], 1.0, *src[t]);
  }
  auto dst = tensors(mean);
  double inv = 1.0 / static_cast<double>(deltas.size());
  for (int t = 0; t < 8; ++t) scale_inplace(*dst[t], inv);
  return mean;
}

// Control update after a round: control += (own_delta - mean_delta) / (lr * tau),
// each parameter half scaled by its own learning rate.
inline void update_controls(ClientState& state, const Gradients& own_delta,
                            const Gradients& mean_delta, const TrainConfig& cfg) {
  auto cs = tensors(state.control);
  auto os = tensors(own_delta);
  auto ms = tensors(mean_delta);
  for (int t = 0; t < 8; ++t) {
    double coef = 1.0 / (detail::half_lr(cfg, t) * cfg.local_steps);
    for (size_t i = 0; i < cs[t]->data.size(); ++i)
      cs[t]->data[i] += coef * (os[t]->data[i] - ms[t]->data[i]);
  }
}

// Federated loop: clients run tau corrected local steps, the server averages
// their deltas and applies the mean. fedavg is the same loop with the
// correction off and no control state.
inline TrainResult fed_train(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.mode == TrainMode::central)
    throw ConfigError("fed_train: mode must be fedavg or fedrule");
  detail::TrainerData td = detail::prepare(ds);
  int num_clients = static_cast<int>(td.active.size());

  TrainResult out;
  out.model = init_params(ds.vocab.num_entity_types(), cfg.hidden,
                          ds.vocab.num_rule_types(), seed_stream(cfg.seed, "init"));
  uint64_t eval_seed = seed_stream(cfg.seed, "eval");
  Optimizer opt = cfg.resolved_optimizer();

  std::vector<ClientState> clients(num_clients);
  for (ClientState& c : clients) {
    c.control = zero_like(out.model);
    if (opt == Optimizer::adam) c.adam = AdamSet::for_params(out.model);
  }

  int per_round =
      std::clamp(static_cast<int>(std::llround(cfg.participation * num_clients)), 1,
                 num_clients);

  for (int round = 1; round <= cfg.rounds; ++round) {
    auto started = std::chrono::steady_clock::now();

    std::vector<int> chosen(num_clients);
    for (int i = 0; i < num_clients; ++i) chosen[i] = i;
    if (per_round < num_clients) {
      Rng rng(seed_stream(cfg.seed, "part", static_cast<uint64_t>(round)));
      for (int i = 0; i < per_round; ++i) {
        int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(num_clients - i)));
        std::swap(chosen[i], chosen[j]);
      }
      chosen.resize(per_round);
      std::sort(chosen.begin(), chosen.end());
    }

    std::vector<Gradients> deltas(chosen.size());
    std::vector<double> losses(chosen.size());
    detail::parallel_for(static_cast<int>(chosen.size()), cfg.threads, [&](int i) {
      int c = chosen[i];
      detail::LocalOutcome lo = detail::local_update(
          out.model, ds.users[td.active[c]], td.train_graph[c], td.active[c], round,
          clients[c], cfg.mode, opt, cfg);
      deltas[i] = std::move(lo.delta);
      losses[i] = lo.first_loss;
    });

    Gradients mean_delta = aggregate(deltas);
    if (cfg.mode == TrainMode::fedrule) {
      for (size_t i = 0; i < chosen.size(); ++i)
        update_controls(clients[chosen[i]], deltas[i], mean_delta, cfg);
      Gradients control_sum = zero_like(out.model);
      for (const ClientState& c : clients) {
        auto dst = tensors(control_sum);
        auto src = tensors(c.control);
        for (int t = 0; t < 8; ++t) axpy_inplace(*dst[t], 1.0, *src[t]);
      }
      double norm = 0.0;
      for (const Matrix* t : tensors(control_sum))
        norm = std::max(norm, max_abs(*t));
      out.control_sum_max.push_back(norm);
    }

    auto ps = tensors(out.model);
    auto ms = tensors(mean_delta);
    for (int t = 0; t < 8; ++t) axpy_inplace(*ps[t], -1.0, *ms[t]);

    double loss_acc = 0.0;
    for (double l : losses) loss_acc += l;
    double train_loss = loss_acc / static_cast<double>(losses.size());

    detail::check_divergence(out.model, train_loss, round);
    RoundLog log = detail::make_round_log(round, train_loss, out.model, ds, eval_seed);
    if (cfg.timing)
      log.elapsed_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - started)
                           .count();
    out.log.push_back(log);
  }
  return out;
}

// Dispatch on cfg.mode.
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  return cfg.mode == TrainMode::central ? central_train(ds, cfg) : fed_train(ds, cfg);
}

}  // namespace rulerec
