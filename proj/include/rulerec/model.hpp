#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "rulerec/graph.hpp"
#include "rulerec/matrix.hpp"
#include "rulerec/rng.hpp"

namespace rulerec {

// Two-layer mean-aggregation graph encoder plus a two-layer link predictor.
// Row-vector convention throughout: activations are (batch x features) and
// weights multiply from the right.
struct ModelParams {
  int num_entity_types = 0;  // T
  int hidden = 0;            // H
  int num_rule_types = 0;    // R

  Matrix theta1, theta1_b;  // (2T x H), (1 x H)   encoder layer 1
  Matrix theta2, theta2_b;  // (2H x H), (1 x H)   encoder layer 2
  Matrix phi1, phi1_b;      // (2H x R), (1 x R)   predictor hidden layer
  Matrix phi2, phi2_b;      // (R x R),  (1 x R)   predictor output layer
};

// Gradients share the parameter layout tensor for tensor.
using Gradients = ModelParams;

inline constexpr std::array<const char*, 8> kTensorNames = {
    "theta1", "theta1_b", "theta2", "theta2_b",
    "phi1",   "phi1_b",   "phi2",   "phi2_b"};

inline std::array<Matrix*, 8> tensors(ModelParams& p) {
  return {&p.theta1, &p.theta1_b, &p.theta2, &p.theta2_b,
          &p.phi1,   &p.phi1_b,   &p.phi2,   &p.phi2_b};
}

inline std::array<const Matrix*, 8> tensors(const ModelParams& p) {
  return {&p.theta1, &p.theta1_b, &p.theta2, &p.theta2_b,
          &p.phi1,   &p.phi1_b,   &p.phi2,   &p.phi2_b};
}

// Encoder weights are tensor slots [0,4); predictor weights are [4,8).
inline constexpr int kFirstPhiTensor = 4;

inline bool is_phi_tensor(int slot) { return slot >= kFirstPhiTensor; }

inline Gradients zero_like(const ModelParams& p) {
  Gradients g;
  g.num_entity_types = p.num_entity_types;
  g.hidden = p.hidden;
  g.num_rule_types = p.num_rule_types;
  auto src = tensors(p);
  auto dst = tensors(g);
  for (int i = 0; i < 8; ++i) *dst[i] = Matrix(src[i]->rows, src[i]->cols);
  return g;
}

inline bool same_dims(const ModelParams& a, const ModelParams& b) {
  return a.num_entity_types == b.num_entity_types && a.hidden == b.hidden &&
         a.num_rule_types == b.num_rule_types;
}

inline bool params_finite(const ModelParams& p) {
  for (const Matrix* t : tensors(p))
    if (!all_finite(*t)) return false;
  return true;
}

inline bool params_bitwise_equal(const ModelParams& a, const ModelParams& b) {
  if (!same_dims(a, b)) return false;
  auto ta = tensors(a);
  auto tb = tensors(b);
  for (int i = 0; i < 8; ++i)
    if (!bitwise_equal(*ta[i], *tb[i])) return false;
  return true;
}

// Glorot-uniform weights, zero biases, fully determined by the seed.
inline ModelParams init_params(int num_entity_types, int hidden, int num_rule_types,
                               uint64_t seed) {
  if (num_entity_types <= 0 || hidden <= 0 || num_rule_types <= 0)
    throw ConfigError("init_params: dimensions must be positive");
  ModelParams p;
  p.num_entity_types = num_entity_types;
  p.hidden = hidden;
  p.num_rule_types = num_rule_types;
  int t = num_entity_types, h = hidden, r = num_rule_types;
  p.theta1 = Matrix(2 * t, h);
  p.theta1_b = Matrix(1, h);
  p.theta2 = Matrix(2 * h, h);
  p.theta2_b = Matrix(1, h);
  p.phi1 = Matrix(2 * h, r);
  p.phi1_b = Matrix(1, r);
  p.phi2 = Matrix(r, r);
  p.phi2_b = Matrix(1, r);

  Rng rng(seed);
  for (Matrix* w : {&p.theta1, &p.theta2, &p.phi1, &p.phi2}) {
    double limit = std::sqrt(6.0 / (w->rows + w->cols));
    for (double& x : w->data) x = rng.uniform(-limit, limit);
  }
  return p;
}

namespace detail {

// out[v] = mean of h rows over in-neighbors of v; zero when v has none.
inline Matrix neighbor_mean(const Matrix& h, const std::vector<std::vector<int>>& in_nbrs) {
  Matrix out(h.rows, h.cols);
  for (int v = 0; v < h.rows; ++v) {
    const auto& nbrs = in_nbrs[v];
    if (nbrs.empty()) continue;
    double* orow = out.row(v);
    for (int u : nbrs) {
      const double* hrow = h.row(u);
      for (int j = 0; j < h.cols; ++j) orow[j] += hrow[j];
    }
    double deg = static_cast<double>(nbrs.size());
    for (int j = 0; j < h.cols; ++j) orow[j] /= deg;
  }
  return out;
}

// Adjoint of neighbor_mean: scatters d_out[v]/deg(v) back onto each neighbor.
inline void neighbor_mean_backward(Matrix& d_h, const Matrix& d_out,
                                   const std::vector<std::vector<int>>& in_nbrs) {
  for (int v = 0; v < d_out.rows; ++v) {
    const auto& nbrs = in_nbrs[v];
    if (nbrs.empty()) continue;
    double deg = static_cast<double>(nbrs.size());
    const double* orow = d_out.row(v);
    for (int u : nbrs) {
      double* hrow = d_h.row(u);
      for (int j = 0; j < d_out.cols; ++j) hrow[j] += orow[j] / deg;
    }
  }
}

struct EncodeTrace {
  Matrix x1;  // V x 2T   [one-hot | neighbor mean]
  Matrix a1;  // V x H    layer 1 pre-activation
  Matrix h1;  // V x H
  Matrix x2;  // V x 2H   [h1 | neighbor mean]
  Matrix z;   // V x H    final embeddings, no activation
};

inline EncodeTrace encode_trace(const ModelParams& p, const EntityGraph& g) {
  int v = g.num_nodes();
  int t = p.num_entity_types;
  Matrix h0(v, t);
  for (int i = 0; i < v; ++i) {
    int type = g.node_types[i];
    if (type < 0 || type >= t)
      throw DataError("encode: node type " + std::to_string(type) +
                      " outside model range");
    h0(i, type) = 1.0;
  }
  EncodeTrace tr;
  tr.x1 = concat_cols(h0, neighbor_mean(h0, g.in_nbrs));
  tr.a1 = matmul(tr.x1, p.theta1);
  add_row_inplace(tr.a1, p.theta1_b);
  tr.h1 = relu(tr.a1);
  tr.x2 = concat_cols(tr.h1, neighbor_mean(tr.h1, g.in_nbrs));
  tr.z = matmul(tr.x2, p.theta2);
  add_row_inplace(tr.z, p.theta2_b);
  return tr;
}

struct PredictTrace {
  Matrix aq;  // E x R  hidden pre-activation
  Matrix q;   // E x R
  Matrix s;   // E x R  logits
  Matrix p;   // E x R  probabilities (clamped)
};

inline PredictTrace predict_trace(const ModelParams& p, const Matrix& u) {
  PredictTrace tr;
  tr.aq = matmul(u, p.phi1);
  add_row_inplace(tr.aq, p.phi1_b);
  tr.q = relu(tr.aq);
  tr.s = matmul(tr.q, p.phi2);
  add_row_inplace(tr.s, p.phi2_b);
  tr.p = sigmoid(tr.s);
  return tr;
}

// Stacks [z_src | z_dst] rows for the given edges.
inline Matrix edge_inputs(const Matrix& z, const std::vector<Edge>& pos,
                          const std::vector<Edge>& neg, int num_rules) {
  int h = z.cols;
  Matrix u(static_cast<int>(pos.size() + neg.size()), 2 * h);
  size_t row = 0;
  for (const std::vector<Edge>* list : {&pos, &neg}) {
    for (const Edge& e : *list) {
      if (e.src < 0 || e.src >= z.rows || e.dst < 0 || e.dst >= z.rows)
        throw DataError("edge endpoint outside embedding range");
      if (e.rule < 0 || e.rule >= num_rules)
        throw DataError("rule index " + std::to_string(e.rule) + " outside model range");
      double* ur = u.row(static_cast<int>(row++));
      const double* zs = z.row(e.src);
      const double* zd = z.row(e.dst);
      for (int j = 0; j < h; ++j) ur[j] = zs[j];
      for (int j = 0; j < h; ++j) ur[h + j] = zd[j];
    }
  }
  return u;
}

}  // namespace detail

// Node embeddings for one graph: V x H, message passing over the graph's
// own edge set. Isolated nodes aggregate a zero vector.
inline Matrix encode(const ModelParams& p, const EntityGraph& g) {
  return detail::encode_trace(p, g).z;
}

// Probabilities for every rule type on the (src, dst) pair, from
// precomputed embeddings.
inline std::vector<double> predict_edge(const ModelParams& p, const Matrix& z,
                                        int src, int dst) {
  if (src < 0 || src >= z.rows || dst < 0 || dst >= z.rows)
    throw DataError("predict_edge: node index out of range");
  std::vector<Edge> one{Edge{src, dst, 0}};
  Matrix u = detail::edge_inputs(z, one, {}, p.num_rule_types);
  detail::PredictTrace tr = detail::predict_trace(p, u);
  return std::vector<double>(tr.p.data.begin(), tr.p.data.end());
}

// Mean binary cross-entropy over positive and sampled negative edges,
// scored from precomputed embeddings.
inline double loss(const ModelParams& p, const Matrix& z, const std::vector<Edge>& pos,
                   const std::vector<Edge>& neg) {
  size_t total = pos.size() + neg.size();
  if (total == 0) throw DataError("loss: no edges to score");
  Matrix u = detail::edge_inputs(z, pos, neg, p.num_rule_types);
  detail::PredictTrace tr = detail::predict_trace(p, u);
  double acc = 0.0;
  for (size_t e = 0; e < total; ++e) {
    const Edge& edge = e < pos.size() ? pos[e] : neg[e - pos.size()];
    double prob = tr.p(static_cast<int>(e), edge.rule);
    acc += e < pos.size() ? std::log(prob) : std::log(1.0 - prob);
  }
  return -acc / static_cast<double>(total);
}

// Full forward/backward over one graph: encoder and predictor gradients for
// the mean BCE on pos against neg. Returns (gradients, loss).
inline std::pair<Gradients, double> gradients(const ModelParams& p, const EntityGraph& g,
                                              const std::vector<Edge>& pos,
                                              const std::vector<Edge>& neg) {
  size_t total = pos.size() + neg.size();
  if (total == 0) throw DataError("gradients: no edges to score");
  detail::EncodeTrace enc = detail::encode_trace(p, g);
  Matrix u = detail::edge_inputs(enc.z, pos, neg, p.num_rule_types);
  detail::PredictTrace pred = detail::predict_trace(p, u);

  int num_edges = static_cast<int>(total);
  double inv_total = 1.0 / static_cast<double>(total);
  double loss_acc = 0.0;

  // dL/ds has a single nonzero per edge row: (p - y) / total at the edge's rule.
  Matrix d_s(num_edges, p.num_rule_types);
  for (int e = 0; e < num_edges; ++e) {
    const Edge& edge = e < static_cast<int>(pos.size())
                           ? pos[e]
                           : neg[e - pos.size()];
    double y = e < static_cast<int>(pos.size()) ? 1.0 : 0.0;
    double prob = pred.p(e, edge.rule);
    loss_acc += y > 0.5 ? std::log(prob) : std::log(1.0 - prob);
    d_s(e, edge.rule) = (prob - y) * inv_total;
  }

  Gradients grad = zero_like(p);
  grad.phi2 = matmul_at_b(pred.q, d_s);
  grad.phi2_b = colsum(d_s);
  Matrix d_q = matmul_a_bt(d_s, p.phi2);
  relu_mask_inplace(d_q, pred.aq);
  grad.phi1 = matmul_at_b(u, d_q);
  grad.phi1_b = colsum(d_q);
  Matrix d_u = matmul_a_bt(d_q, p.phi1);

  // Scatter edge-input gradients back onto node embeddings.
  int h = p.hidden;
  Matrix d_z(enc.z.rows, h);
  for (int e = 0; e < num_edges; ++e) {
    const Edge& edge = e < static_cast<int>(pos.size())
                           ? pos[e]
                           : neg[e - pos.size()];
    const double* ur = d_u.row(e);
    double* zs = d_z.row(edge.src);
    double* zd = d_z.row(edge.dst);
    for (int j = 0; j < h; ++j) zs[j] += ur[j];
    for (int j = 0; j < h; ++j) zd[j] += ur[h + j];
  }

  grad.theta2 = matmul_at_b(enc.x2, d_z);
  grad.theta2_b = colsum(d_z);
  Matrix d_x2 = matmul_a_bt(d_z, p.theta2);

  // x2 = [h1 | mean(h1)]: direct half plus the aggregation adjoint.
  Matrix d_h1(enc.h1.rows, h);
  Matrix d_n1(enc.h1.rows, h);
  for (int v = 0; v < d_x2.rows; ++v) {
    const double* xr = d_x2.row(v);
    double* hr = d_h1.row(v);
    double* nr = d_n1.row(v);
    for (int j = 0; j < h; ++j) hr[j] = xr[j];
    for (int j = 0; j < h; ++j) nr[j] = xr[h + j];
  }
  detail::neighbor_mean_backward(d_h1, d_n1, g.in_nbrs);

  relu_mask_inplace(d_h1, enc.a1);
  grad.theta1 = matmul_at_b(enc.x1, d_h1);
  grad.theta1_b = colsum(d_h1);

  return {std::move(grad), -loss_acc * inv_total};
}

// Dense V x V x R probability tensor over all ordered node pairs.
struct ScoreTensor {
  int num_nodes = 0;
  int num_rules = 0;
  std::vector<double> probs;  // (src * V + dst) * R + rule

  double at(int src, int dst, int rule) const {
    return probs[(static_cast<size_t>(src) * num_nodes + dst) * num_rules + rule];
  }
};

inline ScoreTensor score_all(const ModelParams& p, const EntityGraph& g) {
  Matrix z = encode(p, g);
  int v = g.num_nodes();
  ScoreTensor out;
  out.num_nodes = v;
  out.num_rules = p.num_rule_types;
  out.probs.resize(static_cast<size_t>(v) * v * p.num_rule_types);
  if (v == 0) return out;

  std::vector<Edge> pairs;
  pairs.reserve(static_cast<size_t>(v) * v);
  for (int i = 0; i < v; ++i)
    for (int j = 0; j < v; ++j) pairs.push_back(Edge{i, j, 0});
  Matrix u = detail::edge_inputs(z, pairs, {}, p.num_rule_types);
  detail::PredictTrace tr = detail::predict_trace(p, u);
  out.probs.assign(tr.p.data.begin(), tr.p.data.end());
  return out;
}

}  // namespace rulerec
