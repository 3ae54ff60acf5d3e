#pragma once

#include <cmath>

#include "rulerec/matrix.hpp"

namespace rulerec {

// Per-tensor Adam state. Moments are shaped like the tracked parameter and
// start at zero; step counts applied updates for bias correction.
struct AdamState {
  Matrix m;
  Matrix v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_param(const Matrix& p) {
    AdamState s;
    s.m = Matrix(p.rows, p.cols);
    s.v = Matrix(p.rows, p.cols);
    return s;
  }
};

// One bias-corrected Adam update. Mutates state, returns the stepped params.
inline Matrix adam_step(const Matrix& params, const Matrix& grad, AdamState& state,
                        double lr) {
  require_same_shape(params, grad, "adam_step");
  require_same_shape(params, state.m, "adam_step(state)");
  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  Matrix out = params;
  for (size_t i = 0; i < out.data.size(); ++i) {
    double g = grad.data[i];
    state.m.data[i] = state.beta1 * state.m.data[i] + (1.0 - state.beta1) * g;
    state.v.data[i] = state.beta2 * state.v.data[i] + (1.0 - state.beta2) * g * g;
    double mhat = state.m.data[i] / bc1;
    double vhat = state.v.data[i] / bc2;
    out.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
  return out;
}

// Plain gradient step: params - lr * grad.
inline Matrix sgd_step(const Matrix& params, const Matrix& grad, double lr) {
  require_same_shape(params, grad, "sgd_step");
  Matrix out = params;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= lr * grad.data[i];
  return out;
}

}  // namespace rulerec
