#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "groundrank/tensor.hpp"

namespace groundrank {

// Global L2 norm over the concatenation of all gradient tensors, accumulated
// in double regardless of T.
template <typename T>
double global_grad_norm(const std::vector<Tensor<T>>& grads) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (const T& v : g.data) sq += double(v) * double(v);
  return std::sqrt(sq);
}

// If the global norm exceeds max_norm, scale every gradient by
// max_norm / norm. Returns the factor applied (1 when untouched).
template <typename T>
double clip_gradients(std::vector<Tensor<T>>& grads, double max_norm) {
  const double norm = global_grad_norm(grads);
  if (norm <= max_norm || norm == 0.0) return 1.0;
  const double factor = max_norm / norm;
  for (auto& g : grads)
    for (T& v : g.data) v = static_cast<T>(double(v) * factor);
  return factor;
}

// Adam with the default parameters the paper cites.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::size_t step{0};
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};

  template <typename Params>
  static AdamState zeros_like(const Params& params) {
    AdamState s;
    for (const auto* p : params) {
      s.m.emplace_back(p->rows, p->cols, T(0));
      s.v.emplace_back(p->rows, p->cols, T(0));
    }
    return s;
  }
};

// Standard bias-corrected update. Rejects non-finite gradients outright.
template <typename T>
void adam_step(std::vector<Tensor<T>*>& params,
               const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!grads[i].all_finite())
      throw NumericError("adam_step: non-finite gradient in tensor " +
                         std::to_string(i) + " at step " +
                         std::to_string(state.step + 1));
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    const Tensor<T>& g = grads[i];
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    if (!p.same_shape(g) || !p.same_shape(m))
      throw ShapeError("adam_step", p.shape(), g.shape());
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = double(g.data[j]);
      const double mj = state.beta1 * double(m.data[j]) + (1.0 - state.beta1) * gj;
      const double vj = state.beta2 * double(v.data[j]) + (1.0 - state.beta2) * gj * gj;
      m.data[j] = static_cast<T>(mj);
      v.data[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      p.data[j] = static_cast<T>(double(p.data[j]) -
                                 lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

}  // namespace groundrank
