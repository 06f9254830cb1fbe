#pragma once

// Independent oracles used by the test suites. Everything here is written as
// plainly as possible and stays off the implementation paths it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "groundrank/loss.hpp"
#include "groundrank/tape.hpp"
#include "groundrank/tensor.hpp"

namespace oracles {

using groundrank::LossConfig;
using groundrank::LossVariant;
using groundrank::Tape;
using groundrank::Tensor;

// ---- finite differences ----------------------------------------------------

// Builds the loss from scratch for a given assignment of the leaf tensors.
// Used both for the analytic pass (recording tape) and for each perturbed
// numeric evaluation (non-recording tape).
template <typename T>
using LossBuilder = std::function<typename Tape<T>::Ref(
    Tape<T>&, const std::vector<typename Tape<T>::Ref>&)>;

struct GradCheckResult {
  double max_rel_error{0.0};
  std::size_t checked{0};
};

// Central finite differences against the tape's analytic gradients.
// Relative error uses max(|analytic|, |numeric|, 1) as the denominator.
inline GradCheckResult check_gradients(std::vector<Tensor<double>> leaves,
                                       const LossBuilder<double>& build,
                                       double step = 1e-5) {
  Tape<double> tape;
  std::vector<Tape<double>::Ref> refs;
  for (const auto& leaf : leaves) refs.push_back(tape.parameter(leaf));
  auto loss = build(tape, refs);
  tape.backward(loss);
  std::vector<Tensor<double>> analytic;
  for (auto r : refs) analytic.push_back(tape.grad_or_zero(r));

  auto eval = [&](const std::vector<Tensor<double>>& values) {
    Tape<double> t(/*recording=*/false);
    std::vector<Tape<double>::Ref> rs;
    for (const auto& v : values) rs.push_back(t.constant(v));
    return t.value(build(t, rs)).data[0];
  };

  GradCheckResult result;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    for (std::size_t i = 0; i < leaves[l].size(); ++i) {
      std::vector<Tensor<double>> plus = leaves;
      std::vector<Tensor<double>> minus = leaves;
      plus[l].data[i] += step;
      minus[l].data[i] -= step;
      const double numeric = (eval(plus) - eval(minus)) / (2.0 * step);
      const double a = analytic[l].data[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1.0});
      result.max_rel_error =
          std::max(result.max_rel_error, std::fabs(a - numeric) / denom);
      ++result.checked;
    }
  }
  return result;
}

// ---- ranking-loss double-loop transcription ---------------------------------

// Literal transcription of the max-violation objective over a square
// similarity matrix: for each gold pair i, take the hardest contrastive term
// in each direction. Summation order matches the implementation contract:
// all row-direction terms first, then all column-direction terms, then one
// final add.
template <typename T>
T max_violation_oracle(const Tensor<T>& s, T margin) {
  const std::size_t n = s.rows;
  T sum_a = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    T best = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const T hinge = std::max(T(0), margin - s.at(i, i) + s.at(j, i));
      if (hinge > best) best = hinge;
    }
    sum_a += best;
  }
  T sum_b = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    T best = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const T hinge = std::max(T(0), margin - s.at(i, i) + s.at(i, j));
      if (hinge > best) best = hinge;
    }
    sum_b += best;
  }
  return sum_a + sum_b;
}

template <typename T>
T sum_violation_oracle(const Tensor<T>& s, T margin) {
  const std::size_t n = s.rows;
  T sum_a = T(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sum_a += std::max(T(0), margin - s.at(i, i) + s.at(j, i));
    }
  T sum_b = T(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sum_b += std::max(T(0), margin - s.at(i, i) + s.at(i, j));
    }
  return sum_a + sum_b;
}

// The tape accumulates the sum-violation matrix row-major with a zeroed
// diagonal; both traversals agree exactly because adding the masked zeros is
// exact. The row-direction matrix is indexed [i][j] = margin - s_ii + s_ji,
// which enumerates (i, j) pairs in the same order as the loops above.

// ---- plain matmul -----------------------------------------------------------

template <typename T>
Tensor<T> naive_matmul(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> c(a.rows, b.cols, T(0));
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      T acc = T(0);
      for (std::size_t k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc;
    }
  return c;
}

// ---- retrieval ranks by full sort -------------------------------------------

// Rank of `target` among the scores of one query row under the stable tie
// policy (ties broken by ascending candidate index).
template <typename T>
std::size_t sorted_rank(const std::vector<T>& scores, std::size_t target) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    if (order[pos] == target) return pos + 1;
  return scores.size() + 1;
}

}  // namespace oracles
