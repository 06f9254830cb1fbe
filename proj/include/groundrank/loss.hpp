#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "groundrank/tape.hpp"
#include "groundrank/tensor.hpp"

namespace groundrank {

enum class LossVariant { max_violation, sum_violation };
enum class BatchAggregation { sum, mean };

struct LossConfig {
  double margin{0.2};
  LossVariant variant{LossVariant::max_violation};
  BatchAggregation aggregation{BatchAggregation::sum};

  void validate() const {
    if (!(margin > 0.0))
      throw std::invalid_argument("loss config: margin must be > 0");
  }
};

// Dense cosine scores between two unit-normalized embedding batches, with the
// row/column identities kept alongside.
template <typename T>
struct SimilarityMatrix {
  Tensor<T> scores;             // n x m
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
};

template <typename T>
SimilarityMatrix<T> similarity_matrix(const Tensor<T>& a, const Tensor<T>& b,
                                      std::vector<std::string> row_ids = {},
                                      std::vector<std::string> col_ids = {}) {
  if (a.cols != b.cols) throw ShapeError("similarity", a.shape(), b.shape());
  SimilarityMatrix<T> s;
  s.scores = Tensor<T>(a.rows, b.rows, T(0));
  gemm_a_bt(a.data.data(), b.data.data(), s.scores.data.data(), a.rows, b.rows,
            a.cols);
  s.row_ids = std::move(row_ids);
  s.col_ids = std::move(col_ids);
  return s;
}

// S = A * B^T on the tape; rows of A and B must be unit-normalized already.
template <typename T>
typename Tape<T>::Ref similarity_on_tape(Tape<T>& tape,
                                         typename Tape<T>::Ref a,
                                         typename Tape<T>::Ref b) {
  if (tape.value(a).cols != tape.value(b).cols)
    throw ShapeError("similarity", tape.value(a).shape(),
                     tape.value(b).shape());
  return tape.matmul(a, tape.transpose(b));
}

// Contrastive ranking loss over a square similarity matrix whose diagonal
// holds the gold pairs. With d = diag(S) and v = margin - d:
//
//   termA_i = max_{j != i} hinge(S[j][i] + v[i])   (contrastive rows)
//   termB_i = max_{j != i} hinge(S[i][j] + v[i])   (contrastive columns)
//   loss    = sum_i termA_i + sum_i termB_i
//
// summed in exactly that order: all termA in row order, then all termB, then
// one final add. The sum-violation variant replaces each max by the sum over
// j != i, accumulated row-major with the diagonal masked to zero. Ties in the
// max resolve to the lowest index.
template <typename T>
typename Tape<T>::Ref ranking_loss_on_tape(Tape<T>& tape,
                                           typename Tape<T>::Ref similarity,
                                           const LossConfig& cfg) {
  using Ref = typename Tape<T>::Ref;
  cfg.validate();
  const Tensor<T>& s = tape.value(similarity);
  if (s.rows != s.cols)
    throw ShapeError("ranking-loss", s.shape(), "square matrix");
  const std::size_t n = s.rows;

  // diag(S) as a 1 x n row vector: ones * (S . I)
  Tensor<T> eye(n, n, T(0));
  for (std::size_t i = 0; i < n; ++i) eye.at(i, i) = T(1);
  Ref diag_row = tape.matmul(tape.constant_fill(1, n, T(1)),
                             tape.mul(similarity, tape.constant(eye)));
  Ref margin_minus_diag =
      tape.add(tape.constant_fill(1, n, static_cast<T>(cfg.margin)),
               tape.scalar_mul(diag_row, T(-1)));

  // Y[i][j] = S[j][i] + v[i];  W[i][j] = S[i][j] + v[i]
  Ref st = tape.transpose(similarity);
  Ref y = tape.transpose(tape.add(similarity, margin_minus_diag));
  Ref w = tape.transpose(tape.add(st, margin_minus_diag));

  Tensor<T> offdiag(n, n, T(1));
  for (std::size_t i = 0; i < n; ++i) offdiag.at(i, i) = T(0);
  Ref mask = tape.constant(offdiag);
  Ref hinges_a = tape.mul(tape.relu_hinge(y), mask);
  Ref hinges_b = tape.mul(tape.relu_hinge(w), mask);

  Ref loss;
  if (cfg.variant == LossVariant::max_violation) {
    loss = tape.add(tape.sum(tape.row_max(hinges_a)),
                    tape.sum(tape.row_max(hinges_b)));
  } else {
    loss = tape.add(tape.sum(hinges_a), tape.sum(hinges_b));
  }
  if (cfg.aggregation == BatchAggregation::mean)
    loss = tape.scalar_mul(loss, T(1) / static_cast<T>(n));
  return loss;
}

// Caption-caption objective: identical formula, inputs are two aligned
// sentence embedding batches (row i of each side describes the same image).
template <typename T>
typename Tape<T>::Ref c2c_loss_on_tape(Tape<T>& tape,
                                       typename Tape<T>::Ref captions_l1,
                                       typename Tape<T>::Ref captions_l2,
                                       const LossConfig& cfg) {
  const Tensor<T>& a = tape.value(captions_l1);
  const Tensor<T>& b = tape.value(captions_l2);
  if (a.rows != b.rows)
    throw ShapeError("c2c-loss", a.shape(), b.shape());
  return ranking_loss_on_tape(tape, similarity_on_tape(tape, captions_l1, captions_l2),
                              cfg);
}

// Plain-value loss on a precomputed similarity matrix (no gradients).
template <typename T>
T ranking_loss_value(const Tensor<T>& similarity, const LossConfig& cfg) {
  Tape<T> tape(/*recording=*/false);
  Tensor<T> s = similarity;
  s.requires_grad = false;
  auto ref = tape.leaf(std::move(s));
  return tape.value(ranking_loss_on_tape(tape, ref, cfg)).data[0];
}

}  // namespace groundrank
