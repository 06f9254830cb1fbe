#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "groundrank/tensor.hpp"

namespace groundrank {

// Reverse-mode tape over dense matrices. One tape per training step; nodes
// are appended in execution order, which is already a topological order, so
// the backward pass is a single reverse sweep that visits each node once.
//
// Instantiate with T=float for training and T=double for gradient checks
// (single-precision finite differences are too noisy for tight tolerances).
template <typename T>
class Tape {
 public:
  using Ref = std::uint32_t;

  explicit Tape(bool recording = true) : recording_(recording) {}

  // ---- leaves -----------------------------------------------------------

  Ref leaf(Tensor<T> t) { return push_value(std::move(t)); }

  Ref parameter(const Tensor<T>& t) {
    Tensor<T> copy = t;
    copy.requires_grad = true;
    return push_value(std::move(copy));
  }

  Ref constant(const Tensor<T>& t) {
    Tensor<T> copy = t;
    copy.requires_grad = false;
    return push_value(std::move(copy));
  }

  Ref constant_fill(std::size_t rows, std::size_t cols, T value) {
    Tensor<T> t(rows, cols, value);
    return push_value(std::move(t));
  }

  // ---- primitives ---------------------------------------------------------

  Ref matmul(Ref a, Ref b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (ta.cols != tb.rows) throw ShapeError("matmul", ta.shape(), tb.shape());
    Tensor<T> out(ta.rows, tb.cols, T(0));
    gemm_accumulate(ta.data.data(), tb.data.data(), out.data.data(), ta.rows,
                    ta.cols, tb.cols);
    return record(OpKind::MatMul, a, b, std::move(out));
  }

  // Same-shape add, or broadcast of a 1xN row vector over an MxN matrix.
  Ref add(Ref a, Ref b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (ta.same_shape(tb)) {
      Tensor<T> out(ta.rows, ta.cols);
      for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = ta.data[i] + tb.data[i];
      return record(OpKind::Add, a, b, std::move(out));
    }
    if (tb.rows == 1 && tb.cols == ta.cols) {
      Tensor<T> out(ta.rows, ta.cols);
      for (std::size_t r = 0; r < ta.rows; ++r)
        for (std::size_t c = 0; c < ta.cols; ++c)
          out.at(r, c) = ta.at(r, c) + tb.data[c];
      return record(OpKind::AddRowVec, a, b, std::move(out));
    }
    throw ShapeError("add", ta.shape(), tb.shape());
  }

  Ref mul(Ref a, Ref b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (!ta.same_shape(tb)) throw ShapeError("mul", ta.shape(), tb.shape());
    Tensor<T> out(ta.rows, ta.cols);
    for (std::size_t i = 0; i < out.size(); ++i)
      out.data[i] = ta.data[i] * tb.data[i];
    return record(OpKind::Mul, a, b, std::move(out));
  }

  Ref sigmoid(Ref x) {
    const Tensor<T>& tx = value(x);
    Tensor<T> out(tx.rows, tx.cols);
    for (std::size_t i = 0; i < out.size(); ++i)
      out.data[i] = T(1) / (T(1) + std::exp(-tx.data[i]));
    return record(OpKind::Sigmoid, x, kNoInput, std::move(out));
  }

  Ref tanh(Ref x) {
    const Tensor<T>& tx = value(x);
    Tensor<T> out(tx.rows, tx.cols);
    for (std::size_t i = 0; i < out.size(); ++i)
      out.data[i] = std::tanh(tx.data[i]);
    return record(OpKind::Tanh, x, kNoInput, std::move(out));
  }

  Ref concat_rows(Ref a, Ref b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (ta.cols != tb.cols)
      throw ShapeError("concat-rows", ta.shape(), tb.shape());
    Tensor<T> out(ta.rows + tb.rows, ta.cols);
    std::copy(ta.data.begin(), ta.data.end(), out.data.begin());
    std::copy(tb.data.begin(), tb.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(ta.size()));
    return record(OpKind::ConcatRows, a, b, std::move(out));
  }

  Ref embedding_lookup(Ref table, std::vector<std::uint32_t> ids) {
    const Tensor<T>& tt = value(table);
    Tensor<T> out(ids.size(), tt.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] >= tt.rows)
        throw std::out_of_range("embedding-lookup: id " +
                                std::to_string(ids[i]) + " >= table rows " +
                                std::to_string(tt.rows));
      std::copy(tt.data.begin() + static_cast<std::ptrdiff_t>(ids[i] * tt.cols),
                tt.data.begin() +
                    static_cast<std::ptrdiff_t>((ids[i] + 1) * tt.cols),
                out.data.begin() + static_cast<std::ptrdiff_t>(i * tt.cols));
    }
    return record(OpKind::EmbeddingLookup, table, kNoInput, std::move(out),
                  std::move(ids));
  }

  // Rows with a subnormal-or-zero norm come out as all zeros and receive no
  // gradient; callers that care inspect the input value themselves.
  Ref l2_normalize_rows(Ref x) {
    const Tensor<T>& tx = value(x);
    Tensor<T> out(tx.rows, tx.cols);
    for (std::size_t r = 0; r < tx.rows; ++r) {
      T sq = T(0);
      for (std::size_t c = 0; c < tx.cols; ++c) sq += tx.at(r, c) * tx.at(r, c);
      const T norm = std::sqrt(sq);
      if (norm < std::numeric_limits<T>::min()) continue;  // leave zeros
      for (std::size_t c = 0; c < tx.cols; ++c) out.at(r, c) = tx.at(r, c) / norm;
    }
    return record(OpKind::L2NormalizeRows, x, kNoInput, std::move(out));
  }

  Ref relu_hinge(Ref x) {
    const Tensor<T>& tx = value(x);
    Tensor<T> out(tx.rows, tx.cols);
    for (std::size_t i = 0; i < out.size(); ++i)
      out.data[i] = tx.data[i] > T(0) ? tx.data[i] : T(0);
    return record(OpKind::ReluHinge, x, kNoInput, std::move(out));
  }

  // Per-row maximum; gradient flows only to the argmax entry, first index on
  // ties, so backward is deterministic.
  Ref row_max(Ref x) {
    const Tensor<T>& tx = value(x);
    if (tx.cols == 0) throw ShapeError("row-max", tx.shape(), "cols >= 1");
    Tensor<T> out(tx.rows, 1);
    std::vector<std::uint32_t> argmax(tx.rows, 0);
    for (std::size_t r = 0; r < tx.rows; ++r) {
      T best = tx.at(r, 0);
      std::uint32_t at = 0;
      for (std::size_t c = 1; c < tx.cols; ++c) {
        if (tx.at(r, c) > best) {
          best = tx.at(r, c);
          at = static_cast<std::uint32_t>(c);
        }
      }
      out.at(r, 0) = best;
      argmax[r] = at;
    }
    return record(OpKind::RowMax, x, kNoInput, std::move(out),
                  std::move(argmax));
  }

  // Plain left-to-right accumulation in row-major order. Oracles that need
  // bit-identical results replicate exactly this order.
  Ref sum(Ref x) {
    const Tensor<T>& tx = value(x);
    T acc = T(0);
    for (const T& v : tx.data) acc += v;
    Tensor<T> out(1, 1, acc);
    return record(OpKind::Sum, x, kNoInput, std::move(out));
  }

  Ref mean(Ref x) {
    const Tensor<T>& tx = value(x);
    if (tx.empty()) throw ShapeError("mean", tx.shape(), "nonempty");
    T acc = T(0);
    for (const T& v : tx.data) acc += v;
    Tensor<T> out(1, 1, acc / static_cast<T>(tx.size()));
    return record(OpKind::Mean, x, kNoInput, std::move(out));
  }

  Ref scalar_mul(Ref x, T c) {
    const Tensor<T>& tx = value(x);
    Tensor<T> out(tx.rows, tx.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = c * tx.data[i];
    return record(OpKind::ScalarMul, x, kNoInput, std::move(out), {}, c);
  }

  Ref transpose(Ref x) {
    const Tensor<T>& tx = value(x);
    Tensor<T> out(tx.cols, tx.rows);
    for (std::size_t r = 0; r < tx.rows; ++r)
      for (std::size_t c = 0; c < tx.cols; ++c) out.at(c, r) = tx.at(r, c);
    return record(OpKind::Transpose, x, kNoInput, std::move(out));
  }

  // ---- composites ---------------------------------------------------------

  Ref sub(Ref a, Ref b) { return add(a, scalar_mul(b, T(-1))); }

  // ---- backward ---------------------------------------------------------

  void backward(Ref loss) {
    const Tensor<T>& tl = value(loss);
    if (tl.rows != 1 || tl.cols != 1)
      throw ShapeError("backward", tl.shape(), "1x1 scalar");
    if (nodes_.empty())
      throw std::logic_error("backward: tape recorded no operations");
    grads_.clear();
    grads_.resize(values_.size());
    ensure_grad(loss).data[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
      backward_node(*it);
  }

  const Tensor<T>& value(Ref r) const { return values_[r]; }

  bool has_grad(Ref r) const {
    return r < grads_.size() && !grads_[r].empty();
  }

  const Tensor<T>& grad(Ref r) const {
    if (!has_grad(r))
      throw std::logic_error("grad: no gradient recorded for this tensor");
    return grads_[r];
  }

  Tensor<T> grad_or_zero(Ref r) const {
    if (has_grad(r)) return grads_[r];
    return Tensor<T>(value(r).rows, value(r).cols, T(0));
  }

  std::size_t node_count() const { return nodes_.size(); }
  bool recording() const { return recording_; }

 private:
  enum class OpKind {
    MatMul,
    Add,
    AddRowVec,
    Mul,
    Sigmoid,
    Tanh,
    ConcatRows,
    EmbeddingLookup,
    L2NormalizeRows,
    ReluHinge,
    RowMax,
    Sum,
    Mean,
    ScalarMul,
    Transpose,
  };

  static constexpr Ref kNoInput = 0xffffffffu;

  struct Node {
    OpKind kind;
    Ref a;
    Ref b;
    Ref out;
    T scalar{};
    std::vector<std::uint32_t> indices;  // lookup ids or row-max argmax
  };

  Ref push_value(Tensor<T> t) {
    values_.push_back(std::move(t));
    return static_cast<Ref>(values_.size() - 1);
  }

  Ref record(OpKind kind, Ref a, Ref b, Tensor<T> out,
             std::vector<std::uint32_t> indices = {}, T scalar = T(0)) {
    const bool needs_grad =
        (a != kNoInput && values_[a].requires_grad) ||
        (b != kNoInput && values_[b].requires_grad);
    out.requires_grad = needs_grad;
    Ref r = push_value(std::move(out));
    if (recording_ && needs_grad)
      nodes_.push_back(Node{kind, a, b, r, scalar, std::move(indices)});
    return r;
  }

  Tensor<T>& ensure_grad(Ref r) {
    Tensor<T>& g = grads_[r];
    if (g.empty()) g = Tensor<T>(values_[r].rows, values_[r].cols, T(0));
    return g;
  }

  bool wants_grad(Ref r) const {
    return r != kNoInput && values_[r].requires_grad;
  }

  void backward_node(const Node& n) {
    if (!has_grad(n.out)) return;  // no downstream influence on the loss
    const Tensor<T>& g = grads_[n.out];
    const Tensor<T>& out = values_[n.out];
    switch (n.kind) {
      case OpKind::MatMul: {
        const Tensor<T>& ta = values_[n.a];
        const Tensor<T>& tb = values_[n.b];
        if (wants_grad(n.a))
          gemm_a_bt(g.data.data(), tb.data.data(), ensure_grad(n.a).data.data(),
                    ta.rows, ta.cols, tb.cols);
        if (wants_grad(n.b))
          gemm_at_b(ta.data.data(), g.data.data(), ensure_grad(n.b).data.data(),
                    ta.rows, ta.cols, tb.cols);
        break;
      }
      case OpKind::Add: {
        if (wants_grad(n.a)) accumulate(ensure_grad(n.a), g);
        if (wants_grad(n.b)) accumulate(ensure_grad(n.b), g);
        break;
      }
      case OpKind::AddRowVec: {
        if (wants_grad(n.a)) accumulate(ensure_grad(n.a), g);
        if (wants_grad(n.b)) {
          Tensor<T>& gb = ensure_grad(n.b);
          for (std::size_t r = 0; r < g.rows; ++r)
            for (std::size_t c = 0; c < g.cols; ++c) gb.data[c] += g.at(r, c);
        }
        break;
      }
      case OpKind::Mul: {
        const Tensor<T>& ta = values_[n.a];
        const Tensor<T>& tb = values_[n.b];
        if (wants_grad(n.a)) {
          Tensor<T>& ga = ensure_grad(n.a);
          for (std::size_t i = 0; i < g.size(); ++i)
            ga.data[i] += g.data[i] * tb.data[i];
        }
        if (wants_grad(n.b)) {
          Tensor<T>& gb = ensure_grad(n.b);
          for (std::size_t i = 0; i < g.size(); ++i)
            gb.data[i] += g.data[i] * ta.data[i];
        }
        break;
      }
      case OpKind::Sigmoid: {
        Tensor<T>& ga = ensure_grad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.data[i] += g.data[i] * out.data[i] * (T(1) - out.data[i]);
        break;
      }
      case OpKind::Tanh: {
        Tensor<T>& ga = ensure_grad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.data[i] += g.data[i] * (T(1) - out.data[i] * out.data[i]);
        break;
      }
      case OpKind::ConcatRows: {
        const Tensor<T>& ta = values_[n.a];
        if (wants_grad(n.a)) {
          Tensor<T>& ga = ensure_grad(n.a);
          for (std::size_t i = 0; i < ta.size(); ++i) ga.data[i] += g.data[i];
        }
        if (wants_grad(n.b)) {
          Tensor<T>& gb = ensure_grad(n.b);
          for (std::size_t i = 0; i < gb.size(); ++i)
            gb.data[i] += g.data[i + ta.size()];
        }
        break;
      }
      case OpKind::EmbeddingLookup: {
        Tensor<T>& ga = ensure_grad(n.a);
        for (std::size_t i = 0; i < n.indices.size(); ++i) {
          const std::size_t row = n.indices[i];
          for (std::size_t c = 0; c < g.cols; ++c)
            ga.at(row, c) += g.at(i, c);
        }
        break;
      }
      case OpKind::L2NormalizeRows: {
        const Tensor<T>& tx = values_[n.a];
        Tensor<T>& ga = ensure_grad(n.a);
        for (std::size_t r = 0; r < tx.rows; ++r) {
          T sq = T(0);
          for (std::size_t c = 0; c < tx.cols; ++c)
            sq += tx.at(r, c) * tx.at(r, c);
          const T norm = std::sqrt(sq);
          if (norm < std::numeric_limits<T>::min()) continue;
          T dot = T(0);
          for (std::size_t c = 0; c < tx.cols; ++c)
            dot += g.at(r, c) * out.at(r, c);
          for (std::size_t c = 0; c < tx.cols; ++c)
            ga.at(r, c) += (g.at(r, c) - dot * out.at(r, c)) / norm;
        }
        break;
      }
      case OpKind::ReluHinge: {
        const Tensor<T>& tx = values_[n.a];
        Tensor<T>& ga = ensure_grad(n.a);
        // Subgradient at exactly zero is zero.
        for (std::size_t i = 0; i < g.size(); ++i)
          if (tx.data[i] > T(0)) ga.data[i] += g.data[i];
        break;
      }
      case OpKind::RowMax: {
        Tensor<T>& ga = ensure_grad(n.a);
        for (std::size_t r = 0; r < g.rows; ++r)
          ga.at(r, n.indices[r]) += g.at(r, 0);
        break;
      }
      case OpKind::Sum: {
        Tensor<T>& ga = ensure_grad(n.a);
        const T g0 = g.data[0];
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += g0;
        break;
      }
      case OpKind::Mean: {
        Tensor<T>& ga = ensure_grad(n.a);
        const T g0 = g.data[0] / static_cast<T>(ga.size());
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += g0;
        break;
      }
      case OpKind::ScalarMul: {
        Tensor<T>& ga = ensure_grad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.data[i] += n.scalar * g.data[i];
        break;
      }
      case OpKind::Transpose: {
        Tensor<T>& ga = ensure_grad(n.a);
        for (std::size_t r = 0; r < g.rows; ++r)
          for (std::size_t c = 0; c < g.cols; ++c) ga.at(c, r) += g.at(r, c);
        break;
      }
    }
  }

  static void accumulate(Tensor<T>& into, const Tensor<T>& from) {
    for (std::size_t i = 0; i < into.size(); ++i)
      into.data[i] += from.data[i];
  }

  std::vector<Tensor<T>> values_;
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  bool recording_;
};

}  // namespace groundrank
