#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace groundrank {

// Thrown by tensor primitives on non-conforming shapes. Carries the operation
// name and both operand shapes.
struct ShapeError : std::runtime_error {
  ShapeError(const std::string& op, const std::string& lhs,
             const std::string& rhs)
      : std::runtime_error("shape mismatch in " + op + ": " + lhs + " vs " +
                           rhs) {}
};

// Raised when numbers go bad (NaN loss, NaN gradients).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix. Everything learned or differentiated in this
// project is rank 2; scalars are 1x1 and row vectors 1xN.
template <typename T>
struct Tensor {
  std::size_t rows{0};
  std::size_t cols{0};
  std::vector<T> data;
  bool requires_grad{false};

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, T fill = T(0))
      : rows(r), cols(c), data(r * c, fill) {}
  Tensor(std::size_t r, std::size_t c, std::vector<T> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols)
      throw ShapeError("tensor-init", shape_string(rows, cols),
                       std::to_string(data.size()) + " values");
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  T& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool same_shape(const Tensor& other) const {
    return rows == other.rows && cols == other.cols;
  }

  std::string shape() const { return shape_string(rows, cols); }

  static std::string shape_string(std::size_t r, std::size_t c) {
    std::ostringstream os;
    os << r << "x" << c;
    return os.str();
  }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    out.requires_grad = requires_grad;
    return out;
  }
};

// C += A(m x k) * B(k x n). ikj order so the inner loop runs over contiguous
// rows of B and C.
template <typename T>
void gemm_accumulate(const T* a, const T* b, T* c, std::size_t m,
                     std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(k x n) += A(m x k)^T * G(m x n)
template <typename T>
void gemm_at_b(const T* a, const T* g, T* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

// C(m x k) += G(m x n) * B(k x n)^T
template <typename T>
void gemm_a_bt(const T* g, const T* b, T* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* grow = g + i * n;
    T* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

}  // namespace groundrank
