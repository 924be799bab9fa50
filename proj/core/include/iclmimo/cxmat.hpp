// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace iclmimo {

using cxd = std::complex<double>;

// Dense row-major complex matrix. Carrier for channels, pilots, precoders and
// every other complex-valued quantity in the lab. Sizes stay small (at most a
// few dozen rows), so the representation favors clarity over blocking.
class ComplexMatrix {
 public:
  ComplexMatrix() : rows_(0), cols_(0) {}
  ComplexMatrix(std::size_t rows, std::size_t cols);
  ComplexMatrix(std::size_t rows, std::size_t cols, std::vector<cxd> entries);

  static ComplexMatrix identity(std::size_t n);
  static ComplexMatrix zeros(std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return entries_.size(); }

  cxd& operator()(std::size_t i, std::size_t j) { return entries_[i * cols_ + j]; }
  const cxd& operator()(std::size_t i, std::size_t j) const { return entries_[i * cols_ + j]; }

  const std::vector<cxd>& entries() const { return entries_; }
  std::vector<cxd>& entries() { return entries_; }

  // True when every entry is finite (no NaN/Inf in either component).
  bool all_finite() const;

 private:
  std::size_t rows_, cols_;
  std::vector<cxd> entries_;
};

// u (rows x rows, unitary), sigma (min(rows, cols), descending, >= 0),
// vh (cols x cols, unitary, already conjugate-transposed).
struct SvdFactors {
  ComplexMatrix u;
  std::vector<double> sigma;
  ComplexMatrix vh;
};

ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix hermitian(const ComplexMatrix& a);
ComplexMatrix hadamard(const ComplexMatrix& a, const ComplexMatrix& b);
double fro_norm(const ComplexMatrix& a);

ComplexMatrix add(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix sub(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix scale(const ComplexMatrix& a, cxd s);
ComplexMatrix conjugate(const ComplexMatrix& a);
ComplexMatrix transpose(const ComplexMatrix& a);

// Full SVD a = u * diag(sigma) * vh via one-sided Jacobi rotations.
// Deterministic sweep order; the gauge fixes the largest-magnitude entry of
// each u column to be real non-negative so factorizations are reproducible.
SvdFactors svd(const ComplexMatrix& a);

// Moore-Penrose pseudo-inverse through the SVD. Singular values at or below
// 1e-12 * sigma_max are treated as zero.
ComplexMatrix pinv(const ComplexMatrix& a);

}  // namespace iclmimo
