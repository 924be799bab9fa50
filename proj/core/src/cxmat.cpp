// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/cxmat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "iclmimo/errors.hpp"

namespace iclmimo {

namespace {

constexpr double kJacobiTol = 1e-14;   // off-diagonal mass threshold
constexpr int kJacobiMaxSweeps = 100;  // hard cap; exceeded -> NumericError
constexpr double kPinvCutoff = 1e-12;  // relative singular-value cutoff

std::string shape_str(const ComplexMatrix& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

}  // namespace

ComplexMatrix::ComplexMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), entries_(rows * cols, cxd(0.0, 0.0)) {
  if (rows == 0 || cols == 0) throw ShapeError("ComplexMatrix: zero dimension");
}

ComplexMatrix::ComplexMatrix(std::size_t rows, std::size_t cols, std::vector<cxd> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (rows == 0 || cols == 0) throw ShapeError("ComplexMatrix: zero dimension");
  if (entries_.size() != rows * cols)
    throw ShapeError("ComplexMatrix: entries length " + std::to_string(entries_.size()) +
                     " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
}

ComplexMatrix ComplexMatrix::identity(std::size_t n) {
  ComplexMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

ComplexMatrix ComplexMatrix::zeros(std::size_t rows, std::size_t cols) {
  return ComplexMatrix(rows, cols);
}

bool ComplexMatrix::all_finite() const {
  for (const cxd& z : entries_)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  return true;
}

ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
  ComplexMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const cxd aik = a(i, k);
      if (aik == cxd(0.0, 0.0)) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

ComplexMatrix hermitian(const ComplexMatrix& a) {
  ComplexMatrix h(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) h(j, i) = std::conj(a(i, j));
  return h;
}

ComplexMatrix hadamard(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("hadamard: " + shape_str(a) + " vs " + shape_str(b));
  ComplexMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.entries()[i] = a.entries()[i] * b.entries()[i];
  return c;
}

double fro_norm(const ComplexMatrix& a) {
  double s = 0.0;
  for (const cxd& z : a.entries()) s += std::norm(z);
  return std::sqrt(s);
}

ComplexMatrix add(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("add: " + shape_str(a) + " vs " + shape_str(b));
  ComplexMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.entries()[i] = a.entries()[i] + b.entries()[i];
  return c;
}

ComplexMatrix sub(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("sub: " + shape_str(a) + " vs " + shape_str(b));
  ComplexMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.entries()[i] = a.entries()[i] - b.entries()[i];
  return c;
}

ComplexMatrix scale(const ComplexMatrix& a, cxd s) {
  ComplexMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.entries()[i] = a.entries()[i] * s;
  return c;
}

ComplexMatrix conjugate(const ComplexMatrix& a) {
  ComplexMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.entries()[i] = std::conj(a.entries()[i]);
  return c;
}

ComplexMatrix transpose(const ComplexMatrix& a) {
  ComplexMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

namespace {

// One-sided Jacobi on a tall (or square) matrix: rotate column pairs of a
// working copy until all columns are mutually orthogonal, accumulating the
// rotations into V. Column norms then give sigma and normalized columns give
// the thin U.
struct ThinSvd {
  ComplexMatrix u;             // rows x n, orthonormal columns (thin)
  std::vector<double> sigma;   // n, descending
  ComplexMatrix v;             // n x n, unitary
};

ThinSvd jacobi_tall(const ComplexMatrix& a) {
  const std::size_t m = a.rows(), n = a.cols();
  ComplexMatrix w = a;
  ComplexMatrix v = ComplexMatrix::identity(n);

  int sweep = 0;
  for (; sweep < kJacobiMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0;
        cxd gamma(0.0, 0.0);  // <w_p, w_q> with conjugation on w_p
        for (std::size_t i = 0; i < m; ++i) {
          alpha += std::norm(w(i, p));
          beta += std::norm(w(i, q));
          gamma += std::conj(w(i, p)) * w(i, q);
        }
        const double r = std::abs(gamma);
        if (r <= kJacobiTol * std::sqrt(alpha * beta) || r == 0.0) continue;
        rotated = true;
        // Phase-align then apply the real Jacobi rotation that diagonalizes
        // [[alpha, r], [r, beta]].
        const cxd phase = gamma / r;  // e^{i phi}
        const double tau = (beta - alpha) / (2.0 * r);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        const cxd pc = std::conj(phase);
        for (std::size_t i = 0; i < m; ++i) {
          const cxd wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp - s * (pc * wq);
          w(i, q) = s * wp + c * (pc * wq);
        }
        for (std::size_t i = 0; i < n; ++i) {
          const cxd vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * (pc * vq);
          v(i, q) = s * vp + c * (pc * vq);
        }
      }
    }
    if (!rotated) break;
  }
  if (sweep == kJacobiMaxSweeps)
    throw NumericError("svd: Jacobi sweeps exceeded cap of " + std::to_string(kJacobiMaxSweeps));

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) s2 += std::norm(w(i, j));
    sigma[j] = std::sqrt(s2);
  }

  // Sort singular values descending, permuting columns of w and v alike.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  ThinSvd out{ComplexMatrix(m, n), std::vector<double>(n), ComplexMatrix(n, n)};
  const double smax = sigma.empty() ? 0.0 : sigma[order[0]];
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.sigma[j] = sigma[src];
    for (std::size_t i = 0; i < n; ++i) out.v(i, j) = v(i, src);
    if (sigma[src] > kPinvCutoff * smax && sigma[src] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) out.u(i, j) = w(i, src) / sigma[src];
    }
    // Numerically-zero columns stay zero here; the caller completes them to
    // an orthonormal basis.
  }
  return out;
}

// Replace zero columns of u (rows x k block inside a rows x rows target) and
// append the remaining rows - k columns so u becomes unitary. Gram-Schmidt
// against everything accepted so far, seeded from standard basis vectors.
void complete_orthonormal(ComplexMatrix& u, std::size_t filled_cols) {
  const std::size_t m = u.rows();
  std::vector<std::size_t> need;
  for (std::size_t j = 0; j < filled_cols; ++j) {
    double s2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) s2 += std::norm(u(i, j));
    if (s2 < 0.5) need.push_back(j);  // zero column from a vanished singular value
  }
  for (std::size_t j = filled_cols; j < u.cols(); ++j) need.push_back(j);

  std::size_t basis = 0;
  for (std::size_t slot : need) {
    for (; basis < m; ++basis) {
      // Candidate e_basis, orthogonalized against all accepted columns.
      std::vector<cxd> cand(m, cxd(0.0, 0.0));
      cand[basis] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {  // twice for numerical safety
        for (std::size_t j = 0; j < u.cols(); ++j) {
          if (j == slot) continue;
          double cn = 0.0;
          for (std::size_t i = 0; i < m; ++i) cn += std::norm(u(i, j));
          if (cn < 0.5) continue;
          cxd proj(0.0, 0.0);
          for (std::size_t i = 0; i < m; ++i) proj += std::conj(u(i, j)) * cand[i];
          for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * u(i, j);
        }
      }
      double nrm2 = 0.0;
      for (const cxd& z : cand) nrm2 += std::norm(z);
      if (nrm2 > 1e-8) {
        const double inv = 1.0 / std::sqrt(nrm2);
        for (std::size_t i = 0; i < m; ++i) u(i, slot) = cand[i] * inv;
        ++basis;
        break;
      }
    }
  }
}

// Multiply u column j by a unit phase making its largest-magnitude entry real
// non-negative; compensate on the matching vh row when one exists.
void fix_gauge(ComplexMatrix& u, ComplexMatrix& vh) {
  const std::size_t k = std::min(u.cols(), vh.rows());
  for (std::size_t j = 0; j < u.cols(); ++j) {
    std::size_t imax = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < u.rows(); ++i) {
      const double mag = std::abs(u(i, j));
      if (mag > best) {
        best = mag;
        imax = i;
      }
    }
    if (best <= 0.0) continue;
    const cxd z = u(imax, j);
    const double mag = std::abs(z);
    if (mag == 0.0) continue;
    const cxd ph = std::conj(z) / mag;  // rotates z onto the positive real axis
    for (std::size_t i = 0; i < u.rows(); ++i) u(i, j) *= ph;
    if (j < k)
      for (std::size_t c = 0; c < vh.cols(); ++c) vh(j, c) *= std::conj(ph);
  }
}

}  // namespace

SvdFactors svd(const ComplexMatrix& a) {
  if (!a.all_finite()) throw NumericError("svd: input has non-finite entries");
  const std::size_t m = a.rows(), n = a.cols();

  if (m >= n) {
    ThinSvd thin = jacobi_tall(a);
    ComplexMatrix u_full(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) u_full(i, j) = thin.u(i, j);
    complete_orthonormal(u_full, n);
    SvdFactors f{std::move(u_full), std::move(thin.sigma), hermitian(thin.v)};
    fix_gauge(f.u, f.vh);
    return f;
  }

  // Wide matrix: factor the Hermitian transpose and swap roles.
  SvdFactors fh = svd(hermitian(a));  // a^H = U S V^H  =>  a = V S U^H
  SvdFactors f{hermitian(fh.vh), std::move(fh.sigma), hermitian(fh.u)};
  fix_gauge(f.u, f.vh);
  return f;
}

ComplexMatrix pinv(const ComplexMatrix& a) {
  SvdFactors f = svd(a);
  const std::size_t k = f.sigma.size();
  const double smax = k ? f.sigma[0] : 0.0;
  // a^+ = V S^+ U^H, dropping singular values at or below the cutoff.
  ComplexMatrix out(a.cols(), a.rows());
  for (std::size_t j = 0; j < k; ++j) {
    if (f.sigma[j] <= kPinvCutoff * smax || f.sigma[j] == 0.0) continue;
    const double inv = 1.0 / f.sigma[j];
    for (std::size_t r = 0; r < a.cols(); ++r) {
      const cxd vrj = std::conj(f.vh(j, r));  // V(r, j)
      if (vrj == cxd(0.0, 0.0)) continue;
      for (std::size_t c = 0; c < a.rows(); ++c)
        out(r, c) += vrj * inv * std::conj(f.u(c, j));
    }
  }
  return out;
}

}  // namespace iclmimo
