// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/iq.hpp"

#include <cmath>

#include "iclmimo/errors.hpp"

namespace iclmimo {

namespace {
constexpr double kPi = 3.1415926535897932384626433832795;

ComplexMatrix diag_from(const std::vector<cxd>& d) {
  ComplexMatrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}
}  // namespace

IqParams sample_iq(IqCase c, std::size_t m, RandomState& rng) {
  IqParams p;
  p.a_t.resize(m);
  p.theta_t.resize(m);
  p.a_r.resize(m);
  p.theta_r.resize(m);
  const double a_lo = (c == IqCase::Case1) ? 0.0 : 0.8;
  const double a_hi = 1.0;
  const double th_hi = (c == IqCase::Case1) ? 2.0 * kPi : kPi / 12.0;
  for (std::size_t i = 0; i < m; ++i) p.a_t[i] = rng.uniform(a_lo, a_hi);
  for (std::size_t i = 0; i < m; ++i) p.theta_t[i] = rng.uniform(0.0, th_hi);
  for (std::size_t i = 0; i < m; ++i) p.a_r[i] = rng.uniform(a_lo, a_hi);
  for (std::size_t i = 0; i < m; ++i) p.theta_r[i] = rng.uniform(0.0, th_hi);
  return p;
}

IqParams balanced_iq(std::size_t m) {
  IqParams p;
  p.a_t.assign(m, 1.0);
  p.theta_t.assign(m, 0.0);
  p.a_r.assign(m, 1.0);
  p.theta_r.assign(m, 0.0);
  return p;
}

IqGMatrices g_matrices(const IqParams& p) {
  const std::size_t m = p.a_t.size();
  std::vector<cxd> t1(m), t2(m), r1(m), r2(m);
  for (std::size_t i = 0; i < m; ++i) {
    const cxd e_pos = std::polar(p.a_t[i], p.theta_t[i]);   // A e^{+j theta}
    const cxd e_neg = std::polar(p.a_t[i], -p.theta_t[i]);  // A e^{-j theta}
    t1[i] = (1.0 + e_pos) * 0.5;
    t2[i] = (1.0 - e_neg) * 0.5;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const cxd e_pos = std::polar(p.a_r[i], p.theta_r[i]);
    const cxd e_neg = std::polar(p.a_r[i], -p.theta_r[i]);
    r1[i] = (1.0 + e_pos) * 0.5;
    r2[i] = (1.0 - e_neg) * 0.5;
  }
  return IqGMatrices{diag_from(t1), diag_from(t2), diag_from(r1), diag_from(r2)};
}

ComplexMatrix apply_tx_iq(const IqGMatrices& g, const ComplexMatrix& x) {
  if (x.rows() != g.g_t1.rows()) throw ShapeError("apply_tx_iq: row count mismatch");
  return add(matmul(g.g_t1, x), matmul(g.g_t2, conjugate(x)));
}

ComplexMatrix apply_rx_iq(const IqGMatrices& g, const ComplexMatrix& y_rx) {
  if (y_rx.rows() != g.g_r1.rows()) throw ShapeError("apply_rx_iq: row count mismatch");
  return add(matmul(g.g_r1, y_rx), matmul(g.g_r2, conjugate(y_rx)));
}

ComplexMatrix transmit_impaired(const ChannelTask& task, const IqGMatrices& g,
                                const ComplexMatrix& x, RandomState& rng) {
  return apply_rx_iq(g, transmit(task, apply_tx_iq(g, x), rng));
}

WidelyLinear end_to_end_widely_linear(const ComplexMatrix& h, const IqGMatrices& g) {
  // y = G_r1 (H (G_t1 x + G_t2 x*)) + G_r2 conj(H (G_t1 x + G_t2 x*))
  //   = (G_r1 H G_t1 + G_r2 H* G_t2*) x + (G_r1 H G_t2 + G_r2 H* G_t1*) x*
  const ComplexMatrix hc = conjugate(h);
  WidelyLinear wl;
  wl.b1 = add(matmul(g.g_r1, matmul(h, g.g_t1)), matmul(g.g_r2, matmul(hc, conjugate(g.g_t2))));
  wl.b2 = add(matmul(g.g_r1, matmul(h, g.g_t2)), matmul(g.g_r2, matmul(hc, conjugate(g.g_t1))));
  return wl;
}

std::vector<double> widely_linear_real_stacked(const WidelyLinear& wl) {
  // With y = B1 x + B2 x*:
  //   Re(y) = (Re B1 + Re B2) Re(x) + (-Im B1 + Im B2) Im(x)
  //   Im(y) = (Im B1 + Im B2) Re(x) + ( Re B1 - Re B2) Im(x)
  const std::size_t m = wl.b1.rows();
  std::vector<double> a(4 * m * m, 0.0);
  const std::size_t n = 2 * m;  // row-major n x n
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const cxd b1 = wl.b1(i, j), b2 = wl.b2(i, j);
      a[i * n + j] = b1.real() + b2.real();
      a[i * n + (m + j)] = -b1.imag() + b2.imag();
      a[(m + i) * n + j] = b1.imag() + b2.imag();
      a[(m + i) * n + (m + j)] = b1.real() - b2.real();
    }
  }
  return a;
}

}  // namespace iclmimo
