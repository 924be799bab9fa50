// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/classical.hpp"

#include <cmath>

#include "iclmimo/errors.hpp"

namespace iclmimo {

ComplexMatrix ls_channel_estimate(const PilotBlock& p) {
  if (p.x_p.rows() != p.y_p.rows() || p.x_p.cols() != p.y_p.cols())
    throw ShapeError("ls_channel_estimate: pilot blocks disagree in shape");
  if (p.x_p.cols() == 0) throw ShapeError("ls_channel_estimate: empty pilot block");
  // Y_p X_p^H (X_p X_p^H)^{-1} == Y_p pinv(X_p) for full row rank X_p; the
  // pinv form also covers N < M and rank-deficient blocks.
  return matmul(p.y_p, pinv(p.x_p));
}

ComplexMatrix equalize_two_step(const PilotBlock& p, const ComplexMatrix& y) {
  return matmul(pinv(ls_channel_estimate(p)), y);
}

std::pair<PilotBlock, ComplexMatrix> invert_context(const PilotBlock& p, const ComplexMatrix& y) {
  const ComplexMatrix h_dagger = pinv(ls_channel_estimate(p));
  PilotBlock out{p.x_p, matmul(h_dagger, p.y_p)};
  return {std::move(out), matmul(h_dagger, y)};
}

namespace {

// Sigma^+ U^H from the SVD of h_est; also the closed-loop equalizer.
ComplexMatrix sigma_pinv_uh(const ComplexMatrix& h_est) {
  const SvdFactors f = svd(h_est);
  const double smax = f.sigma.empty() ? 0.0 : f.sigma[0];
  ComplexMatrix out(h_est.cols(), h_est.rows());
  const ComplexMatrix uh = hermitian(f.u);
  for (std::size_t i = 0; i < f.sigma.size(); ++i) {
    if (f.sigma[i] <= 1e-12 * smax || f.sigma[i] == 0.0) continue;
    const double inv = 1.0 / f.sigma[i];
    for (std::size_t j = 0; j < uh.cols(); ++j) out(i, j) = inv * uh(i, j);
  }
  return out;
}

}  // namespace

ComplexMatrix svd_combine(const ComplexMatrix& h_est, const ComplexMatrix& y) {
  if (h_est.rows() != h_est.cols()) throw ShapeError("svd_combine: h_est must be square");
  return matmul(sigma_pinv_uh(h_est), y);
}

ComplexMatrix svd_precode(const ComplexMatrix& h_est, const ComplexMatrix& x) {
  if (h_est.rows() != h_est.cols()) throw ShapeError("svd_precode: h_est must be square");
  const SvdFactors f = svd(h_est);
  return matmul(hermitian(f.vh), x);
}

Heatmap heatmap_open(const ComplexMatrix& h_est, double noise_var) {
  const ComplexMatrix zf = pinv(h_est);
  ComplexMatrix vals(zf.rows(), zf.cols());
  for (std::size_t i = 0; i < zf.size(); ++i)
    vals.entries()[i] = cxd(noise_var * std::norm(zf.entries()[i]), 0.0);
  return Heatmap{std::move(vals), HeatmapKind::OpenLoop};
}

Heatmap heatmap_closed(const ComplexMatrix& h_est, double noise_var) {
  const ComplexMatrix eq = sigma_pinv_uh(h_est);
  ComplexMatrix vals(eq.rows(), eq.cols());
  for (std::size_t i = 0; i < eq.size(); ++i)
    vals.entries()[i] = cxd(noise_var * std::norm(eq.entries()[i]), 0.0);
  return Heatmap{std::move(vals), HeatmapKind::ClosedLoop};
}

std::vector<double> reshape_context(const ComplexMatrix& values, std::size_t patches) {
  std::vector<double> flat(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) flat[i] = values.entries()[i].real();
  std::vector<double> out;
  out.reserve(patches * flat.size());
  for (std::size_t r = 0; r < patches; ++r) out.insert(out.end(), flat.begin(), flat.end());
  return out;
}

}  // namespace iclmimo
