// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>

#include "iclmimo/channel.hpp"
#include "iclmimo/classical.hpp"
#include "iclmimo/errors.hpp"
#include "iclmimo/iq.hpp"
#include "iclmimo/prompt.hpp"
#include "test_util.hpp"

using namespace iclmimo;
using testutil::max_abs;
using testutil::max_abs_diff;
using testutil::random_cx;

namespace {

PilotBlock noiseless_block(const ComplexMatrix& h, const ComplexMatrix& xp) {
  return PilotBlock{xp, matmul(h, xp)};
}

}  // namespace

TEST_CASE("ls_channel_estimate recovers noiseless channels") {
  RandomState rng = RandomState::from_seed(51);
  const LinkConfig cfg;
  for (int trial = 0; trial < 5; ++trial) {
    const ComplexMatrix h = random_cx(2, 2, rng);
    const ComplexMatrix xp = sample_pilots(cfg, 11, rng);
    const ComplexMatrix est = ls_channel_estimate(noiseless_block(h, xp));
    CHECK(max_abs_diff(est, h) < 1e-10);
  }

  // X_p = I: the estimate is just Y_p.
  const ComplexMatrix h = random_cx(2, 2, rng);
  const PilotBlock pb{ComplexMatrix::identity(2), matmul(h, ComplexMatrix::identity(2))};
  CHECK(max_abs_diff(ls_channel_estimate(pb), h) < 1e-12);

  // Underdetermined pilots (N < M) still yield a finite estimate through the
  // pseudo-inverse fallback.
  const ComplexMatrix thin = random_cx(2, 1, rng);
  const ComplexMatrix est = ls_channel_estimate(noiseless_block(h, thin));
  CHECK(est.all_finite());
}

TEST_CASE("channel estimate improves with pilot length") {
  const LinkConfig cfg;
  const double noise_var = 0.1;  // 10 dB at unit power
  double err11 = 0.0, err22 = 0.0;
  RandomState rng = RandomState::from_seed(52);
  for (int trial = 0; trial < 1500; ++trial) {
    const ChannelTask task = sample_task(cfg, noise_var, rng);
    for (std::size_t n : {std::size_t{11}, std::size_t{22}}) {
      const ComplexMatrix xp = sample_pilots(cfg, n, rng);
      const ComplexMatrix yp = transmit(task, xp, rng);
      const double e = fro_norm(sub(ls_channel_estimate({xp, yp}), task.h));
      (n == 11 ? err11 : err22) += e * e;
    }
  }
  CHECK(err22 < err11);
}

TEST_CASE("equalize_two_step noiseless identity") {
  RandomState rng = RandomState::from_seed(53);
  const LinkConfig cfg;
  const ComplexMatrix h = random_cx(2, 2, rng);
  const ComplexMatrix xp = sample_pilots(cfg, 11, rng);
  const ComplexMatrix x = random_cx(2, 6, rng);
  const ComplexMatrix xhat = equalize_two_step(noiseless_block(h, xp), matmul(h, x));
  CHECK(max_abs_diff(xhat, x) < 1e-8);
}

TEST_CASE("invert_context") {
  RandomState rng = RandomState::from_seed(54);
  const LinkConfig cfg;
  const ComplexMatrix h = random_cx(2, 2, rng);
  const ComplexMatrix xp = sample_pilots(cfg, 11, rng);
  const ComplexMatrix xq = random_cx(2, 1, rng);

  // Noiseless pilots give the exact estimate, so the transformed query is x.
  const auto [ctx, yq] = invert_context(noiseless_block(h, xp), matmul(h, xq));
  CHECK(max_abs_diff(yq, xq) < 1e-8);
  CHECK(max_abs_diff(ctx.y_p, xp) < 1e-8);
  CHECK(max_abs_diff(ctx.x_p, xp) == doctest::Approx(0.0));

  // At 40 dB the transformed pilot outputs sit close to the inputs: the
  // error power (squared relative error) stays under 1e-2 on average.
  const double noise_var = noise_var_for_snr(1.0, 40.0);
  double rel_acc = 0.0;
  std::size_t count = 0;
  RandomState mc = RandomState::from_seed(55);
  for (int trial = 0; trial < 200; ++trial) {
    const ChannelTask task = sample_task(cfg, noise_var, mc);
    const ComplexMatrix pilots = sample_pilots(cfg, 11, mc);
    const ComplexMatrix yp = transmit(task, pilots, mc);
    const auto [tctx, tq] = invert_context({pilots, yp}, ComplexMatrix::zeros(2, 1));
    for (std::size_t k = 0; k < 11; ++k) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < 2; ++i) {
        num += std::norm(tctx.y_p(i, k) - pilots(i, k));
        den += std::norm(pilots(i, k));
      }
      rel_acc += num / den;
      ++count;
    }
  }
  CHECK(rel_acc / static_cast<double>(count) < 1e-2);

  // Under IQ imbalance the LS fit only captures the linear part, so the
  // pilot residual stays bounded away from zero even without noise.
  RandomState ir = RandomState::from_seed(56);
  double resid = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ComplexMatrix hh = random_cx(2, 2, ir);
    const IqGMatrices g = g_matrices(sample_iq(IqCase::Case1, 2, ir));
    const WidelyLinear wl = end_to_end_widely_linear(hh, g);
    const ComplexMatrix pil = sample_pilots(cfg, 11, ir);
    const ComplexMatrix yp = add(matmul(wl.b1, pil), matmul(wl.b2, conjugate(pil)));
    const auto [tctx, tq] = invert_context({pil, yp}, ComplexMatrix::zeros(2, 1));
    resid += fro_norm(sub(tctx.y_p, pil)) / std::sqrt(11.0);
  }
  CHECK(resid / 100.0 > 0.05);
}

TEST_CASE("svd_combine and svd_precode") {
  RandomState rng = RandomState::from_seed(57);
  const ComplexMatrix h = random_cx(2, 2, rng);
  const ComplexMatrix x = random_cx(2, 4, rng);
  // Perfect estimate, no noise: combine(H, H * precode(H, x)) = x.
  const ComplexMatrix y = matmul(h, svd_precode(h, x));
  CHECK(max_abs_diff(svd_combine(h, y), x) < 1e-8);

  ComplexMatrix d(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 1.0;
  const ComplexMatrix w = random_cx(2, 3, rng);
  const ComplexMatrix combined = svd_combine(d, w);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(std::abs(combined(0, j) - w(0, j) / 2.0) < 1e-12);
    CHECK(std::abs(combined(1, j) - w(1, j)) < 1e-12);
  }

  // Noisier pilots push the effective matrix Sigma^+ U^H H V away from I.
  const LinkConfig cfg;
  double dev_hi = 0.0, dev_lo = 0.0;
  RandomState mc = RandomState::from_seed(58);
  for (int trial = 0; trial < 300; ++trial) {
    const ComplexMatrix hh = random_cx(2, 2, mc);
    for (double snr : {30.0, 0.0}) {
      ChannelTask task{hh, noise_var_for_snr(1.0, snr)};
      const ComplexMatrix xp = sample_pilots(cfg, 11, mc);
      const ComplexMatrix yp = transmit(task, xp, mc);
      const ComplexMatrix hhat = ls_channel_estimate({xp, yp});
      const ComplexMatrix eff = svd_combine(hhat, matmul(hh, svd_precode(hhat, ComplexMatrix::identity(2))));
      const double dev = fro_norm(sub(eff, ComplexMatrix::identity(2)));
      (snr == 30.0 ? dev_hi : dev_lo) += dev;
    }
  }
  CHECK(dev_lo > dev_hi);
}

TEST_CASE("heatmap_open") {
  const Heatmap unit = heatmap_open(ComplexMatrix::identity(2), 1.0);
  CHECK(unit.kind == HeatmapKind::OpenLoop);
  CHECK(max_abs_diff(unit.values, ComplexMatrix::identity(2)) < 1e-12);

  const Heatmap half = heatmap_open(scale(ComplexMatrix::identity(2), 2.0), 1.0);
  CHECK(std::abs(half.values(0, 0).real() - 0.25) < 1e-12);
  CHECK(std::abs(half.values(1, 1).real() - 0.25) < 1e-12);

  ComplexMatrix weak(2, 2);
  weak(0, 0) = 1.0;
  weak(1, 1) = 0.1;
  const Heatmap glow = heatmap_open(weak, 1.0);
  CHECK(glow.values(0, 0).real() == doctest::Approx(1.0));
  CHECK(glow.values(1, 1).real() == doctest::Approx(100.0));

  RandomState rng = RandomState::from_seed(59);
  const Heatmap rnd = heatmap_open(random_cx(2, 2, rng), 0.3);
  for (const auto& e : rnd.values.entries()) {
    CHECK(e.real() >= 0.0);
    CHECK(e.imag() == doctest::Approx(0.0));
  }
}

TEST_CASE("heatmap_closed") {
  const Heatmap unit = heatmap_closed(ComplexMatrix::identity(2), 0.7);
  CHECK(unit.kind == HeatmapKind::ClosedLoop);
  CHECK(unit.values(0, 0).real() == doctest::Approx(0.7));
  CHECK(unit.values(1, 1).real() == doctest::Approx(0.7));
  CHECK(unit.values(0, 1).real() == doctest::Approx(0.0));

  ComplexMatrix d(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 1.0;
  const Heatmap hm = heatmap_closed(d, 1.0);
  CHECK(hm.values(0, 0).real() == doctest::Approx(0.25));
  CHECK(hm.values(1, 1).real() == doctest::Approx(1.0));

  // Row i sums to sigma^2 / s_i^2: the U rows are unit vectors.
  RandomState rng = RandomState::from_seed(60);
  for (int trial = 0; trial < 4; ++trial) {
    const ComplexMatrix a = random_cx(2, 2, rng);
    const double nv = 0.4;
    const Heatmap m = heatmap_closed(a, nv);
    const SvdFactors f = svd(a);
    for (std::size_t i = 0; i < 2; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < 2; ++j) row += m.values(i, j).real();
      CHECK(std::abs(row - nv / (f.sigma[i] * f.sigma[i])) < 1e-10 * row);
    }
  }
}

TEST_CASE("reshape_context") {
  ComplexMatrix hm(2, 2);
  hm(0, 0) = 1.0;
  hm(0, 1) = 2.0;
  hm(1, 0) = 3.0;
  hm(1, 1) = 4.0;
  const std::vector<double> rows = reshape_context(hm, 64);
  REQUIRE(rows.size() == 64 * 4);
  for (std::size_t r = 0; r < 64; ++r) {
    CHECK(rows[r * 4 + 0] == doctest::Approx(1.0));
    CHECK(rows[r * 4 + 1] == doctest::Approx(2.0));
    CHECK(rows[r * 4 + 2] == doctest::Approx(3.0));
    CHECK(rows[r * 4 + 3] == doctest::Approx(4.0));
  }

  RandomState rng = RandomState::from_seed(61);
  const ComplexMatrix icar = random_cx(4, 2, rng);
  const std::vector<double> wide = reshape_context(icar, 64);
  REQUIRE(wide.size() == 64 * 8);
  for (std::size_t c = 0; c < 8; ++c) CHECK(wide[c] == wide[63 * 8 + c]);
}
