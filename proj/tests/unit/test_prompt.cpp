// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "iclmimo/classical.hpp"
#include "iclmimo/errors.hpp"
#include "iclmimo/prompt.hpp"
#include "test_util.hpp"

using namespace iclmimo;
using testutil::max_abs_diff;
using testutil::random_cx;

namespace {

// Two-sample Kolmogorov-Smirnov distance.
double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    const double fa = static_cast<double>(i) / a.size();
    const double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

}  // namespace

TEST_CASE("sample_pilots power and moments") {
  const LinkConfig cfg{2, 256, 1.5, 0};
  RandomState rng = RandomState::from_seed(71);
  const ComplexMatrix xp = sample_pilots(cfg, 11, rng);
  REQUIRE(xp.rows() == 2);
  REQUIRE(xp.cols() == 11);
  const double per = fro_norm(xp) * fro_norm(xp) / (2.0 * 11.0);
  CHECK(std::abs(per - 1.5) < 1e-12);

  RandomState r1 = RandomState::from_seed(72);
  RandomState r2 = RandomState::from_seed(72);
  CHECK(max_abs_diff(sample_pilots(cfg, 5, r1), sample_pilots(cfg, 5, r2)) == doctest::Approx(0.0));

  // Column covariance approaches P * I over 1e5 column draws.
  const LinkConfig unit{2, 256, 1.0, 0};
  RandomState mc = RandomState::from_seed(73);
  double diag = 0.0;
  cxd off(0.0, 0.0);
  const std::size_t blocks = 10000, n = 10;
  for (std::size_t t = 0; t < blocks; ++t) {
    const ComplexMatrix p = sample_pilots(unit, n, mc);
    for (std::size_t k = 0; k < n; ++k) {
      diag += std::norm(p(0, k)) + std::norm(p(1, k));
      off += p(0, k) * std::conj(p(1, k));
    }
  }
  const double count = static_cast<double>(blocks * n);
  CHECK(diag / (2.0 * count) == doctest::Approx(1.0).epsilon(0.03));
  CHECK(std::abs(off) / count < 0.03);
}

TEST_CASE("build_context variants at zero noise") {
  RandomState rng = RandomState::from_seed(74);
  const LinkConfig cfg;
  const ComplexMatrix pilots = sample_pilots(cfg, 6, rng);

  ChannelTask ident{ComplexMatrix::identity(2), 0.0};
  RandomState quiet = RandomState::from_seed(75);
  const ContextSet raw = build_context(ident, pilots, ContextVariant::Raw, std::nullopt, quiet);
  REQUIRE(raw.pairs.size() == 6);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(max_abs_diff(raw.pairs[k].y, raw.pairs[k].x) < 1e-15);
    CHECK(std::abs(raw.pairs[k].x(0, 0) - pilots(0, k)) < 1e-15);
  }

  const ChannelTask task{random_cx(2, 2, rng), 0.0};
  RandomState q2 = RandomState::from_seed(76);
  const ContextSet inv = build_context(task, pilots, ContextVariant::Inverted, std::nullopt, q2);
  for (const ContextPair& p : inv.pairs) CHECK(max_abs_diff(p.y, p.x) < 1e-8);

  // SVD combining with the exact noiseless estimate turns each output into
  // V^H x: Sigma^+ U^H (U Sigma V^H) x.
  RandomState q3 = RandomState::from_seed(77);
  const ContextSet sv = build_context(task, pilots, ContextVariant::SvdCombined, std::nullopt, q3);
  const SvdFactors f = svd(task.h);
  for (std::size_t k = 0; k < 6; ++k) {
    ComplexMatrix xk(2, 1);
    xk(0, 0) = pilots(0, k);
    xk(1, 0) = pilots(1, k);
    CHECK(max_abs_diff(sv.pairs[k].y, matmul(f.vh, xk)) < 1e-8);
  }
}

TEST_CASE("tokenize layout") {
  RandomState rng = RandomState::from_seed(78);
  const ComplexMatrix yq = random_cx(2, 1, rng);

  const PromptSequence empty = tokenize(ContextSet{}, yq);
  REQUIRE(empty.tokens.size() == 1);
  REQUIRE(empty.roles.size() == 1);
  CHECK(empty.roles[0] == TokenRole::QueryOutput);

  ContextSet ctx;
  for (int k = 0; k < 2; ++k)
    ctx.pairs.push_back({random_cx(2, 1, rng), random_cx(2, 1, rng)});
  const PromptSequence p = tokenize(ctx, yq);
  REQUIRE(p.tokens.size() == 5);
  for (const auto& tok : p.tokens) CHECK(tok.size() == 4);
  CHECK(p.roles[0] == TokenRole::PilotOutput);
  CHECK(p.roles[1] == TokenRole::PilotInput);
  CHECK(p.roles[2] == TokenRole::PilotOutput);
  CHECK(p.roles[3] == TokenRole::PilotInput);
  CHECK(p.roles[4] == TokenRole::QueryOutput);

  // Round trip: [Re; Im] stacking is exact.
  CHECK(max_abs_diff(token_to_complex(p.tokens[0]), ctx.pairs[0].y) == doctest::Approx(0.0));
  CHECK(max_abs_diff(token_to_complex(p.tokens[3]), ctx.pairs[1].x) == doctest::Approx(0.0));
  CHECK(max_abs_diff(token_to_complex(p.tokens[4]), yq) == doctest::Approx(0.0));
}

TEST_CASE("read_prediction and loss positions") {
  RandomState rng = RandomState::from_seed(79);
  ContextSet ctx;
  for (int k = 0; k < 3; ++k)
    ctx.pairs.push_back({random_cx(2, 1, rng), random_cx(2, 1, rng)});
  const ComplexMatrix yq = random_cx(2, 1, rng);
  const PromptSequence p = tokenize(ctx, yq);

  // A model that copies its input predicts y_query at the query position.
  const ComplexMatrix pred = read_prediction(p.tokens, 3);
  CHECK(max_abs_diff(pred, yq) == doctest::Approx(0.0));
  REQUIRE(pred.rows() == 2);
  REQUIRE(pred.cols() == 1);

  CHECK(loss_positions(3) == std::vector<std::size_t>{0, 2, 4, 6});
  CHECK(loss_positions(0) == std::vector<std::size_t>{0});

  CHECK_THROWS_AS(read_prediction(p.tokens, 5), Error);
}

TEST_CASE("raw context pairs are exchangeable in distribution") {
  const LinkConfig cfg;
  const std::size_t n = 5, tasks = 1000;
  RandomState rng = RandomState::from_seed(80);

  // First-pair statistic from one stream of tasks versus a varying-position
  // statistic from an independent stream; both should draw from the same
  // marginal law, so the two-sample KS distance stays under the 0.1% critical
  // value for 1000-vs-1000 samples.
  std::vector<double> first, mixed;
  for (std::size_t t = 0; t < 2 * tasks; ++t) {
    const ChannelTask task = sample_task(cfg, 0.1, rng);
    const ComplexMatrix pilots = sample_pilots(cfg, n, rng);
    const ContextSet ctx = build_context(task, pilots, ContextVariant::Raw, std::nullopt, rng);
    if (t < tasks)
      first.push_back(ctx.pairs[0].y(0, 0).real());
    else
      mixed.push_back(ctx.pairs[t % n].y(0, 0).real());
  }
  CHECK(ks_distance(first, mixed) < 0.0872);
}
