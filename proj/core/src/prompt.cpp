// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/prompt.hpp"

#include <string>

#include "iclmimo/classical.hpp"
#include "iclmimo/errors.hpp"

namespace iclmimo {

ComplexMatrix sample_pilots(const LinkConfig& cfg, std::size_t n, RandomState& rng) {
  if (n == 0) throw ShapeError("sample_pilots: n must be >= 1");
  ComplexMatrix x(cfg.m, n);
  for (std::size_t i = 0; i < cfg.m; ++i)
    for (std::size_t j = 0; j < n; ++j) x(i, j) = rng.cgaussian(1.0);
  return normalize_power(x, cfg.power);
}

ContextSet build_context(const ChannelTask& task, const ComplexMatrix& pilots,
                         ContextVariant variant, const std::optional<IqGMatrices>& iq,
                         RandomState& rng) {
  if (pilots.rows() != task.h.rows())
    throw ShapeError("build_context: pilots have " + std::to_string(pilots.rows()) +
                     " rows, channel expects " + std::to_string(task.h.rows()));
  const ComplexMatrix y_all =
      iq ? transmit_impaired(task, *iq, pilots, rng) : transmit(task, pilots, rng);

  // Receiver-side preprocessing of the outputs, derived from these pilots.
  ComplexMatrix y_proc = y_all;
  if (variant != ContextVariant::Raw) {
    const PilotBlock block{pilots, y_all};
    const ComplexMatrix h_est = ls_channel_estimate(block);
    y_proc = (variant == ContextVariant::Inverted) ? matmul(pinv(h_est), y_all)
                                                   : svd_combine(h_est, y_all);
  }

  ContextSet ctx;
  ctx.pairs.reserve(pilots.cols());
  for (std::size_t n = 0; n < pilots.cols(); ++n) {
    ComplexMatrix y(pilots.rows(), 1), x(pilots.rows(), 1);
    for (std::size_t i = 0; i < pilots.rows(); ++i) {
      y(i, 0) = y_proc(i, n);
      x(i, 0) = pilots(i, n);
    }
    ctx.pairs.push_back(ContextPair{std::move(y), std::move(x)});
  }
  return ctx;
}

namespace {

std::vector<double> stack_real(const ComplexMatrix& v) {
  const std::size_t m = v.rows();
  std::vector<double> t(2 * m);
  for (std::size_t i = 0; i < m; ++i) {
    t[i] = v(i, 0).real();
    t[m + i] = v(i, 0).imag();
  }
  return t;
}

}  // namespace

PromptSequence tokenize(const ContextSet& ctx, const ComplexMatrix& y_query) {
  if (y_query.cols() != 1) throw ShapeError("tokenize: y_query must be a column");
  PromptSequence seq;
  seq.tokens.reserve(2 * ctx.pairs.size() + 1);
  for (const ContextPair& pair : ctx.pairs) {
    if (pair.y.rows() != y_query.rows() || pair.x.rows() != y_query.rows())
      throw ShapeError("tokenize: context vector width disagrees with query");
    seq.tokens.push_back(stack_real(pair.y));
    seq.roles.push_back(TokenRole::PilotOutput);
    seq.tokens.push_back(stack_real(pair.x));
    seq.roles.push_back(TokenRole::PilotInput);
  }
  seq.tokens.push_back(stack_real(y_query));
  seq.roles.push_back(TokenRole::QueryOutput);
  return seq;
}

ComplexMatrix token_to_complex(const std::vector<double>& token) {
  if (token.size() % 2 != 0) throw ShapeError("token_to_complex: odd token width");
  const std::size_t m = token.size() / 2;
  ComplexMatrix v(m, 1);
  for (std::size_t i = 0; i < m; ++i) v(i, 0) = cxd(token[i], token[m + i]);
  return v;
}

ComplexMatrix read_prediction(const std::vector<std::vector<double>>& model_output,
                              std::size_t n) {
  const std::size_t idx = 2 * n;
  if (idx >= model_output.size())
    throw ShapeError("read_prediction: query index " + std::to_string(idx) +
                     " out of range for " + std::to_string(model_output.size()) + " rows");
  return token_to_complex(model_output[idx]);
}

std::vector<std::size_t> loss_positions(std::size_t n) {
  std::vector<std::size_t> pos(n + 1);
  for (std::size_t k = 0; k <= n; ++k) pos[k] = 2 * k;
  return pos;
}

}  // namespace iclmimo
