// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/channel.hpp"

#include <cmath>
#include <string>

#include "iclmimo/errors.hpp"

namespace iclmimo {

ChannelTask sample_task(const LinkConfig& cfg, double noise_var, RandomState& rng) {
  if (noise_var <= 0.0) throw DegenerateInputError("sample_task: noise_var must be > 0");
  ComplexMatrix h(cfg.m, cfg.m);
  for (std::size_t i = 0; i < cfg.m; ++i)
    for (std::size_t j = 0; j < cfg.m; ++j) h(i, j) = rng.cgaussian(1.0);
  return ChannelTask{std::move(h), noise_var};
}

ComplexMatrix transmit(const ChannelTask& task, const ComplexMatrix& x, RandomState& rng) {
  if (x.rows() != task.h.cols())
    throw ShapeError("transmit: x has " + std::to_string(x.rows()) + " rows, channel expects " +
                     std::to_string(task.h.cols()));
  ComplexMatrix y = matmul(task.h, x);
  for (std::size_t i = 0; i < y.size(); ++i) y.entries()[i] += rng.cgaussian(task.noise_var);
  return y;
}

ComplexMatrix normalize_power(const ComplexMatrix& x, double p) {
  const double nrm = fro_norm(x);
  if (nrm == 0.0) throw DegenerateInputError("normalize_power: zero input block");
  const double target = std::sqrt(p * static_cast<double>(x.rows()) * static_cast<double>(x.cols()));
  return scale(x, cxd(target / nrm, 0.0));
}

double snr_db(double p, double noise_var) {
  return 10.0 * std::log10(p / noise_var);
}

double noise_var_for_snr(double p, double snr_db_value) {
  return p / std::pow(10.0, snr_db_value / 10.0);
}

}  // namespace iclmimo
