// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "iclmimo/cxmat.hpp"
#include "iclmimo/rng.hpp"

namespace iclmimo {

// One quasi-static fading block: the channel matrix stays fixed for the whole
// block, noise is fresh per use.
struct ChannelTask {
  ComplexMatrix h;   // M x M complex gain
  double noise_var;  // per-entry noise power sigma^2 > 0
};

struct LinkConfig {
  std::size_t m = 2;        // antennas (square MIMO)
  std::size_t l = 256;      // channel uses per block
  double power = 1.0;       // transmit budget P
  std::uint64_t seed = 0;
};

// Fresh i.i.d. CN(0,1) channel draw; Rayleigh flat fading.
ChannelTask sample_task(const LinkConfig& cfg, double noise_var, RandomState& rng);

// Y = H X + W with W i.i.d. CN(0, sigma^2). X must be M x K.
ComplexMatrix transmit(const ChannelTask& task, const ComplexMatrix& x, RandomState& rng);

// Scale X so (1/(M K)) * ||X||_F^2 == p exactly. K is X's column count; the
// budget applies to whatever block is passed in.
ComplexMatrix normalize_power(const ComplexMatrix& x, double p);

double snr_db(double p, double noise_var);

// Inverse of snr_db at fixed transmit power.
double noise_var_for_snr(double p, double snr_db_value);

}  // namespace iclmimo
