// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "iclmimo/channel.hpp"
#include "iclmimo/cxmat.hpp"
#include "iclmimo/rng.hpp"

namespace iclmimo {

enum class IqCase { Case1, Case2 };

// Per-antenna amplitude and phase mismatch between the I and Q branches, for
// the transmit and receive chains separately. Stored as the diagonals.
struct IqParams {
  std::vector<double> a_t, theta_t;  // length M each
  std::vector<double> a_r, theta_r;
};

// Derived mixing matrices: the impaired branch maps v to G1 v + G2 conj(v).
// Balance (A = I, Theta = 0) gives G1 = I, G2 = 0.
struct IqGMatrices {
  ComplexMatrix g_t1, g_t2, g_r1, g_r2;  // all M x M diagonal
};

// Case1: amplitudes U[0,1], phases U[0, 2pi). Case2 (mild): amplitudes
// U[0.8, 1], phases U[0, pi/12). Tx and rx drawn independently.
IqParams sample_iq(IqCase c, std::size_t m, RandomState& rng);

// Balanced hardware: identity mapping on both chains.
IqParams balanced_iq(std::size_t m);

IqGMatrices g_matrices(const IqParams& p);

// x_tx = G_t1 x + G_t2 conj(x), columnwise.
ComplexMatrix apply_tx_iq(const IqGMatrices& g, const ComplexMatrix& x);

// y = G_r1 y_rx + G_r2 conj(y_rx), columnwise.
ComplexMatrix apply_rx_iq(const IqGMatrices& g, const ComplexMatrix& y_rx);

// Tx impairment, then the fading channel with fresh noise, then rx impairment.
ComplexMatrix transmit_impaired(const ChannelTask& task, const IqGMatrices& g,
                                const ComplexMatrix& x, RandomState& rng);

// The end-to-end impaired map at zero noise is widely linear:
// f(x) = B1 x + B2 conj(x). Closed forms used as the brute-force oracle and
// by the real-stacked channel representation.
struct WidelyLinear {
  ComplexMatrix b1, b2;
};
WidelyLinear end_to_end_widely_linear(const ComplexMatrix& h, const IqGMatrices& g);

// Real 2M x 2M action of f on stacked [Re; Im] coordinates.
// Rows/cols 0..M-1 are real parts, M..2M-1 imaginary parts.
std::vector<double> widely_linear_real_stacked(const WidelyLinear& wl);

}  // namespace iclmimo
