// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>

#include "iclmimo/cxmat.hpp"

namespace iclmimo {

// Transmitted and received pilot blocks for one fading block.
struct PilotBlock {
  ComplexMatrix x_p;  // M x N transmitted pilots
  ComplexMatrix y_p;  // M x N received pilots
};

enum class HeatmapKind { OpenLoop, ClosedLoop };

// Per-subchannel effective-noise map: sigma^2-scaled squared magnitudes of
// the equalizing matrix. Entries are non-negative by construction.
struct Heatmap {
  ComplexMatrix values;  // M x M, real entries stored in the complex carrier
  HeatmapKind kind;
};

// LS channel estimate from a pilot block, in the right-pseudo-inverse form
// Hhat = Y_p X_p^H (X_p X_p^H)^{-1} (computed as Y_p pinv(X_p)). Exact when
// the pilots are noiseless and have full row rank; degenerate pilot blocks
// fall back to the pseudo-inverse gracefully.
ComplexMatrix ls_channel_estimate(const PilotBlock& p);

// Two-step baseline: estimate the channel, then zero-force the payload.
// Returns pinv(Hhat) * y for y of shape M x L.
ComplexMatrix equalize_two_step(const PilotBlock& p, const ComplexMatrix& y);

// Channel-inversion preprocessing: both pilot outputs and the query get
// pre-multiplied by pinv(Hhat), so a downstream learner faces the
// near-identity map H * pinv(Hhat). Returns the transformed pilot block
// (x_p unchanged) and the transformed query.
std::pair<PilotBlock, ComplexMatrix> invert_context(const PilotBlock& p, const ComplexMatrix& y);

// SVD receive combining: Sigma^+ U^H y for the SVD of h_est.
ComplexMatrix svd_combine(const ComplexMatrix& h_est, const ComplexMatrix& y);

// Companion transmit-side precoding: V x.
ComplexMatrix svd_precode(const ComplexMatrix& h_est, const ComplexMatrix& x);

// sigma^2 * |Hzf|^2 elementwise, Hzf = pinv(h_est) (zero-forcing equalizer).
Heatmap heatmap_open(const ComplexMatrix& h_est, double noise_var);

// sigma^2 * |Sigma^+ U^H|^2 elementwise from the SVD of h_est.
Heatmap heatmap_closed(const ComplexMatrix& h_est, double noise_var);

// Flatten a context block rowwise into a single row, then repeat it so every
// patch row sees the same context: values (r x c) -> patches x (r*c).
// Used for both heatmaps (M x M) and learned context features (2M x M).
std::vector<double> reshape_context(const ComplexMatrix& values, std::size_t patches);

}  // namespace iclmimo
