// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace iclmimo {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// Bias-corrected Adam update for one tensor. t is the 1-based step count
// after the increment; m and v are the running first and second moments and
// must match p's length.
void adam_update(std::vector<double>& p, std::vector<double>& m, std::vector<double>& v,
                 const std::vector<double>& grad, std::size_t t, double lr);

}  // namespace iclmimo
