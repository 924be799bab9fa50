// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "iclmimo/cxmat.hpp"
#include "iclmimo/rng.hpp"

namespace testutil {

inline iclmimo::ComplexMatrix random_cx(std::size_t r, std::size_t c, iclmimo::RandomState& rng,
                                        double var = 1.0) {
  iclmimo::ComplexMatrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.cgaussian(var);
  return m;
}

inline double max_abs_diff(const iclmimo::ComplexMatrix& a, const iclmimo::ComplexMatrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.entries()[i] - b.entries()[i]));
  return worst;
}

inline double max_abs(const iclmimo::ComplexMatrix& a) {
  double worst = 0.0;
  for (const auto& e : a.entries()) worst = std::max(worst, std::abs(e));
  return worst;
}

// Embeds a singular value list as the rectangular diagonal of an r x c block.
inline iclmimo::ComplexMatrix rect_diag(const std::vector<double>& sigma, std::size_t r,
                                        std::size_t c) {
  iclmimo::ComplexMatrix d(r, c);
  for (std::size_t i = 0; i < std::min({sigma.size(), r, c}); ++i) d(i, i) = sigma[i];
  return d;
}

}  // namespace testutil
