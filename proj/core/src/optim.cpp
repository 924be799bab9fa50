// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/optim.hpp"

#include <cmath>

namespace iclmimo {

void adam_update(std::vector<double>& p, std::vector<double>& m, std::vector<double>& v,
                 const std::vector<double>& grad, std::size_t t, double lr) {
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t));
  for (std::size_t j = 0; j < p.size(); ++j) {
    m[j] = kAdamBeta1 * m[j] + (1.0 - kAdamBeta1) * grad[j];
    v[j] = kAdamBeta2 * v[j] + (1.0 - kAdamBeta2) * grad[j] * grad[j];
    p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + kAdamEps);
  }
}

}  // namespace iclmimo
