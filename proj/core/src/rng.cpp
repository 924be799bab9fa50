// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/rng.hpp"

#include <cmath>

namespace iclmimo {
namespace {

// SplitMix64 finalizer; full-period bijective mix on 64 bits.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

RandomState RandomState::from_seed(std::uint64_t seed) {
  return RandomState(mix64(seed), 0);
}

RandomState RandomState::split(std::uint64_t lane) const {
  // Child key mixes the parent key with the lane through two rounds so that
  // sibling streams and parent/child streams decorrelate.
  return RandomState(mix64(key_ ^ mix64(lane ^ 0xa5a5a5a5a5a5a5a5ULL)), 0);
}

std::uint64_t RandomState::next_u64() {
  ++counter_;
  return mix64(key_ ^ (counter_ * 0xd1342543de82ef95ULL));
}

double RandomState::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomState::uniform(double lo, double hi) {
  return lo + (hi - lo) * next_unit();
}

double RandomState::gaussian() {
  // 1 - u in (0, 1] keeps the log argument nonzero.
  const double u1 = 1.0 - next_unit();
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

std::complex<double> RandomState::cgaussian(double var) {
  const double s = std::sqrt(var * 0.5);
  const double re = gaussian();
  const double im = gaussian();
  return {s * re, s * im};
}

}  // namespace iclmimo
