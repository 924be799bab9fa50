// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>

namespace iclmimo {

// Splittable counter-based generator. A stream is (key, counter); drawing
// advances the counter, splitting derives an independent child key. Streams
// obtained from distinct lanes never share output sequences, which lets
// channel draws, noise draws, pilot draws and parameter init stay independent
// and individually reproducible.
class RandomState {
 public:
  RandomState() : key_(0), counter_(0) {}
  static RandomState from_seed(std::uint64_t seed);

  // Child stream for a lane; does not advance this stream.
  RandomState split(std::uint64_t lane) const;

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double next_unit();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller. One normal per call; the companion
  // variate is discarded so the draw count per call is fixed (keeps streams
  // position-independent of call history shape).
  double gaussian();

  // Circularly symmetric complex Gaussian with E|z|^2 = var.
  std::complex<double> cgaussian(double var);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  RandomState(std::uint64_t key, std::uint64_t counter)
      : key_(key), counter_(counter) {}
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace iclmimo
