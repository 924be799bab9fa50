// SPDX-License-Identifier: Apache-2.0
#ifndef ICLMIMO_THREADS_HPP
#define ICLMIMO_THREADS_HPP

namespace iclmimo {

// Pins the BLAS thread count before the first kernel call. Reads
// ICLMIMO_THREADS if set, otherwise forces a single thread so repeated runs
// reduce in the same order. Call once at process start, before any math.
void configure_threads();

}  // namespace iclmimo

#endif  // ICLMIMO_THREADS_HPP
