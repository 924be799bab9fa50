// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "iclmimo/channel.hpp"
#include "iclmimo/cxmat.hpp"
#include "iclmimo/iq.hpp"
#include "iclmimo/rng.hpp"

namespace iclmimo {

// Receiver-side preprocessing applied to every channel output in a context.
enum class ContextVariant { Raw, Inverted, SvdCombined };

// N in-context pilot pairs from one task. pairs[n] holds the received output
// first, then the transmitted input, each as an M-column.
struct ContextPair {
  ComplexMatrix y;  // M x 1
  ComplexMatrix x;  // M x 1
};
struct ContextSet {
  std::vector<ContextPair> pairs;
};

enum class TokenRole { PilotOutput, PilotInput, QueryOutput };

// Real token stream for the sequence model. Layout is
// y_1, x_1, y_2, x_2, ..., y_N, x_N, y_query (2N+1 tokens), each token the
// [Re; Im] stacking of one complex M-vector (width 2M).
struct PromptSequence {
  std::vector<std::vector<double>> tokens;
  std::vector<TokenRole> roles;
};

// i.i.d. CN(0, I) pilot columns, block-scaled so (1/(M N)) ||X_p||_F^2 == P
// exactly.
ComplexMatrix sample_pilots(const LinkConfig& cfg, std::size_t n, RandomState& rng);

// Transmit each pilot column through the (optionally impaired) channel and
// apply the variant's receiver-side preprocessing to the outputs.
// For Inverted and SvdCombined the preprocessing matrix comes from the LS
// estimate over this same pilot block; query outputs must be transformed with
// the matching classical op by the caller.
ContextSet build_context(const ChannelTask& task, const ComplexMatrix& pilots,
                         ContextVariant variant, const std::optional<IqGMatrices>& iq,
                         RandomState& rng);

PromptSequence tokenize(const ContextSet& ctx, const ComplexMatrix& y_query);

// Inverse of tokenize for one token row: [Re; Im] back to a complex M-vector.
ComplexMatrix token_to_complex(const std::vector<double>& token);

// Extract the prediction at the query position (token index 2N) from a
// per-token model output of width 2M.
ComplexMatrix read_prediction(const std::vector<std::vector<double>>& model_output, std::size_t n);

// Row indices carrying predictions for the in-context loss: {0, 2, ..., 2N}.
std::vector<std::size_t> loss_positions(std::size_t n);

}  // namespace iclmimo
