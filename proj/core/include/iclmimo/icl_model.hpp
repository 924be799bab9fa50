// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "iclmimo/cxmat.hpp"
#include "iclmimo/graph.hpp"
#include "iclmimo/prompt.hpp"
#include "iclmimo/rng.hpp"

namespace iclmimo {

struct IclModelConfig {
  std::size_t m = 2;           // antennas; token width is 2m, input width 2m+1
  std::size_t d = 64;          // embedding dimension
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t max_tokens = 31;  // positions available; 2N+1 must fit
  double lr = 1e-4;
  std::size_t batch = 64;
};

struct NamedTensor {
  std::string name;
  std::size_t rows = 0, cols = 0;
  std::vector<double> value;
};

// One training example: a tokenized prompt plus the transmitted symbols the
// model is scored against at the y-token positions (pilot inputs and query,
// N+1 rows of width 2m).
struct TrainExample {
  PromptSequence prompt;
  std::vector<double> targets;  // (N+1) x 2m row-major
};

// sampler(step, elem) supplies batch element `elem` of training step `step`
// (both 0-based). Every call may draw a fresh task.
using TaskSampler = std::function<TrainExample(std::size_t step, std::size_t elem)>;

struct TrainReport {
  std::vector<double> loss_trace;  // one entry per step
};

// Decoder-only pre-norm transformer over [Re; Im; role] token rows, trained
// with Adam on the in-context denoising loss. Parameters and optimizer
// moments live in plain vectors; every step builds a fresh tape.
class IclModel {
 public:
  explicit IclModel(const IclModelConfig& cfg);

  // Draws the standard initialization: zero-mean 0.02-std normals for the
  // projection matrices and position table, ones for norm gains, zeros for
  // biases and the entire output projection. Resets Adam state.
  void init(RandomState rng);

  const IclModelConfig& config() const { return cfg_; }
  std::vector<NamedTensor>& params() { return params_; }
  const std::vector<NamedTensor>& params() const { return params_; }

  // Recreates every parameter on g, as tracked params (trainable) or frozen
  // constants. Order matches params().
  std::vector<TensorId> materialize(Graph& g, bool trainable) const;

  // Batched forward. tokens is (batch*seq_len) x (2m+1), rows grouped per
  // sequence. Returns (batch*seq_len) x 2m per-token predictions.
  // seq_len above max_tokens is a capacity error.
  TensorId forward_on(Graph& g, const std::vector<TensorId>& p, TensorId tokens,
                      std::size_t batch, std::size_t seq_len) const;

  // Builds the (batch*seq_len) x (2m+1) token constant for a batch of equal
  // length prompts (role flag appended from prompt.roles).
  TensorId tokens_const(Graph& g, const std::vector<const PromptSequence*>& prompts) const;

  // Mean over the batch of (1/((N+1)m)) * sum of squared errors at the
  // y-token positions. targets is the (batch*(N+1)) x 2m constant.
  TensorId loss_on(Graph& g, TensorId per_token, TensorId targets, std::size_t batch,
                   std::size_t seq_len) const;

  // Single-prompt forward with plain data in/out (tokens x 2m).
  std::vector<std::vector<double>> forward(const PromptSequence& prompt) const;

  // Prompt + forward + query-position read, as a complex M-vector.
  ComplexMatrix predict(const ContextSet& ctx, const ComplexMatrix& y_query) const;

  // One Adam update from a full batch; returns the batch loss.
  double train_step(const TaskSampler& sampler, std::size_t step);

  // Runs `steps` updates; loss trace has one entry per step. Throws
  // TrainingDivergedError when the loss passes 1e6 and NumericError when a
  // gradient goes non-finite.
  TrainReport train(const TaskSampler& sampler, std::size_t steps);

  std::size_t adam_steps() const { return adam_t_; }

 private:
  std::size_t find(const std::string& name) const;
  void adam_apply(const std::vector<std::vector<double>>& grads);

  IclModelConfig cfg_;
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> adam_m_, adam_v_;
  std::size_t adam_t_ = 0;
};

}  // namespace iclmimo
