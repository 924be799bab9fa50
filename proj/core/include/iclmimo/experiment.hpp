// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "iclmimo/channel.hpp"
#include "iclmimo/classical.hpp"
#include "iclmimo/config.hpp"
#include "iclmimo/csv.hpp"
#include "iclmimo/icl_model.hpp"
#include "iclmimo/iq.hpp"
#include "iclmimo/prompt.hpp"
#include "iclmimo/rng.hpp"

namespace iclmimo {

// Stream lanes hanging off the experiment seed. Every consumer derives its
// own child state, so adding draws in one lane never shifts another.
namespace lanes {
inline constexpr std::uint64_t kInit = 1;      // parameter initialization
inline constexpr std::uint64_t kTrain = 2;     // training task stream
inline constexpr std::uint64_t kTasks = 3;     // evaluation task stream
inline constexpr std::uint64_t kTextures = 4;  // image sets
// Sub-lanes inside one task.
inline constexpr std::uint64_t kTaskChannel = 0;
inline constexpr std::uint64_t kTaskIq = 1;
inline constexpr std::uint64_t kTaskPilots = 2;
inline constexpr std::uint64_t kTaskNoise = 3;
inline constexpr std::uint64_t kTaskQuery = 4;
}  // namespace lanes

// Resolved runtime setup for one (scenario, SNR) cell.
struct ExpSetup {
  std::size_t m = 2;
  std::size_t n = 11;       // pilot pairs used
  std::size_t n_max = 11;   // pilot pairs drawn (>= n; prefixes nest for sweeps)
  double power = 1.0;
  double snr_db = 20.0;
  std::optional<IqCase> iq;              // empty = balanced
  ContextVariant variant = ContextVariant::Raw;
  IclModelConfig model;
  std::size_t train_steps = 50000;
  std::size_t eval_tasks = 10000;
  std::uint64_t seed = 0;
};

// One fully drawn evaluation problem. The same task feeds both the learned
// and the classical path, so comparisons share their randomness.
struct EvalTask {
  ComplexMatrix h;
  std::optional<IqGMatrices> iq;
  double noise_var = 0.0;
  PilotBlock pilots;   // x_p and received y_p, both M x n
  ComplexMatrix x_q;   // M x 1 transmitted query
  ComplexMatrix y_q;   // M x 1 received query
};

// Deterministic task `index` of the stream rooted at `tasks_root`
// (itself usually root.split(lanes::kTasks)). Pilot blocks are drawn at
// length n_max and truncated to n, so sweeps over n see nested prefixes of
// one realization.
EvalTask make_eval_task(const ExpSetup& s, RandomState tasks_root, std::uint64_t index);

// Receiver-side preprocessing for the prompt path.
struct PreparedPrompt {
  ContextSet ctx;
  ComplexMatrix y_query;
};
PreparedPrompt apply_variant(const PilotBlock& pb, const ComplexMatrix& y_q,
                             ContextVariant variant);

// Per-symbol query MSE of the two-step classical baseline on one task.
double ls_query_mse(const EvalTask& t);
// Per-symbol query MSE of the trained model on one task.
double icl_query_mse(const IclModel& model, const EvalTask& t, ContextVariant variant);

// Mean per-symbol MSEs over `count` tasks of the seed's evaluation stream.
struct MsePair {
  double icl = 0.0;
  double ls = 0.0;
};
double mean_ls_mse(const ExpSetup& s, std::size_t count);
MsePair mean_mse(const ExpSetup& s, const IclModel& model, std::size_t count);

// Training example drawn from the step/element lanes of the training stream.
TrainExample make_train_example(const ExpSetup& s, RandomState train_root, std::size_t step,
                                std::size_t elem);

// Fresh model trained for s.train_steps on the setup's task distribution.
// `progress` (optional) is called every `progress_every` steps with
// (step, loss). When cache_path is non-empty the trained parameters are
// saved there, and an existing file is loaded instead of retraining.
IclModel train_model(const ExpSetup& s,
                     const std::function<void(std::size_t, double)>& progress = nullptr,
                     std::size_t progress_every = 1000, const std::string& cache_path = "");

// Headline recipes. Rows come out in deterministic order.
std::vector<ResultRow> run_mse_vs_snr(const ConfigMap& cfg, const std::string& checkpoint_dir);
std::vector<ResultRow> run_mse_vs_pilot_len(const ConfigMap& cfg,
                                            const std::string& checkpoint_dir);
std::vector<ResultRow> run_e2e_toy(const ConfigMap& cfg);

// Shared config plumbing for the CLI.
ExpSetup setup_from_config(const ConfigMap& cfg, std::uint64_t seed);
std::string scenario_tag(const ExpSetup& s, const std::string& method);
const std::set<std::string>& known_config_keys();

}  // namespace iclmimo
