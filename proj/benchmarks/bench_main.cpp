// SPDX-License-Identifier: Apache-2.0
// Hot-path timings: complex kernels, classical baseline, tape forward and
// backward, one optimizer step. Run with --benchmark_min_time=... to tighten.
#include <benchmark/benchmark.h>

#include "iclmimo/channel.hpp"
#include "iclmimo/classical.hpp"
#include "iclmimo/cxmat.hpp"
#include "iclmimo/experiment.hpp"
#include "iclmimo/icl_model.hpp"
#include "iclmimo/prompt.hpp"
#include "iclmimo/rng.hpp"
#include "iclmimo/threads.hpp"

namespace {

using namespace iclmimo;

ComplexMatrix random_cx(std::size_t r, std::size_t c, RandomState& rng) {
  ComplexMatrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.cgaussian(1.0);
  return m;
}

void bm_complex_matmul(benchmark::State& state) {
  RandomState rng = RandomState::from_seed(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const ComplexMatrix a = random_cx(n, n, rng);
  const ComplexMatrix b = random_cx(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(bm_complex_matmul)->Arg(2)->Arg(8)->Arg(32);

void bm_svd(benchmark::State& state) {
  RandomState rng = RandomState::from_seed(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  const ComplexMatrix a = random_cx(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(svd(a));
}
BENCHMARK(bm_svd)->Arg(2)->Arg(8)->Arg(16);

void bm_pinv(benchmark::State& state) {
  RandomState rng = RandomState::from_seed(3);
  const ComplexMatrix a = random_cx(2, 11, rng);
  for (auto _ : state) benchmark::DoNotOptimize(pinv(a));
}
BENCHMARK(bm_pinv);

void bm_transmit(benchmark::State& state) {
  RandomState rng = RandomState::from_seed(4);
  const LinkConfig cfg{2, 256, 1.0, 0};
  const ChannelTask task = sample_task(cfg, 0.01, rng);
  const ComplexMatrix x = random_cx(2, 256, rng);
  for (auto _ : state) benchmark::DoNotOptimize(transmit(task, x, rng));
}
BENCHMARK(bm_transmit);

void bm_ls_two_step(benchmark::State& state) {
  ExpSetup s;
  s.snr_db = 20.0;
  const RandomState root = RandomState::from_seed(5).split(lanes::kTasks);
  const EvalTask t = make_eval_task(s, root, 0);
  for (auto _ : state) benchmark::DoNotOptimize(equalize_two_step(t.pilots, t.y_q));
}
BENCHMARK(bm_ls_two_step);

IclModel small_model() {
  IclModelConfig mc;
  mc.max_tokens = 23;
  IclModel model(mc);
  model.init(RandomState::from_seed(7));
  return model;
}

void bm_model_forward_batch64(benchmark::State& state) {
  const IclModel model = small_model();
  ExpSetup s;
  const RandomState root = RandomState::from_seed(8).split(lanes::kTrain);
  std::vector<PromptSequence> prompts;
  std::vector<const PromptSequence*> pp;
  for (std::size_t e = 0; e < 64; ++e)
    prompts.push_back(make_train_example(s, root, 0, e).prompt);
  for (const auto& p : prompts) pp.push_back(&p);
  for (auto _ : state) {
    Graph g;
    const auto ids = model.materialize(g, false);
    const TensorId tok = model.tokens_const(g, pp);
    benchmark::DoNotOptimize(model.forward_on(g, ids, tok, 64, 23));
  }
}
BENCHMARK(bm_model_forward_batch64)->Unit(benchmark::kMillisecond);

void bm_model_train_step(benchmark::State& state) {
  IclModel model = small_model();
  ExpSetup s;
  const RandomState root = RandomState::from_seed(9).split(lanes::kTrain);
  const TaskSampler sampler = [&s, root](std::size_t step, std::size_t elem) {
    return make_train_example(s, root, step, elem);
  };
  std::size_t step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(model.train_step(sampler, step++));
}
BENCHMARK(bm_model_train_step)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  iclmimo::configure_threads();
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  return 0;
}
