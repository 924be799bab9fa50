// SPDX-License-Identifier: Apache-2.0
// Experiment driver: train/evaluate the in-context denoiser, run the MSE
// sweeps and the toy end-to-end pipeline, and export plot columns.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "iclmimo/checkpoint.hpp"
#include "iclmimo/config.hpp"
#include "iclmimo/csv.hpp"
#include "iclmimo/errors.hpp"
#include "iclmimo/experiment.hpp"
#include "iclmimo/threads.hpp"

namespace {

struct Opts {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string input;  // export-plot positional
};

void add_common(CLI::App* sc, Opts& o) {
  sc->add_option("--config", o.config, "key=value configuration file");
  sc->add_option("--seed", o.seed, "experiment seed (overrides the config seeds list)");
  sc->add_option("--out", o.out, "output path (CSV or plot columns); stdout when absent");
  sc->add_option("--checkpoint", o.checkpoint,
                 "model checkpoint path (train/eval) or cache directory (sweeps)");
  sc->add_flag("--deterministic", o.deterministic,
               "pin the default seed to 0 when --seed is absent; runs are always "
               "reproducible for a fixed seed");
}

iclmimo::ConfigMap load_config(const Opts& o) {
  iclmimo::ConfigMap cfg =
      o.config.empty() ? iclmimo::ConfigMap{} : iclmimo::parse_config_file(o.config);
  if (o.seed) cfg.set("seeds", std::to_string(*o.seed));
  if (o.deterministic && !cfg.has("seeds")) cfg.set("seeds", "0");
  return cfg;
}

std::uint64_t first_seed(const iclmimo::ConfigMap& cfg) {
  return cfg.get_u64_list("seeds", {0}).front();
}

void emit_rows(const Opts& o, const std::vector<iclmimo::ResultRow>& rows) {
  if (o.out.empty())
    std::cout << iclmimo::csv_to_string(rows);
  else
    iclmimo::write_csv(o.out, rows);
}

std::string cache_dir(const Opts& o) {
  if (!o.checkpoint.empty()) return o.checkpoint;
  if (!o.out.empty()) {
    const auto parent = std::filesystem::path(o.out).parent_path();
    return (parent.empty() ? std::filesystem::path(".") : parent) / "checkpoints";
  }
  return "checkpoints";
}

void progress_print(std::size_t step, double loss) {
  std::printf("step %zu loss %.6f\n", step, loss);
  std::fflush(stdout);
}

int run_train(const Opts& o) {
  if (o.checkpoint.empty())
    throw iclmimo::ConfigError("train: --checkpoint <output path> is required");
  const iclmimo::ConfigMap cfg = load_config(o);
  const iclmimo::ExpSetup s = iclmimo::setup_from_config(cfg, first_seed(cfg));
  const iclmimo::IclModel model = iclmimo::train_model(s, progress_print, 1000, "");
  std::filesystem::create_directories(
      std::filesystem::absolute(o.checkpoint).parent_path());
  iclmimo::save_checkpoint(o.checkpoint, model.params());
  std::printf("saved %s\n", o.checkpoint.c_str());
  return 0;
}

int run_eval(const Opts& o) {
  if (o.checkpoint.empty() || !std::filesystem::exists(o.checkpoint))
    throw iclmimo::CheckpointError("eval: --checkpoint must name an existing model file");
  const iclmimo::ConfigMap cfg = load_config(o);
  const std::uint64_t seed = first_seed(cfg);
  iclmimo::ExpSetup s = iclmimo::setup_from_config(cfg, seed);
  iclmimo::IclModelConfig mc = s.model;
  if (mc.max_tokens < 2 * s.n + 1) mc.max_tokens = 2 * s.n + 1;
  iclmimo::IclModel model(mc);
  iclmimo::load_into_model(model, o.checkpoint);
  const iclmimo::MsePair pair = iclmimo::mean_mse(s, model, s.eval_tasks);
  std::vector<iclmimo::ResultRow> rows;
  rows.push_back({"eval", iclmimo::scenario_tag(s, "icl"), s.snr_db, s.n, seed, "mse", pair.icl});
  rows.push_back({"eval", iclmimo::scenario_tag(s, "ls"), s.snr_db, s.n, seed, "mse", pair.ls});
  emit_rows(o, rows);
  return 0;
}

int run_export(const Opts& o) {
  if (o.input.empty())
    throw iclmimo::ConfigError("export-plot: a results CSV path argument is required");
  const std::string text = iclmimo::plot_columns(iclmimo::read_csv(o.input));
  if (o.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream os(o.out, std::ios::binary | std::ios::trunc);
    if (!os) throw iclmimo::ConfigError("export-plot: cannot open " + o.out);
    os << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  iclmimo::configure_threads();
  CLI::App app{"in-context MIMO denoising lab"};
  app.require_subcommand(1);

  Opts o;
  CLI::App* sc_train = app.add_subcommand("train", "train one denoiser and save a checkpoint");
  CLI::App* sc_eval = app.add_subcommand("eval", "evaluate a checkpoint against the LS baseline");
  CLI::App* sc_snr = app.add_subcommand("mse-vs-snr", "MSE sweep over SNR points");
  CLI::App* sc_pilots = app.add_subcommand("mse-vs-pilots", "MSE sweep over pilot lengths");
  CLI::App* sc_toy = app.add_subcommand("e2e-toy", "toy joint source-channel pipeline");
  CLI::App* sc_export = app.add_subcommand("export-plot", "CSV to gnuplot-style columns");
  for (CLI::App* sc : {sc_train, sc_eval, sc_snr, sc_pilots, sc_toy, sc_export})
    add_common(sc, o);
  sc_export->add_option("csv", o.input, "results CSV produced by a sweep");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sc_train->parsed()) return run_train(o);
    if (sc_eval->parsed()) return run_eval(o);
    if (sc_snr->parsed()) {
      emit_rows(o, iclmimo::run_mse_vs_snr(load_config(o), cache_dir(o)));
      return 0;
    }
    if (sc_pilots->parsed()) {
      emit_rows(o, iclmimo::run_mse_vs_pilot_len(load_config(o), cache_dir(o)));
      return 0;
    }
    if (sc_toy->parsed()) {
      emit_rows(o, iclmimo::run_e2e_toy(load_config(o)));
      return 0;
    }
    if (sc_export->parsed()) return run_export(o);
  } catch (const iclmimo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
