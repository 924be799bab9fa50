// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "iclmimo/checkpoint.hpp"
#include "iclmimo/errors.hpp"
#include "iclmimo/jscc.hpp"

namespace iclmimo {

namespace {

constexpr std::size_t kEvalBatch = 250;  // prompts per forward in batched eval

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string iq_tag(const std::optional<IqCase>& iq) {
  if (!iq) return "balanced";
  return *iq == IqCase::Case1 ? "case1" : "case2";
}

std::string variant_tag(ContextVariant v) {
  switch (v) {
    case ContextVariant::Raw:
      return "raw";
    case ContextVariant::Inverted:
      return "inverted";
    case ContextVariant::SvdCombined:
      return "svd";
  }
  return "raw";
}

// One full task from an already-derived per-task stream. Pilot draws happen
// at length n_max so that truncation to n yields nested realizations.
EvalTask draw_task(const ExpSetup& s, const RandomState& task_rng) {
  if (s.n > s.n_max) throw ShapeError("experiment: n exceeds n_max");
  EvalTask t;
  t.noise_var = noise_var_for_snr(s.power, s.snr_db);

  RandomState ch = task_rng.split(lanes::kTaskChannel);
  t.h = ComplexMatrix(s.m, s.m);
  for (std::size_t i = 0; i < s.m; ++i)
    for (std::size_t j = 0; j < s.m; ++j) t.h(i, j) = ch.cgaussian(1.0);

  if (s.iq) {
    RandomState ir = task_rng.split(lanes::kTaskIq);
    t.iq = g_matrices(sample_iq(*s.iq, s.m, ir));
  }

  RandomState pr = task_rng.split(lanes::kTaskPilots);
  ComplexMatrix raw(s.m, s.n_max);
  for (std::size_t i = 0; i < s.m; ++i)
    for (std::size_t j = 0; j < s.n_max; ++j) raw(i, j) = pr.cgaussian(1.0);
  ComplexMatrix xp(s.m, s.n);
  for (std::size_t i = 0; i < s.m; ++i)
    for (std::size_t j = 0; j < s.n; ++j) xp(i, j) = raw(i, j);
  xp = normalize_power(xp, s.power);

  RandomState wr = task_rng.split(lanes::kTaskNoise);
  ComplexMatrix wp(s.m, s.n);
  for (std::size_t i = 0; i < s.m; ++i)
    for (std::size_t j = 0; j < s.n_max; ++j) {
      const cxd w = wr.cgaussian(t.noise_var);
      if (j < s.n) wp(i, j) = w;
    }
  ComplexMatrix wq(s.m, 1);
  for (std::size_t i = 0; i < s.m; ++i) wq(i, 0) = wr.cgaussian(t.noise_var);

  RandomState qr = task_rng.split(lanes::kTaskQuery);
  t.x_q = ComplexMatrix(s.m, 1);
  for (std::size_t i = 0; i < s.m; ++i) t.x_q(i, 0) = qr.cgaussian(1.0);
  t.x_q = scale(t.x_q, std::sqrt(s.power));

  if (t.iq) {
    const WidelyLinear wl = end_to_end_widely_linear(t.h, *t.iq);
    t.pilots.x_p = xp;
    t.pilots.y_p = add(add(matmul(wl.b1, xp), matmul(wl.b2, conjugate(xp))), wp);
    t.y_q = add(add(matmul(wl.b1, t.x_q), matmul(wl.b2, conjugate(t.x_q))), wq);
  } else {
    t.pilots.x_p = xp;
    t.pilots.y_p = add(matmul(t.h, xp), wp);
    t.y_q = add(matmul(t.h, t.x_q), wq);
  }
  return t;
}

std::string cache_name(const ExpSetup& s) {
  return "icl_" + iq_tag(s.iq) + "_" + variant_tag(s.variant) + "_m" + std::to_string(s.m) +
         "_n" + std::to_string(s.n) + "_d" + std::to_string(s.model.d) + "L" +
         std::to_string(s.model.layers) + "H" + std::to_string(s.model.heads) + "_snr" +
         fmt_g(s.snr_db) + "_steps" + std::to_string(s.train_steps) + "_b" +
         std::to_string(s.model.batch) + "_seed" + std::to_string(s.seed) + ".ckpt";
}

double query_mse(const ComplexMatrix& xhat, const ComplexMatrix& x) {
  double sq = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const cxd d = xhat(i, 0) - x(i, 0);
    sq += std::norm(d);
  }
  return sq / static_cast<double>(x.rows());
}

}  // namespace

EvalTask make_eval_task(const ExpSetup& s, RandomState tasks_root, std::uint64_t index) {
  return draw_task(s, tasks_root.split(index));
}

PreparedPrompt apply_variant(const PilotBlock& pb, const ComplexMatrix& y_q,
                             ContextVariant variant) {
  PilotBlock eff = pb;
  ComplexMatrix yq = y_q;
  if (variant == ContextVariant::Inverted) {
    auto [pb2, yq2] = invert_context(pb, y_q);
    eff = pb2;
    yq = yq2;
  } else if (variant == ContextVariant::SvdCombined) {
    const ComplexMatrix hhat = ls_channel_estimate(pb);
    eff.y_p = svd_combine(hhat, pb.y_p);
    yq = svd_combine(hhat, y_q);
  }
  PreparedPrompt out;
  out.y_query = yq;
  const std::size_t m = pb.x_p.rows(), n = pb.x_p.cols();
  out.ctx.pairs.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    ContextPair pair;
    pair.x = ComplexMatrix(m, 1);
    pair.y = ComplexMatrix(m, 1);
    for (std::size_t i = 0; i < m; ++i) {
      pair.x(i, 0) = eff.x_p(i, k);
      pair.y(i, 0) = eff.y_p(i, k);
    }
    out.ctx.pairs.push_back(std::move(pair));
  }
  return out;
}

double ls_query_mse(const EvalTask& t) {
  return query_mse(equalize_two_step(t.pilots, t.y_q), t.x_q);
}

double icl_query_mse(const IclModel& model, const EvalTask& t, ContextVariant variant) {
  const PreparedPrompt pp = apply_variant(t.pilots, t.y_q, variant);
  return query_mse(model.predict(pp.ctx, pp.y_query), t.x_q);
}

double mean_ls_mse(const ExpSetup& s, std::size_t count) {
  if (count == 0) throw ShapeError("experiment: task count must be positive");
  const RandomState root = RandomState::from_seed(s.seed).split(lanes::kTasks);
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) acc += ls_query_mse(make_eval_task(s, root, i));
  return acc / static_cast<double>(count);
}

MsePair mean_mse(const ExpSetup& s, const IclModel& model, std::size_t count) {
  if (count == 0) throw ShapeError("experiment: task count must be positive");
  const RandomState root = RandomState::from_seed(s.seed).split(lanes::kTasks);
  const std::size_t seq = 2 * s.n + 1;
  MsePair acc;
  std::size_t done = 0;
  while (done < count) {
    const std::size_t b = std::min(kEvalBatch, count - done);
    std::vector<EvalTask> tasks;
    tasks.reserve(b);
    std::vector<PromptSequence> prompts;
    prompts.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
      tasks.push_back(make_eval_task(s, root, done + i));
      const EvalTask& t = tasks.back();
      acc.ls += ls_query_mse(t);
      const PreparedPrompt pp = apply_variant(t.pilots, t.y_q, s.variant);
      prompts.push_back(tokenize(pp.ctx, pp.y_query));
    }
    Graph g;
    const std::vector<TensorId> ids = model.materialize(g, false);
    std::vector<const PromptSequence*> pp;
    pp.reserve(b);
    for (const PromptSequence& p : prompts) pp.push_back(&p);
    const TensorId tok = model.tokens_const(g, pp);
    const TensorId out = model.forward_on(g, ids, tok, b, seq);
    const TapeTensor& ot = g.t(out);
    for (std::size_t i = 0; i < b; ++i) {
      const double* row = &ot.value[(i * seq + 2 * s.n) * ot.cols];
      ComplexMatrix xhat(s.m, 1);
      for (std::size_t k = 0; k < s.m; ++k) xhat(k, 0) = cxd(row[k], row[s.m + k]);
      acc.icl += query_mse(xhat, tasks[i].x_q);
    }
    done += b;
  }
  acc.icl /= static_cast<double>(count);
  acc.ls /= static_cast<double>(count);
  return acc;
}

TrainExample make_train_example(const ExpSetup& s, RandomState train_root, std::size_t step,
                                std::size_t elem) {
  const EvalTask t = draw_task(s, train_root.split(step).split(elem));
  const PreparedPrompt pp = apply_variant(t.pilots, t.y_q, s.variant);
  TrainExample ex;
  ex.prompt = tokenize(pp.ctx, pp.y_query);
  ex.targets.resize((s.n + 1) * 2 * s.m);
  for (std::size_t k = 0; k < s.n; ++k)
    for (std::size_t i = 0; i < s.m; ++i) {
      ex.targets[k * 2 * s.m + i] = t.pilots.x_p(i, k).real();
      ex.targets[k * 2 * s.m + s.m + i] = t.pilots.x_p(i, k).imag();
    }
  for (std::size_t i = 0; i < s.m; ++i) {
    ex.targets[s.n * 2 * s.m + i] = t.x_q(i, 0).real();
    ex.targets[s.n * 2 * s.m + s.m + i] = t.x_q(i, 0).imag();
  }
  return ex;
}

IclModel train_model(const ExpSetup& s, const std::function<void(std::size_t, double)>& progress,
                     std::size_t progress_every, const std::string& cache_path) {
  IclModelConfig mc = s.model;
  mc.m = s.m;
  if (mc.max_tokens < 2 * s.n + 1) mc.max_tokens = 2 * s.n + 1;
  IclModel model(mc);

  if (!cache_path.empty() && std::filesystem::exists(cache_path)) {
    load_into_model(model, cache_path);
    return model;
  }

  const RandomState root = RandomState::from_seed(s.seed);
  model.init(root.split(lanes::kInit));
  const RandomState train_root = root.split(lanes::kTrain);
  const TaskSampler sampler = [&s, train_root](std::size_t step, std::size_t elem) {
    return make_train_example(s, train_root, step, elem);
  };
  for (std::size_t step = 0; step < s.train_steps; ++step) {
    const double loss = model.train_step(sampler, step);
    if (progress && ((step + 1) % progress_every == 0 || step + 1 == s.train_steps))
      progress(step + 1, loss);
  }
  if (!cache_path.empty()) {
    std::filesystem::create_directories(std::filesystem::path(cache_path).parent_path());
    save_checkpoint(cache_path, model.params());
  }
  return model;
}

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "experiment",    "iq",          "context_variant", "context_info",  "loop",
      "m",             "n",           "n_list",          "n_max",         "l",
      "p",             "power",       "lambda",          "snr",           "snr_list",
      "seeds",         "train_steps", "eval_tasks",      "batch",         "lr",
      "d",             "layers",      "heads",           "hidden",        "out",
      "images_per_step", "textures",  "eval_textures",   "jscc_steps",    "pretrain_steps",
      "reuse_task_channel", "image_dir"};
  return keys;
}

ExpSetup setup_from_config(const ConfigMap& cfg, std::uint64_t seed) {
  cfg.require_known(known_config_keys());
  ExpSetup s;
  s.seed = seed;
  s.m = cfg.get_u64("m", 2);
  s.n = cfg.get_u64("n", 11);
  s.n_max = cfg.get_u64("n_max", s.n);
  if (s.n_max < s.n) throw ConfigError("config: n_max must be >= n");
  s.power = cfg.get_f64("power", 1.0);
  s.snr_db = cfg.get_f64("snr", 20.0);
  const std::string iq = cfg.get_str("iq", "balanced");
  if (iq == "balanced")
    s.iq.reset();
  else if (iq == "case1")
    s.iq = IqCase::Case1;
  else if (iq == "case2")
    s.iq = IqCase::Case2;
  else
    throw ConfigError("config: iq must be balanced|case1|case2, got '" + iq + "'");
  const std::string var = cfg.get_str("context_variant", "raw");
  if (var == "raw")
    s.variant = ContextVariant::Raw;
  else if (var == "inverted")
    s.variant = ContextVariant::Inverted;
  else if (var == "svd")
    s.variant = ContextVariant::SvdCombined;
  else
    throw ConfigError("config: context_variant must be raw|inverted|svd, got '" + var + "'");
  s.model.m = s.m;
  s.model.d = cfg.get_u64("d", 64);
  s.model.layers = cfg.get_u64("layers", 2);
  s.model.heads = cfg.get_u64("heads", 4);
  s.model.lr = cfg.get_f64("lr", 1e-4);
  s.model.batch = cfg.get_u64("batch", 64);
  s.model.max_tokens = 2 * s.n_max + 1;
  s.train_steps = cfg.get_u64("train_steps", 50000);
  s.eval_tasks = cfg.get_u64("eval_tasks", 10000);
  return s;
}

std::string scenario_tag(const ExpSetup& s, const std::string& method) {
  if (method == "ls") return "ls_" + iq_tag(s.iq);
  std::string tag = method;
  if (s.variant != ContextVariant::Raw) tag += "_" + variant_tag(s.variant);
  return tag + "_" + iq_tag(s.iq);
}

std::vector<ResultRow> run_mse_vs_snr(const ConfigMap& cfg, const std::string& checkpoint_dir) {
  const std::vector<double> snrs = cfg.get_f64_list("snr_list", {-10.0, 0.0, 10.0, 20.0});
  const std::vector<std::uint64_t> seeds = cfg.get_u64_list("seeds", {0});
  std::vector<ResultRow> rows;
  for (const std::uint64_t seed : seeds) {
    for (const double snr : snrs) {
      ExpSetup s = setup_from_config(cfg, seed);
      s.snr_db = snr;
      if (s.train_steps == 0) {
        const double ls = mean_ls_mse(s, s.eval_tasks);
        rows.push_back({"mse_vs_snr", scenario_tag(s, "ls"), snr, s.n, seed, "mse", ls});
        continue;
      }
      const std::string cache =
          checkpoint_dir.empty() ? "" : checkpoint_dir + "/" + cache_name(s);
      const IclModel model = train_model(s, nullptr, 1000, cache);
      const MsePair pair = mean_mse(s, model, s.eval_tasks);
      rows.push_back({"mse_vs_snr", scenario_tag(s, "icl"), snr, s.n, seed, "mse", pair.icl});
      rows.push_back({"mse_vs_snr", scenario_tag(s, "ls"), snr, s.n, seed, "mse", pair.ls});
    }
  }
  return rows;
}

std::vector<ResultRow> run_mse_vs_pilot_len(const ConfigMap& cfg,
                                            const std::string& checkpoint_dir) {
  const std::vector<std::uint64_t> ns = cfg.get_u64_list("n_list", {3, 7, 11, 15});
  const std::vector<std::uint64_t> seeds = cfg.get_u64_list("seeds", {0});
  std::vector<ResultRow> rows;
  for (const std::uint64_t seed : seeds) {
    ExpSetup base = setup_from_config(cfg, seed);
    const std::size_t n_max =
        static_cast<std::size_t>(*std::max_element(ns.begin(), ns.end()));
    base.n = n_max;
    base.n_max = n_max;
    base.model.max_tokens = 2 * n_max + 1;

    if (base.train_steps == 0) {
      for (const std::uint64_t n : ns) {
        ExpSetup s = base;
        s.n = static_cast<std::size_t>(n);
        const double ls = mean_ls_mse(s, s.eval_tasks);
        rows.push_back(
            {"mse_vs_pilots", scenario_tag(s, "ls"), s.snr_db, s.n, seed, "mse", ls});
      }
      continue;
    }
    // One model covers every prompt length: the in-context loss scores every
    // prefix, so training at n_max trains all shorter prompt lengths too.
    const std::string cache =
        checkpoint_dir.empty() ? "" : checkpoint_dir + "/" + cache_name(base);
    const IclModel model = train_model(base, nullptr, 1000, cache);
    for (const std::uint64_t n : ns) {
      ExpSetup s = base;
      s.n = static_cast<std::size_t>(n);
      const MsePair pair = mean_mse(s, model, s.eval_tasks);
      rows.push_back(
          {"mse_vs_pilots", scenario_tag(s, "icl"), s.snr_db, s.n, seed, "mse", pair.icl});
      rows.push_back(
          {"mse_vs_pilots", scenario_tag(s, "ls"), s.snr_db, s.n, seed, "mse", pair.ls});
    }
  }
  return rows;
}

std::vector<ResultRow> run_e2e_toy(const ConfigMap& cfg) {
  cfg.require_known(known_config_keys());
  const std::vector<std::uint64_t> seeds = cfg.get_u64_list("seeds", {0});
  std::vector<ResultRow> rows;
  for (const std::uint64_t seed : seeds) {
    JsccConfig jc;
    jc.img_c = 3;
    jc.img_h = 16;
    jc.img_w = 16;
    jc.patch_grid = cfg.get_u64("p", 8);
    jc.m = cfg.get_u64("m", 2);
    jc.l = cfg.get_u64("l", 64);
    jc.power = cfg.get_f64("power", 1.0);
    jc.snr_db = cfg.get_f64("snr", 20.0);
    jc.hidden = cfg.get_u64("hidden", 256);
    jc.n_pilots = cfg.get_u64("n", 11);
    jc.lambda = cfg.get_f64("lambda", 0.01);
    const std::string info = cfg.get_str("context_info", "heatmap");
    if (info == "none")
      jc.info = ContextInfo::None;
    else if (info == "heatmap")
      jc.info = ContextInfo::Heatmap;
    else if (info == "icar")
      jc.info = ContextInfo::Icar;
    else
      throw ConfigError("config: context_info must be none|heatmap|icar, got '" + info + "'");
    const std::string loop = cfg.get_str("loop", "open");
    if (loop == "open")
      jc.loop = LoopMode::Open;
    else if (loop == "closed")
      jc.loop = LoopMode::Closed;
    else
      throw ConfigError("config: loop must be open|closed, got '" + loop + "'");
    const std::string iq = cfg.get_str("iq", "balanced");
    if (iq == "balanced")
      jc.iq.reset();
    else if (iq == "case1")
      jc.iq = IqCase::Case1;
    else if (iq == "case2")
      jc.iq = IqCase::Case2;
    else
      throw ConfigError("config: iq must be balanced|case1|case2, got '" + iq + "'");
    jc.reuse_task_channel = cfg.get_bool("reuse_task_channel", true);
    jc.images_per_step = cfg.get_u64("images_per_step", 8);
    jc.lr = cfg.get_f64("lr", 1e-4);
    jc.denoiser.m = jc.m;
    jc.denoiser.d = cfg.get_u64("d", 64);
    jc.denoiser.layers = cfg.get_u64("layers", 2);
    jc.denoiser.heads = cfg.get_u64("heads", 4);
    jc.denoiser.max_tokens = 2 * jc.n_pilots + 1;
    jc.denoiser.lr = jc.lr;
    jc.denoiser.batch = cfg.get_u64("batch", 64);

    const std::size_t jscc_steps = cfg.get_u64("jscc_steps", 400);
    // The denoiser's training knee at this width sits near 6K steps; below
    // it the model barely denoises and the whole pipeline is capped.
    const std::size_t pretrain_steps = cfg.get_u64("pretrain_steps", 10000);
    const std::size_t n_train_imgs = cfg.get_u64("textures", 256);
    const std::size_t n_eval_imgs = cfg.get_u64("eval_textures", 64);

    const RandomState root = RandomState::from_seed(seed);
    std::vector<ImageTensor> train_imgs, eval_imgs;
    if (cfg.has("image_dir")) {
      const std::vector<ImageTensor> all = load_raw_image_dir(cfg.require_str("image_dir"));
      if (all.size() < 2) throw ConfigError("config: image_dir needs at least two images");
      const std::size_t cut = all.size() - std::min(n_eval_imgs, all.size() / 2);
      train_imgs.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cut));
      eval_imgs.assign(all.begin() + static_cast<std::ptrdiff_t>(cut), all.end());
    } else {
      const RandomState tex = root.split(lanes::kTextures);
      train_imgs = make_textures(n_train_imgs, jc.img_c, jc.img_h, jc.img_w, tex.split(0));
      eval_imgs = make_textures(n_eval_imgs, jc.img_c, jc.img_h, jc.img_w, tex.split(1));
    }

    // Denoiser pretraining on the pilot-task distribution (the separate
    // design's denoiser; joint training starts from the same state).
    ExpSetup ps;
    ps.m = jc.m;
    ps.n = jc.n_pilots;
    ps.n_max = jc.n_pilots;
    ps.power = jc.power;
    ps.snr_db = jc.snr_db;
    ps.iq = jc.iq;
    ps.variant = ContextVariant::Raw;
    ps.seed = seed;
    const RandomState pre_root = root.split(lanes::kTrain).split(0);
    const TaskSampler pre_sampler = [&ps, pre_root](std::size_t step, std::size_t elem) {
      return make_train_example(ps, pre_root, step, elem);
    };

    auto make_system = [&](double lambda) {
      JsccConfig c = jc;
      c.lambda = lambda;
      JsccSystem sys(c);
      sys.init(root.split(lanes::kInit).split(0));
      sys.denoiser().init(root.split(lanes::kInit).split(1));
      return sys;
    };

    const RandomState eval_rng = root.split(lanes::kTasks).split(0);

    // Untrained reference: everything at initialization.
    JsccSystem untrained = make_system(jc.lambda);
    const EvalSummary ev_untrained = untrained.evaluate(eval_imgs, eval_rng);

    std::vector<NamedTensor> pretrained;
    {
      JsccSystem warm = make_system(jc.lambda);
      for (std::size_t step = 0; step < pretrain_steps; ++step)
        warm.denoiser().train_step(pre_sampler, step);
      pretrained = warm.denoiser().params();
    }

    const RandomState fit_rng_root = root.split(lanes::kTrain).split(1);
    auto fit = [&](JsccSystem& sys, bool update_denoiser) {
      RandomState task_rng = fit_rng_root;
      for (std::size_t step = 0; step < jscc_steps; ++step) {
        std::vector<const ImageTensor*> batch;
        batch.reserve(jc.images_per_step);
        for (std::size_t i = 0; i < jc.images_per_step; ++i)
          batch.push_back(&train_imgs[(step * jc.images_per_step + i) % train_imgs.size()]);
        sys.train_step(batch, task_rng, update_denoiser);
      }
    };

    auto emit = [&](const std::string& scenario, const EvalSummary& ev) {
      rows.push_back(
          {"e2e_toy", scenario + "_" + iq_tag(jc.iq), jc.snr_db, jc.n_pilots, seed, "loss",
           ev.mean_loss});
      rows.push_back(
          {"e2e_toy", scenario + "_" + iq_tag(jc.iq), jc.snr_db, jc.n_pilots, seed, "psnr",
           ev.mean_psnr});
    };

    emit("untrained", ev_untrained);

    JsccSystem separate = make_system(jc.lambda);
    for (std::size_t i = 0; i < pretrained.size(); ++i)
      separate.denoiser().params()[i].value = pretrained[i].value;
    fit(separate, false);
    emit("separate", separate.evaluate(eval_imgs, eval_rng));

    JsccSystem joint = make_system(jc.lambda);
    for (std::size_t i = 0; i < pretrained.size(); ++i)
      joint.denoiser().params()[i].value = pretrained[i].value;
    fit(joint, true);
    emit("joint", joint.evaluate(eval_imgs, eval_rng));

    JsccSystem ablate = make_system(0.0);
    for (std::size_t i = 0; i < pretrained.size(); ++i)
      ablate.denoiser().params()[i].value = pretrained[i].value;
    fit(ablate, true);
    emit("joint_lambda0", ablate.evaluate(eval_imgs, eval_rng));
  }
  return rows;
}

}  // namespace iclmimo
