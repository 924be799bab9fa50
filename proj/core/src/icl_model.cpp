// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/icl_model.hpp"

#include <cmath>
#include <numeric>

#include "iclmimo/errors.hpp"
#include "iclmimo/optim.hpp"

namespace iclmimo {

namespace {
constexpr double kInitStd = 0.02;
constexpr double kDivergenceLoss = 1e6;
}  // namespace

IclModel::IclModel(const IclModelConfig& cfg) : cfg_(cfg) {
  if (cfg.d % cfg.heads != 0) throw ShapeError("icl model: d must be divisible by heads");
  const std::size_t in = 2 * cfg.m + 1;
  const std::size_t d = cfg.d;
  const std::size_t out = 2 * cfg.m;

  auto add = [&](const std::string& name, std::size_t r, std::size_t c) {
    params_.push_back({name, r, c, std::vector<double>(r * c, 0.0)});
  };
  add("embed_w", in, d);
  add("pos_embed", cfg.max_tokens, d);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add(p + "ln1_g", 1, d);
    add(p + "ln1_b", 1, d);
    add(p + "wq", d, d);
    add(p + "wk", d, d);
    add(p + "wv", d, d);
    add(p + "wo", d, d);
    add(p + "ln2_g", 1, d);
    add(p + "ln2_b", 1, d);
    add(p + "mlp_w1", d, 4 * d);
    add(p + "mlp_b1", 1, 4 * d);
    add(p + "mlp_w2", 4 * d, d);
    add(p + "mlp_b2", 1, d);
  }
  add("out_w", d, out);
  add("out_b", 1, out);

  adam_m_.resize(params_.size());
  adam_v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_m_[i].assign(params_[i].value.size(), 0.0);
    adam_v_[i].assign(params_[i].value.size(), 0.0);
  }
}

std::size_t IclModel::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw ShapeError("icl model: unknown parameter " + name);
}

void IclModel::init(RandomState rng) {
  for (NamedTensor& t : params_) {
    const bool gauss = t.name == "embed_w" || t.name == "pos_embed" ||
                       t.name.find(".w") != std::string::npos ||
                       t.name.find("mlp_w") != std::string::npos;
    const bool ones = t.name.find("ln") != std::string::npos && t.name.back() == 'g';
    for (double& v : t.value) {
      if (gauss)
        v = kInitStd * rng.gaussian();
      else
        v = ones ? 1.0 : 0.0;
    }
  }
  adam_t_ = 0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    std::fill(adam_m_[i].begin(), adam_m_[i].end(), 0.0);
    std::fill(adam_v_[i].begin(), adam_v_[i].end(), 0.0);
  }
}

std::vector<TensorId> IclModel::materialize(Graph& g, bool trainable) const {
  std::vector<TensorId> ids;
  ids.reserve(params_.size());
  for (const NamedTensor& t : params_)
    ids.push_back(trainable ? g.param(t.rows, t.cols, t.value)
                            : g.constant(t.rows, t.cols, t.value));
  return ids;
}

TensorId IclModel::forward_on(Graph& g, const std::vector<TensorId>& p, TensorId tokens,
                              std::size_t batch, std::size_t seq_len) const {
  if (seq_len > cfg_.max_tokens)
    throw CapacityError("icl model: prompt length " + std::to_string(seq_len) +
                        " exceeds max positions " + std::to_string(cfg_.max_tokens));
  if (g.t(tokens).rows != batch * seq_len || g.t(tokens).cols != 2 * cfg_.m + 1)
    throw ShapeError("icl model: token tensor shape mismatch");

  std::size_t i = 0;
  auto next = [&]() { return p[i++]; };
  const TensorId embed_w = next();
  const TensorId pos = next();

  std::vector<std::size_t> head(seq_len);
  std::iota(head.begin(), head.end(), 0);
  TensorId x = g.add_tiled_rows(g.matmul(tokens, embed_w), g.gather_rows(pos, head));

  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const TensorId ln1_g = next(), ln1_b = next();
    const TensorId wq = next(), wk = next(), wv = next(), wo = next();
    const TensorId ln2_g = next(), ln2_b = next();
    const TensorId w1 = next(), b1 = next(), w2 = next(), b2 = next();

    const TensorId h = g.layer_norm(x, ln1_g, ln1_b);
    const TensorId att = g.causal_attention(g.matmul(h, wq), g.matmul(h, wk), g.matmul(h, wv),
                                            seq_len, cfg_.heads);
    x = g.add(x, g.matmul(att, wo));
    const TensorId h2 = g.layer_norm(x, ln2_g, ln2_b);
    const TensorId mid = g.gelu(g.add_bias_row(g.matmul(h2, w1), b1));
    x = g.add(x, g.add_bias_row(g.matmul(mid, w2), b2));
  }
  // Two separate statements: argument evaluation order must not reorder the
  // parameter stream.
  const TensorId out_w = next();
  const TensorId out_b = next();
  return g.add_bias_row(g.matmul(x, out_w), out_b);
}

TensorId IclModel::tokens_const(Graph& g, const std::vector<const PromptSequence*>& prompts) const {
  if (prompts.empty()) throw ShapeError("icl model: empty batch");
  const std::size_t seq_len = prompts[0]->tokens.size();
  const std::size_t w = 2 * cfg_.m;
  std::vector<double> flat;
  flat.reserve(prompts.size() * seq_len * (w + 1));
  for (const PromptSequence* pr : prompts) {
    if (pr->tokens.size() != seq_len || pr->roles.size() != seq_len)
      throw ShapeError("icl model: ragged prompt batch");
    for (std::size_t t = 0; t < seq_len; ++t) {
      if (pr->tokens[t].size() != w) throw ShapeError("icl model: token width mismatch");
      flat.insert(flat.end(), pr->tokens[t].begin(), pr->tokens[t].end());
      flat.push_back(pr->roles[t] == TokenRole::PilotInput ? 1.0 : 0.0);
    }
  }
  return g.constant(prompts.size() * seq_len, w + 1, flat);
}

TensorId IclModel::loss_on(Graph& g, TensorId per_token, TensorId targets, std::size_t batch,
                           std::size_t seq_len) const {
  if (seq_len % 2 != 1) throw ShapeError("icl model: prompt length must be odd");
  const std::size_t n = (seq_len - 1) / 2;  // pilot pairs
  if (g.t(targets).rows != batch * (n + 1) || g.t(targets).cols != 2 * cfg_.m)
    throw ShapeError("icl model: target shape misaligned with prompt");
  std::vector<std::size_t> idx;
  idx.reserve(batch * (n + 1));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t k = 0; k <= n; ++k) idx.push_back(b * seq_len + 2 * k);
  const TensorId at_y = g.gather_rows(per_token, idx);
  const double norm = 1.0 / (static_cast<double>(batch) * static_cast<double>(n + 1) *
                             static_cast<double>(cfg_.m));
  return g.scale(g.sum_sq(g.sub(at_y, targets)), norm);
}

std::vector<std::vector<double>> IclModel::forward(const PromptSequence& prompt) const {
  Graph g;
  const std::vector<TensorId> p = materialize(g, false);
  const TensorId tok = tokens_const(g, {&prompt});
  const TensorId out = forward_on(g, p, tok, 1, prompt.tokens.size());
  const TapeTensor& t = g.t(out);
  std::vector<std::vector<double>> rows(t.rows);
  for (std::size_t r = 0; r < t.rows; ++r)
    rows[r].assign(t.value.begin() + static_cast<std::ptrdiff_t>(r * t.cols),
                   t.value.begin() + static_cast<std::ptrdiff_t>((r + 1) * t.cols));
  return rows;
}

ComplexMatrix IclModel::predict(const ContextSet& ctx, const ComplexMatrix& y_query) const {
  const PromptSequence prompt = tokenize(ctx, y_query);
  return read_prediction(forward(prompt), ctx.pairs.size());
}

double IclModel::train_step(const TaskSampler& sampler, std::size_t step) {
  Graph g;
  const std::vector<TensorId> ids = materialize(g, true);

  std::vector<TrainExample> batch;
  batch.reserve(cfg_.batch);
  for (std::size_t e = 0; e < cfg_.batch; ++e) batch.push_back(sampler(step, e));

  std::vector<const PromptSequence*> prompts;
  prompts.reserve(batch.size());
  for (const TrainExample& ex : batch) prompts.push_back(&ex.prompt);
  const std::size_t seq_len = batch[0].prompt.tokens.size();
  const std::size_t n = (seq_len - 1) / 2;

  std::vector<double> tgt_flat;
  tgt_flat.reserve(batch.size() * (n + 1) * 2 * cfg_.m);
  for (const TrainExample& ex : batch) {
    if (ex.targets.size() != (n + 1) * 2 * cfg_.m)
      throw ShapeError("icl model: target length mismatch");
    tgt_flat.insert(tgt_flat.end(), ex.targets.begin(), ex.targets.end());
  }

  const TensorId tok = tokens_const(g, prompts);
  const TensorId out = forward_on(g, ids, tok, batch.size(), seq_len);
  const TensorId tgt = g.constant(batch.size() * (n + 1), 2 * cfg_.m, tgt_flat);
  const TensorId loss = loss_on(g, out, tgt, batch.size(), seq_len);

  const double loss_val = g.scalar(loss);
  if (!std::isfinite(loss_val) || loss_val > kDivergenceLoss)
    throw TrainingDivergedError("icl model: loss " + std::to_string(loss_val) + " at step " +
                                std::to_string(step));
  g.backward(loss);

  std::vector<std::vector<double>> grads(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    grads[i] = g.t(ids[i]).grad;
    for (double v : grads[i])
      if (!std::isfinite(v))
        throw NumericError("icl model: non-finite gradient in " + params_[i].name);
  }
  adam_apply(grads);
  return loss_val;
}

void IclModel::adam_apply(const std::vector<std::vector<double>>& grads) {
  ++adam_t_;
  for (std::size_t i = 0; i < params_.size(); ++i)
    adam_update(params_[i].value, adam_m_[i], adam_v_[i], grads[i], adam_t_, cfg_.lr);
}

TrainReport IclModel::train(const TaskSampler& sampler, std::size_t steps) {
  if (steps < 1) throw ShapeError("icl model: steps must be >= 1");
  TrainReport rep;
  rep.loss_trace.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) rep.loss_trace.push_back(train_step(sampler, s));
  return rep;
}

}  // namespace iclmimo
