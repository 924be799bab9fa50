// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/jscc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "iclmimo/errors.hpp"
#include "iclmimo/optim.hpp"

namespace iclmimo {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kDivergenceLoss = 1e6;
constexpr double kPsnrCap = 99.0;

// Column l of a complex M x L block as the [Re; Im] row of an L x 2M real
// layout. This is the fixed latent convention: the row-major flattening of
// the p^2 x (2ML/p^2) latent equals the row-major L x 2M stacking.
std::vector<double> real_rows_from_columns(const ComplexMatrix& x) {
  const std::size_t m = x.rows(), l = x.cols();
  std::vector<double> out(l * 2 * m);
  for (std::size_t j = 0; j < l; ++j)
    for (std::size_t i = 0; i < m; ++i) {
      out[j * 2 * m + i] = x(i, j).real();
      out[j * 2 * m + m + i] = x(i, j).imag();
    }
  return out;
}

ComplexMatrix columns_from_real_rows(const std::vector<double>& flat, std::size_t m,
                                     std::size_t l) {
  ComplexMatrix x(m, l);
  for (std::size_t j = 0; j < l; ++j)
    for (std::size_t i = 0; i < m; ++i)
      x(i, j) = cxd(flat[j * 2 * m + i], flat[j * 2 * m + m + i]);
  return x;
}

std::vector<double> transpose_flat(const std::vector<double>& a, std::size_t rows,
                                   std::size_t cols) {
  std::vector<double> t(a.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = a[r * cols + c];
  return t;
}

}  // namespace

PatchMatrix patchify(const ImageTensor& img, std::size_t p) {
  if (p == 0 || img.h % p != 0 || img.w % p != 0)
    throw ShapeError("patchify: image sides must be divisible by the patch grid");
  if (img.values.size() != img.c * img.h * img.w)
    throw ShapeError("patchify: value count does not match dimensions");
  const std::size_t ph = img.h / p, pw = img.w / p;
  PatchMatrix pm;
  pm.rows = p * p;
  pm.cols = img.c * ph * pw;
  pm.values.resize(pm.rows * pm.cols);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double* row = &pm.values[(i * p + j) * pm.cols];
      for (std::size_t c = 0; c < img.c; ++c)
        for (std::size_t dy = 0; dy < ph; ++dy)
          for (std::size_t dx = 0; dx < pw; ++dx)
            row[c * ph * pw + dy * pw + dx] =
                img.values[c * img.h * img.w + (i * ph + dy) * img.w + (j * pw + dx)];
    }
  return pm;
}

ImageTensor unpatchify(const PatchMatrix& pm, std::size_t c, std::size_t h, std::size_t w,
                       std::size_t p) {
  if (p == 0 || h % p != 0 || w % p != 0)
    throw ShapeError("unpatchify: image sides must be divisible by the patch grid");
  const std::size_t ph = h / p, pw = w / p;
  if (pm.rows != p * p || pm.cols != c * ph * pw || pm.values.size() != pm.rows * pm.cols)
    throw ShapeError("unpatchify: patch matrix shape does not match target dimensions");
  ImageTensor img;
  img.c = c;
  img.h = h;
  img.w = w;
  img.values.resize(c * h * w);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      const double* row = &pm.values[(i * p + j) * pm.cols];
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t dy = 0; dy < ph; ++dy)
          for (std::size_t dx = 0; dx < pw; ++dx)
            img.values[ch * h * w + (i * ph + dy) * w + (j * pw + dx)] =
                row[ch * ph * pw + dy * pw + dx];
    }
  return img;
}

IcarNet make_icar(std::size_t m, std::size_t n) {
  if (m == 0 || n == 0) throw ShapeError("icar: m and n must be positive");
  IcarNet net;
  net.m = m;
  net.n = n;
  net.fc1_w = {"icar.fc1_w", 2 * n, 4 * n, std::vector<double>(8 * n * n, 0.0)};
  net.fc1_b = {"icar.fc1_b", 1, 4 * n, std::vector<double>(4 * n, 0.0)};
  net.fc2_w = {"icar.fc2_w", 4 * n, m, std::vector<double>(4 * n * m, 0.0)};
  net.fc2_b = {"icar.fc2_b", 1, m, std::vector<double>(m, 0.0)};
  return net;
}

namespace {

// Raw pilot block as the 2M x 2N real matrix with columns
// x_1, y_1, ..., x_N, y_N, each an [Re; Im] stack.
std::vector<double> icar_input(const ContextSet& ctx, std::size_t m, std::size_t n) {
  if (ctx.pairs.size() != n)
    throw ShapeError("icar: expected " + std::to_string(n) + " context pairs, got " +
                     std::to_string(ctx.pairs.size()));
  std::vector<double> a(2 * m * 2 * n, 0.0);
  const std::size_t cols = 2 * n;
  for (std::size_t k = 0; k < n; ++k) {
    const ComplexMatrix& x = ctx.pairs[k].x;
    const ComplexMatrix& y = ctx.pairs[k].y;
    if (x.rows() != m || x.cols() != 1 || y.rows() != m || y.cols() != 1)
      throw ShapeError("icar: context vectors must be M x 1");
    for (std::size_t i = 0; i < m; ++i) {
      a[i * cols + 2 * k] = x(i, 0).real();
      a[(m + i) * cols + 2 * k] = x(i, 0).imag();
      a[i * cols + 2 * k + 1] = y(i, 0).real();
      a[(m + i) * cols + 2 * k + 1] = y(i, 0).imag();
    }
  }
  return a;
}

TensorId icar_on(Graph& g, TensorId fc1_w, TensorId fc1_b, TensorId fc2_w, TensorId fc2_b,
                 TensorId pairs) {
  const TensorId z1 = g.relu(g.add_bias_row(g.matmul(pairs, fc1_w), fc1_b));
  return g.relu(g.add_bias_row(g.matmul(z1, fc2_w), fc2_b));
}

}  // namespace

ComplexMatrix icar_forward(const IcarNet& net, const ContextSet& ctx) {
  Graph g;
  const TensorId w1 = g.constant(net.fc1_w.rows, net.fc1_w.cols, net.fc1_w.value);
  const TensorId b1 = g.constant(net.fc1_b.rows, net.fc1_b.cols, net.fc1_b.value);
  const TensorId w2 = g.constant(net.fc2_w.rows, net.fc2_w.cols, net.fc2_w.value);
  const TensorId b2 = g.constant(net.fc2_b.rows, net.fc2_b.cols, net.fc2_b.value);
  const TensorId in = g.constant(2 * net.m, 2 * net.n, icar_input(ctx, net.m, net.n));
  const TensorId out = icar_on(g, w1, b1, w2, b2, in);
  ComplexMatrix res(2 * net.m, net.m);
  for (std::size_t i = 0; i < res.rows(); ++i)
    for (std::size_t j = 0; j < res.cols(); ++j)
      res(i, j) = g.t(out).value[i * net.m + j];
  return res;
}

PatchMatrix concat_decoder_input(const ComplexMatrix& x_hat, const std::vector<double>& ctx_rows,
                                 std::size_t patches) {
  const std::size_t total = 2 * x_hat.rows() * x_hat.cols();
  if (patches == 0 || total % patches != 0)
    throw ShapeError("concat_decoder_input: patch count does not divide the block size");
  const std::size_t k = total / patches;
  std::size_t ctxw = 0;
  if (!ctx_rows.empty()) {
    if (ctx_rows.size() % patches != 0)
      throw ShapeError("concat_decoder_input: context rows do not tile the patches");
    ctxw = ctx_rows.size() / patches;
  }
  const std::vector<double> flat = real_rows_from_columns(x_hat);
  PatchMatrix out;
  out.rows = patches;
  out.cols = k + ctxw;
  out.values.resize(out.rows * out.cols);
  for (std::size_t r = 0; r < patches; ++r) {
    std::copy_n(&flat[r * k], k, &out.values[r * out.cols]);
    if (ctxw > 0) std::copy_n(&ctx_rows[r * ctxw], ctxw, &out.values[r * out.cols + k]);
  }
  return out;
}

double total_loss(const ImageTensor& s, const ImageTensor& s_hat, double icl_term,
                  double lambda) {
  if (s.c != s_hat.c || s.h != s_hat.h || s.w != s_hat.w ||
      s.values.size() != s_hat.values.size())
    throw ShapeError("total_loss: image shapes differ");
  if (lambda < 0.0) throw ConfigError("total_loss: lambda must be non-negative");
  double sq = 0.0;
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    const double d = s.values[i] - s_hat.values[i];
    sq += d * d;
  }
  return sq / static_cast<double>(s.values.size()) + lambda * icl_term;
}

double psnr(const ImageTensor& s, const ImageTensor& s_hat) {
  if (s.c != s_hat.c || s.h != s_hat.h || s.w != s_hat.w ||
      s.values.size() != s_hat.values.size())
    throw ShapeError("psnr: image shapes differ");
  double sq = 0.0;
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    const double d = s.values[i] - s_hat.values[i];
    sq += d * d;
  }
  const double mse = sq / static_cast<double>(s.values.size());
  if (mse == 0.0) return kPsnrCap;
  // 10 log10(255^2 / (255^2 mse)) on the 8-bit scale.
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

std::vector<ImageTensor> make_textures(std::size_t count, std::size_t c, std::size_t h,
                                       std::size_t w, RandomState rng) {
  std::vector<ImageTensor> out;
  out.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    ImageTensor img;
    img.c = c;
    img.h = h;
    img.w = w;
    img.values.resize(c * h * w);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double amp[2], fx[2], fy[2], phase[2];
      for (int k = 0; k < 2; ++k) {
        amp[k] = 0.1 + 0.2 * rng.next_unit();
        fx[k] = 0.5 + 2.0 * rng.next_unit();
        fy[k] = 0.5 + 2.0 * rng.next_unit();
        phase[k] = 2.0 * std::numbers::pi * rng.next_unit();
      }
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double v = 0.5;
          for (int k = 0; k < 2; ++k)
            v += amp[k] * std::sin(2.0 * std::numbers::pi *
                                       (fx[k] * static_cast<double>(x) / static_cast<double>(w) +
                                        fy[k] * static_cast<double>(y) / static_cast<double>(h)) +
                                   phase[k]);
          v += 0.08 * rng.gaussian();
          img.values[ch * h * w + y * w + x] = std::clamp(v, 0.0, 1.0);
        }
    }
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<ImageTensor> load_raw_image_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<ImageTensor> out;
  for (const fs::path& f : files) {
    std::ifstream is(f, std::ios::binary);
    std::uint32_t w = 0, h = 0;
    is.read(reinterpret_cast<char*>(&w), 4);
    is.read(reinterpret_cast<char*>(&h), 4);
    if (!is || w == 0 || h == 0)
      throw ConfigError("image loader: bad header in " + f.string());
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw ConfigError("image loader: truncated pixel data in " + f.string());
    ImageTensor img;
    img.c = 3;
    img.h = h;
    img.w = w;
    img.values.resize(3 * static_cast<std::size_t>(h) * w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < 3; ++ch)
          img.values[ch * h * w + y * w + x] =
              static_cast<double>(buf[(y * w + x) * 3 + ch]) / 255.0;
    out.push_back(std::move(img));
  }
  return out;
}

JsccTask sample_jscc_task(const JsccConfig& cfg, RandomState& rng) {
  JsccTask task;
  const LinkConfig link{cfg.m, cfg.l, cfg.power, 0};
  task.noise_var = noise_var_for_snr(cfg.power, cfg.snr_db);
  const ChannelTask ch = sample_task(link, task.noise_var, rng);
  task.h = ch.h;
  if (cfg.iq) task.iq = g_matrices(sample_iq(*cfg.iq, cfg.m, rng));
  task.pilot_x = sample_pilots(link, cfg.n_pilots, rng);
  task.pilot_noise = ComplexMatrix(cfg.m, cfg.n_pilots);
  for (std::size_t i = 0; i < cfg.m; ++i)
    for (std::size_t j = 0; j < cfg.n_pilots; ++j)
      task.pilot_noise(i, j) = rng.cgaussian(task.noise_var);
  task.data_noise = ComplexMatrix(cfg.m, cfg.l);
  for (std::size_t i = 0; i < cfg.m; ++i)
    for (std::size_t j = 0; j < cfg.l; ++j) task.data_noise(i, j) = rng.cgaussian(task.noise_var);
  return task;
}

JsccSystem::JsccSystem(const JsccConfig& cfg) : cfg_(cfg), denoiser_(cfg.denoiser) {
  if (cfg.patch_grid == 0 || cfg.img_h % cfg.patch_grid != 0 || cfg.img_w % cfg.patch_grid != 0)
    throw ConfigError("jscc: image sides must be divisible by the patch grid");
  const std::size_t patches = cfg.patch_grid * cfg.patch_grid;
  if ((2 * cfg.m * cfg.l) % patches != 0)
    throw ConfigError("jscc: 2*M*L must be divisible by the patch count");
  if (cfg.n_pilots == 0) throw ConfigError("jscc: at least one pilot pair is required");
  if (cfg.denoiser.m != cfg.m) throw ConfigError("jscc: denoiser antenna count mismatch");
  if (cfg.denoiser.max_tokens < 2 * cfg.n_pilots + 1)
    throw ConfigError("jscc: denoiser position table too small for the pilot count");
  pdim_ = cfg.img_c * cfg.img_h * cfg.img_w / patches;
  latent_ = 2 * cfg.m * cfg.l / patches;

  const std::size_t ctxw = context_width();
  const std::size_t enc_in = pdim_ + (cfg.loop == LoopMode::Closed ? ctxw : 0);
  const std::size_t dec_in = latent_ + ctxw;
  auto add = [&](const std::string& name, std::size_t r, std::size_t c) {
    coder_.push_back({name, r, c, std::vector<double>(r * c, 0.0)});
  };
  add("enc_w1", enc_in, cfg.hidden);
  add("enc_b1", 1, cfg.hidden);
  add("enc_w2", cfg.hidden, latent_);
  add("enc_b2", 1, latent_);
  add("dec_w1", dec_in, cfg.hidden);
  add("dec_b1", 1, cfg.hidden);
  add("dec_w2", cfg.hidden, pdim_);
  add("dec_b2", 1, pdim_);
  if (cfg.info == ContextInfo::Icar) {
    const IcarNet net = make_icar(cfg.m, cfg.n_pilots);
    coder_.push_back(net.fc1_w);
    coder_.push_back(net.fc1_b);
    coder_.push_back(net.fc2_w);
    coder_.push_back(net.fc2_b);
  }
  adam_mc_.resize(coder_.size());
  adam_vc_.resize(coder_.size());
  for (std::size_t i = 0; i < coder_.size(); ++i) {
    adam_mc_[i].assign(coder_[i].value.size(), 0.0);
    adam_vc_[i].assign(coder_[i].value.size(), 0.0);
  }
  adam_md_.resize(denoiser_.params().size());
  adam_vd_.resize(denoiser_.params().size());
  for (std::size_t i = 0; i < adam_md_.size(); ++i) {
    adam_md_[i].assign(denoiser_.params()[i].value.size(), 0.0);
    adam_vd_[i].assign(denoiser_.params()[i].value.size(), 0.0);
  }
}

std::size_t JsccSystem::context_width() const {
  switch (cfg_.info) {
    case ContextInfo::None:
      return 0;
    case ContextInfo::Heatmap:
      return cfg_.m * cfg_.m;
    case ContextInfo::Icar:
      return 2 * cfg_.m * cfg_.m;
  }
  return 0;
}

void JsccSystem::init(RandomState rng) {
  for (NamedTensor& t : coder_) {
    const bool weight = t.name.find("_w") != std::string::npos;
    for (double& v : t.value) v = weight ? kInitStd * rng.gaussian() : 0.0;
  }
  adam_t_ = 0;
  for (std::size_t i = 0; i < coder_.size(); ++i) {
    std::fill(adam_mc_[i].begin(), adam_mc_[i].end(), 0.0);
    std::fill(adam_vc_[i].begin(), adam_vc_[i].end(), 0.0);
  }
  for (std::size_t i = 0; i < adam_md_.size(); ++i) {
    std::fill(adam_md_[i].begin(), adam_md_[i].end(), 0.0);
    std::fill(adam_vd_[i].begin(), adam_vd_[i].end(), 0.0);
  }
}

std::size_t JsccSystem::coder_index(const std::string& name) const {
  for (std::size_t i = 0; i < coder_.size(); ++i)
    if (coder_[i].name == name) return i;
  throw ShapeError("jscc: unknown coder tensor " + name);
}

std::vector<NamedTensor> JsccSystem::all_params() const {
  std::vector<NamedTensor> out = coder_;
  const std::vector<NamedTensor>& den = denoiser_.params();
  out.insert(out.end(), den.begin(), den.end());
  return out;
}

void JsccSystem::load_all_params(const std::vector<NamedTensor>& tensors) {
  auto fill = [&](NamedTensor& dst) {
    for (const NamedTensor& t : tensors)
      if (t.name == dst.name) {
        if (t.rows != dst.rows || t.cols != dst.cols)
          throw ShapeError("jscc: tensor " + dst.name + " shape mismatch on load");
        dst.value = t.value;
        return;
      }
    throw CheckpointError("jscc: missing tensor " + dst.name);
  };
  for (NamedTensor& t : coder_) fill(t);
  for (NamedTensor& t : denoiser_.params()) fill(t);
}

std::vector<TensorId> JsccSystem::materialize_coder(Graph& g, bool trainable) const {
  std::vector<TensorId> ids;
  ids.reserve(coder_.size());
  for (const NamedTensor& t : coder_)
    ids.push_back(trainable ? g.param(t.rows, t.cols, t.value)
                            : g.constant(t.rows, t.cols, t.value));
  return ids;
}

JsccSystem::ImageGraph JsccSystem::build_image_graph(Graph& g, const ImageTensor& img,
                                                     const JsccTask& task,
                                                     const std::vector<TensorId>& coder_ids,
                                                     const std::vector<TensorId>& den_ids) const {
  const std::size_t m = cfg_.m, l = cfg_.l, n = cfg_.n_pilots;
  const std::size_t patches = cfg_.patch_grid * cfg_.patch_grid;
  const std::size_t chw = cfg_.img_c * cfg_.img_h * cfg_.img_w;
  const std::size_t seq = 2 * n + 1;

  auto cid = [&](const char* name) { return coder_ids[coder_index(name)]; };

  // Pilot transmission happens off-tape: nothing upstream of it is trained.
  const IqGMatrices geff = task.iq ? *task.iq : g_matrices(balanced_iq(m));
  const WidelyLinear wl = end_to_end_widely_linear(task.h, geff);
  const ComplexMatrix y_p = add(add(matmul(wl.b1, task.pilot_x),
                                    matmul(wl.b2, conjugate(task.pilot_x))),
                                task.pilot_noise);
  const PilotBlock pblock{task.pilot_x, y_p};

  // Context block for the coder (constant for the heatmap, trainable tape
  // nodes for the learned ICAR features).
  TensorId ctx_rep = 0;
  bool has_ctx = false;
  if (cfg_.info == ContextInfo::Heatmap) {
    const ComplexMatrix h_est = ls_channel_estimate(pblock);
    const Heatmap heat = cfg_.loop == LoopMode::Closed ? heatmap_closed(h_est, task.noise_var)
                                                       : heatmap_open(h_est, task.noise_var);
    ctx_rep = g.constant(patches, m * m, reshape_context(heat.values, patches));
    has_ctx = true;
  } else if (cfg_.info == ContextInfo::Icar) {
    ContextSet ctx;
    for (std::size_t k = 0; k < n; ++k) {
      ContextPair pair;
      pair.x = ComplexMatrix(m, 1);
      pair.y = ComplexMatrix(m, 1);
      for (std::size_t i = 0; i < m; ++i) {
        pair.x(i, 0) = task.pilot_x(i, k);
        pair.y(i, 0) = y_p(i, k);
      }
      ctx.pairs.push_back(std::move(pair));
    }
    const TensorId pairs = g.constant(2 * m, 2 * n, icar_input(ctx, m, n));
    const TensorId feat = icar_on(g, cid("icar.fc1_w"), cid("icar.fc1_b"), cid("icar.fc2_w"),
                                  cid("icar.fc2_b"), pairs);
    ctx_rep = g.flatten_repeat(feat, patches);
    has_ctx = true;
  }

  // Encoder: per-patch MLP to the latent, then the exact power projection.
  const PatchMatrix sp = patchify(img, cfg_.patch_grid);
  const TensorId sp_const = g.constant(sp.rows, sp.cols, sp.values);
  TensorId enc_in = sp_const;
  if (cfg_.loop == LoopMode::Closed && has_ctx) enc_in = g.concat_cols(sp_const, ctx_rep);
  const TensorId enc_h = g.gelu(g.add_bias_row(g.matmul(enc_in, cid("enc_w1")), cid("enc_b1")));
  const TensorId latent = g.add_bias_row(g.matmul(enc_h, cid("enc_w2")), cid("enc_b2"));
  const TensorId z = g.reshape(
      g.scale_to_power(latent, cfg_.power * static_cast<double>(m) * static_cast<double>(l)), l,
      2 * m);

  // Channel action in stacked-real coordinates: y = z B_r^T + w.
  const std::vector<double> br = widely_linear_real_stacked(wl);
  const TensorId brt = g.constant(2 * m, 2 * m, transpose_flat(br, 2 * m, 2 * m));
  const TensorId wn = g.constant(l, 2 * m, real_rows_from_columns(task.data_noise));
  const TensorId y = g.add(g.matmul(z, brt), wn);

  // Prompt batch: every data symbol is a query behind the same pilot block.
  std::vector<double> ptok(2 * n * (2 * m + 1), 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < m; ++i) {
      ptok[(2 * k) * (2 * m + 1) + i] = y_p(i, k).real();
      ptok[(2 * k) * (2 * m + 1) + m + i] = y_p(i, k).imag();
      ptok[(2 * k + 1) * (2 * m + 1) + i] = task.pilot_x(i, k).real();
      ptok[(2 * k + 1) * (2 * m + 1) + m + i] = task.pilot_x(i, k).imag();
    }
    ptok[(2 * k + 1) * (2 * m + 1) + 2 * m] = 1.0;
  }
  const TensorId pilot_tok = g.constant(2 * n, 2 * m + 1, ptok);
  const TensorId qtok = g.concat_cols(y, g.constant(l, 1, std::vector<double>(l, 0.0)));
  const TensorId base = g.concat_rows(pilot_tok, qtok);
  std::vector<std::size_t> idx;
  idx.reserve(l * seq);
  for (std::size_t s = 0; s < l; ++s) {
    for (std::size_t r = 0; r < 2 * n; ++r) idx.push_back(r);
    idx.push_back(2 * n + s);
  }
  const TensorId tok = g.gather_rows(base, idx);
  const TensorId den_out = denoiser_.forward_on(g, den_ids, tok, l, seq);

  // In-context loss at the y positions: pilot rows against the known pilots,
  // query rows against the transmitted block itself (a tape tensor, so the
  // estimation loss shapes the encoder too).
  std::vector<std::size_t> qidx(l);
  for (std::size_t s = 0; s < l; ++s) qidx[s] = s * seq + 2 * n;
  const TensorId pred_q = g.gather_rows(den_out, qidx);
  TensorId icl_sum = g.sum_sq(g.sub(pred_q, z));
  std::vector<std::size_t> pidx;
  pidx.reserve(l * n);
  for (std::size_t s = 0; s < l; ++s)
    for (std::size_t k = 0; k < n; ++k) pidx.push_back(s * seq + 2 * k);
  std::vector<double> ptgt(l * n * 2 * m);
  for (std::size_t s = 0; s < l; ++s)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < m; ++i) {
        ptgt[(s * n + k) * 2 * m + i] = task.pilot_x(i, k).real();
        ptgt[(s * n + k) * 2 * m + m + i] = task.pilot_x(i, k).imag();
      }
  const TensorId pred_p = g.gather_rows(den_out, pidx);
  const TensorId ptgt_c = g.constant(l * n, 2 * m, ptgt);
  icl_sum = g.add(icl_sum, g.sum_sq(g.sub(pred_p, ptgt_c)));
  const double icl_norm =
      1.0 / (static_cast<double>(l) * static_cast<double>(n + 1) * static_cast<double>(m));
  const TensorId icl_term = g.scale(icl_sum, icl_norm);

  // Decoder: recovered block (+ context) back to patches.
  TensorId dec_in = g.reshape(pred_q, patches, latent_);
  if (has_ctx) dec_in = g.concat_cols(dec_in, ctx_rep);
  const TensorId dec_h = g.gelu(g.add_bias_row(g.matmul(dec_in, cid("dec_w1")), cid("dec_b1")));
  const TensorId recon =
      g.sigmoid(g.add_bias_row(g.matmul(dec_h, cid("dec_w2")), cid("dec_b2")));

  const TensorId recon_term =
      g.scale(g.sum_sq(g.sub(recon, sp_const)), 1.0 / static_cast<double>(chw));
  const TensorId loss = g.add(recon_term, g.scale(icl_term, cfg_.lambda));
  return {loss, recon_term, icl_term, recon};
}

double JsccSystem::train_step(const std::vector<const ImageTensor*>& images, RandomState& rng,
                              bool update_denoiser) {
  if (images.empty()) throw ShapeError("jscc: empty training batch");
  Graph g;
  const std::vector<TensorId> coder_ids = materialize_coder(g, true);
  const std::vector<TensorId> den_ids = denoiser_.materialize(g, update_denoiser);

  TensorId acc = 0;
  bool first = true;
  for (const ImageTensor* img : images) {
    const JsccTask task = sample_jscc_task(cfg_, rng);
    const ImageGraph out = build_image_graph(g, *img, task, coder_ids, den_ids);
    acc = first ? out.loss : g.add(acc, out.loss);
    first = false;
  }
  const TensorId loss = g.scale(acc, 1.0 / static_cast<double>(images.size()));
  const double loss_val = g.scalar(loss);
  if (!std::isfinite(loss_val) || loss_val > kDivergenceLoss)
    throw TrainingDivergedError("jscc: loss " + std::to_string(loss_val));
  g.backward(loss);

  std::vector<std::vector<double>> cg(coder_.size()), dg;
  for (std::size_t i = 0; i < coder_.size(); ++i) {
    cg[i] = g.t(coder_ids[i]).grad;
    for (double v : cg[i])
      if (!std::isfinite(v)) throw NumericError("jscc: non-finite gradient in " + coder_[i].name);
  }
  if (update_denoiser) {
    dg.resize(den_ids.size());
    for (std::size_t i = 0; i < den_ids.size(); ++i) {
      dg[i] = g.t(den_ids[i]).grad;
      for (double v : dg[i])
        if (!std::isfinite(v))
          throw NumericError("jscc: non-finite gradient in " + denoiser_.params()[i].name);
    }
  }
  adam_apply(cg, dg, update_denoiser);
  return loss_val;
}

void JsccSystem::adam_apply(const std::vector<std::vector<double>>& coder_grads,
                            const std::vector<std::vector<double>>& den_grads,
                            bool update_denoiser) {
  ++adam_t_;
  for (std::size_t i = 0; i < coder_.size(); ++i)
    adam_update(coder_[i].value, adam_mc_[i], adam_vc_[i], coder_grads[i], adam_t_, cfg_.lr);
  if (update_denoiser)
    for (std::size_t i = 0; i < den_grads.size(); ++i)
      adam_update(denoiser_.params()[i].value, adam_md_[i], adam_vd_[i], den_grads[i], adam_t_,
                  cfg_.lr);
}

E2eResult JsccSystem::run_image(const ImageTensor& img, const JsccTask& task) const {
  Graph g;
  const std::vector<TensorId> coder_ids = materialize_coder(g, false);
  const std::vector<TensorId> den_ids = denoiser_.materialize(g, false);
  const ImageGraph out = build_image_graph(g, img, task, coder_ids, den_ids);
  E2eResult res;
  const TapeTensor& rp = g.t(out.recon_patches);
  PatchMatrix pm{rp.rows, rp.cols, rp.value};
  res.recon = unpatchify(pm, cfg_.img_c, cfg_.img_h, cfg_.img_w, cfg_.patch_grid);
  res.recon_mse = g.scalar(out.recon_term);
  res.icl_term = g.scalar(out.icl_term);
  res.joint_loss = g.scalar(out.loss);
  return res;
}

EvalSummary JsccSystem::evaluate(const std::vector<ImageTensor>& images, RandomState rng) const {
  if (images.empty()) throw ShapeError("jscc: empty evaluation set");
  EvalSummary s;
  for (const ImageTensor& img : images) {
    const JsccTask task = sample_jscc_task(cfg_, rng);
    const E2eResult r = run_image(img, task);
    s.mean_psnr += psnr(img, r.recon);
    s.mean_loss += r.joint_loss;
  }
  s.mean_psnr /= static_cast<double>(images.size());
  s.mean_loss /= static_cast<double>(images.size());
  return s;
}

ComplexMatrix JsccSystem::encode(const PatchMatrix& sp, const std::vector<double>& ctx_rows) const {
  const std::size_t patches = cfg_.patch_grid * cfg_.patch_grid;
  if (sp.rows != patches || sp.cols != pdim_)
    throw ShapeError("jscc encode: patch matrix must be patches x patch_dim");
  Graph g;
  const std::vector<TensorId> ids = materialize_coder(g, false);
  auto cid = [&](const char* name) { return ids[coder_index(name)]; };
  TensorId in = g.constant(sp.rows, sp.cols, sp.values);
  if (cfg_.loop == LoopMode::Closed && cfg_.info != ContextInfo::None) {
    const std::size_t ctxw = context_width();
    if (ctx_rows.size() != patches * ctxw)
      throw ShapeError("jscc encode: context block must be patches x context_width");
    in = g.concat_cols(in, g.constant(patches, ctxw, ctx_rows));
  }
  const TensorId h = g.gelu(g.add_bias_row(g.matmul(in, cid("enc_w1")), cid("enc_b1")));
  const TensorId latent = g.add_bias_row(g.matmul(h, cid("enc_w2")), cid("enc_b2"));
  const TensorId z = g.scale_to_power(
      latent, cfg_.power * static_cast<double>(cfg_.m) * static_cast<double>(cfg_.l));
  return columns_from_real_rows(g.t(z).value, cfg_.m, cfg_.l);
}

ImageTensor JsccSystem::decode(const PatchMatrix& dec_in) const {
  const std::size_t patches = cfg_.patch_grid * cfg_.patch_grid;
  const std::size_t want = latent_ + context_width();
  if (dec_in.rows != patches || dec_in.cols != want)
    throw ShapeError("jscc decode: input must be patches x (latent + context_width)");
  Graph g;
  const std::vector<TensorId> ids = materialize_coder(g, false);
  auto cid = [&](const char* name) { return ids[coder_index(name)]; };
  const TensorId in = g.constant(dec_in.rows, dec_in.cols, dec_in.values);
  const TensorId h = g.gelu(g.add_bias_row(g.matmul(in, cid("dec_w1")), cid("dec_b1")));
  const TensorId out = g.sigmoid(g.add_bias_row(g.matmul(h, cid("dec_w2")), cid("dec_b2")));
  const TapeTensor& t = g.t(out);
  return unpatchify({t.rows, t.cols, t.value}, cfg_.img_c, cfg_.img_h, cfg_.img_w,
                    cfg_.patch_grid);
}

}  // namespace iclmimo
