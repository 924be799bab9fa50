// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "iclmimo/channel.hpp"
#include "iclmimo/classical.hpp"
#include "iclmimo/cxmat.hpp"
#include "iclmimo/icl_model.hpp"
#include "iclmimo/iq.hpp"
#include "iclmimo/rng.hpp"

namespace iclmimo {

// Normalized pixels in channel-major order: values[c*h*w + y*w + x] in [0,1].
struct ImageTensor {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> values;
};

// Generic dense real matrix for the patch pipeline; patchify yields
// p^2 rows x (c*h*w/p^2) columns, one row per patch.
struct PatchMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;
};

// Lossless rearrangement into a p x p grid of patches. Requires h and w
// divisible by p. Row i*p+j holds patch (i, j) in channel-major pixel order.
PatchMatrix patchify(const ImageTensor& img, std::size_t p);
ImageTensor unpatchify(const PatchMatrix& pm, std::size_t c, std::size_t h, std::size_t w,
                       std::size_t p);

// Two FC layers, each followed by a ReLU, mapping the raw pilot block
// (columns x_1, y_1, ..., x_N, y_N as [Re; Im] stacks, 2M x 2N) to a learned
// context feature block of shape 2M x M.
struct IcarNet {
  std::size_t m = 0, n = 0;
  NamedTensor fc1_w, fc1_b, fc2_w, fc2_b;  // 2Nx4N, 1x4N, 4NxM, 1xM
};

IcarNet make_icar(std::size_t m, std::size_t n);
// Plain forward; result is 2M x M with real entries in the complex carrier.
ComplexMatrix icar_forward(const IcarNet& net, const ContextSet& ctx);

// Real reshape of the recovered block X to p^2 x (2ML/p^2) (row l of the
// intermediate L x 2M layout is [Re x_l; Im x_l] for column l of X), then
// column-concatenation of the repeated context rows. ctx_rows is the
// patches x ctx_width flat block from reshape_context, or empty for the
// no-context mode.
PatchMatrix concat_decoder_input(const ComplexMatrix& x_hat, const std::vector<double>& ctx_rows,
                                 std::size_t patches);

// Eq-style joint objective on one image: mean squared pixel error plus
// lambda times the in-context estimation term.
double total_loss(const ImageTensor& s, const ImageTensor& s_hat, double icl_term, double lambda);

// Peak signal-to-noise ratio on the 8-bit scale (MAX = 255); identical
// images report the 99 dB cap.
double psnr(const ImageTensor& s, const ImageTensor& s_hat);

// Procedural texture set: sinusoid mixtures plus pixel noise, clamped to
// [0,1]. Deterministic in the rng state.
std::vector<ImageTensor> make_textures(std::size_t count, std::size_t c, std::size_t h,
                                       std::size_t w, RandomState rng);

// Flat binary image loader: each file is u32 width, u32 height
// (little-endian), then height*width*3 interleaved RGB bytes. Files are read
// in sorted name order.
std::vector<ImageTensor> load_raw_image_dir(const std::string& dir);

enum class ContextInfo { None, Heatmap, Icar };
enum class LoopMode { Open, Closed };

struct JsccConfig {
  std::size_t img_c = 3, img_h = 16, img_w = 16;
  std::size_t patch_grid = 8;  // p; p^2 patches
  std::size_t m = 2;           // antennas
  std::size_t l = 64;          // channel uses per image
  double power = 1.0;
  double snr_db = 20.0;
  std::size_t hidden = 256;
  std::size_t n_pilots = 11;
  double lambda = 0.01;
  ContextInfo info = ContextInfo::Heatmap;
  LoopMode loop = LoopMode::Open;
  std::optional<IqCase> iq;       // empty = balanced hardware
  bool reuse_task_channel = true;  // pilots ride the data block's channel draw
  std::size_t images_per_step = 8;
  double lr = 1e-4;
  IclModelConfig denoiser;
};

// Frozen randomness for one image transmission: one fading block shared by
// pilots and data, with per-symbol noise.
struct JsccTask {
  ComplexMatrix h;
  std::optional<IqGMatrices> iq;
  double noise_var = 0.0;
  ComplexMatrix pilot_x;      // M x N (power-normalized)
  ComplexMatrix pilot_noise;  // M x N
  ComplexMatrix data_noise;   // M x L
};

JsccTask sample_jscc_task(const JsccConfig& cfg, RandomState& rng);

struct E2eResult {
  ImageTensor recon;
  double recon_mse = 0.0;  // per-pixel, [0,1] scale
  double icl_term = 0.0;
  double joint_loss = 0.0;
};

struct EvalSummary {
  double mean_psnr = 0.0;
  double mean_loss = 0.0;
};

// Per-patch MLP coder pair around the MIMO channel with the in-context
// denoiser in the loop. Owns the coder parameters and the denoiser; joint
// training updates both, the separate-design mode freezes the denoiser.
class JsccSystem {
 public:
  explicit JsccSystem(const JsccConfig& cfg);

  void init(RandomState rng);  // coder + icar; denoiser().init is separate
  const JsccConfig& config() const { return cfg_; }
  IclModel& denoiser() { return denoiser_; }
  const IclModel& denoiser() const { return denoiser_; }
  std::vector<NamedTensor>& coder_params() { return coder_; }
  const std::vector<NamedTensor>& coder_params() const { return coder_; }
  std::vector<NamedTensor> all_params() const;  // coder + denoiser, for checkpoints
  void load_all_params(const std::vector<NamedTensor>& tensors);

  std::size_t latent_per_patch() const { return latent_; }
  std::size_t patch_dim() const { return pdim_; }
  std::size_t context_width() const;  // 0 / M^2 / 2M^2

  // Adds one image's full pipeline to g and returns the joint-loss node plus
  // probes. coder_ids/den_ids come from materialize_coder / denoiser
  // materialize on the same graph.
  struct ImageGraph {
    TensorId loss, recon_term, icl_term, recon_patches;
  };
  std::vector<TensorId> materialize_coder(Graph& g, bool trainable) const;
  ImageGraph build_image_graph(Graph& g, const ImageTensor& img, const JsccTask& task,
                               const std::vector<TensorId>& coder_ids,
                               const std::vector<TensorId>& den_ids) const;

  // One Adam step over a mini-batch of images (fresh task per image drawn
  // from rng). update_denoiser=false is the separate-design mode: the
  // denoiser stays frozen but gradients still flow through it to the coder.
  double train_step(const std::vector<const ImageTensor*>& images, RandomState& rng,
                    bool update_denoiser);

  // Forward-only pipeline on one image (no parameter gradients).
  E2eResult run_image(const ImageTensor& img, const JsccTask& task) const;

  // Mean PSNR and joint loss over a set, one fresh task per image.
  EvalSummary evaluate(const std::vector<ImageTensor>& images, RandomState rng) const;

  // Plain encode for tests: patches (+ context when closed-loop) to the
  // power-normalized M x L block. ctx_rows as in concat_decoder_input.
  ComplexMatrix encode(const PatchMatrix& sp, const std::vector<double>& ctx_rows) const;
  // Plain decode for tests: decoder input block to the reconstructed image.
  ImageTensor decode(const PatchMatrix& dec_in) const;

 private:
  std::size_t coder_index(const std::string& name) const;
  void adam_apply(const std::vector<std::vector<double>>& coder_grads,
                  const std::vector<std::vector<double>>& den_grads, bool update_denoiser);

  JsccConfig cfg_;
  std::size_t pdim_ = 0;    // c*h*w / p^2
  std::size_t latent_ = 0;  // 2ML / p^2
  std::vector<NamedTensor> coder_;
  IclModel denoiser_;
  std::vector<std::vector<double>> adam_mc_, adam_vc_, adam_md_, adam_vd_;
  std::size_t adam_t_ = 0;
};

}  // namespace iclmimo
