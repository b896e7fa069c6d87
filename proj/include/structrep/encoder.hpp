#pragma once

// Structural-representation extractor.
//
//   image --patchify--> centred p x p patches           X   (P x 3p^2)
//         --affine-->   Z = X (W_patch + (alpha/r) B A)^T   (P x D)
//         --energy-->   Q = Z * Z (elementwise)             (P x D)
//         --head-->     O = gelu(Q W1^T + b1) W2^T + b2     (P x C), shared over patches
//         --flatten-->  v = O in raster order               (P*C)
//         --l2-->       f = v / |v|
//
// W_patch is a frozen random projection standing in for a pretrained
// backbone; only the low-rank adapter (A, B) and the head are trained. The
// momentum extractor shares W_patch and keeps its own copy of the trainables.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "structrep/numerics.hpp"
#include "structrep/synthgen.hpp"

namespace structrep {

struct EncoderConfig {
  int canvas_height = 64;
  int canvas_width = 64;
  int patch_size = 4;
  int backbone_dim = 64;
  int hidden_dim = 128;
  int embed_dim = 256;
  int adapter_rank = 3;
  double adapter_scale = 3.0;  // alpha; the adapter is scaled by alpha / r
  double backbone_gain = 2.0;  // W_patch ~ U(-g sqrt(3/fan_in), g sqrt(3/fan_in))

  void validate() const;

  int patch_dim() const { return 3 * patch_size * patch_size; }
  int grid_rows() const { return canvas_height / patch_size; }
  int grid_cols() const { return canvas_width / patch_size; }
  int num_patches() const { return grid_rows() * grid_cols(); }
  int head_channels() const { return embed_dim / num_patches(); }
  double adapter_factor() const { return adapter_scale / adapter_rank; }

  bool operator==(const EncoderConfig&) const = default;
};

// Everything the optimiser may touch. Also the layout of the momentum copy.
struct Trainables {
  Matrix adapter_a;  // r x 3p^2
  Matrix adapter_b;  // D x r
  Matrix w1;         // H x D
  Vector b1;         // H
  Matrix w2;         // C x H
  Vector b2;         // C

  static Trainables zeros_like(const Trainables& t);
  bool same_shape(const Trainables& other) const;
  double squared_distance(const Trainables& other) const;
  bool all_finite() const;
  bool operator==(const Trainables&) const = default;
};

// Visits each tensor with (name, data, decayed). Biases are not decayed.
void for_each_tensor(Trainables& t, const std::function<void(std::string_view, Eigen::Map<Vector>, bool)>& fn);
void for_each_tensor(const Trainables& t,
                     const std::function<void(std::string_view, Eigen::Map<const Vector>, bool)>& fn);

struct EncoderParams {
  EncoderConfig config;
  Matrix w_patch;  // D x 3p^2, frozen
  Trainables trainable;
};

using MomentumParams = Trainables;
using EmbeddingVector = Vector;

EncoderParams init_params(const EncoderConfig& config, Rng& rng);

// Same as init_params but with B drawn at random too, so the adapter is active
// from the start. Used as the untrained reference encoder.
EncoderParams init_params_random_adapter(const EncoderConfig& config, Rng& rng);

// Centred patches, one row per patch in raster order; channel-interleaved.
Matrix patchify(const EncoderConfig& config, const ImageRaster& image);

Matrix adapter_delta(const EncoderConfig& config, const Trainables& t);
Matrix effective_patch_weight(const EncoderConfig& config, const Matrix& w_patch, const Trainables& t,
                              bool adapter_enabled = true);

// Activations of a batch forward pass, kept for the backward pass.
struct ForwardCache {
  int batch = 0;
  Matrix weight;  // effective patch weight
  Matrix x;       // (B*P) x 3p^2
  Matrix z;       // (B*P) x D
  Matrix q;       // (B*P) x D
  Matrix u;       // (B*P) x H, pre-activation
  Matrix g;       // (B*P) x H
  Matrix v;       // B x E, before normalisation
  Matrix f;       // B x E, unit rows
};

ForwardCache forward_batch(const EncoderConfig& config, const Matrix& w_patch, const Trainables& t,
                           std::span<const ImageRaster* const> images, bool adapter_enabled = true);

// Gradient of the loss w.r.t. the trainables, given dL/df for every row of
// cache.f.
Trainables backward_batch(const EncoderConfig& config, const Trainables& t, const ForwardCache& cache,
                          const Matrix& grad_f);

EmbeddingVector forward(const EncoderParams& params, const ImageRaster& image, bool adapter_enabled = true);

// Row-per-image embeddings, computed in chunks.
Matrix embed_images(const EncoderParams& params, std::span<const ImageRaster> images,
                    std::size_t chunk = 64);

MomentumParams make_momentum(const EncoderParams& online);

// theta' <- m theta' + (1 - m) theta for every trainable tensor.
MomentumParams momentum_update(MomentumParams momentum, const EncoderParams& online, double m);

// Checkpoint: "SRCK" tag, u32 version, config, u32 tensor count, then each
// tensor as (u32 name length, name, u32 rows, u32 cols, f64 LE values).
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params);
EncoderParams load_checkpoint(const std::filesystem::path& path);

}  // namespace structrep
