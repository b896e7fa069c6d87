#include "structrep/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "structrep/binary_io.hpp"

namespace structrep {

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'R', 'C', 'K'};

void check_image(const EncoderConfig& config, const ImageRaster& image) {
  if (image.height != config.canvas_height || image.width != config.canvas_width || image.channels != 3) {
    throw ShapeError("encoder expects " + std::to_string(config.canvas_height) + "x" +
                     std::to_string(config.canvas_width) + "x3 images, got " +
                     std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                     std::to_string(image.channels));
  }
}

Matrix bias_rows(const Matrix& m, const Vector& bias) { return m.rowwise() + bias.transpose(); }

}  // namespace

void EncoderConfig::validate() const {
  if (patch_size < 1 || canvas_height % patch_size != 0 || canvas_width % patch_size != 0) {
    throw ConfigError("encoder: patch_size " + std::to_string(patch_size) + " must divide the canvas " +
                      std::to_string(canvas_height) + "x" + std::to_string(canvas_width));
  }
  if (adapter_rank < 1) throw ConfigError("encoder: adapter rank must be >= 1");
  if (embed_dim < 8) throw ConfigError("encoder: embed_dim must be >= 8");
  if (embed_dim % num_patches() != 0) {
    throw ConfigError("encoder: embed_dim " + std::to_string(embed_dim) + " must be a multiple of the " +
                      std::to_string(num_patches()) + " patches");
  }
  if (backbone_dim < 1 || hidden_dim < 1) throw ConfigError("encoder: layer widths must be positive");
  if (!(adapter_scale > 0.0) || !(backbone_gain > 0.0)) {
    throw ConfigError("encoder: adapter scale and backbone gain must be positive");
  }
}

Trainables Trainables::zeros_like(const Trainables& t) {
  return {Matrix::Zero(t.adapter_a.rows(), t.adapter_a.cols()),
          Matrix::Zero(t.adapter_b.rows(), t.adapter_b.cols()),
          Matrix::Zero(t.w1.rows(), t.w1.cols()),
          Vector::Zero(t.b1.size()),
          Matrix::Zero(t.w2.rows(), t.w2.cols()),
          Vector::Zero(t.b2.size())};
}

bool Trainables::same_shape(const Trainables& o) const {
  auto eq = [](const auto& a, const auto& b) { return a.rows() == b.rows() && a.cols() == b.cols(); };
  return eq(adapter_a, o.adapter_a) && eq(adapter_b, o.adapter_b) && eq(w1, o.w1) && eq(b1, o.b1) &&
         eq(w2, o.w2) && eq(b2, o.b2);
}

double Trainables::squared_distance(const Trainables& o) const {
  if (!same_shape(o)) throw ShapeError("Trainables: shape mismatch");
  return (adapter_a - o.adapter_a).squaredNorm() + (adapter_b - o.adapter_b).squaredNorm() +
         (w1 - o.w1).squaredNorm() + (b1 - o.b1).squaredNorm() + (w2 - o.w2).squaredNorm() +
         (b2 - o.b2).squaredNorm();
}

bool Trainables::all_finite() const {
  return adapter_a.allFinite() && adapter_b.allFinite() && w1.allFinite() && b1.allFinite() &&
         w2.allFinite() && b2.allFinite();
}

void for_each_tensor(Trainables& t, const std::function<void(std::string_view, Eigen::Map<Vector>, bool)>& fn) {
  auto flat = [](auto& m) { return Eigen::Map<Vector>(m.data(), m.size()); };
  fn("adapter_a", flat(t.adapter_a), true);
  fn("adapter_b", flat(t.adapter_b), true);
  fn("w1", flat(t.w1), true);
  fn("b1", flat(t.b1), false);
  fn("w2", flat(t.w2), true);
  fn("b2", flat(t.b2), false);
}

void for_each_tensor(const Trainables& t,
                     const std::function<void(std::string_view, Eigen::Map<const Vector>, bool)>& fn) {
  auto flat = [](const auto& m) { return Eigen::Map<const Vector>(m.data(), m.size()); };
  fn("adapter_a", flat(t.adapter_a), true);
  fn("adapter_b", flat(t.adapter_b), true);
  fn("w1", flat(t.w1), true);
  fn("b1", flat(t.b1), false);
  fn("w2", flat(t.w2), true);
  fn("b2", flat(t.b2), false);
}

EncoderParams init_params(const EncoderConfig& config, Rng& rng) {
  config.validate();
  const int pd = config.patch_dim();
  const int d = config.backbone_dim;
  const int h = config.hidden_dim;
  const int c = config.head_channels();

  EncoderParams p;
  p.config = config;
  p.w_patch = rng.uniform_matrix<double>(d, pd, config.backbone_gain * std::sqrt(3.0 / pd));
  p.trainable.adapter_a = rng.uniform_matrix<double>(config.adapter_rank, pd, std::sqrt(3.0 / pd));
  p.trainable.adapter_b = Matrix::Zero(d, config.adapter_rank);
  p.trainable.w1 = rng.uniform_matrix<double>(h, d, std::sqrt(3.0 / d));
  p.trainable.b1 = Vector::Zero(h);
  p.trainable.w2 = rng.uniform_matrix<double>(c, h, std::sqrt(3.0 / h));
  p.trainable.b2 = Vector::Zero(c);
  return p;
}

EncoderParams init_params_random_adapter(const EncoderConfig& config, Rng& rng) {
  EncoderParams p = init_params(config, rng);
  p.trainable.adapter_b =
      rng.uniform_matrix<double>(config.backbone_dim, config.adapter_rank, std::sqrt(3.0 / config.adapter_rank));
  return p;
}

Matrix patchify(const EncoderConfig& config, const ImageRaster& image) {
  check_image(config, image);
  const int ps = config.patch_size;
  Matrix out(config.num_patches(), config.patch_dim());
  for (int gy = 0; gy < config.grid_rows(); ++gy) {
    for (int gx = 0; gx < config.grid_cols(); ++gx) {
      const int row = gy * config.grid_cols() + gx;
      double mean[3] = {0.0, 0.0, 0.0};
      for (int dy = 0; dy < ps; ++dy)
        for (int dx = 0; dx < ps; ++dx)
          for (int ch = 0; ch < 3; ++ch) mean[ch] += image.at(gy * ps + dy, gx * ps + dx, ch);
      for (double& m : mean) m /= ps * ps;
      int col = 0;
      for (int dy = 0; dy < ps; ++dy)
        for (int dx = 0; dx < ps; ++dx)
          for (int ch = 0; ch < 3; ++ch)
            out(row, col++) = 2.0 * (image.at(gy * ps + dy, gx * ps + dx, ch) - mean[ch]);
    }
  }
  return out;
}

Matrix adapter_delta(const EncoderConfig& config, const Trainables& t) {
  return config.adapter_factor() * matmul(t.adapter_b, t.adapter_a);
}

Matrix effective_patch_weight(const EncoderConfig& config, const Matrix& w_patch, const Trainables& t,
                              bool adapter_enabled) {
  if (!adapter_enabled) return w_patch;
  Matrix delta = adapter_delta(config, t);
  check_same_shape(w_patch, delta, "effective_patch_weight");
  return w_patch + delta;
}

ForwardCache forward_batch(const EncoderConfig& config, const Matrix& w_patch, const Trainables& t,
                           std::span<const ImageRaster* const> images, bool adapter_enabled) {
  const int np = config.num_patches();
  const int batch = static_cast<int>(images.size());
  ForwardCache c;
  c.batch = batch;
  c.weight = effective_patch_weight(config, w_patch, t, adapter_enabled);

  c.x.resize(Eigen::Index(batch) * np, config.patch_dim());
  for (int b = 0; b < batch; ++b) c.x.middleRows(Eigen::Index(b) * np, np) = patchify(config, *images[b]);

  c.z = c.x * c.weight.transpose();
  c.q = c.z.cwiseProduct(c.z);
  c.u = bias_rows(c.q * t.w1.transpose(), t.b1);
  c.g = gelu(c.u);
  const Matrix o = bias_rows(c.g * t.w2.transpose(), t.b2);

  // O is row-major, so each image's P x C block is already its flattened embedding.
  c.v = Eigen::Map<const Matrix>(o.data(), batch, config.embed_dim);
  c.f.resize(batch, config.embed_dim);
  for (int b = 0; b < batch; ++b) {
    if (!c.v.row(b).allFinite()) throw NumericalError("encoder: non-finite activations for image " + std::to_string(b));
    c.f.row(b) = l2_normalize<double>(c.v.row(b).transpose()).transpose();
  }
  return c;
}

Trainables backward_batch(const EncoderConfig& config, const Trainables& t, const ForwardCache& c,
                          const Matrix& grad_f) {
  if (grad_f.rows() != c.batch || grad_f.cols() != config.embed_dim) {
    throw ShapeError("backward_batch: gradient " + shape_str(grad_f.rows(), grad_f.cols()) + " for batch " +
                     shape_str(c.batch, config.embed_dim));
  }
  Matrix grad_v(c.batch, config.embed_dim);
  for (int b = 0; b < c.batch; ++b) {
    grad_v.row(b) = l2_normalize_backward<double>(c.v.row(b).transpose(), grad_f.row(b).transpose()).transpose();
  }
  const Matrix grad_o = Eigen::Map<const Matrix>(grad_v.data(), c.u.rows(), config.head_channels());

  Trainables grad;
  grad.w2 = grad_o.transpose() * c.g;
  grad.b2 = grad_o.colwise().sum().transpose();
  const Matrix grad_u = (grad_o * t.w2).cwiseProduct(gelu_grad(c.u));
  grad.w1 = grad_u.transpose() * c.q;
  grad.b1 = grad_u.colwise().sum().transpose();
  const Matrix grad_z = 2.0 * c.z.cwiseProduct(grad_u * t.w1);
  const Matrix grad_weight = grad_z.transpose() * c.x;

  // W_eff = W_patch + s * B A; W_patch receives no update.
  const auto ab = matmul_backward<double>(t.adapter_b, t.adapter_a, config.adapter_factor() * grad_weight);
  grad.adapter_b = ab.a;
  grad.adapter_a = ab.b;
  return grad;
}

EmbeddingVector forward(const EncoderParams& params, const ImageRaster& image, bool adapter_enabled) {
  const ImageRaster* ptr = &image;
  const ForwardCache c =
      forward_batch(params.config, params.w_patch, params.trainable, std::span(&ptr, 1), adapter_enabled);
  return c.f.row(0).transpose();
}

Matrix embed_images(const EncoderParams& params, std::span<const ImageRaster> images, std::size_t chunk) {
  Matrix out(images.size(), params.config.embed_dim);
  std::vector<const ImageRaster*> ptrs;
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const std::size_t n = std::min(chunk, images.size() - start);
    ptrs.clear();
    for (std::size_t i = 0; i < n; ++i) ptrs.push_back(&images[start + i]);
    const ForwardCache c = forward_batch(params.config, params.w_patch, params.trainable, ptrs);
    out.middleRows(Eigen::Index(start), Eigen::Index(n)) = c.f;
  }
  return out;
}

MomentumParams make_momentum(const EncoderParams& online) { return online.trainable; }

MomentumParams momentum_update(MomentumParams momentum, const EncoderParams& online, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("momentum_update: m must lie in [0, 1]");
  if (!momentum.same_shape(online.trainable)) throw ShapeError("momentum_update: shape mismatch");
  const double keep = m;
  const double take = 1.0 - m;
  auto blend = [&](auto& target, const auto& source) { target = keep * target + take * source; };
  blend(momentum.adapter_a, online.trainable.adapter_a);
  blend(momentum.adapter_b, online.trainable.adapter_b);
  blend(momentum.w1, online.trainable.w1);
  blend(momentum.b1, online.trainable.b1);
  blend(momentum.w2, online.trainable.w2);
  blend(momentum.b2, online.trainable.b2);
  return momentum;
}

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint '" + path.string() + "' for writing");
  const auto& cfg = params.config;
  out.write(kCheckpointMagic, 4);
  binary::put_u32(out, kCheckpointVersion);
  for (int v : {cfg.canvas_height, cfg.canvas_width, cfg.patch_size, cfg.backbone_dim, cfg.hidden_dim,
                cfg.embed_dim, cfg.adapter_rank}) {
    binary::put_u32(out, static_cast<std::uint32_t>(v));
  }
  binary::put_f64(out, cfg.adapter_scale);
  binary::put_f64(out, cfg.backbone_gain);

  auto put_tensor = [&](const std::string& name, const auto& m) {
    binary::put_string(out, name);
    binary::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    binary::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) binary::put_f64(out, m.data()[i]);
  };
  binary::put_u32(out, 7);
  put_tensor("w_patch", params.w_patch);
  put_tensor("adapter_a", params.trainable.adapter_a);
  put_tensor("adapter_b", params.trainable.adapter_b);
  put_tensor("w1", params.trainable.w1);
  put_tensor("b1", params.trainable.b1);
  put_tensor("w2", params.trainable.w2);
  put_tensor("b2", params.trainable.b2);
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::string what = "checkpoint '" + path.string() + "'";
  char magic[4];
  binary::get_bytes(in, magic, 4, what);
  if (!std::equal(magic, magic + 4, kCheckpointMagic)) throw IoError(what + ": bad format tag");
  if (binary::get_u32(in, what) != kCheckpointVersion) throw IoError(what + ": unsupported version");

  EncoderParams p;
  auto& cfg = p.config;
  for (int* v : {&cfg.canvas_height, &cfg.canvas_width, &cfg.patch_size, &cfg.backbone_dim, &cfg.hidden_dim,
                 &cfg.embed_dim, &cfg.adapter_rank}) {
    *v = static_cast<int>(binary::get_u32(in, what));
  }
  cfg.adapter_scale = binary::get_f64(in, what);
  cfg.backbone_gain = binary::get_f64(in, what);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw IoError(what + ": " + e.what());
  }

  if (binary::get_u32(in, what) != 7) throw IoError(what + ": unexpected tensor count");
  auto get_tensor = [&](const std::string& name, auto& m, Eigen::Index rows, Eigen::Index cols) {
    if (binary::get_string(in, what, 256) != name) throw IoError(what + ": expected tensor '" + name + "'");
    const auto r = binary::get_u32(in, what);
    const auto c = binary::get_u32(in, what);
    if (r != rows || c != cols) {
      throw IoError(what + ": tensor '" + name + "' has shape " + shape_str(r, c) + ", config implies " +
                    shape_str(rows, cols));
    }
    if constexpr (std::decay_t<decltype(m)>::ColsAtCompileTime == 1) {
      m.resize(rows);
    } else {
      m.resize(rows, cols);
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = binary::get_f64(in, what);
  };
  const int pd = cfg.patch_dim();
  get_tensor("w_patch", p.w_patch, cfg.backbone_dim, pd);
  get_tensor("adapter_a", p.trainable.adapter_a, cfg.adapter_rank, pd);
  get_tensor("adapter_b", p.trainable.adapter_b, cfg.backbone_dim, cfg.adapter_rank);
  get_tensor("w1", p.trainable.w1, cfg.hidden_dim, cfg.backbone_dim);
  get_tensor("b1", p.trainable.b1, cfg.hidden_dim, 1);
  get_tensor("w2", p.trainable.w2, cfg.head_channels(), cfg.hidden_dim);
  get_tensor("b2", p.trainable.b2, cfg.head_channels(), 1);
  if (!p.w_patch.allFinite() || !p.trainable.all_finite()) throw IoError(what + ": non-finite weights");
  return p;
}

}  // namespace structrep
