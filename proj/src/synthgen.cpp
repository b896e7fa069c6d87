#include "structrep/synthgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

namespace structrep {

namespace {

constexpr double kPi = std::numbers::pi;

using Vertices = std::vector<Eigen::Vector2d>;

Vertices regular_polygon(int n, double phase) {
  Vertices v;
  for (int i = 0; i < n; ++i) {
    const double a = phase + 2.0 * kPi * i / n;
    v.emplace_back(std::cos(a), std::sin(a));
  }
  return v;
}

Vertices star_polygon(int points, double inner) {
  Vertices v;
  for (int i = 0; i < 2 * points; ++i) {
    const double a = kPi / 2 + kPi * i / points;
    const double r = (i % 2 == 0) ? 1.0 : inner;
    v.emplace_back(r * std::cos(a), r * std::sin(a));
  }
  return v;
}

const Vertices& triangle_vertices() {
  static const Vertices v = regular_polygon(3, kPi / 2);
  return v;
}

constexpr double kStarInner = 0.5;
const Vertices& star_vertices() {
  static const Vertices v = star_polygon(5, kStarInner);
  return v;
}

// Square and cross are inscribed in the unit circle.
constexpr double kSquareHalf = 0.70710678118654752440;
const double kCrossHalfLength = 3.0 / std::sqrt(10.0);
const double kCrossHalfWidth = 1.0 / std::sqrt(10.0);
constexpr double kRingInner = 0.4;

bool inside_polygon(const Vertices& poly, const Eigen::Vector2d& p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x_cross = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (p.x() < x_cross) inside = !inside;
    }
  }
  return inside;
}

double polygon_area(const Vertices& poly) {
  double s = 0.0;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    s += poly[j].x() * poly[i].y() - poly[i].x() * poly[j].y();
  }
  return std::abs(s) / 2.0;
}

Rgb random_color(Rng& rng) {
  const double r = rng.uniform();
  const double g = rng.uniform();
  const double b = rng.uniform();
  return {r, g, b};
}

Rgb background_mean(const SemanticStyle& s) { return 0.5 * (s.background_top + s.background_bottom); }

// Fill that stands out from the background and, if `avoid` is given, from a
// previous fill.
constexpr double kMinFillContrast = 0.3;
constexpr double kMinFillChange = 0.5;

Rgb sample_fill(Rng& rng, const Rgb& background, const Rgb* avoid) {
  Rgb c = random_color(rng);
  for (int attempt = 0; attempt < 256; ++attempt) {
    const bool contrast_ok = (c - background).norm() >= kMinFillContrast;
    const bool change_ok = avoid == nullptr || (c - *avoid).norm() >= kMinFillChange;
    if (contrast_ok && change_ok) break;
    c = random_color(rng);
  }
  return c;
}

Rgb apply_style(int style_id, const Rgb& c) {
  switch (style_id) {
    case 1:  // pastel
      return 0.65 * c + Rgb::Constant(0.35);
    case 2: {  // muted
      const double gray = c.mean();
      return 0.5 * c + Rgb::Constant(0.5 * gray);
    }
    case 3:  // dark
      return 0.7 * c;
    default:
      return c;
  }
}

// Ink colour of textured regions, relative to the fill.
constexpr double kTextureInk = 0.8;

bool texture_ink(Texture t, const Eigen::Vector2d& local) {
  constexpr double kFreq = 2.5;
  switch (t) {
    case Texture::solid:
      return false;
    case Texture::stripes:
      return static_cast<long>(std::floor((local.x() + 1.0) * kFreq)) % 2 == 0;
    case Texture::dots: {
      const double gx = local.x() * kFreq - std::floor(local.x() * kFreq) - 0.5;
      const double gy = local.y() * kFreq - std::floor(local.y() * kFreq) - 0.5;
      return gx * gx + gy * gy < 0.09;
    }
    case Texture::checker: {
      const long i = static_cast<long>(std::floor(local.x() * kFreq));
      const long j = static_cast<long>(std::floor(local.y() * kFreq));
      return ((i + j) % 2 + 2) % 2 == 0;
    }
  }
  return false;
}

Eigen::Vector2d to_local(const Primitive& p, double x, double y) {
  const double dx = x - p.center.x();
  const double dy = y - p.center.y();
  const double c = std::cos(p.rotation);
  const double s = std::sin(p.rotation);
  return {(c * dx + s * dy) / p.scale, (-s * dx + c * dy) / p.scale};
}

// Irwin-Hall(4) rescaled to [-epsilon, epsilon]: bounded, concentrated near 0.
double bounded_bell(Rng& rng, double epsilon) {
  const double sum = rng.uniform() + rng.uniform() + rng.uniform() + rng.uniform();
  return epsilon * (sum - 2.0) / 2.0;
}

// Primitive indices sorted nearest first.
std::vector<std::size_t> front_to_back(const StructureSpec& spec) {
  std::vector<std::size_t> order(spec.primitives.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return spec.primitives[a].depth_rank < spec.primitives[b].depth_rank;
  });
  return order;
}

std::vector<int> rank_map(const StructureSpec& spec) {
  const auto order = front_to_back(spec);
  std::vector<int> ranks(std::size_t(spec.height) * spec.width, -1);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const double px = (x + 0.5) / spec.width;
      const double py = (y + 0.5) / spec.height;
      for (std::size_t idx : order) {
        const auto& p = spec.primitives[idx];
        if (primitive_contains(p, p.shape_class, px, py)) {
          ranks[std::size_t(y) * spec.width + x] = p.depth_rank;
          break;
        }
      }
    }
  }
  return ranks;
}

}  // namespace

std::string_view to_string(ShapeClass c) {
  switch (c) {
    case ShapeClass::circle: return "circle";
    case ShapeClass::square: return "square";
    case ShapeClass::triangle: return "triangle";
    case ShapeClass::star: return "star";
    case ShapeClass::cross: return "cross";
    case ShapeClass::ring: return "ring";
  }
  return "?";
}

std::string_view to_string(Texture t) {
  switch (t) {
    case Texture::solid: return "solid";
    case Texture::stripes: return "stripes";
    case Texture::dots: return "dots";
    case Texture::checker: return "checker";
  }
  return "?";
}

ShapeClass shape_class_from_string(std::string_view s) {
  for (int i = 0; i < kNumShapeClasses; ++i) {
    if (to_string(static_cast<ShapeClass>(i)) == s) return static_cast<ShapeClass>(i);
  }
  throw ConfigError("unknown shape class '" + std::string(s) + "'");
}

Texture texture_from_string(std::string_view s) {
  for (int i = 0; i < kNumTextures; ++i) {
    if (to_string(static_cast<Texture>(i)) == s) return static_cast<Texture>(i);
  }
  throw ConfigError("unknown texture '" + std::string(s) + "'");
}

ShapeClass substitute_shape(ShapeClass c) {
  switch (c) {
    case ShapeClass::circle: return ShapeClass::square;
    case ShapeClass::square: return ShapeClass::circle;
    case ShapeClass::triangle: return ShapeClass::star;
    case ShapeClass::star: return ShapeClass::triangle;
    case ShapeClass::cross: return ShapeClass::ring;
    case ShapeClass::ring: return ShapeClass::cross;
  }
  return c;
}

void StructureSpec::validate() const {
  if (primitives.empty()) throw ConfigError("StructureSpec: no primitives");
  if (height < kMinCanvas || width < kMinCanvas) {
    throw ConfigError("StructureSpec: canvas " + std::to_string(height) + "x" +
                      std::to_string(width) + " below 32x32");
  }
  std::vector<bool> seen(primitives.size(), false);
  for (const auto& p : primitives) {
    if (p.depth_rank < 0 || std::size_t(p.depth_rank) >= primitives.size() || seen[p.depth_rank]) {
      throw ConfigError("StructureSpec: depth ranks must be a permutation of 0..n-1");
    }
    seen[p.depth_rank] = true;
    if (!(p.scale >= kMinScale - 1e-12 && p.scale <= kMaxScale + 1e-12)) {
      throw ConfigError("StructureSpec: scale " + std::to_string(p.scale) + " outside [0.05, 0.3]");
    }
    for (int k = 0; k < 2; ++k) {
      if (p.center[k] - p.scale < kCoordMin - 1e-12 || p.center[k] + p.scale > kCoordMax + 1e-12) {
        throw ConfigError("StructureSpec: primitive extends beyond [-0.1, 1.1]");
      }
    }
    if (!std::isfinite(p.rotation)) throw ConfigError("StructureSpec: non-finite rotation");
  }
}

void SemanticStyle::validate(std::size_t n_primitives) const {
  if (shape_classes.size() != n_primitives || fills.size() != n_primitives ||
      textures.size() != n_primitives) {
    throw ShapeError("SemanticStyle: per-primitive lists do not match primitive count " +
                     std::to_string(n_primitives));
  }
  auto in_unit = [](const Rgb& c) { return (c.array() >= 0.0).all() && (c.array() <= 1.0).all(); };
  for (const auto& f : fills) {
    if (!in_unit(f)) throw ConfigError("SemanticStyle: fill colour outside [0,1]^3");
  }
  if (!in_unit(background_top) || !in_unit(background_bottom)) {
    throw ConfigError("SemanticStyle: background colour outside [0,1]^3");
  }
  if (style_id < 0 || style_id >= kNumStyleIds) throw ConfigError("SemanticStyle: bad style id");
}

void SceneConfig::validate() const {
  if (min_primitives < 3 || max_primitives > 8 || min_primitives > max_primitives) {
    throw ConfigError("SceneConfig: primitive count range must lie within [3, 8]");
  }
  if (!(min_scale >= kMinScale && max_scale <= kMaxScale && min_scale <= max_scale)) {
    throw ConfigError("SceneConfig: scale range must lie within [0.05, 0.3]");
  }
  if (height < kMinCanvas || width < kMinCanvas) throw ConfigError("SceneConfig: canvas below 32x32");
}

bool shape_contains(ShapeClass shape, const Eigen::Vector2d& q) {
  switch (shape) {
    case ShapeClass::circle:
      return q.squaredNorm() <= 1.0;
    case ShapeClass::square:
      return std::abs(q.x()) <= kSquareHalf && std::abs(q.y()) <= kSquareHalf;
    case ShapeClass::triangle:
      return inside_polygon(triangle_vertices(), q);
    case ShapeClass::star:
      return inside_polygon(star_vertices(), q);
    case ShapeClass::cross: {
      const double ax = std::abs(q.x());
      const double ay = std::abs(q.y());
      return (ax <= kCrossHalfLength && ay <= kCrossHalfWidth) ||
             (ay <= kCrossHalfLength && ax <= kCrossHalfWidth);
    }
    case ShapeClass::ring: {
      const double r2 = q.squaredNorm();
      return r2 <= 1.0 && r2 >= kRingInner * kRingInner;
    }
  }
  return false;
}

bool primitive_contains(const Primitive& p, ShapeClass shape, double x, double y) {
  const double dx = x - p.center.x();
  const double dy = y - p.center.y();
  if (dx * dx + dy * dy > p.scale * p.scale) return false;
  return shape_contains(shape, to_local(p, x, y));
}

double analytic_area(ShapeClass shape, double scale) {
  const double s2 = scale * scale;
  switch (shape) {
    case ShapeClass::circle: return kPi * s2;
    case ShapeClass::square: return 4.0 * kSquareHalf * kSquareHalf * s2;
    case ShapeClass::triangle: return polygon_area(triangle_vertices()) * s2;
    case ShapeClass::star: return polygon_area(star_vertices()) * s2;
    case ShapeClass::cross: {
      const double l = kCrossHalfLength, w = kCrossHalfWidth;
      return (8.0 * l * w - 4.0 * w * w) * s2;
    }
    case ShapeClass::ring: return kPi * (1.0 - kRingInner * kRingInner) * s2;
  }
  return 0.0;
}

std::pair<StructureSpec, SemanticStyle> sample_scene(Rng& rng, const SceneConfig& config) {
  config.validate();
  const int n = rng.range(config.min_primitives, config.max_primitives);

  std::vector<int> ranks(n);
  std::iota(ranks.begin(), ranks.end(), 0);
  rng.shuffle(ranks.begin(), ranks.end());

  StructureSpec spec;
  spec.height = config.height;
  spec.width = config.width;
  for (int i = 0; i < n; ++i) {
    Primitive p;
    p.shape_class = static_cast<ShapeClass>(rng.below(kNumShapeClasses));
    p.scale = rng.uniform(config.min_scale, config.max_scale);
    const double lo = std::max(0.05, kCoordMin + p.scale);
    const double hi = std::min(0.95, kCoordMax - p.scale);
    const double cx = rng.uniform(lo, hi);
    const double cy = rng.uniform(lo, hi);
    p.center = {cx, cy};
    p.rotation = rng.uniform(0.0, 2.0 * kPi);
    p.depth_rank = ranks[i];
    spec.primitives.push_back(p);
  }

  SemanticStyle style;
  style.background_top = random_color(rng);
  style.background_bottom = random_color(rng);
  const Rgb bg = background_mean(style);
  for (const auto& p : spec.primitives) {
    style.shape_classes.push_back(p.shape_class);
    style.fills.push_back(sample_fill(rng, bg, nullptr));
    style.textures.push_back(static_cast<Texture>(rng.below(kNumTextures)));
  }
  style.style_id = static_cast<int>(rng.below(kNumStyleIds));
  return {std::move(spec), std::move(style)};
}

SemanticStyle semantic_rewrite(const StructureSpec& spec, const SemanticStyle& style, Rng& rng) {
  style.validate(spec.primitives.size());
  SemanticStyle out;
  out.background_top = random_color(rng);
  out.background_bottom = random_color(rng);
  const Rgb bg = background_mean(out);
  for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
    const ShapeClass original = style.shape_classes[i];
    out.shape_classes.push_back(rng.bernoulli(0.5) ? substitute_shape(original) : original);
    out.fills.push_back(sample_fill(rng, bg, &style.fills[i]));
    out.textures.push_back(static_cast<Texture>(rng.below(kNumTextures)));
  }
  out.style_id = rng.bernoulli(0.5) ? static_cast<int>(rng.below(kNumStyleIds)) : style.style_id;
  return out;
}

StructureSpec structural_jitter(const StructureSpec& spec, Rng& rng, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= kMaxJitter)) {
    throw ConfigError("structural_jitter: epsilon " + std::to_string(epsilon) +
                      " outside [0, 0.05]");
  }
  StructureSpec out = spec;
  for (auto& p : out.primitives) {
    const double dx = bounded_bell(rng, epsilon);
    const double dy = bounded_bell(rng, epsilon);
    const double ds = bounded_bell(rng, epsilon);
    if (epsilon == 0.0) continue;
    p.scale = std::clamp(p.scale + ds, kMinScale, kMaxScale);
    const double lo = kCoordMin + p.scale;
    const double hi = kCoordMax - p.scale;
    p.center.x() = std::clamp(p.center.x() + dx, lo, hi);
    p.center.y() = std::clamp(p.center.y() + dy, lo, hi);
  }
  return out;
}

ImageRaster render(const StructureSpec& spec, const SemanticStyle& style) {
  spec.validate();
  style.validate(spec.primitives.size());
  const auto order = front_to_back(spec);
  ImageRaster img(spec.height, spec.width, 3);

  static constexpr double kOffsets[2] = {0.25, 0.75};
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      Rgb acc = Rgb::Zero();
      for (double oy : kOffsets) {
        for (double ox : kOffsets) {
          const double px = (x + ox) / spec.width;
          const double py = (y + oy) / spec.height;
          const double t = py;
          Rgb c = (1.0 - t) * style.background_top + t * style.background_bottom;
          for (std::size_t idx : order) {
            const auto& p = spec.primitives[idx];
            const ShapeClass shape = style.shape_classes[idx];
            if (!primitive_contains(p, shape, px, py)) continue;
            const Rgb& fill = style.fills[idx];
            c = texture_ink(style.textures[idx], to_local(p, px, py)) ? Rgb(kTextureInk * fill) : fill;
            break;
          }
          acc += apply_style(style.style_id, c);
        }
      }
      acc /= 4.0;
      for (int ch = 0; ch < 3; ++ch) {
        img.at(y, x, ch) = static_cast<float>(std::clamp(acc[ch], 0.0, 1.0));
      }
    }
  }
  return img;
}

ImageRaster render_depth_map(const StructureSpec& spec) {
  spec.validate();
  const auto ranks = rank_map(spec);
  const int n = static_cast<int>(spec.primitives.size());
  ImageRaster img(spec.height, spec.width, 1);
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    img.data[i] = ranks[i] < 0 ? 0.0f : static_cast<float>(double(n - ranks[i]) / n);
  }
  return img;
}

std::vector<int> render_owner_map(const StructureSpec& spec) {
  spec.validate();
  const auto ranks = rank_map(spec);
  std::vector<int> by_rank(spec.primitives.size());
  for (std::size_t i = 0; i < spec.primitives.size(); ++i) by_rank[spec.primitives[i].depth_rank] = int(i);
  std::vector<int> owner(ranks.size(), -1);
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] >= 0) owner[i] = by_rank[ranks[i]];
  }
  return owner;
}

DepthLayers::DepthLayers(const StructureSpec& spec)
    : height_(spec.height), width_(spec.width), n_(static_cast<int>(spec.primitives.size())) {
  spec.validate();
  const auto ranks = rank_map(spec);
  const std::size_t pixels = ranks.size();
  words_ = (pixels + 63) / 64;
  masks_.assign(n_, std::vector<std::uint64_t>(words_, 0));
  visible_.assign(n_, false);
  for (std::size_t i = 0; i < pixels; ++i) {
    if (ranks[i] < 0) continue;
    visible_[ranks[i]] = true;
    for (int k = ranks[i]; k < n_; ++k) masks_[k][i / 64] |= std::uint64_t{1} << (i % 64);
  }
}

double depth_overlap(const DepthLayers& a, const DepthLayers& b) {
  if (a.height_ != b.height_ || a.width_ != b.width_) {
    throw ShapeError("depth_overlap: canvas " + shape_str(a.height_, a.width_) + " vs " +
                     shape_str(b.height_, b.width_));
  }
  // Depth levels are the values (n - k) / n occurring in either map, reduced.
  std::vector<std::pair<int, int>> levels;
  for (const DepthLayers* d : {&a, &b}) {
    for (int k = 0; k < d->n_; ++k) {
      if (!d->visible_[k]) continue;
      const int num = d->n_ - k;
      const int g = std::gcd(num, d->n_);
      levels.emplace_back(num / g, d->n_ / g);
    }
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  // value (n - r)/n >= p/q  <=>  r <= n (q - p) / q
  auto mask_for = [](const DepthLayers& d, int p, int q) -> const std::vector<std::uint64_t>& {
    const int k = d.n_ * (q - p) / q;
    return d.masks_[k];
  };

  double total = 0.0;
  int counted = 0;
  for (const auto& [p, q] : levels) {
    const auto& ma = mask_for(a, p, q);
    const auto& mb = mask_for(b, p, q);
    std::size_t inter = 0, uni = 0;
    for (std::size_t w = 0; w < a.words_; ++w) {
      inter += std::popcount(ma[w] & mb[w]);
      uni += std::popcount(ma[w] | mb[w]);
    }
    if (uni == 0) continue;
    total += double(inter) / double(uni);
    ++counted;
  }
  return counted == 0 ? 1.0 : total / counted;
}

double depth_overlap(const StructureSpec& a, const StructureSpec& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("depth_overlap: canvas " + shape_str(a.height, a.width) + " vs " +
                     shape_str(b.height, b.width));
  }
  return depth_overlap(DepthLayers(a), DepthLayers(b));
}

double mean_rgb_distance(const ImageRaster& a, const ImageRaster& b, const std::vector<int>& owner) {
  if (a.height != b.height || a.width != b.width || a.channels != 3 || b.channels != 3 ||
      owner.size() != std::size_t(a.height) * a.width) {
    throw ShapeError("mean_rgb_distance: raster shapes differ");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < owner.size(); ++i) {
    if (owner[i] < 0) continue;
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = double(a.data[i * 3 + c]) - double(b.data[i * 3 + c]);
      d2 += d * d;
    }
    total += std::sqrt(d2 / 3.0);
    ++count;
  }
  return count == 0 ? 0.0 : total / double(count);
}

PairSample synthesize_pair(Rng& rng, const PairConfig& config) {
  PairSample out;
  std::tie(out.src_spec, out.src_style) = sample_scene(rng, config.scene);
  const DepthLayers src_layers(out.src_spec);

  // Re-draw the jitter until the pair is structurally close enough; halve the
  // amplitude every 16 failures so the loop always terminates (eps -> 0 gives 1.0).
  double eps = config.jitter;
  for (int attempt = 1;; ++attempt) {
    out.syn_spec = structural_jitter(out.src_spec, rng, eps);
    out.overlap = depth_overlap(src_layers, DepthLayers(out.syn_spec));
    if (out.overlap >= config.min_overlap) break;
    if (attempt % 16 == 0) eps = attempt >= 64 ? 0.0 : eps / 2;
  }

  const ImageRaster src_img = render(out.src_spec, out.src_style);
  const auto owner = render_owner_map(out.src_spec);
  for (int attempt = 0; attempt < 64; ++attempt) {
    out.syn_style = semantic_rewrite(out.src_spec, out.src_style, rng);
    const ImageRaster syn_img = render(out.syn_spec, out.syn_style);
    if (mean_rgb_distance(src_img, syn_img, owner) >= config.min_semantic_distance) break;
  }
  return out;
}

}  // namespace structrep
