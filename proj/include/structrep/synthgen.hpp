#pragma once

// Procedural pair synthesis. A scene is split into a structural part
// (StructureSpec: where things are, how large, what occludes what) and a
// semantic part (SemanticStyle: what the things are and how they look). A
// synthetic counterpart keeps the structure up to a small jitter and gets a
// rewritten style, so source and synthetic images share layout but not
// appearance.

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "structrep/numerics.hpp"

namespace structrep {

enum class ShapeClass : std::uint8_t { circle, square, triangle, star, cross, ring };
enum class Texture : std::uint8_t { solid, stripes, dots, checker };

inline constexpr int kNumShapeClasses = 6;
inline constexpr int kNumTextures = 4;
inline constexpr int kNumStyleIds = 4;

inline constexpr double kMinScale = 0.05;
inline constexpr double kMaxScale = 0.3;
inline constexpr double kCoordMin = -0.1;
inline constexpr double kCoordMax = 1.1;
inline constexpr int kMinCanvas = 32;

std::string_view to_string(ShapeClass c);
std::string_view to_string(Texture t);
ShapeClass shape_class_from_string(std::string_view s);
Texture texture_from_string(std::string_view s);

// Category change used by semantic_rewrite. Pairs shapes of comparable
// footprint: circle<->square, triangle<->star, cross<->ring.
ShapeClass substitute_shape(ShapeClass c);

struct Primitive {
  ShapeClass shape_class = ShapeClass::circle;
  Eigen::Vector2d center{0.5, 0.5};  // (x, y) in canvas units
  double scale = 0.1;                // circumradius as a fraction of the canvas
  double rotation = 0.0;             // radians
  int depth_rank = 0;                // 0 = nearest

  bool operator==(const Primitive&) const = default;
};

struct StructureSpec {
  std::vector<Primitive> primitives;
  int height = 64;
  int width = 64;

  // Throws ConfigError on violated invariants.
  void validate() const;
  bool operator==(const StructureSpec&) const = default;
};

using Rgb = Eigen::Vector3d;

struct SemanticStyle {
  std::vector<ShapeClass> shape_classes;  // rendered category per primitive
  std::vector<Rgb> fills;
  std::vector<Texture> textures;
  Rgb background_top{0.9, 0.9, 0.9};
  Rgb background_bottom{0.8, 0.8, 0.8};
  int style_id = 0;

  void validate(std::size_t n_primitives) const;
  bool operator==(const SemanticStyle&) const = default;
};

// Interleaved HWC float raster with values in [0, 1].
struct ImageRaster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  ImageRaster() = default;
  ImageRaster(int h, int w, int c) : height(h), width(w), channels(c), data(std::size_t(h) * w * c, 0.0f) {}

  float& at(int y, int x, int c = 0) { return data[(std::size_t(y) * width + x) * channels + c]; }
  float at(int y, int x, int c = 0) const { return data[(std::size_t(y) * width + x) * channels + c]; }
  bool operator==(const ImageRaster&) const = default;
};

struct SceneConfig {
  int min_primitives = 3;
  int max_primitives = 6;
  double min_scale = 0.15;
  double max_scale = 0.3;
  int height = 64;
  int width = 64;

  void validate() const;
};

// Geometry helpers shared by the rasteriser and its tests.
bool shape_contains(ShapeClass shape, const Eigen::Vector2d& local);  // local = unit-circumradius frame
bool primitive_contains(const Primitive& p, ShapeClass shape, double x, double y);
double analytic_area(ShapeClass shape, double scale);  // in canvas units squared

std::pair<StructureSpec, SemanticStyle> sample_scene(Rng& rng, const SceneConfig& config);

SemanticStyle semantic_rewrite(const StructureSpec& spec, const SemanticStyle& style, Rng& rng);

inline constexpr double kMaxJitter = 0.05;
StructureSpec structural_jitter(const StructureSpec& spec, Rng& rng, double epsilon);

// Painter's algorithm (far to near) with 2x2 supersampling.
ImageRaster render(const StructureSpec& spec, const SemanticStyle& style);

// Single channel: (n - depth_rank) / n of the front-most primitive at the
// pixel centre, 0 for background. One sample per pixel.
ImageRaster render_depth_map(const StructureSpec& spec);

// Per-pixel index into spec.primitives of the front-most primitive, -1 if none.
std::vector<int> render_owner_map(const StructureSpec& spec);

// Precomputed threshold masks of a depth map, for repeated overlap queries.
class DepthLayers {
 public:
  explicit DepthLayers(const StructureSpec& spec);

  int height() const { return height_; }
  int width() const { return width_; }
  int levels() const { return n_; }

  friend double depth_overlap(const DepthLayers& a, const DepthLayers& b);

 private:
  int height_;
  int width_;
  int n_;
  std::size_t words_;
  // masks_[k] = pixels whose front-most rank is <= k, as a bitset.
  std::vector<std::vector<std::uint64_t>> masks_;
  std::vector<bool> visible_;  // rank k is front-most somewhere

};

// Mean IoU of the thresholded depth maps over the union of the depth levels
// present in either map; symmetric, in [0, 1], and 1 exactly when the depth maps coincide.
double depth_overlap(const StructureSpec& a, const StructureSpec& b);
double depth_overlap(const DepthLayers& a, const DepthLayers& b);

// Mean Euclidean RGB distance (scaled to [0, 1]) over pixels in `mask`.
double mean_rgb_distance(const ImageRaster& a, const ImageRaster& b, const std::vector<int>& owner);

// One synthesized {source, synthetic} pair.
struct PairSample {
  StructureSpec src_spec;
  SemanticStyle src_style;
  StructureSpec syn_spec;
  SemanticStyle syn_style;
  double overlap = 0.0;
};

struct PairConfig {
  SceneConfig scene;
  double jitter = 0.02;
  double min_overlap = 0.85;
  double min_semantic_distance = 0.1;
};

// Deterministic in rng; retries jitter and rewrite until both the structural
// and the semantic thresholds hold.
PairSample synthesize_pair(Rng& rng, const PairConfig& config);

}  // namespace structrep
