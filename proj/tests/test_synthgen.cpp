#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "structrep/corpus.hpp"
#include "structrep/image_io.hpp"
#include "structrep/synthgen.hpp"

using namespace structrep;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("structrep_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

StructureSpec single(ShapeClass c, double x, double y, double scale, double rotation, int canvas = 64) {
  StructureSpec s;
  s.height = s.width = canvas;
  s.primitives.push_back({c, {x, y}, scale, rotation, 0});
  return s;
}

SemanticStyle flat_style(const StructureSpec& spec, Rgb fill, Rgb background) {
  SemanticStyle st;
  for (const auto& p : spec.primitives) {
    st.shape_classes.push_back(p.shape_class);
    st.fills.push_back(fill);
    st.textures.push_back(Texture::solid);
  }
  st.background_top = st.background_bottom = background;
  st.style_id = 0;
  return st;
}

}  // namespace

TEST_CASE("sample_scene is deterministic and respects its config") {
  SceneConfig cfg;
  cfg.min_primitives = 3;
  cfg.max_primitives = 8;
  Rng a(0), b(0);
  const auto s1 = sample_scene(a, cfg);
  const auto s2 = sample_scene(b, cfg);
  CHECK(s1.first == s2.first);
  CHECK(s1.second == s2.second);

  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto [spec, style] = sample_scene(rng, cfg);
    REQUIRE(spec.primitives.size() >= 3);
    REQUIRE(spec.primitives.size() <= 8);
    REQUIRE_NOTHROW(spec.validate());
    REQUIRE_NOTHROW(style.validate(spec.primitives.size()));
    std::set<int> ranks;
    for (const auto& p : spec.primitives) {
      REQUIRE(p.scale >= kMinScale);
      REQUIRE(p.scale <= kMaxScale);
      REQUIRE(p.center.x() - p.scale >= kCoordMin);
      REQUIRE(p.center.x() + p.scale <= kCoordMax);
      REQUIRE(p.center.y() - p.scale >= kCoordMin);
      REQUIRE(p.center.y() + p.scale <= kCoordMax);
      ranks.insert(p.depth_rank);
    }
    REQUIRE(ranks.size() == spec.primitives.size());
  }

  SceneConfig bad;
  bad.min_primitives = 0;
  CHECK_THROWS_AS(sample_scene(rng, bad), ConfigError);
  bad = {};
  bad.max_primitives = 9;
  CHECK_THROWS_AS(sample_scene(rng, bad), ConfigError);
}

TEST_CASE("StructureSpec validation rejects broken invariants") {
  StructureSpec s = single(ShapeClass::circle, 0.5, 0.5, 0.1, 0.0);
  CHECK_NOTHROW(s.validate());
  StructureSpec empty = s;
  empty.primitives.clear();
  CHECK_THROWS_AS(empty.validate(), ConfigError);
  StructureSpec small = s;
  small.height = 16;
  CHECK_THROWS_AS(small.validate(), ConfigError);
  StructureSpec big = s;
  big.primitives[0].scale = 0.4;
  CHECK_THROWS_AS(big.validate(), ConfigError);
  StructureSpec edge = s;
  edge.primitives[0].center.x() = 1.05;
  CHECK_THROWS_AS(edge.validate(), ConfigError);
  StructureSpec dup = s;
  dup.primitives.push_back(dup.primitives[0]);
  CHECK_THROWS_AS(dup.validate(), ConfigError);
}

TEST_CASE("semantic_rewrite changes every primitive's appearance and keeps geometry") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    auto [spec, style] = sample_scene(rng, SceneConfig{});
    for (auto& p : spec.primitives) p.shape_class = ShapeClass::circle;
    style.shape_classes.assign(spec.primitives.size(), ShapeClass::circle);
    const StructureSpec before = spec;
    const SemanticStyle rewritten = semantic_rewrite(spec, style, rng);
    REQUIRE(spec == before);
    REQUIRE_NOTHROW(rewritten.validate(spec.primitives.size()));
    for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
      const bool same_class = rewritten.shape_classes[i] == style.shape_classes[i];
      const bool same_fill = rewritten.fills[i] == style.fills[i];
      REQUIRE_FALSE((same_class && same_fill));
    }
    // The rendered depth structure only depends on the spec.
    REQUIRE(render_depth_map(spec) == render_depth_map(before));
  }
}

TEST_CASE("semantic_rewrite with different seeds rarely collides") {
  int collisions = 0;
  Rng scene_rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto [spec, style] = sample_scene(scene_rng, SceneConfig{});
    Rng r1 = Rng(1000 + i), r2 = Rng(5000 + i);
    if (semantic_rewrite(spec, style, r1) == semantic_rewrite(spec, style, r2)) ++collisions;
  }
  CHECK(collisions < 2);
}

TEST_CASE("structural_jitter bounds and overlap") {
  Rng rng(8);
  const auto [spec, style] = sample_scene(rng, SceneConfig{});
  CHECK(structural_jitter(spec, rng, 0.0) == spec);
  CHECK_THROWS_AS(structural_jitter(spec, rng, -0.01), ConfigError);
  CHECK_THROWS_AS(structural_jitter(spec, rng, 0.06), ConfigError);

  int below = 0;
  for (int i = 0; i < 100; ++i) {
    const auto [s, st] = sample_scene(rng, SceneConfig{});
    const StructureSpec j = structural_jitter(s, rng, 0.02);
    REQUIRE_NOTHROW(j.validate());
    for (std::size_t k = 0; k < s.primitives.size(); ++k) {
      REQUIRE(std::abs(j.primitives[k].center.x() - s.primitives[k].center.x()) <= 0.02 + 1e-15);
      REQUIRE(std::abs(j.primitives[k].center.y() - s.primitives[k].center.y()) <= 0.02 + 1e-15);
      REQUIRE(std::abs(j.primitives[k].scale - s.primitives[k].scale) <= 0.02 + 1e-15);
      REQUIRE(j.primitives[k].depth_rank == s.primitives[k].depth_rank);
      REQUIRE(j.primitives[k].shape_class == s.primitives[k].shape_class);
    }
    if (depth_overlap(s, j) < 0.85) ++below;
  }
  CHECK(below == 0);
}

TEST_CASE("depth_overlap against jitter 0.01 lies in (0.85, 1]") {
  Rng rng(21);
  for (int i = 0; i < 100; ++i) {
    const auto [s, st] = sample_scene(rng, SceneConfig{});
    const double o = depth_overlap(s, structural_jitter(s, rng, 0.01));
    REQUIRE(o > 0.85);
    REQUIRE(o <= 1.0);
  }
}

TEST_CASE("depth_overlap basic properties") {
  Rng rng(2);
  const auto [a, sa] = sample_scene(rng, SceneConfig{});
  const auto [b, sb] = sample_scene(rng, SceneConfig{});
  CHECK(depth_overlap(a, a) == 1.0);
  CHECK(depth_overlap(a, b) == depth_overlap(b, a));
  CHECK(depth_overlap(a, b) >= 0.0);
  CHECK(depth_overlap(a, b) < 1.0);

  const auto left = single(ShapeClass::circle, 0.2, 0.5, 0.15, 0.0);
  const auto right = single(ShapeClass::square, 0.8, 0.5, 0.15, 0.3);
  CHECK(depth_overlap(left, right) == 0.0);

  auto other_canvas = left;
  other_canvas.height = other_canvas.width = 48;
  CHECK_THROWS_AS(depth_overlap(left, other_canvas), ShapeError);
}

TEST_CASE("depth_overlap matches a direct per-level IoU") {
  // Direct evaluation from the depth maps: for every level l present in
  // either map, IoU of {d >= l} between the two maps, averaged.
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto [a, sa] = sample_scene(rng, SceneConfig{});
    auto [b, sb] = sample_scene(rng, SceneConfig{});
    if (trial % 2 == 0) b = structural_jitter(a, rng, 0.04);
    const ImageRaster da = render_depth_map(a), db = render_depth_map(b);
    std::set<float> levels;
    for (float v : da.data) if (v > 0) levels.insert(v);
    for (float v : db.data) if (v > 0) levels.insert(v);
    double sum = 0.0;
    int counted = 0;
    for (float l : levels) {
      int inter = 0, uni = 0;
      for (std::size_t i = 0; i < da.data.size(); ++i) {
        const bool x = da.data[i] >= l, y = db.data[i] >= l;
        inter += x && y;
        uni += x || y;
      }
      if (uni == 0) continue;
      sum += double(inter) / uni;
      ++counted;
    }
    const double expect = counted ? sum / counted : 1.0;
    CHECK(depth_overlap(a, b) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("render is deterministic and styles change colour but not depth") {
  Rng rng(4);
  const auto [spec, style] = sample_scene(rng, SceneConfig{});
  const ImageRaster a = render(spec, style), b = render(spec, style);
  CHECK(a == b);
  for (float v : a.data) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
  const SemanticStyle other = semantic_rewrite(spec, style, rng);
  CHECK(render(spec, other) != a);
  CHECK(render_depth_map(spec) == render_depth_map(spec));
}

TEST_CASE("rendered coverage matches analytic area within 2%") {
  const int canvas = 256;
  for (int c = 0; c < kNumShapeClasses; ++c) {
    const auto shape = static_cast<ShapeClass>(c);
    for (double rot : {0.0, 0.7}) {
      const auto spec = single(shape, 0.5, 0.5, 0.25, rot, canvas);
      const ImageRaster img = render(spec, flat_style(spec, Rgb(1, 1, 1), Rgb(0, 0, 0)));
      double covered = 0.0;
      for (int y = 0; y < canvas; ++y)
        for (int x = 0; x < canvas; ++x) covered += img.at(y, x, 0);
      const double area = covered / (double(canvas) * canvas);
      CAPTURE(to_string(shape));
      CHECK(area == doctest::Approx(analytic_area(shape, 0.25)).epsilon(0.02));
    }
  }
}

TEST_CASE("render_depth_map values") {
  const auto one = single(ShapeClass::star, 0.5, 0.5, 0.2, 0.1);
  const ImageRaster d = render_depth_map(one);
  std::set<float> values(d.data.begin(), d.data.end());
  CHECK(values == std::set<float>{0.0f, 1.0f});
  // Corners are far from the primitive.
  CHECK(d.at(0, 0) == 0.0f);
  CHECK(d.at(63, 63) == 0.0f);

  // Nearer rank wins wherever primitives overlap.
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto [spec, style] = sample_scene(rng, SceneConfig{});
    const ImageRaster depth = render_depth_map(spec);
    const auto owner = render_owner_map(spec);
    const int n = int(spec.primitives.size());
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const double px = (x + 0.5) / spec.width, py = (y + 0.5) / spec.height;
        int best = -1;
        for (int i = 0; i < n; ++i) {
          const auto& p = spec.primitives[i];
          if (primitive_contains(p, p.shape_class, px, py) &&
              (best < 0 || p.depth_rank < spec.primitives[best].depth_rank)) {
            best = i;
          }
        }
        REQUIRE(owner[y * spec.width + x] == best);
        const float expect = best < 0 ? 0.0f : float(double(n - spec.primitives[best].depth_rank) / n);
        REQUIRE(depth.at(y, x) == expect);
      }
    }
  }
}

TEST_CASE("synthesize_pair meets the structural and semantic thresholds") {
  const PairConfig cfg;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const PairSample p = synthesize_pair(rng, cfg);
    REQUIRE(p.overlap >= 0.85);
    REQUIRE(p.overlap == depth_overlap(p.src_spec, p.syn_spec));
    const auto owner = render_owner_map(p.src_spec);
    const double dist = mean_rgb_distance(render(p.src_spec, p.src_style), render(p.syn_spec, p.syn_style), owner);
    REQUIRE(dist >= 0.1);
  }
}

TEST_CASE("PNG round trip equals 8-bit quantisation") {
  Rng rng(6);
  const auto [spec, style] = sample_scene(rng, SceneConfig{});
  const ImageRaster img = render(spec, style);
  const fs::path dir = scratch_dir("png");
  fs::create_directories(dir);
  write_png(dir / "a.png", img);
  CHECK(read_png(dir / "a.png") == quantize_8bit(img));
  const ImageRaster depth = render_depth_map(spec);
  write_png(dir / "d.png", depth);
  CHECK(read_png(dir / "d.png") == quantize_8bit(depth));
  CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("spec and style JSON round trip") {
  Rng rng(9);
  const auto [spec, style] = sample_scene(rng, SceneConfig{});
  CHECK(spec_from_json(spec_to_json(spec)) == spec);
  CHECK(style_from_json(style_to_json(style)) == style);
}

TEST_CASE("generate_corpus") {
  CorpusConfig cfg;
  cfg.n_pairs = 10;
  cfg.n_test_pairs = 4;
  cfg.n_distractors = 6;
  cfg.seed = 7;
  const fs::path d1 = scratch_dir("corpus1"), d2 = scratch_dir("corpus2");
  const Manifest m = generate_corpus(cfg, d1);
  generate_corpus(cfg, d2);

  CHECK(m.split("train").size() == 10);
  CHECK(m.split("test").size() == 4);
  CHECK(m.split("distractor").size() == 6);
  std::vector<DepthLayers> pair_layers;
  for (const auto& row : m.rows) {
    CHECK(fs::exists(d1 / row.src_path));
    if (row.split == "distractor") {
      CHECK(row.syn_path.empty());
      CHECK(row.overlap < 0.5);
      continue;
    }
    CHECK(fs::exists(d1 / row.syn_path));
    const StructureSpec src = load_image_spec(m, row, false);
    const StructureSpec syn = load_image_spec(m, row, true);
    CHECK(row.overlap >= 0.85);
    CHECK(row.overlap == depth_overlap(src, syn));
    pair_layers.emplace_back(src);
  }
  for (const auto* row : m.split("distractor")) {
    const DepthLayers dl(load_image_spec(m, *row, false));
    for (const auto& pl : pair_layers) CHECK(depth_overlap(dl, pl) < 0.5);
  }

  // Same seed, same bytes.
  CHECK(slurp(d1 / "manifest.jsonl") == slurp(d2 / "manifest.jsonl"));
  CHECK(slurp(d1 / "images/src-000003.png") == slurp(d2 / "images/src-000003.png"));

  const Manifest back = read_manifest(d1 / "manifest.jsonl");
  CHECK(back.rows == m.rows);
  CHECK(back.header == m.header);

  CorpusConfig none = cfg;
  none.n_pairs = 0;
  CHECK_THROWS_AS(generate_corpus(none, scratch_dir("corpus0")), ConfigError);
  CHECK_THROWS_AS(read_manifest(d1 / "nope.jsonl"), IoError);
  fs::remove_all(d1);
  fs::remove_all(d2);
}
