#include "structrep/corpus.hpp"

#include <cstdio>
#include <fstream>

#include "structrep/image_io.hpp"

namespace structrep {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDistractorStream = std::uint64_t{1} << 40;

std::string padded(std::uint64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(i));
  return buf;
}

json rgb_to_json(const Rgb& c) { return json::array({c[0], c[1], c[2]}); }
Rgb rgb_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

}  // namespace

std::vector<const ManifestRow*> Manifest::split(std::string_view name) const {
  std::vector<const ManifestRow*> out;
  for (const auto& r : rows) {
    if (r.split == name) out.push_back(&r);
  }
  return out;
}

void CorpusConfig::validate() const {
  if (n_pairs < 1) throw ConfigError("corpus: number of pairs must be at least 1");
  if (n_test_pairs < 0 || n_distractors < 0) throw ConfigError("corpus: negative count");
  pair.scene.validate();
  if (!(pair.jitter >= 0.0 && pair.jitter <= kMaxJitter)) throw ConfigError("corpus: jitter outside [0, 0.05]");
}

std::string src_image_id(std::string_view pair_id) { return "src-" + std::string(pair_id); }
std::string syn_image_id(std::string_view pair_id) { return "syn-" + std::string(pair_id); }

std::string image_id_from_path(std::string_view path) {
  return fs::path(std::string(path)).stem().string();
}

PairSample corpus_pair(std::uint64_t seed, std::uint64_t index, const PairConfig& config) {
  Rng rng = Rng(seed).substream(index);
  return synthesize_pair(rng, config);
}

std::pair<StructureSpec, SemanticStyle> corpus_distractor(std::uint64_t seed, std::uint64_t index,
                                                          const SceneConfig& scene,
                                                          const std::vector<DepthLayers>& avoid,
                                                          double max_overlap, double* achieved) {
  Rng rng = Rng(seed).substream(kDistractorStream + index);
  std::pair<StructureSpec, SemanticStyle> best;
  double best_overlap = 2.0;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    auto candidate = sample_scene(rng, scene);
    const DepthLayers layers(candidate.first);
    double worst = 0.0;
    for (const auto& other : avoid) {
      worst = std::max(worst, depth_overlap(layers, other));
      if (worst >= max_overlap && worst >= best_overlap) break;
    }
    if (worst < best_overlap) {
      best = std::move(candidate);
      best_overlap = worst;
    }
    if (best_overlap < max_overlap) break;
  }
  if (achieved) *achieved = best_overlap;
  return best;
}

json spec_to_json(const StructureSpec& spec) {
  json prims = json::array();
  for (const auto& p : spec.primitives) {
    prims.push_back({{"shape_class", to_string(p.shape_class)},
                     {"center", {p.center.x(), p.center.y()}},
                     {"scale", p.scale},
                     {"rotation", p.rotation},
                     {"depth_rank", p.depth_rank}});
  }
  return {{"height", spec.height}, {"width", spec.width}, {"primitives", prims}};
}

StructureSpec spec_from_json(const json& j) {
  StructureSpec spec;
  spec.height = j.at("height").get<int>();
  spec.width = j.at("width").get<int>();
  for (const auto& jp : j.at("primitives")) {
    Primitive p;
    p.shape_class = shape_class_from_string(jp.at("shape_class").get<std::string>());
    p.center = {jp.at("center").at(0).get<double>(), jp.at("center").at(1).get<double>()};
    p.scale = jp.at("scale").get<double>();
    p.rotation = jp.at("rotation").get<double>();
    p.depth_rank = jp.at("depth_rank").get<int>();
    spec.primitives.push_back(p);
  }
  spec.validate();
  return spec;
}

json style_to_json(const SemanticStyle& style) {
  json classes = json::array(), fills = json::array(), textures = json::array();
  for (auto c : style.shape_classes) classes.push_back(to_string(c));
  for (const auto& f : style.fills) fills.push_back(rgb_to_json(f));
  for (auto t : style.textures) textures.push_back(to_string(t));
  return {{"shape_classes", classes},
          {"fills", fills},
          {"textures", textures},
          {"background_top", rgb_to_json(style.background_top)},
          {"background_bottom", rgb_to_json(style.background_bottom)},
          {"style_id", style.style_id}};
}

SemanticStyle style_from_json(const json& j) {
  SemanticStyle s;
  for (const auto& c : j.at("shape_classes")) s.shape_classes.push_back(shape_class_from_string(c.get<std::string>()));
  for (const auto& f : j.at("fills")) s.fills.push_back(rgb_from_json(f));
  for (const auto& t : j.at("textures")) s.textures.push_back(texture_from_string(t.get<std::string>()));
  s.background_top = rgb_from_json(j.at("background_top"));
  s.background_bottom = rgb_from_json(j.at("background_bottom"));
  s.style_id = j.at("style_id").get<int>();
  return s;
}

Manifest generate_corpus(const CorpusConfig& config, const fs::path& out_dir) {
  config.validate();
  std::error_code ec;
  for (const auto& dir : {out_dir, out_dir / "images", out_dir / "specs"}) {
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
  }

  Manifest manifest;
  manifest.root = out_dir;
  manifest.header = {{"format", kManifestFormat},
                     {"version", kManifestVersion},
                     {"seed", config.seed},
                     {"pairs", config.n_pairs},
                     {"test_pairs", config.n_test_pairs},
                     {"distractors", config.n_distractors},
                     {"jitter", config.pair.jitter},
                     {"canvas", {config.pair.scene.height, config.pair.scene.width}}};

  const int total_pairs = config.n_pairs + config.n_test_pairs;
  std::vector<DepthLayers> pair_layers;
  pair_layers.reserve(total_pairs);
  for (int i = 0; i < total_pairs; ++i) {
    const PairSample pair = corpus_pair(config.seed, std::uint64_t(i), config.pair);
    const std::string id = padded(i);
    ManifestRow row;
    row.pair_id = id;
    row.src_path = "images/" + src_image_id(id) + ".png";
    row.syn_path = "images/" + syn_image_id(id) + ".png";
    row.spec_id = "pair-" + id;
    row.overlap = pair.overlap;
    row.split = i < config.n_pairs ? "train" : "test";

    write_png(out_dir / row.src_path, render(pair.src_spec, pair.src_style));
    write_png(out_dir / row.syn_path, render(pair.syn_spec, pair.syn_style));
    write_json_file(out_dir / "specs" / (row.spec_id + ".json"),
                    {{"version", kManifestVersion},
                     {"source", spec_to_json(pair.src_spec)},
                     {"source_style", style_to_json(pair.src_style)},
                     {"synthetic", spec_to_json(pair.syn_spec)},
                     {"synthetic_style", style_to_json(pair.syn_style)}});
    pair_layers.emplace_back(pair.src_spec);
    manifest.rows.push_back(std::move(row));
  }

  for (int i = 0; i < config.n_distractors; ++i) {
    double achieved = 0.0;
    const auto [spec, style] = corpus_distractor(config.seed, std::uint64_t(i), config.pair.scene,
                                                 pair_layers, config.max_distractor_overlap, &achieved);
    const std::string id = padded(i);
    ManifestRow row;
    row.pair_id = "d" + id;
    row.src_path = "images/dis-" + id + ".png";
    row.spec_id = "dis-" + id;
    row.overlap = achieved;
    row.split = "distractor";
    write_png(out_dir / row.src_path, render(spec, style));
    write_json_file(out_dir / "specs" / (row.spec_id + ".json"),
                    {{"version", kManifestVersion},
                     {"source", spec_to_json(spec)},
                     {"source_style", style_to_json(style)}});
    manifest.rows.push_back(std::move(row));
  }

  write_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << manifest.header.dump() << '\n';
  for (const auto& r : manifest.rows) {
    const json j = {{"pair_id", r.pair_id}, {"src_path", r.src_path}, {"syn_path", r.syn_path},
                    {"spec_id", r.spec_id}, {"overlap", r.overlap},   {"split", r.split}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  Manifest m;
  m.root = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (lineno == 1) {
        if (j.value("format", "") != kManifestFormat) {
          throw IoError("'" + path.string() + "' is not a structrep manifest");
        }
        if (j.value("version", 0) != kManifestVersion) {
          throw IoError("'" + path.string() + "': unsupported manifest version");
        }
        m.header = j;
        continue;
      }
      ManifestRow r;
      r.pair_id = j.at("pair_id").get<std::string>();
      r.src_path = j.at("src_path").get<std::string>();
      r.syn_path = j.at("syn_path").get<std::string>();
      r.spec_id = j.at("spec_id").get<std::string>();
      r.overlap = j.at("overlap").get<double>();
      r.split = j.at("split").get<std::string>();
      m.rows.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw IoError("'" + path.string() + "' line " + std::to_string(lineno) + ": " + e.what());
  }
  if (lineno == 0) throw IoError("manifest '" + path.string() + "' is empty");
  return m;
}

StructureSpec load_image_spec(const Manifest& manifest, const ManifestRow& row, bool synthetic) {
  const json j = read_json_file(manifest.root / "specs" / (row.spec_id + ".json"));
  return spec_from_json(j.at(synthetic ? "synthetic" : "source"));
}

}  // namespace structrep
