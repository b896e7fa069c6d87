#pragma once

// On-disk corpus: PNG images, per-scene spec files and a line-delimited JSON
// manifest.
//
//   <root>/manifest.jsonl       header line, then one row per pair / distractor
//   <root>/images/src-NNNNNN.png
//   <root>/images/syn-NNNNNN.png
//   <root>/images/dis-NNNNNN.png
//   <root>/specs/<spec_id>.json

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "structrep/synthgen.hpp"

namespace structrep {

inline constexpr const char* kManifestFormat = "structrep-manifest";
inline constexpr int kManifestVersion = 1;

struct ManifestRow {
  std::string pair_id;
  std::string src_path;  // relative to the manifest directory
  std::string syn_path;  // empty for distractors
  std::string spec_id;
  double overlap = 0.0;  // pairs: depth_overlap(src, syn); distractors: max overlap with any pair
  std::string split;     // "train", "test" or "distractor"

  bool operator==(const ManifestRow&) const = default;
};

struct Manifest {
  nlohmann::json header;
  std::vector<ManifestRow> rows;
  std::filesystem::path root;  // directory the relative paths resolve against

  std::vector<const ManifestRow*> split(std::string_view name) const;
};

struct CorpusConfig {
  int n_pairs = 500;       // training pairs
  int n_test_pairs = 0;    // held-out pairs
  int n_distractors = 0;   // unrelated gallery scenes
  std::uint64_t seed = 0;
  PairConfig pair;
  double max_distractor_overlap = 0.5;

  void validate() const;
};

// Image ids used throughout the tools, e.g. "src-000012".
std::string src_image_id(std::string_view pair_id);
std::string syn_image_id(std::string_view pair_id);
std::string image_id_from_path(std::string_view path);

// Pair `index` of a corpus; independent of every other pair.
PairSample corpus_pair(std::uint64_t seed, std::uint64_t index, const PairConfig& config);

// Distractor `index`, redrawn until its overlap with every spec in `avoid`
// is below `max_overlap`.
std::pair<StructureSpec, SemanticStyle> corpus_distractor(std::uint64_t seed, std::uint64_t index,
                                                          const SceneConfig& scene,
                                                          const std::vector<DepthLayers>& avoid,
                                                          double max_overlap, double* achieved);

Manifest generate_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

nlohmann::json spec_to_json(const StructureSpec& spec);
StructureSpec spec_from_json(const nlohmann::json& j);
nlohmann::json style_to_json(const SemanticStyle& style);
SemanticStyle style_from_json(const nlohmann::json& j);

// Structure of the scene an image was rendered from: "src-*" and "dis-*"
// resolve to the source spec, "syn-*" to the jittered one.
StructureSpec load_image_spec(const Manifest& manifest, const ManifestRow& row, bool synthetic);

}  // namespace structrep
