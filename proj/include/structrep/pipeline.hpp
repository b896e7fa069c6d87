#pragma once

// Glue between a corpus on disk and the embedding / evaluation stages: named
// image splits, the query-to-reference truth, and the two reference
// embedders (a colour histogram and the ground-truth depth layout).

#include <string>
#include <string_view>
#include <vector>

#include "structrep/corpus.hpp"
#include "structrep/encoder.hpp"
#include "structrep/evalmetrics.hpp"
#include "structrep/index.hpp"

namespace structrep {

// "train"        source and synthetic images of the training pairs
// "test-query"   source images of the held-out pairs
// "test-gallery" synthetic images of the held-out pairs, then the distractors
// "distractor"   distractor images only
inline constexpr std::string_view kSplitNames[] = {"train", "test-query", "test-gallery", "distractor"};

struct SplitEntry {
  std::string id;
  const ManifestRow* row = nullptr;
  bool synthetic = false;

  std::string path() const { return synthetic ? row->syn_path : row->src_path; }
};

std::vector<SplitEntry> select_split(const Manifest& manifest, std::string_view split);

std::vector<ImageRaster> load_split_images(const Manifest& manifest, const std::vector<SplitEntry>& entries);

// src-X -> syn-X for every held-out pair.
GroundTruth test_truth(const Manifest& manifest);

EmbeddingSet embed_split(const EncoderParams& params, const Manifest& manifest, const std::vector<SplitEntry>& entries);

// Joint RGB histogram with `bins` levels per channel, l2-normalised.
Vector color_hist_embedding(const ImageRaster& image, int bins = 8);

// Depth map of the scene's true structure, average-pooled to grid x grid
// cells and l2-normalised.
Vector depth_oracle_embedding(const StructureSpec& spec, int grid = 16);

enum class BaselineMethod { color_hist, depth_oracle };
BaselineMethod baseline_method_from_string(std::string_view s);

EmbeddingSet baseline_embed_split(const Manifest& manifest, const std::vector<SplitEntry>& entries,
                                  BaselineMethod method);

}  // namespace structrep
