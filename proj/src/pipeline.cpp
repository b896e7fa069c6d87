#include "structrep/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "structrep/image_io.hpp"

namespace structrep {

std::vector<SplitEntry> select_split(const Manifest& manifest, std::string_view split) {
  std::vector<SplitEntry> out;
  auto add = [&](const ManifestRow* row, bool synthetic) {
    out.push_back({image_id_from_path(synthetic ? row->syn_path : row->src_path), row, synthetic});
  };
  if (split == "train") {
    for (const ManifestRow* row : manifest.split("train")) {
      add(row, false);
      add(row, true);
    }
  } else if (split == "test-query") {
    for (const ManifestRow* row : manifest.split("test")) add(row, false);
  } else if (split == "test-gallery") {
    for (const ManifestRow* row : manifest.split("test")) add(row, true);
    for (const ManifestRow* row : manifest.split("distractor")) add(row, false);
  } else if (split == "distractor") {
    for (const ManifestRow* row : manifest.split("distractor")) add(row, false);
  } else {
    throw ConfigError("unknown split '" + std::string(split) +
                      "' (expected train, test-query, test-gallery or distractor)");
  }
  return out;
}

std::vector<ImageRaster> load_split_images(const Manifest& manifest, const std::vector<SplitEntry>& entries) {
  std::vector<ImageRaster> images;
  images.reserve(entries.size());
  for (const auto& e : entries) images.push_back(read_png(manifest.root / e.path()));
  return images;
}

GroundTruth test_truth(const Manifest& manifest) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const ManifestRow* row : manifest.split("test")) {
    pairs.emplace_back(image_id_from_path(row->src_path), image_id_from_path(row->syn_path));
  }
  return GroundTruth(pairs);
}

EmbeddingSet embed_split(const EncoderParams& params, const Manifest& manifest,
                         const std::vector<SplitEntry>& entries) {
  EmbeddingSet set;
  const auto images = load_split_images(manifest, entries);
  for (const auto& e : entries) set.ids.push_back(e.id);
  set.vectors = embed_images(params, images);
  return set;
}

Vector color_hist_embedding(const ImageRaster& image, int bins) {
  if (bins < 1) throw ConfigError("color_hist: bins must be >= 1");
  if (image.channels != 3) throw ShapeError("color_hist: expects an RGB image");
  Vector h = Vector::Zero(Eigen::Index(bins) * bins * bins);
  auto level = [bins](float v) { return std::clamp(int(v * float(bins)), 0, bins - 1); };
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const int r = level(image.at(y, x, 0));
      const int g = level(image.at(y, x, 1));
      const int b = level(image.at(y, x, 2));
      h[(r * bins + g) * bins + b] += 1.0;
    }
  }
  return l2_normalize<double>(h);
}

Vector depth_oracle_embedding(const StructureSpec& spec, int grid) {
  if (grid < 1 || spec.height % grid != 0 || spec.width % grid != 0) {
    throw ConfigError("depth_oracle: grid " + std::to_string(grid) + " must divide the canvas");
  }
  const ImageRaster depth = render_depth_map(spec);
  const int ch = spec.height / grid;
  const int cw = spec.width / grid;
  Vector v = Vector::Zero(Eigen::Index(grid) * grid);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) v[(y / ch) * grid + x / cw] += depth.at(y, x);
  }
  v /= double(ch * cw);
  return l2_normalize<double>(v);
}

BaselineMethod baseline_method_from_string(std::string_view s) {
  if (s == "color_hist") return BaselineMethod::color_hist;
  if (s == "depth_oracle") return BaselineMethod::depth_oracle;
  throw ConfigError("unknown baseline method '" + std::string(s) + "' (expected color_hist or depth_oracle)");
}

EmbeddingSet baseline_embed_split(const Manifest& manifest, const std::vector<SplitEntry>& entries,
                                  BaselineMethod method) {
  EmbeddingSet set;
  std::vector<Vector> rows;
  for (const auto& e : entries) {
    set.ids.push_back(e.id);
    if (method == BaselineMethod::color_hist) {
      rows.push_back(color_hist_embedding(read_png(manifest.root / e.path())));
    } else {
      rows.push_back(depth_oracle_embedding(load_image_spec(manifest, *e.row, e.synthetic)));
    }
  }
  const Eigen::Index dim = rows.empty() ? 0 : rows.front().size();
  set.vectors.resize(Eigen::Index(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) set.vectors.row(Eigen::Index(i)) = rows[i].transpose();
  return set;
}

}  // namespace structrep
