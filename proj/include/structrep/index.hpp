#pragma once

// Exact cosine kNN over an immutable gallery of unit vectors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "structrep/numerics.hpp"

namespace structrep {

struct ScoredId {
  std::string id;
  double confidence = 0.0;  // raw cosine

  bool operator==(const ScoredId&) const = default;
};

struct QueryResult {
  std::string query_id;
  std::vector<ScoredId> ranked;  // descending confidence, ties by ascending id

  bool operator==(const QueryResult&) const = default;
};

// Orders a before b in a ranking.
inline bool ranks_before(double score_a, const std::string& id_a, double score_b, const std::string& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

template <typename Scalar>
class BasicGallery {
 public:
  BasicGallery() = default;

  // Rows are renormalised; ids must be unique and every row the same length.
  static BasicGallery build(std::vector<std::string> ids, const Matrix& vectors) {
    if (ids.empty()) throw BuildError("gallery: no entries");
    if (Eigen::Index(ids.size()) != vectors.rows()) {
      throw ShapeError("gallery: " + std::to_string(ids.size()) + " ids for " + std::to_string(vectors.rows()) +
                       " vectors");
    }
    if (vectors.cols() < 1) throw ShapeError("gallery: zero-dimensional vectors");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
      if (!seen.insert(id).second) throw BuildError("gallery: duplicate id '" + id + "'");
    }
    BasicGallery g;
    g.ids_ = std::move(ids);
    g.vectors_.resize(vectors.rows(), vectors.cols());
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      const Vector row = vectors.row(i).transpose();
      try {
        g.vectors_.row(i) = l2_normalize<double>(row).transpose().template cast<Scalar>();
      } catch (const DegenerateInputError&) {
        throw BuildError("gallery: entry '" + g.ids_[i] + "' has zero norm");
      }
    }
    return g;
  }

  static BasicGallery build(const std::vector<std::pair<std::string, Vector>>& entries) {
    if (entries.empty()) throw BuildError("gallery: no entries");
    const Eigen::Index dim = entries.front().second.size();
    Matrix m(entries.size(), dim);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].second.size() != dim) {
        throw ShapeError("gallery: entry '" + entries[i].first + "' has dimension " +
                         std::to_string(entries[i].second.size()) + ", expected " + std::to_string(dim));
      }
      m.row(Eigen::Index(i)) = entries[i].second.transpose();
      ids.push_back(entries[i].first);
    }
    return build(std::move(ids), m);
  }

  std::size_t size() const { return ids_.size(); }
  Eigen::Index dim() const { return vectors_.cols(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const MatrixX<Scalar>& vectors() const { return vectors_; }

  // Exact top-k; k is clamped to the gallery size.
  QueryResult search(const Vector& query, std::size_t k, std::string query_id = {}) const {
    if (k < 1) throw PreconditionError("search: k must be >= 1");
    if (query.size() != dim()) {
      throw ShapeError("search: query dimension " + std::to_string(query.size()) + ", gallery " +
                       std::to_string(dim()));
    }
    if (std::abs(query.norm() - 1.0) > kUnitTolerance) throw PreconditionError("search: query is not unit-norm");
    k = std::min(k, size());

    // Scores accumulate in double whatever the storage type.
    std::vector<double> score(size());
    const Eigen::Index d = dim();
    for (std::size_t i = 0; i < size(); ++i) {
      const Scalar* row = vectors_.data() + i * std::size_t(d);
      double s = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) s += double(row[j]) * query[j];
      score[i] = s;
    }
    std::vector<std::size_t> order(size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::partial_sort(order.begin(), order.begin() + std::ptrdiff_t(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return ranks_before(score[a], ids_[a], score[b], ids_[b]); });

    QueryResult r;
    r.query_id = std::move(query_id);
    r.ranked.reserve(k);
    for (std::size_t i = 0; i < k; ++i) r.ranked.push_back({ids_[order[i]], score[order[i]]});
    return r;
  }

  // Row i of `queries` is answered in slot i.
  std::vector<QueryResult> batch_search(const Matrix& queries, std::size_t k,
                                        std::span<const std::string> query_ids = {}) const {
    if (!query_ids.empty() && Eigen::Index(query_ids.size()) != queries.rows()) {
      throw ShapeError("batch_search: " + std::to_string(query_ids.size()) + " ids for " +
                       std::to_string(queries.rows()) + " queries");
    }
    std::vector<QueryResult> out;
    out.reserve(queries.rows());
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
      out.push_back(search(queries.row(i).transpose(), k, query_ids.empty() ? std::string{} : query_ids[i]));
    }
    return out;
  }

 private:
  std::vector<std::string> ids_;
  MatrixX<Scalar> vectors_;
};

// Float storage matches the on-disk precision of embedding files.
using Gallery = BasicGallery<float>;

// Embedding file: "SEMB", u32 version, u32 count, u32 dim, count length-prefixed
// UTF-8 ids, then count x dim float32 values, all little-endian.
inline constexpr std::uint32_t kEmbeddingVersion = 1;

struct EmbeddingSet {
  std::vector<std::string> ids;
  Matrix vectors;  // count x dim, values exactly representable as float

  std::size_t size() const { return ids.size(); }
};

void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set);
EmbeddingSet read_embeddings(const std::filesystem::path& path);

}  // namespace structrep
