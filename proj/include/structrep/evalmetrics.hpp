#pragma once

// Copy-detection scoring: top-1 prediction per query, global confidence sort,
// micro average precision over the sorted list, and mAP@k over the rankings.

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "structrep/index.hpp"

namespace structrep {

// At most one true reference per query.
class GroundTruth {
 public:
  GroundTruth() = default;
  explicit GroundTruth(const std::vector<std::pair<std::string, std::string>>& pairs);
  GroundTruth(std::initializer_list<std::pair<std::string, std::string>> pairs)
      : GroundTruth(std::vector<std::pair<std::string, std::string>>(pairs)) {}

  std::size_t size() const { return pairs_.size(); }  // G
  const std::string* reference_for(const std::string& query) const;
  bool is_correct(const std::string& query, const std::string& reference) const;
  const std::map<std::string, std::string>& pairs() const { return pairs_; }

 private:
  std::map<std::string, std::string> pairs_;
};

struct Prediction {
  std::string query;
  std::string reference;
  double confidence = 0.0;

  bool operator==(const Prediction&) const = default;
};

struct PredictionList {
  std::vector<Prediction> items;  // descending confidence, ties by (query, reference)
  std::size_t skipped = 0;        // queries with an empty ranking
};

PredictionList build_predictions(const std::vector<QueryResult>& results);

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct PRCurve {
  std::vector<double> precision;  // p(i), i = 1..N
  std::vector<double> recall;     // r(i)
  std::vector<PRPoint> points;    // one per distinct confidence, thresholds descending
};

struct MicroApResult {
  double micro_ap = 0.0;
  PRCurve curve;
};

MicroApResult micro_ap(const PredictionList& preds, const GroundTruth& truth);

// Mean of 1/rank (0 beyond rank k) over the results whose query has a true
// reference.
double map_at_k(const std::vector<QueryResult>& results, const GroundTruth& truth, std::size_t k);

struct EvalConfig {
  std::vector<std::size_t> ks{1, 5, 10};
};

struct MetricsReport {
  double micro_ap = 0.0;
  std::vector<std::pair<std::size_t, double>> map_at;  // (k, mAP@k)
  std::size_t n_predictions = 0;
  std::size_t n_queries = 0;
  std::size_t n_ground_truth = 0;
  std::size_t n_gallery = 0;
  std::size_t skipped = 0;

  double map(std::size_t k) const;
};

struct Evaluation {
  MetricsReport report;
  PRCurve curve;
};

// Throws ValidationError naming ids that are missing or duplicated.
Evaluation evaluate(const EmbeddingSet& queries, const EmbeddingSet& gallery, const GroundTruth& truth,
                    const EvalConfig& config = {});

inline constexpr const char* kMetricsFormat = "structrep-metrics";
inline constexpr int kMetricsVersion = 1;
void write_metrics_report(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_metrics_report(const std::filesystem::path& path);

// Two whitespace-separated columns: recall precision, one row per PR point.
void write_pr_curve(const std::filesystem::path& path, const PRCurve& curve);

}  // namespace structrep
