#include "structrep/evalmetrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace structrep {

namespace {

std::string list_ids(const std::vector<std::string>& ids) {
  std::string s;
  const std::size_t shown = std::min<std::size_t>(ids.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) s += (i ? ", " : "") + ids[i];
  if (ids.size() > shown) s += ", ... (" + std::to_string(ids.size()) + " total)";
  return s;
}

std::vector<std::string> duplicates(const std::vector<std::string>& ids) {
  std::unordered_set<std::string> seen;
  std::set<std::string> dup;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) dup.insert(id);
  }
  return {dup.begin(), dup.end()};
}

}  // namespace

GroundTruth::GroundTruth(const std::vector<std::pair<std::string, std::string>>& pairs) {
  for (const auto& [q, r] : pairs) {
    if (!pairs_.emplace(q, r).second) throw ValidationError("ground truth: query '" + q + "' has two references");
  }
}

const std::string* GroundTruth::reference_for(const std::string& query) const {
  const auto it = pairs_.find(query);
  return it == pairs_.end() ? nullptr : &it->second;
}

bool GroundTruth::is_correct(const std::string& query, const std::string& reference) const {
  const std::string* r = reference_for(query);
  return r != nullptr && *r == reference;
}

PredictionList build_predictions(const std::vector<QueryResult>& results) {
  PredictionList out;
  for (const auto& r : results) {
    if (r.ranked.empty()) {
      ++out.skipped;
      continue;
    }
    out.items.push_back({r.query_id, r.ranked.front().id, r.ranked.front().confidence});
  }
  std::sort(out.items.begin(), out.items.end(), [](const Prediction& a, const Prediction& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.query != b.query) return a.query < b.query;
    return a.reference < b.reference;
  });
  return out;
}

MicroApResult micro_ap(const PredictionList& preds, const GroundTruth& truth) {
  if (truth.size() == 0) throw UndefinedMetricError("micro_ap: ground truth is empty");
  const std::size_t g = truth.size();
  const std::size_t n = preds.items.size();
  MicroApResult out;
  out.curve.precision.reserve(n);
  out.curve.recall.reserve(n);
  // Extended precision keeps small rational fixtures exact after rounding.
  std::size_t correct = 0;
  long double sum = 0.0L, prev_recall = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const Prediction& p = preds.items[i];
    if (truth.is_correct(p.query, p.reference)) ++correct;
    const long double precision_l = (long double)correct / (long double)(i + 1);
    const long double recall_l = (long double)correct / (long double)g;
    sum += precision_l * (recall_l - prev_recall);
    prev_recall = recall_l;
    const double precision = double(precision_l), recall = double(recall_l);
    out.curve.precision.push_back(precision);
    out.curve.recall.push_back(recall);
    // A threshold admits every prediction at or above it, so a point closes a
    // run of equal confidences.
    if (i + 1 == n || preds.items[i + 1].confidence != p.confidence) {
      out.curve.points.push_back({p.confidence, precision, recall});
    }
  }
  out.micro_ap = double(sum);
  return out;
}

double map_at_k(const std::vector<QueryResult>& results, const GroundTruth& truth, std::size_t k) {
  if (k < 1) throw PreconditionError("map_at_k: k must be >= 1");
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& r : results) {
    const std::string* ref = truth.reference_for(r.query_id);
    if (ref == nullptr) continue;
    ++counted;
    const std::size_t limit = std::min(k, r.ranked.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (r.ranked[i].id == *ref) {
        sum += 1.0 / double(i + 1);
        break;
      }
    }
  }
  if (counted == 0) throw UndefinedMetricError("map_at_k: no query has a ground-truth reference");
  return sum / double(counted);
}

double MetricsReport::map(std::size_t k) const {
  for (const auto& [kk, v] : map_at) {
    if (kk == k) return v;
  }
  throw RangeError("metrics report has no mAP@" + std::to_string(k));
}

Evaluation evaluate(const EmbeddingSet& queries, const EmbeddingSet& gallery, const GroundTruth& truth,
                    const EvalConfig& config) {
  if (config.ks.empty()) throw ConfigError("evaluate: no k values");
  for (std::size_t k : config.ks) {
    if (k < 1) throw ConfigError("evaluate: k must be >= 1");
  }
  if (queries.size() == 0) throw ValidationError("evaluate: no queries");
  if (gallery.size() == 0) throw ValidationError("evaluate: empty gallery");
  if (queries.vectors.cols() != gallery.vectors.cols()) {
    throw ValidationError("evaluate: query dimension " + std::to_string(queries.vectors.cols()) +
                          " differs from gallery dimension " + std::to_string(gallery.vectors.cols()));
  }
  if (auto d = duplicates(queries.ids); !d.empty()) {
    throw ValidationError("evaluate: duplicate query ids: " + list_ids(d));
  }
  if (auto d = duplicates(gallery.ids); !d.empty()) {
    throw ValidationError("evaluate: duplicate gallery ids: " + list_ids(d));
  }
  const std::unordered_set<std::string> qset(queries.ids.begin(), queries.ids.end());
  const std::unordered_set<std::string> gset(gallery.ids.begin(), gallery.ids.end());
  std::vector<std::string> missing_q;
  std::vector<std::string> missing_r;
  for (const auto& [q, r] : truth.pairs()) {
    if (!qset.contains(q)) missing_q.push_back(q);
    if (!gset.contains(r)) missing_r.push_back(r);
  }
  if (!missing_q.empty() || !missing_r.empty()) {
    std::string msg = "evaluate: ground truth does not match the embeddings;";
    if (!missing_q.empty()) msg += " queries not embedded: " + list_ids(missing_q) + ";";
    if (!missing_r.empty()) msg += " references not in gallery: " + list_ids(missing_r) + ";";
    throw ValidationError(msg);
  }

  const Gallery index = Gallery::build(gallery.ids, gallery.vectors);
  Matrix q = queries.vectors;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const double norm = q.row(i).norm();
    if (!(norm > 0.0)) throw ValidationError("evaluate: query '" + queries.ids[i] + "' has zero norm");
    q.row(i) /= norm;
  }
  const std::size_t kmax = *std::max_element(config.ks.begin(), config.ks.end());
  const auto results = index.batch_search(q, kmax, queries.ids);

  const PredictionList preds = build_predictions(results);
  Evaluation ev;
  MicroApResult ap = micro_ap(preds, truth);
  ev.report.micro_ap = ap.micro_ap;
  ev.curve = std::move(ap.curve);
  for (std::size_t k : config.ks) ev.report.map_at.emplace_back(k, map_at_k(results, truth, k));
  ev.report.n_predictions = preds.items.size();
  ev.report.n_queries = queries.size();
  ev.report.n_ground_truth = truth.size();
  ev.report.n_gallery = gallery.size();
  ev.report.skipped = preds.skipped;
  return ev;
}

void write_metrics_report(const std::filesystem::path& path, const MetricsReport& report) {
  nlohmann::json j = {{"format", kMetricsFormat},
                      {"version", kMetricsVersion},
                      {"micro_ap", report.micro_ap},
                      {"n_predictions", report.n_predictions},
                      {"n_queries", report.n_queries},
                      {"n_ground_truth", report.n_ground_truth},
                      {"n_gallery", report.n_gallery},
                      {"skipped", report.skipped}};
  for (const auto& [k, v] : report.map_at) j["map_at_" + std::to_string(k)] = v;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open metrics report '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing metrics report '" + path.string() + "'");
}

MetricsReport read_metrics_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics report '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("metrics report '" + path.string() + "': " + e.what());
  }
  if (j.value("format", "") != kMetricsFormat || j.value("version", 0) != kMetricsVersion) {
    throw IoError("metrics report '" + path.string() + "': unsupported format or version");
  }
  MetricsReport r;
  r.micro_ap = j.at("micro_ap").get<double>();
  r.n_predictions = j.at("n_predictions").get<std::size_t>();
  r.n_queries = j.at("n_queries").get<std::size_t>();
  r.n_ground_truth = j.at("n_ground_truth").get<std::size_t>();
  r.n_gallery = j.at("n_gallery").get<std::size_t>();
  r.skipped = j.at("skipped").get<std::size_t>();
  for (const auto& [key, value] : j.items()) {
    if (key.starts_with("map_at_")) r.map_at.emplace_back(std::stoul(key.substr(7)), value.get<double>());
  }
  std::sort(r.map_at.begin(), r.map_at.end());
  return r;
}

void write_pr_curve(const std::filesystem::path& path, const PRCurve& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open PR data file '" + path.string() + "' for writing");
  out << "# recall precision\n";
  char line[64];
  for (const PRPoint& p : curve.points) {
    std::snprintf(line, sizeof line, "%.17g %.17g\n", p.recall, p.precision);
    out << line;
  }
  if (!out) throw IoError("failed writing PR data file '" + path.string() + "'");
}

}  // namespace structrep
