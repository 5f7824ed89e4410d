#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "msdp/episodes.hpp"
#include "msdp/proto_classifier.hpp"
#include "msdp/span_extractor.hpp"

namespace msdp {

struct EpisodeMetrics {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  double precision = 0.0;  // 0 when the denominator is 0
  double recall = 0.0;
  double f1 = 0.0;
};

EpisodeMetrics metrics_from_counts(long tp, long fp, long fn);

// Exact-match (start, end, type) scoring over aligned sentence lists.
// Duplicate predictions are deduplicated before counting.
EpisodeMetrics episode_f1(const std::vector<std::vector<TypedSpan>>& predictions,
                          const std::vector<std::vector<TypedSpan>>& golds);

// Boundary-only precision/recall (types ignored).
std::pair<double, double> extractor_pr(const std::vector<std::vector<Cell>>& predicted,
                                       const std::vector<std::vector<Cell>>& gold);

struct ErrorBreakdown {
  long fp_type = 0;  // right boundary, wrong type
  long fp_span = 0;  // remaining false positives
  long fn = 0;
  long total_predictions = 0;
  double fp_type_rate = 0.0;  // relative to total predictions
  double fp_span_rate = 0.0;
};

ErrorBreakdown error_analysis(const std::vector<std::vector<TypedSpan>>& predictions,
                              const std::vector<std::vector<TypedSpan>>& golds);

// Inference output for one episode, aligned with its query sentences.
struct EpisodePredictions {
  std::vector<std::vector<TypedSpan>> typed;
  std::vector<std::vector<Cell>> extracted;
};

struct EvalSummary {
  EpisodeMetrics micro;            // counts pooled over all episodes
  double per_episode_mean_f1 = 0;  // mean of per-episode F1 values
  double per_episode_std_f1 = 0;   // sample standard deviation
  double extractor_precision = 0;
  double extractor_recall = 0;
  ErrorBreakdown errors;

  nlohmann::json to_json(const std::string& variant = "", long seed = -1) const;
};

EvalSummary evaluate_predictions(const std::vector<Episode>& episodes,
                                 const std::vector<EpisodePredictions>& predictions);

// Gold views of an episode's query side.
std::vector<std::vector<TypedSpan>> gold_typed_spans(const Episode& ep);
std::vector<std::vector<Cell>> gold_boundary_spans(const Episode& ep);

double mean(const std::vector<double>& xs);
double sample_std(const std::vector<double>& xs);

}  // namespace msdp
