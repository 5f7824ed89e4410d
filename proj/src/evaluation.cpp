#include "msdp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "msdp/errors.hpp"

namespace msdp {

EpisodeMetrics metrics_from_counts(long tp, long fp, long fn) {
  EpisodeMetrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

namespace {

std::set<TypedSpan> dedup(const std::vector<TypedSpan>& spans) {
  return {spans.begin(), spans.end()};
}

}  // namespace

EpisodeMetrics episode_f1(const std::vector<std::vector<TypedSpan>>& predictions,
                          const std::vector<std::vector<TypedSpan>>& golds) {
  if (predictions.size() != golds.size())
    throw DataError("episode_f1: prediction/gold sentence counts differ");
  long tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    auto preds = dedup(predictions[i]);
    auto gold = dedup(golds[i]);
    for (const auto& p : preds) {
      if (gold.count(p))
        ++tp;
      else
        ++fp;
    }
    for (const auto& g : gold)
      if (!preds.count(g)) ++fn;
  }
  return metrics_from_counts(tp, fp, fn);
}

std::pair<double, double> extractor_pr(const std::vector<std::vector<Cell>>& predicted,
                                       const std::vector<std::vector<Cell>>& gold) {
  if (predicted.size() != gold.size())
    throw DataError("extractor_pr: prediction/gold sentence counts differ");
  long tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    std::set<Cell> preds(predicted[i].begin(), predicted[i].end());
    std::set<Cell> gset(gold[i].begin(), gold[i].end());
    for (const auto& p : preds) {
      if (gset.count(p))
        ++tp;
      else
        ++fp;
    }
    for (const auto& g : gset)
      if (!preds.count(g)) ++fn;
  }
  double precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  double recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  return {precision, recall};
}

ErrorBreakdown error_analysis(const std::vector<std::vector<TypedSpan>>& predictions,
                              const std::vector<std::vector<TypedSpan>>& golds) {
  if (predictions.size() != golds.size())
    throw DataError("error_analysis: prediction/gold sentence counts differ");
  ErrorBreakdown out;
  for (size_t i = 0; i < predictions.size(); ++i) {
    auto preds = dedup(predictions[i]);
    auto gold = dedup(golds[i]);
    std::set<Cell> gold_bounds;
    for (const auto& g : gold) gold_bounds.insert({g.start, g.end});
    out.total_predictions += static_cast<long>(preds.size());
    for (const auto& p : preds) {
      if (gold.count(p)) continue;  // true positive
      if (gold_bounds.count({p.start, p.end}))
        ++out.fp_type;
      else
        ++out.fp_span;
    }
    for (const auto& g : gold)
      if (!preds.count(g)) ++out.fn;
  }
  if (out.total_predictions > 0) {
    out.fp_type_rate = static_cast<double>(out.fp_type) / out.total_predictions;
    out.fp_span_rate = static_cast<double>(out.fp_span) / out.total_predictions;
  }
  return out;
}

std::vector<std::vector<TypedSpan>> gold_typed_spans(const Episode& ep) {
  std::vector<std::vector<TypedSpan>> out;
  for (const auto& s : ep.query) {
    std::vector<TypedSpan> spans;
    for (const auto& sp : s.spans) spans.push_back({sp.start, sp.end, sp.label});
    out.push_back(std::move(spans));
  }
  return out;
}

std::vector<std::vector<Cell>> gold_boundary_spans(const Episode& ep) {
  std::vector<std::vector<Cell>> out;
  for (const auto& s : ep.query) {
    std::vector<Cell> spans;
    for (const auto& sp : s.spans) spans.push_back({sp.start, sp.end});
    out.push_back(std::move(spans));
  }
  return out;
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean(xs);
  double sq = 0.0;
  for (double x : xs) sq += (x - m) * (x - m);
  return std::sqrt(sq / static_cast<double>(xs.size() - 1));
}

EvalSummary evaluate_predictions(const std::vector<Episode>& episodes,
                                 const std::vector<EpisodePredictions>& predictions) {
  if (episodes.size() != predictions.size())
    throw DataError("evaluate_predictions: episode/prediction counts differ");

  EvalSummary summary;
  long tp = 0, fp = 0, fn = 0;
  std::vector<double> per_episode;
  std::vector<std::vector<TypedSpan>> all_preds, all_golds;
  std::vector<std::vector<Cell>> all_extracted, all_gold_bounds;

  for (size_t e = 0; e < episodes.size(); ++e) {
    auto golds = gold_typed_spans(episodes[e]);
    EpisodeMetrics m = episode_f1(predictions[e].typed, golds);
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
    per_episode.push_back(m.f1);

    all_preds.insert(all_preds.end(), predictions[e].typed.begin(),
                     predictions[e].typed.end());
    all_golds.insert(all_golds.end(), golds.begin(), golds.end());
    auto bounds = gold_boundary_spans(episodes[e]);
    all_gold_bounds.insert(all_gold_bounds.end(), bounds.begin(), bounds.end());
    all_extracted.insert(all_extracted.end(), predictions[e].extracted.begin(),
                         predictions[e].extracted.end());
  }

  summary.micro = metrics_from_counts(tp, fp, fn);
  summary.per_episode_mean_f1 = mean(per_episode);
  summary.per_episode_std_f1 = sample_std(per_episode);
  auto [ep_, er_] = extractor_pr(all_extracted, all_gold_bounds);
  summary.extractor_precision = ep_;
  summary.extractor_recall = er_;
  summary.errors = error_analysis(all_preds, all_golds);
  return summary;
}

nlohmann::json EvalSummary::to_json(const std::string& variant, long seed) const {
  nlohmann::json j;
  if (!variant.empty()) j["variant"] = variant;
  if (seed >= 0) j["seed"] = seed;
  j["micro"] = {{"p", micro.precision}, {"r", micro.recall}, {"f1", micro.f1},
                {"tp", micro.tp},       {"fp", micro.fp},    {"fn", micro.fn}};
  j["per_episode"] = {{"mean_f1", per_episode_mean_f1}, {"std", per_episode_std_f1}};
  j["extractor"] = {{"p", extractor_precision}, {"r", extractor_recall}};
  j["errors"] = {{"fp_type_rate", errors.fp_type_rate},
                 {"fp_span_rate", errors.fp_span_rate},
                 {"fp_type", errors.fp_type},
                 {"fp_span", errors.fp_span},
                 {"fn", errors.fn}};
  return j;
}

}  // namespace msdp
