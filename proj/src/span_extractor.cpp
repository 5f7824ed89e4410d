#include "msdp/span_extractor.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "msdp/errors.hpp"

namespace msdp {

std::vector<Cell> candidate_cells(int len, int max_span_len) {
  std::vector<Cell> cells;
  for (int i = 0; i < len; ++i)
    for (int j = i; j < len && j - i < max_span_len; ++j) cells.push_back({i, j});
  return cells;
}

std::vector<Cell> gold_cells(const Sentence& s, int max_span_len) {
  std::vector<Cell> cells;
  for (const auto& span : s.spans)
    if (span.end - span.start < max_span_len) cells.push_back({span.start, span.end});
  return cells;
}

namespace {

Param& attach_scorer_param(ParamStore& params, const std::string& name, int rows,
                           int cols, double std, uint64_t seed) {
  if (params.has(name)) {
    Param& p = params.get(name);
    if (p.value.rows() != rows || p.value.cols() != cols)
      throw ConfigError("parameter shape mismatch for " + name);
    return p;
  }
  Param& p = params.create(name, rows, cols);
  if (std > 0.0) {
    Rng rng(derive_seed(seed, "init." + name));
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) p.value(r, c) = rng.normal(0.0, std);
  }
  return p;
}

}  // namespace

SpanScorer::SpanScorer(int hidden_dim, int head_dim, int max_span_len, ParamStore& params,
                       uint64_t init_seed)
    : max_span_len_(max_span_len) {
  if (head_dim <= 0) head_dim = hidden_dim / 2;
  if (max_span_len_ < 1) throw ConfigError("max_span_len must be positive");
  const double std = 0.02;
  wq_ = &attach_scorer_param(params, "span.wq", hidden_dim, head_dim, std, init_seed);
  bq_ = &attach_scorer_param(params, "span.bq", 1, head_dim, 0.0, init_seed);
  wk_ = &attach_scorer_param(params, "span.wk", hidden_dim, head_dim, std, init_seed);
  bk_ = &attach_scorer_param(params, "span.bk", 1, head_dim, 0.0, init_seed);
  wv_ = &attach_scorer_param(params, "span.wv", hidden_dim, 1, std, init_seed);
}

ag::Var SpanScorer::scores(ag::Tape& tape, ag::Var sentence_hidden) const {
  const Mat& h = tape.val(sentence_hidden);
  if (h.cols() != wq_->value.rows()) throw DataError("span scorer: hidden width mismatch");
  int len = static_cast<int>(h.rows());

  ag::Var q = ag::add_rowvec(ag::matmul(sentence_hidden, tape.param(*wq_)), tape.param(*bq_));
  ag::Var k = ag::add_rowvec(ag::matmul(sentence_hidden, tape.param(*wk_)), tape.param(*bk_));
  ag::Var qk = ag::matmul(q, ag::transpose(k));

  ag::Var w = ag::matmul(sentence_hidden, tape.param(*wv_));  // L x 1
  ag::Var ones_row = tape.constant(Mat::Ones(1, len));
  ag::Var ones_col = tape.constant(Mat::Ones(len, 1));
  ag::Var sums = ag::add(ag::matmul(w, ones_row), ag::matmul(ones_col, ag::transpose(w)));
  return ag::add(qk, sums);
}

Mat SpanScorer::scores_eval(const Mat& sentence_hidden) const {
  ag::Tape tape;
  return tape.val(scores(tape, tape.constant(sentence_hidden)));
}

ag::Var span_loss(ag::Tape& tape, ag::Var scores, const std::vector<Cell>& cells,
                  const std::vector<Cell>& gold) {
  if (cells.empty()) throw DataError("span_loss: no candidate cells");
  std::set<Cell> gold_set(gold.begin(), gold.end());
  Mat signs(static_cast<int>(cells.size()), 1);
  for (size_t i = 0; i < cells.size(); ++i)
    signs(static_cast<int>(i), 0) = gold_set.count(cells[i]) ? -1.0 : 1.0;
  ag::Var picked = ag::gather_cells(scores, cells);
  ag::Var signed_scores = ag::cmul(picked, tape.constant(std::move(signs)));
  return ag::log1p_sum_exp(signed_scores);
}

double span_loss_eval(const Mat& scores, const std::vector<Cell>& cells,
                      const std::vector<Cell>& gold) {
  ag::Tape tape;
  return tape.val(span_loss(tape, tape.constant(scores), cells, gold))(0, 0);
}

std::vector<ScoredSpan> decode_spans(const Mat& scores, const std::vector<Cell>& cells,
                                     double threshold, bool flat_filter) {
  std::vector<ScoredSpan> hits;
  for (const auto& [i, j] : cells)
    if (scores(i, j) > threshold) hits.push_back({i, j, scores(i, j)});
  std::sort(hits.begin(), hits.end(), [](const ScoredSpan& a, const ScoredSpan& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });
  if (!flat_filter) return hits;

  std::vector<ScoredSpan> kept;
  for (const auto& h : hits) {
    bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const ScoredSpan& k) {
      return h.start <= k.end && k.start <= h.end;
    });
    if (!overlaps) kept.push_back(h);
  }
  return kept;
}

}  // namespace msdp
