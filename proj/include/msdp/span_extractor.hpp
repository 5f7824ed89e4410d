#pragma once

#include <utility>
#include <vector>

#include "msdp/autograd.hpp"
#include "msdp/corpus.hpp"
#include "msdp/params.hpp"

namespace msdp {

// (start, end) token-position pair, end-inclusive.
using Cell = std::pair<int, int>;

// All candidate cells for a sentence of `len` tokens: i <= j, j - i < max_span_len.
std::vector<Cell> candidate_cells(int len, int max_span_len);

// Gold cells of a sentence; spans longer than max_span_len have no cell and
// are excluded from supervision.
std::vector<Cell> gold_cells(const Sentence& s, int max_span_len);

struct ScoredSpan {
  int start = 0;
  int end = 0;
  double score = 0.0;
};

// Pairwise span scorer f(i,j) = (Wq h_i + bq)^T (Wk h_j + bk) + wv . (h_i + h_j).
class SpanScorer {
 public:
  SpanScorer(int hidden_dim, int head_dim, int max_span_len, ParamStore& params,
             uint64_t init_seed);

  // Full L x L score matrix over sentence-position hidden rows; only the
  // candidate cells are meaningful.
  ag::Var scores(ag::Tape& tape, ag::Var sentence_hidden) const;

  Mat scores_eval(const Mat& sentence_hidden) const;

  int max_span_len() const { return max_span_len_; }

 private:
  Param *wq_, *bq_, *wk_, *bk_, *wv_;
  int max_span_len_;
};

// log(1 + sum over candidate cells of exp((-1)^gold * f)) with the sign
// flipped on gold cells; overflow-safe.
ag::Var span_loss(ag::Tape& tape, ag::Var scores, const std::vector<Cell>& cells,
                  const std::vector<Cell>& gold);

double span_loss_eval(const Mat& scores, const std::vector<Cell>& cells,
                      const std::vector<Cell>& gold);

// Cells with f > threshold, sorted by descending score. The flat filter
// greedily drops spans that overlap a higher-scored kept span.
std::vector<ScoredSpan> decode_spans(const Mat& scores, const std::vector<Cell>& cells,
                                     double threshold = 0.0, bool flat_filter = true);

}  // namespace msdp
