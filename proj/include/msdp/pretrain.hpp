#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msdp/autograd.hpp"
#include "msdp/corpus.hpp"
#include "msdp/vocab.hpp"

namespace msdp {

// One "<entity tokens> is <label>" demonstration pair.
struct DemoPair {
  std::vector<std::string> entity;
  std::string label;
};

// Sample layout: [CLS] x [SEP] LD [SEP] RD [SEP] ND, demonstrations joined
// by [SEP] within each group. Units are the maskable entity/label
// occurrences inside the demonstration segments.
struct DemonstrationSample {
  Sentence base;
  std::vector<DemoPair> ld;  // the input's own pairs, in span order
  std::vector<DemoPair> rd;  // retrieved pairs over the input's label set
  std::vector<DemoPair> nd;  // non-entity fragments paired with "O"
  std::vector<std::string> rendered;

  struct Unit {
    int begin = 0;  // token offset in rendered
    int len = 0;
    bool is_entity = false;  // false: label occurrence
  };
  std::vector<Unit> units;
  int nd_truncated = 0;  // requested minus available fragments
};

// Returns nothing when x has no entity (skip-sample signal). RD pairs are
// drawn over the labels occurring in x, excluding x's own surface forms
// when alternatives exist; ND fragments are 1-3 contiguous non-entity
// tokens.
std::optional<DemonstrationSample> build_demonstration(const Sentence& x,
                                                       const EntityIndex& index,
                                                       int k_rd, int k_nd, uint64_t seed);

struct MaskedInstance {
  std::vector<int> input_ids;
  std::vector<int> target_ids;         // original ids at masked positions
  std::vector<int> masked_positions;   // positions in input_ids
  int dropped_positions = 0;           // masked positions lost to truncation
};

// Masks min(n_mask, units) whole units chosen uniformly without
// replacement; a masked entity unit masks all its component tokens.
MaskedInstance mask_demonstration(const DemonstrationSample& sample, const Vocabulary& vocab,
                                  int n_mask, uint64_t seed);

// Hard-truncates the instance to max_len ids, dropping masked positions in
// the cut tail.
void truncate_instance(MaskedInstance& inst, int max_len);

// -sum_m log P(x_m) over masked tokens; probs has one row per masked token.
double mlm_loss(const Mat& probs, const std::vector<int>& targets);

// Positive variants (entity i replaced by its label mention) and the hard
// negative (every entity replaced by a wrong label's mention).
struct ContrastiveVariants {
  std::vector<std::vector<std::string>> positives;
  std::vector<std::string> hard_negative;
};

ContrastiveVariants build_contrastive_samples(const Sentence& x,
                                              const std::vector<std::string>& label_set,
                                              uint64_t seed);

// Most frequent entity label of x; earliest span wins ties.
std::string dominant_class(const Sentence& x);

// Supervised contrastive batch. Negatives carry the index of the item they
// came from (-1 for external vectors) so same-source pairs can be excluded
// from the denominator.
struct ContrastiveGraphBatch {
  struct Item {
    ag::Var anchor;
    std::vector<ag::Var> positives;
    ag::Var hard_negative;
    std::string tag;
  };
  struct Negative {
    ag::Var rep;
    std::string tag;
    int source_item = -1;
  };
  std::vector<Item> items;
  std::vector<Negative> negatives;
  double tau = 0.5;
  bool include_positive_in_denominator = false;
};

// (1/N) sum_i (1/N_i) sum_k [ logsumexp(denominator_ik) - cos(o_i, p_ik)/tau ]
// where the denominator collects different-class negatives and the item's
// hard negative; the positive term itself is excluded unless the flag adds
// it back.
ag::Var scl_loss(ag::Tape& tape, const ContrastiveGraphBatch& batch);

struct ContrastiveEvalBatch {
  struct Item {
    Mat anchor;
    std::vector<Mat> positives;
    Mat hard_negative;
    std::string tag;
  };
  struct Negative {
    Mat rep;
    std::string tag;
    int source_item = -1;
  };
  std::vector<Item> items;
  std::vector<Negative> negatives;
  double tau = 0.5;
  bool include_positive_in_denominator = false;
};

double scl_loss_eval(const ContrastiveEvalBatch& batch);

// alpha * l_mlm + (1 - alpha) * l_scl; alpha must lie in [0, 1].
double joint_pretrain_loss(double l_mlm, double l_scl, double alpha);

}  // namespace msdp
