#pragma once

#include <optional>
#include <string>
#include <vector>

#include "msdp/autograd.hpp"
#include "msdp/corpus.hpp"
#include "msdp/encoder.hpp"

namespace msdp {

enum class ViewKind { kOriginal, kClassOriented, kContextual };

struct MaskView {
  ViewKind kind = ViewKind::kOriginal;
  std::string target_class;  // class-oriented views only
  std::vector<std::string> masked_tokens;
};

// Per-token [MASK] substitution. Class-oriented(t) masks the tokens of gold
// spans whose label differs from t; contextual masks every gold span's
// tokens; original is the identity. Token count is always preserved.
// When allowed_types is non-empty, a class-oriented target outside it is an
// error.
MaskView apply_mask(const Sentence& x, ViewKind kind, const std::string& target_class = "",
                    const std::vector<std::string>& allowed_types = {});

// Encoder rows for the original tokens of a (possibly masked) token list:
// row i corresponds to token i. Tokens lost to truncation are dropped.
struct EncodedTokens {
  ag::Var rows;
  int n_tokens = 0;
};

EncodedTokens encode_tokens(ag::Tape& tape, const Encoder& encoder, const Vocabulary& vocab,
                            const std::vector<std::string>& tokens, bool training = false,
                            Rng* dropout_rng = nullptr);

// u = h_s + h_e over token rows, both ends inclusive.
ag::Var span_rep(ag::Tape& tape, ag::Var token_rows, int start, int end);

// Mean of all token rows (Eq.-style sentence-context vector).
ag::Var contextual_rep(ag::Tape& tape, ag::Var token_rows);

struct PrototypeOptions {
  bool class_oriented = true;
  bool contextual = true;
};

// Per-type prototype vectors for up to three families, built from the
// support set by averaging same-class representations.
struct PrototypeSetGraph {
  std::vector<std::string> types;
  std::vector<ag::Var> original;
  std::vector<ag::Var> class_oriented;  // empty when disabled
  std::vector<ag::Var> contextual;      // empty when disabled
};

PrototypeSetGraph build_prototypes(ag::Tape& tape, const Encoder& encoder,
                                   const Vocabulary& vocab,
                                   const std::vector<Sentence>& support,
                                   const std::vector<std::string>& types,
                                   const PrototypeOptions& opt = {}, bool training = false,
                                   Rng* dropout_rng = nullptr);

// Plain-valued prototypes for inference.
struct PrototypeSet {
  std::vector<std::string> types;
  Mat original;        // T x D
  Mat class_oriented;  // T x D or empty
  Mat contextual;      // T x D or empty
};

PrototypeSet build_prototypes_eval(const Encoder& encoder, const Vocabulary& vocab,
                                   const std::vector<Sentence>& support,
                                   const std::vector<std::string>& types,
                                   const PrototypeOptions& opt = {});

// softmax over cosine similarity to each prototype row.
Eigen::VectorXd classify(const Eigen::RowVectorXd& u, const Mat& prototypes);

// Sum over query gold spans of the per-view negative log-likelihood terms:
// original span rep vs original prototypes, sentence context vs contextual
// prototypes, and the class-oriented term that scores each candidate class
// through its own masked view.
struct ClsLossParts {
  ag::Var total;
  double original = 0.0;
  double class_oriented = 0.0;
  double contextual = 0.0;
  int n_spans = 0;
};

ClsLossParts cls_loss(ag::Tape& tape, const Encoder& encoder, const Vocabulary& vocab,
                      const PrototypeSetGraph& prototypes,
                      const std::vector<Sentence>& query, bool training = false,
                      Rng* dropout_rng = nullptr);

// Types extracted spans against the ORIGINAL prototype family only.
struct TypedSpan {
  int start = 0;
  int end = 0;
  std::string label;

  bool operator==(const TypedSpan&) const = default;
  auto operator<=>(const TypedSpan&) const = default;
};

std::vector<TypedSpan> infer_span_types(const Encoder& encoder, const Vocabulary& vocab,
                                        const PrototypeSet& prototypes,
                                        const std::vector<std::string>& tokens,
                                        const std::vector<std::pair<int, int>>& spans);

}  // namespace msdp
