#include "msdp/proto_classifier.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "msdp/errors.hpp"

namespace msdp {

MaskView apply_mask(const Sentence& x, ViewKind kind, const std::string& target_class,
                    const std::vector<std::string>& allowed_types) {
  if (kind == ViewKind::kClassOriented && !allowed_types.empty() &&
      std::find(allowed_types.begin(), allowed_types.end(), target_class) ==
          allowed_types.end())
    throw DataError("class-oriented mask target \"" + target_class +
                    "\" is not an episode type");

  MaskView view;
  view.kind = kind;
  view.target_class = kind == ViewKind::kClassOriented ? target_class : "";
  view.masked_tokens = x.tokens;
  if (kind == ViewKind::kOriginal) return view;

  for (const auto& span : x.spans) {
    bool mask_it = kind == ViewKind::kContextual || span.label != target_class;
    if (!mask_it) continue;
    for (int i = span.start; i <= span.end; ++i) view.masked_tokens[i] = "[MASK]";
  }
  return view;
}

EncodedTokens encode_tokens(ag::Tape& tape, const Encoder& encoder, const Vocabulary& vocab,
                            const std::vector<std::string>& tokens, bool training,
                            Rng* dropout_rng) {
  TokenizedSentence ts = tokenize(vocab, tokens, encoder.config().max_len);
  ag::Var hidden = encoder.encode(tape, ts.ids, training, dropout_rng);
  std::vector<int> positions;
  for (const auto& a : ts.alignment) {
    if (a.empty()) break;  // truncated tail
    positions.push_back(a.front());
  }
  EncodedTokens out;
  out.rows = ag::gather_rows(hidden, positions);
  out.n_tokens = static_cast<int>(positions.size());
  return out;
}

ag::Var span_rep(ag::Tape& tape, ag::Var token_rows, int start, int end) {
  int rows = static_cast<int>(tape.val(token_rows).rows());
  if (start < 0 || start > end || end >= rows)
    throw DataError("span_rep: span out of range");
  ag::Var hs = ag::gather_rows(token_rows, {start});
  ag::Var he = ag::gather_rows(token_rows, {end});
  return ag::add(hs, he);
}

ag::Var contextual_rep(ag::Tape& tape, ag::Var token_rows) {
  if (tape.val(token_rows).rows() == 0) throw DataError("contextual_rep: empty sentence");
  return ag::mean_rows(token_rows);
}

namespace {

ag::Var mean_of(ag::Tape& tape, const std::vector<ag::Var>& vecs) {
  if (vecs.size() == 1) return vecs[0];
  return ag::mean_rows(ag::concat_rows(vecs));
}

int type_index(const std::vector<std::string>& types, const std::string& label) {
  auto it = std::find(types.begin(), types.end(), label);
  if (it == types.end()) throw DataError("label \"" + label + "\" outside episode types");
  return static_cast<int>(it - types.begin());
}

}  // namespace

PrototypeSetGraph build_prototypes(ag::Tape& tape, const Encoder& encoder,
                                   const Vocabulary& vocab,
                                   const std::vector<Sentence>& support,
                                   const std::vector<std::string>& types,
                                   const PrototypeOptions& opt, bool training,
                                   Rng* dropout_rng) {
  if (support.empty()) throw DataError("build_prototypes: empty support set");
  PrototypeSetGraph protos;
  protos.types = types;

  std::vector<std::vector<ag::Var>> orig_members(types.size());
  std::vector<std::vector<ag::Var>> cs_members(types.size());
  std::vector<std::vector<ag::Var>> ctx_members(types.size());

  for (const auto& sent : support) {
    validate_sentence(sent);
    // original view, one pass per sentence
    EncodedTokens original =
        encode_tokens(tape, encoder, vocab, sent.tokens, training, dropout_rng);
    for (const auto& span : sent.spans) {
      int t = type_index(types, span.label);
      if (span.end >= original.n_tokens) continue;  // truncated away
      orig_members[t].push_back(span_rep(tape, original.rows, span.start, span.end));
    }

    std::set<std::string> labels_here;
    for (const auto& span : sent.spans) labels_here.insert(span.label);

    if (opt.class_oriented) {
      for (const auto& label : labels_here) {
        int t = type_index(types, label);
        MaskView view = apply_mask(sent, ViewKind::kClassOriented, label, types);
        EncodedTokens enc =
            encode_tokens(tape, encoder, vocab, view.masked_tokens, training, dropout_rng);
        for (const auto& span : sent.spans) {
          if (span.label != label || span.end >= enc.n_tokens) continue;
          cs_members[t].push_back(span_rep(tape, enc.rows, span.start, span.end));
        }
      }
    }

    if (opt.contextual && !labels_here.empty()) {
      MaskView view = apply_mask(sent, ViewKind::kContextual);
      EncodedTokens enc =
          encode_tokens(tape, encoder, vocab, view.masked_tokens, training, dropout_rng);
      ag::Var ctx = contextual_rep(tape, enc.rows);
      for (const auto& label : labels_here)
        ctx_members[type_index(types, label)].push_back(ctx);
    }
  }

  for (size_t t = 0; t < types.size(); ++t) {
    if (orig_members[t].empty())
      throw DataError("type \"" + types[t] + "\" has no support mention");
    protos.original.push_back(mean_of(tape, orig_members[t]));
    if (opt.class_oriented) protos.class_oriented.push_back(mean_of(tape, cs_members[t]));
    if (opt.contextual) protos.contextual.push_back(mean_of(tape, ctx_members[t]));
  }
  return protos;
}

PrototypeSet build_prototypes_eval(const Encoder& encoder, const Vocabulary& vocab,
                                   const std::vector<Sentence>& support,
                                   const std::vector<std::string>& types,
                                   const PrototypeOptions& opt) {
  ag::Tape tape;
  PrototypeSetGraph g = build_prototypes(tape, encoder, vocab, support, types, opt);
  PrototypeSet out;
  out.types = types;
  int d = encoder.config().hidden_dim;
  auto to_mat = [&](const std::vector<ag::Var>& vars) {
    Mat m(static_cast<int>(vars.size()), d);
    for (size_t i = 0; i < vars.size(); ++i) m.row(static_cast<int>(i)) = tape.val(vars[i]).row(0);
    return m;
  };
  out.original = to_mat(g.original);
  if (opt.class_oriented) out.class_oriented = to_mat(g.class_oriented);
  if (opt.contextual) out.contextual = to_mat(g.contextual);
  return out;
}

Eigen::VectorXd classify(const Eigen::RowVectorXd& u, const Mat& prototypes) {
  if (u.norm() == 0.0) throw DataError("classify: zero-norm representation");
  Eigen::VectorXd sims(prototypes.rows());
  for (int t = 0; t < prototypes.rows(); ++t) {
    double pn = prototypes.row(t).norm();
    if (pn == 0.0) throw DataError("classify: zero-norm prototype");
    sims(t) = u.dot(prototypes.row(t)) / (u.norm() * pn);
  }
  Eigen::VectorXd e = (sims.array() - sims.maxCoeff()).exp();
  return e / e.sum();
}

ClsLossParts cls_loss(ag::Tape& tape, const Encoder& encoder, const Vocabulary& vocab,
                      const PrototypeSetGraph& prototypes,
                      const std::vector<Sentence>& query, bool training,
                      Rng* dropout_rng) {
  const auto& types = prototypes.types;
  bool use_cs = !prototypes.class_oriented.empty();
  bool use_ctx = !prototypes.contextual.empty();

  ClsLossParts parts;
  parts.total = tape.scalar(0.0);

  auto nll_against = [&](ag::Var u, const std::vector<ag::Var>& protos, int gold) {
    std::vector<ag::Var> sims;
    sims.reserve(protos.size());
    for (const auto& c : protos) sims.push_back(ag::cos_sim(u, c));
    ag::Var scores = ag::concat_rows(sims);
    return ag::sub(ag::logsumexp(scores), ag::gather_cells(scores, {{gold, 0}}));
  };

  for (const auto& sent : query) {
    if (sent.spans.empty()) continue;
    for (const auto& span : sent.spans) type_index(types, span.label);  // validate early

    EncodedTokens original =
        encode_tokens(tape, encoder, vocab, sent.tokens, training, dropout_rng);

    ag::Var ctx;
    if (use_ctx) {
      MaskView view = apply_mask(sent, ViewKind::kContextual);
      EncodedTokens enc =
          encode_tokens(tape, encoder, vocab, view.masked_tokens, training, dropout_rng);
      ctx = contextual_rep(tape, enc.rows);
    }

    // one class-oriented view per candidate class, reused by every span
    std::vector<EncodedTokens> cs_views;
    if (use_cs) {
      cs_views.reserve(types.size());
      for (const auto& t : types) {
        MaskView view = apply_mask(sent, ViewKind::kClassOriented, t, types);
        cs_views.push_back(
            encode_tokens(tape, encoder, vocab, view.masked_tokens, training, dropout_rng));
      }
    }

    for (const auto& span : sent.spans) {
      int gold = type_index(types, span.label);
      if (span.end >= original.n_tokens) continue;  // truncated away
      ++parts.n_spans;

      ag::Var u = span_rep(tape, original.rows, span.start, span.end);
      ag::Var term_a = nll_against(u, prototypes.original, gold);
      parts.total = ag::add(parts.total, term_a);
      parts.original += tape.val(term_a)(0, 0);

      if (use_ctx) {
        ag::Var term_b = nll_against(ctx, prototypes.contextual, gold);
        parts.total = ag::add(parts.total, term_b);
        parts.contextual += tape.val(term_b)(0, 0);
      }

      if (use_cs) {
        std::vector<ag::Var> sims;
        sims.reserve(types.size());
        for (size_t t = 0; t < types.size(); ++t) {
          ag::Var u_cs = span_rep(tape, cs_views[t].rows, span.start, span.end);
          sims.push_back(ag::cos_sim(u_cs, prototypes.class_oriented[t]));
        }
        ag::Var scores = ag::concat_rows(sims);
        ag::Var term_c =
            ag::sub(ag::logsumexp(scores), ag::gather_cells(scores, {{gold, 0}}));
        parts.total = ag::add(parts.total, term_c);
        parts.class_oriented += tape.val(term_c)(0, 0);
      }
    }
  }
  return parts;
}

std::vector<TypedSpan> infer_span_types(const Encoder& encoder, const Vocabulary& vocab,
                                        const PrototypeSet& prototypes,
                                        const std::vector<std::string>& tokens,
                                        const std::vector<std::pair<int, int>>& spans) {
  std::vector<TypedSpan> out;
  if (spans.empty()) return out;

  ag::Tape tape;
  EncodedTokens enc = encode_tokens(tape, encoder, vocab, tokens);
  for (const auto& [s, e] : spans) {
    if (e >= enc.n_tokens) continue;
    ag::Var u = span_rep(tape, enc.rows, s, e);
    Eigen::RowVectorXd row = tape.val(u).row(0);
    Eigen::VectorXd probs = classify(row, prototypes.original);
    int best = 0;
    probs.maxCoeff(&best);
    out.push_back({s, e, prototypes.types[best]});
  }
  return out;
}

}  // namespace msdp
