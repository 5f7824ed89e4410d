#include "msdp/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "msdp/errors.hpp"
#include "msdp/rng.hpp"

namespace msdp {

namespace {

std::vector<std::string> label_tokens(const std::string& label) {
  std::vector<std::string> out;
  std::istringstream in(label);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string fold_surface(const std::vector<std::string>& toks) {
  std::string f;
  for (const auto& t : toks) f += lowercase(t) + "\x1f";
  return f;
}

// Appends "e is l" and records the entity/label units against `rendered`.
void append_pair(DemonstrationSample& sample, const DemoPair& pair) {
  auto& r = sample.rendered;
  DemonstrationSample::Unit ent{static_cast<int>(r.size()),
                                static_cast<int>(pair.entity.size()), true};
  for (const auto& t : pair.entity) r.push_back(t);
  r.push_back("is");
  auto ltoks = label_tokens(pair.label);
  DemonstrationSample::Unit lab{static_cast<int>(r.size()),
                                static_cast<int>(ltoks.size()), false};
  for (const auto& t : ltoks) r.push_back(t);
  sample.units.push_back(ent);
  sample.units.push_back(lab);
}

}  // namespace

std::optional<DemonstrationSample> build_demonstration(const Sentence& x,
                                                       const EntityIndex& index,
                                                       int k_rd, int k_nd, uint64_t seed) {
  if (x.spans.empty()) return std::nullopt;
  if (k_rd < 0 || k_nd < 0) throw ConfigError("K_rd and K_nd must be non-negative");
  Rng rng(derive_seed(seed, "demo"));

  DemonstrationSample sample;
  sample.base = x;

  // LD: the input's own pairs, in span order.
  for (const auto& span : x.spans) {
    DemoPair p;
    p.entity.assign(x.tokens.begin() + span.start, x.tokens.begin() + span.end + 1);
    p.label = span.label;
    sample.ld.push_back(std::move(p));
  }

  // RD: uniform over the index restricted to x's labels, skipping x's own
  // surface forms when anything else is available.
  std::vector<std::string> labels_in_x;
  std::set<std::string> own;
  for (const auto& p : sample.ld) {
    if (std::find(labels_in_x.begin(), labels_in_x.end(), p.label) == labels_in_x.end())
      labels_in_x.push_back(p.label);
    own.insert(p.label + "\x1e" + fold_surface(p.entity));
  }
  std::vector<DemoPair> pool, fallback;
  for (const auto& label : labels_in_x) {
    if (!index.has_label(label)) throw DataError("entity index missing label: " + label);
    for (const auto& surface : index.surfaces(label)) {
      DemoPair p{surface, label};
      fallback.push_back(p);
      if (!own.count(label + "\x1e" + fold_surface(surface))) pool.push_back(p);
    }
  }
  if (pool.empty()) pool = fallback;
  int take_rd = std::min<int>(k_rd, static_cast<int>(pool.size()));
  for (size_t i : rng.sample_without_replacement(pool.size(), take_rd))
    sample.rd.push_back(pool[i]);

  // ND: contiguous non-entity fragments of 1-3 tokens.
  std::vector<bool> covered(x.tokens.size(), false);
  for (const auto& span : x.spans)
    for (int i = span.start; i <= span.end; ++i) covered[i] = true;
  std::vector<std::pair<int, int>> fragments;  // (start, len)
  for (int start = 0; start < static_cast<int>(x.tokens.size()); ++start) {
    for (int len = 1; len <= 3; ++len) {
      int end = start + len - 1;
      if (end >= static_cast<int>(x.tokens.size())) break;
      bool clean = true;
      for (int i = start; i <= end; ++i)
        if (covered[i]) clean = false;
      if (clean) fragments.push_back({start, len});
    }
  }
  int take_nd = std::min<int>(k_nd, static_cast<int>(fragments.size()));
  sample.nd_truncated = k_nd - take_nd;
  for (size_t i : rng.sample_without_replacement(fragments.size(), take_nd)) {
    auto [start, len] = fragments[i];
    DemoPair p;
    p.entity.assign(x.tokens.begin() + start, x.tokens.begin() + start + len);
    p.label = "O";
    sample.nd.push_back(std::move(p));
  }

  // Render: [CLS] x [SEP] LD [SEP] RD [SEP] ND with [SEP]-joined groups.
  sample.rendered.push_back("[CLS]");
  for (const auto& t : x.tokens) sample.rendered.push_back(t);
  sample.rendered.push_back("[SEP]");
  auto render_group = [&](const std::vector<DemoPair>& group) {
    for (size_t i = 0; i < group.size(); ++i) {
      if (i > 0) sample.rendered.push_back("[SEP]");
      append_pair(sample, group[i]);
    }
  };
  render_group(sample.ld);
  sample.rendered.push_back("[SEP]");
  render_group(sample.rd);
  sample.rendered.push_back("[SEP]");
  render_group(sample.nd);
  return sample;
}

MaskedInstance mask_demonstration(const DemonstrationSample& sample, const Vocabulary& vocab,
                                  int n_mask, uint64_t seed) {
  if (sample.units.empty()) throw DataError("demonstration sample has no maskable units");
  if (n_mask < 1) throw ConfigError("N_mask must be positive");
  Rng rng(derive_seed(seed, "mask"));

  MaskedInstance inst;
  inst.input_ids = vocab.lookup(sample.rendered);

  int take = std::min<int>(n_mask, static_cast<int>(sample.units.size()));
  auto chosen = rng.sample_without_replacement(sample.units.size(), take);
  std::sort(chosen.begin(), chosen.end());
  for (size_t ui : chosen) {
    const auto& unit = sample.units[ui];
    for (int i = unit.begin; i < unit.begin + unit.len; ++i) {
      inst.masked_positions.push_back(i);
      inst.target_ids.push_back(inst.input_ids[i]);
      inst.input_ids[i] = Vocabulary::kMask;
    }
  }
  return inst;
}

void truncate_instance(MaskedInstance& inst, int max_len) {
  if (static_cast<int>(inst.input_ids.size()) <= max_len) return;
  inst.input_ids.resize(max_len);
  std::vector<int> pos, tgt;
  for (size_t i = 0; i < inst.masked_positions.size(); ++i) {
    if (inst.masked_positions[i] < max_len) {
      pos.push_back(inst.masked_positions[i]);
      tgt.push_back(inst.target_ids[i]);
    } else {
      ++inst.dropped_positions;
    }
  }
  inst.masked_positions = std::move(pos);
  inst.target_ids = std::move(tgt);
}

double mlm_loss(const Mat& probs, const std::vector<int>& targets) {
  if (targets.empty()) throw DataError("mlm_loss: zero masked tokens");
  if (probs.rows() != static_cast<int>(targets.size()))
    throw DataError("mlm_loss: one probability row per masked token required");
  double loss = 0.0;
  for (size_t i = 0; i < targets.size(); ++i) {
    int t = targets[i];
    if (t < 0 || t >= probs.cols()) throw DataError("mlm_loss: target id out of range");
    loss -= std::log(probs(static_cast<int>(i), t));
  }
  return loss;
}

std::string dominant_class(const Sentence& x) {
  if (x.spans.empty()) throw DataError("dominant_class: sentence has no entities");
  std::map<std::string, int> counts;
  for (const auto& span : x.spans) ++counts[span.label];
  std::string best;
  int best_count = -1;
  for (const auto& span : x.spans) {  // earliest span wins ties
    if (counts[span.label] > best_count) {
      best = span.label;
      best_count = counts[span.label];
    }
  }
  return best;
}

namespace {

std::vector<std::string> replace_spans(
    const Sentence& x, const std::map<int, std::vector<std::string>>& replacements) {
  // replacements: span index -> tokens to substitute
  std::vector<std::string> out;
  int span_idx = 0;
  int i = 0;
  while (i < static_cast<int>(x.tokens.size())) {
    if (span_idx < static_cast<int>(x.spans.size()) && x.spans[span_idx].start == i) {
      const auto& span = x.spans[span_idx];
      auto it = replacements.find(span_idx);
      if (it != replacements.end()) {
        for (const auto& t : it->second) out.push_back(t);
      } else {
        for (int j = span.start; j <= span.end; ++j) out.push_back(x.tokens[j]);
      }
      i = span.end + 1;
      ++span_idx;
    } else {
      out.push_back(x.tokens[i]);
      ++i;
    }
  }
  return out;
}

}  // namespace

ContrastiveVariants build_contrastive_samples(const Sentence& x,
                                              const std::vector<std::string>& label_set,
                                              uint64_t seed) {
  if (x.spans.empty()) throw DataError("contrastive samples need at least one entity");
  if (label_set.size() < 2)
    throw DataError("cannot build a hard negative from fewer than two labels");
  Rng rng(derive_seed(seed, "contrastive"));

  ContrastiveVariants out;
  for (size_t k = 0; k < x.spans.size(); ++k) {
    std::map<int, std::vector<std::string>> repl;
    repl[static_cast<int>(k)] = label_tokens(x.spans[k].label);
    out.positives.push_back(replace_spans(x, repl));
  }

  std::map<int, std::vector<std::string>> repl_all;
  for (size_t k = 0; k < x.spans.size(); ++k) {
    std::vector<std::string> others;
    for (const auto& l : label_set)
      if (l != x.spans[k].label) others.push_back(l);
    if (others.empty())
      throw DataError("cannot build a hard negative from fewer than two labels");
    repl_all[static_cast<int>(k)] = label_tokens(others[rng.uniform_index(others.size())]);
  }
  out.hard_negative = replace_spans(x, repl_all);
  return out;
}

ag::Var scl_loss(ag::Tape& tape, const ContrastiveGraphBatch& batch) {
  if (batch.tau <= 0.0) throw ConfigError("temperature must be positive");
  if (batch.items.empty()) throw DataError("scl_loss: empty batch");

  double inv_tau = 1.0 / batch.tau;
  ag::Var total = tape.scalar(0.0);
  int n_anchors = 0;
  for (size_t i = 0; i < batch.items.size(); ++i) {
    const auto& item = batch.items[i];
    if (item.positives.empty()) continue;
    ++n_anchors;

    std::vector<ag::Var> neg_terms;
    for (const auto& neg : batch.negatives) {
      if (neg.source_item == static_cast<int>(i)) continue;
      if (neg.tag == item.tag) continue;
      neg_terms.push_back(ag::scale(ag::cos_sim(item.anchor, neg.rep), inv_tau));
    }
    neg_terms.push_back(ag::scale(ag::cos_sim(item.anchor, item.hard_negative), inv_tau));

    ag::Var item_sum = tape.scalar(0.0);
    for (const auto& pos : item.positives) {
      ag::Var num = ag::scale(ag::cos_sim(item.anchor, pos), inv_tau);
      std::vector<ag::Var> denom = neg_terms;
      if (batch.include_positive_in_denominator) denom.push_back(num);
      ag::Var lse = ag::logsumexp(ag::concat_rows(denom));
      item_sum = ag::add(item_sum, ag::sub(lse, num));
    }
    total = ag::add(total, ag::scale(item_sum, 1.0 / static_cast<double>(item.positives.size())));
  }
  if (n_anchors == 0) throw DataError("scl_loss: no item has positives");
  return ag::scale(total, 1.0 / static_cast<double>(batch.items.size()));
}

double scl_loss_eval(const ContrastiveEvalBatch& batch) {
  ag::Tape tape;
  ContrastiveGraphBatch g;
  g.tau = batch.tau;
  g.include_positive_in_denominator = batch.include_positive_in_denominator;
  for (const auto& item : batch.items) {
    ContrastiveGraphBatch::Item gi;
    gi.anchor = tape.constant(item.anchor);
    for (const auto& p : item.positives) gi.positives.push_back(tape.constant(p));
    gi.hard_negative = tape.constant(item.hard_negative);
    gi.tag = item.tag;
    g.items.push_back(std::move(gi));
  }
  for (const auto& neg : batch.negatives)
    g.negatives.push_back({tape.constant(neg.rep), neg.tag, neg.source_item});
  return tape.val(scl_loss(tape, g))(0, 0);
}

double joint_pretrain_loss(double l_mlm, double l_scl, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  return alpha * l_mlm + (1.0 - alpha) * l_scl;
}

}  // namespace msdp
