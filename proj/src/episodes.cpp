#include "msdp/episodes.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "msdp/errors.hpp"
#include "msdp/rng.hpp"

namespace msdp {

namespace {

using CountMap = std::map<std::string, int>;

CountMap mention_counts(const Sentence& s) {
  CountMap c;
  for (const auto& span : s.spans) ++c[span.label];
  return c;
}

// One greedy pass: draw sentences from `pool` until every type count
// reaches at least K while never exceeding the cap. Selected and rejected
// pool entries are removed (counts only grow, so a rejected sentence never
// fits later). Returns nothing when the pool runs dry mid-quota; the caller
// may retry with a fresh pool while draws remain.
std::optional<std::vector<Sentence>> fill_quota(std::vector<size_t>& pool,
                                                const std::vector<Sentence>& corpus,
                                                const std::vector<std::string>& types,
                                                int k, int cap, Rng& rng, int& draws_left,
                                                std::string& deficient) {
  CountMap counts;
  for (const auto& t : types) counts[t] = 0;
  std::vector<Sentence> picked;

  auto quota_met = [&]() {
    return std::all_of(types.begin(), types.end(),
                       [&](const std::string& t) { return counts[t] >= k; });
  };

  while (!quota_met()) {
    if (pool.empty() || draws_left <= 0) {
      // A dry pool is a genuine dead-end diagnosis; a budget cut mid-pass
      // is not, so it must not overwrite an earlier finding.
      if (pool.empty() || deficient.empty()) {
        for (const auto& t : types)
          if (counts[t] < k) {
            deficient = t;
            break;
          }
        if (deficient.empty()) deficient = types.front();
      }
      return std::nullopt;
    }
    --draws_left;
    size_t slot = rng.uniform_index(pool.size());
    size_t idx = pool[slot];
    const Sentence& s = corpus[idx];

    CountMap add = mention_counts(s);
    bool fits = true;
    for (const auto& [label, n] : add)
      if (counts[label] + n > cap) fits = false;
    pool[slot] = pool.back();
    pool.pop_back();
    if (!fits) continue;

    for (const auto& [label, n] : add) counts[label] += n;
    picked.push_back(s);
  }
  return picked;
}

std::vector<Sentence> fill_quota_with_retries(const std::vector<size_t>& candidates,
                                              const std::vector<Sentence>& corpus,
                                              const std::vector<std::string>& types,
                                              int k, int cap, Rng& rng, int& draws_left,
                                              const std::string& side) {
  std::string deficient;
  while (draws_left > 0) {
    std::vector<size_t> pool = candidates;
    auto picked = fill_quota(pool, corpus, types, k, cap, rng, draws_left, deficient);
    if (picked) return *picked;
  }
  throw DataError("episode sampling exhausted (" + side + "): type \"" + deficient +
                  "\" cannot reach " + std::to_string(k) + " mentions");
}

}  // namespace

Episode sample_episode(const std::vector<Sentence>& corpus, const SamplerOptions& opt,
                       uint64_t seed) {
  if (opt.n_way < 1 || opt.k_shot < 1) throw ConfigError("N and K must be positive");

  std::set<std::string> label_set;
  for (const auto& s : corpus)
    for (const auto& span : s.spans) label_set.insert(span.label);
  if (static_cast<int>(label_set.size()) < opt.n_way)
    throw DataError("corpus has " + std::to_string(label_set.size()) +
                    " labels, cannot sample " + std::to_string(opt.n_way) + "-way episode");

  Rng rng(derive_seed(seed, "episode"));
  std::vector<std::string> all_labels(label_set.begin(), label_set.end());
  std::vector<std::string> types;
  for (size_t i : rng.sample_without_replacement(all_labels.size(), opt.n_way))
    types.push_back(all_labels[i]);

  // Candidates: entity-bearing sentences whose labels all lie in `types`.
  std::vector<size_t> pool;
  for (size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus[i];
    if (s.spans.empty()) continue;
    bool ok = std::all_of(s.spans.begin(), s.spans.end(), [&](const EntitySpan& sp) {
      return std::find(types.begin(), types.end(), sp.label) != types.end();
    });
    if (ok) pool.push_back(i);
  }

  int cap = opt.exact_k ? opt.k_shot : 2 * opt.k_shot;
  int draws_left = opt.max_draws;
  Episode ep;
  ep.types = types;
  ep.support = fill_quota_with_retries(pool, corpus, types, opt.k_shot, cap, rng,
                                       draws_left, "support");

  // Support and query must be disjoint as sentence sets, so drop candidates
  // whose token content duplicates a support sentence.
  std::set<std::vector<std::string>> support_tokens;
  for (const auto& s : ep.support) support_tokens.insert(s.tokens);
  std::erase_if(pool, [&](size_t i) { return support_tokens.count(corpus[i].tokens) > 0; });

  ep.query = fill_quota_with_retries(pool, corpus, types, opt.k_shot, cap, rng,
                                     draws_left, "query");
  return ep;
}

std::vector<Episode> sample_episodes(const std::vector<Sentence>& corpus,
                                     const SamplerOptions& opt, int count, uint64_t seed) {
  std::vector<Episode> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i)
    out.push_back(sample_episode(corpus, opt, derive_seed(seed, "episode-list", i)));
  return out;
}

std::vector<std::string> validate_episode(const Episode& ep, int n_way, int k_shot,
                                          bool exact_k) {
  std::vector<std::string> violations;
  auto note = [&](const std::string& msg) { violations.push_back(msg); };

  if (static_cast<int>(ep.types.size()) != n_way)
    note("episode has " + std::to_string(ep.types.size()) + " types, expected " +
         std::to_string(n_way));

  std::set<std::string> types(ep.types.begin(), ep.types.end());
  CountMap support_counts, query_counts;
  for (const auto& t : ep.types) support_counts[t] = query_counts[t] = 0;

  auto check_sentences = [&](const std::vector<Sentence>& sents, CountMap& counts,
                             const std::string& side) {
    for (const auto& s : sents) {
      try {
        validate_sentence(s);
      } catch (const DataError& e) {
        note(side + ": " + e.what());
        continue;
      }
      for (const auto& span : s.spans) {
        if (!types.count(span.label))
          note(side + ": span label \"" + span.label + "\" outside episode types");
        else
          ++counts[span.label];
      }
    }
  };
  check_sentences(ep.support, support_counts, "support");
  check_sentences(ep.query, query_counts, "query");

  int cap = exact_k ? k_shot : 2 * k_shot;
  for (const auto& t : ep.types) {
    if (support_counts[t] < k_shot)
      note("support: type \"" + t + "\" count " + std::to_string(support_counts[t]) +
           " < K=" + std::to_string(k_shot));
    if (support_counts[t] > cap)
      note("support: type \"" + t + "\" count " + std::to_string(support_counts[t]) +
           " > " + (exact_k ? "K=" : "2K=") + std::to_string(cap));
    if (query_counts[t] < 1) note("query: type \"" + t + "\" has no mention");
  }

  std::set<std::vector<std::string>> support_tokens;
  for (const auto& s : ep.support) support_tokens.insert(s.tokens);
  for (const auto& s : ep.query)
    if (support_tokens.count(s.tokens))
      note("query sentence duplicates a support sentence");
  return violations;
}

std::string episode_to_json(const Episode& ep) {
  nlohmann::json j;
  j["types"] = ep.types;
  auto dump_side = [](const std::vector<Sentence>& sents) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : sents) {
      nlohmann::json js;
      js["tokens"] = s.tokens;
      nlohmann::json spans = nlohmann::json::array();
      for (const auto& sp : s.spans)
        spans.push_back(nlohmann::json::array({sp.start, sp.end, sp.label}));
      js["spans"] = std::move(spans);
      arr.push_back(std::move(js));
    }
    return arr;
  };
  j["support"] = dump_side(ep.support);
  j["query"] = dump_side(ep.query);
  return j.dump();
}

Episode episode_from_json(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  Episode ep;
  for (const auto& t : j.at("types")) ep.types.push_back(t.get<std::string>());
  auto load_side = [](const nlohmann::json& arr) {
    std::vector<Sentence> sents;
    for (const auto& js : arr) {
      Sentence s;
      for (const auto& t : js.at("tokens")) s.tokens.push_back(t.get<std::string>());
      for (const auto& sp : js.at("spans"))
        s.spans.push_back({sp.at(0).get<int>(), sp.at(1).get<int>(),
                           sp.at(2).get<std::string>()});
      std::sort(s.spans.begin(), s.spans.end(),
                [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
      validate_sentence(s);
      sents.push_back(std::move(s));
    }
    return sents;
  };
  ep.support = load_side(j.at("support"));
  ep.query = load_side(j.at("query"));
  return ep;
}

void write_episodes(const std::vector<Episode>& episodes, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write episode file: " + path);
  for (const auto& ep : episodes) out << episode_to_json(ep) << "\n";
}

std::vector<Episode> read_episodes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open episode file: " + path);
  std::vector<Episode> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(episode_from_json(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("episode file line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("episode file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace msdp
