#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msdp/corpus.hpp"

namespace msdp {

// One few-shot task: N types, a support set with per-type mention counts in
// [K, 2K], and a query set sampled the same way from disjoint sentences.
struct Episode {
  std::vector<std::string> types;
  std::vector<Sentence> support;
  std::vector<Sentence> query;

  bool operator==(const Episode&) const = default;
};

struct SamplerOptions {
  int n_way = 5;
  int k_shot = 1;
  bool exact_k = false;      // tighten the support upper bound from 2K to K
  int max_draws = 10000;     // per episode
};

// Greedy quota sampler: choose N types, then repeatedly draw sentences whose
// entities all belong to the chosen types and fit under the per-type cap,
// until every type has at least K support mentions. Query is built the same
// way from the remaining sentences. Deterministic under seed.
Episode sample_episode(const std::vector<Sentence>& corpus, const SamplerOptions& opt,
                       uint64_t seed);

std::vector<Episode> sample_episodes(const std::vector<Sentence>& corpus,
                                     const SamplerOptions& opt, int count, uint64_t seed);

// Violations of the episode definition; empty iff the episode is valid.
std::vector<std::string> validate_episode(const Episode& ep, int n_way, int k_shot,
                                          bool exact_k = false);

// JSONL, one episode per line:
// {"types":[...],"support":[{"tokens":[...],"spans":[[s,e,"label"],...]},...],"query":[...]}
std::string episode_to_json(const Episode& ep);
Episode episode_from_json(const std::string& line);

void write_episodes(const std::vector<Episode>& episodes, const std::string& path);
std::vector<Episode> read_episodes(const std::string& path);

}  // namespace msdp
