#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "msdp/episodes.hpp"
#include "msdp/errors.hpp"

using namespace msdp;

namespace {

std::vector<Sentence> five_label_corpus(int per_label) {
  // single-entity sentences, unique contexts
  std::vector<Sentence> corpus;
  std::vector<std::string> labels = {"PER", "LOC", "ORG", "DAY", "FOOD"};
  int uid = 0;
  for (const auto& l : labels) {
    for (int i = 0; i < per_label; ++i) {
      Sentence s{{"ctx" + std::to_string(uid++), l + std::to_string(i), "end"},
                 {{1, 1, l}}};
      corpus.push_back(s);
    }
  }
  return corpus;
}

}  // namespace

TEST_CASE("sampled 5-way 1-shot episode meets quotas and validates") {
  auto corpus = five_label_corpus(10);
  SamplerOptions opt{.n_way = 5, .k_shot = 1};
  Episode ep = sample_episode(corpus, opt, 3);
  CHECK(ep.types.size() == 5);
  CHECK(validate_episode(ep, 5, 1).empty());

  std::map<std::string, int> counts;
  for (const auto& s : ep.support)
    for (const auto& sp : s.spans) ++counts[sp.label];
  for (const auto& t : ep.types) {
    CHECK(counts[t] >= 1);
    CHECK(counts[t] <= 2);
  }
}

TEST_CASE("sampling is deterministic under seed") {
  auto corpus = five_label_corpus(10);
  SamplerOptions opt{.n_way = 3, .k_shot = 2};
  Episode a = sample_episode(corpus, opt, 11);
  Episode b = sample_episode(corpus, opt, 11);
  CHECK(a == b);
  CHECK(episode_to_json(a) == episode_to_json(b));
}

TEST_CASE("sampling more ways than labels fails") {
  std::vector<Sentence> corpus;
  for (int i = 0; i < 4; ++i)
    corpus.push_back(Sentence{{"w", "x"}, {{0, 0, "L" + std::to_string(i)}}});
  SamplerOptions opt{.n_way = 5, .k_shot = 1};
  CHECK_THROWS_AS(sample_episode(corpus, opt, 1), DataError);
}

TEST_CASE("sampling-exhausted error names the deficient type") {
  // two labels but only one mention of RARE
  std::vector<Sentence> corpus;
  for (int i = 0; i < 10; ++i)
    corpus.push_back(Sentence{{"a" + std::to_string(i), "b"}, {{0, 0, "COMMON"}}});
  corpus.push_back(Sentence{{"solo", "b"}, {{0, 0, "RARE"}}});
  SamplerOptions opt{.n_way = 2, .k_shot = 2};
  try {
    sample_episode(corpus, opt, 1);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("RARE") != std::string::npos);
  }
}

TEST_CASE("exact_k tightens the support cap to K") {
  auto corpus = five_label_corpus(20);
  SamplerOptions opt{.n_way = 5, .k_shot = 1, .exact_k = true};
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Episode ep = sample_episode(corpus, opt, seed);
    std::map<std::string, int> counts;
    for (const auto& s : ep.support)
      for (const auto& sp : s.spans) ++counts[sp.label];
    for (const auto& t : ep.types) CHECK(counts[t] == 1);
    CHECK(validate_episode(ep, 5, 1, /*exact_k=*/true).empty());
  }
}

TEST_CASE("support and query sentences are disjoint") {
  auto corpus = five_label_corpus(10);
  SamplerOptions opt{.n_way = 5, .k_shot = 1};
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Episode ep = sample_episode(corpus, opt, seed);
    std::set<std::vector<std::string>> support;
    for (const auto& s : ep.support) support.insert(s.tokens);
    for (const auto& q : ep.query) CHECK(support.count(q.tokens) == 0);
  }
}

TEST_CASE("every label is eventually chosen across seeds") {
  auto corpus = five_label_corpus(10);
  SamplerOptions opt{.n_way = 2, .k_shot = 1};
  std::set<std::string> seen;
  for (uint64_t seed = 0; seed < 200; ++seed) {
    Episode ep = sample_episode(corpus, opt, seed);
    seen.insert(ep.types.begin(), ep.types.end());
  }
  CHECK(seen.size() == 5);
}

TEST_CASE("validate_episode reports specific violations") {
  Episode ep;
  ep.types = {"PER", "LOC"};
  ep.support = {Sentence{{"a", "b"}, {{0, 0, "PER"}}},
                Sentence{{"c", "d"}, {{0, 0, "PER"}}},
                Sentence{{"e", "f"}, {{0, 0, "PER"}}},
                Sentence{{"g", "h"}, {{0, 0, "LOC"}}}};
  ep.query = {Sentence{{"i", "j"}, {{0, 0, "PER"}, {1, 1, "ORG"}}}};

  auto report = validate_episode(ep, 2, 1);
  // PER support count 3 > 2K=2; ORG outside types; LOC missing in query
  bool has_over = false, has_outside = false, has_missing = false;
  for (const auto& v : report) {
    if (v.find("> 2K=2") != std::string::npos) has_over = true;
    if (v.find("ORG") != std::string::npos) has_outside = true;
    if (v.find("no mention") != std::string::npos) has_missing = true;
  }
  CHECK(has_over);
  CHECK(has_outside);
  CHECK(has_missing);

  Episode good;
  good.types = {"PER"};
  good.support = {Sentence{{"a", "b"}, {{0, 0, "PER"}}}};
  good.query = {Sentence{{"c", "d"}, {{0, 0, "PER"}}}};
  CHECK(validate_episode(good, 1, 1).empty());
}

TEST_CASE("episode JSONL round-trip") {
  auto corpus = five_label_corpus(10);
  SamplerOptions opt{.n_way = 5, .k_shot = 1};
  auto episodes = sample_episodes(corpus, opt, 100, 5);

  std::string path = "episodes_test.jsonl";
  write_episodes(episodes, path);
  auto loaded = read_episodes(path);
  CHECK(loaded == episodes);
  std::remove(path.c_str());
}

TEST_CASE("read_episodes validates spans and reports line numbers") {
  std::string path = "episodes_bad.jsonl";
  {
    std::ofstream out(path);
    out << R"({"types":["PER"],"support":[{"tokens":["a"],"spans":[[0,5,"PER"]]}],"query":[]})"
        << "\n";
  }
  try {
    read_episodes(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
  std::remove(path.c_str());

  {
    std::ofstream out(path);
    out << "not json\n";
  }
  CHECK_THROWS_AS(read_episodes(path), DataError);
  std::remove(path.c_str());

  {
    std::ofstream out(path);
  }
  CHECK(read_episodes(path).empty());
  std::remove(path.c_str());
}
