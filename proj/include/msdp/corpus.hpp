#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace msdp {

// Typed entity span over sentence tokens; both ends inclusive.
struct EntitySpan {
  int start = 0;
  int end = 0;
  std::string label;

  bool operator==(const EntitySpan&) const = default;
};

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<EntitySpan> spans;  // sorted by start, pairwise disjoint

  bool operator==(const Sentence&) const = default;
};

// Throws DataError unless tokens are non-empty, spans are in bounds,
// sorted, non-overlapping, and no span is labeled "O".
void validate_sentence(const Sentence& s);

// BIO ingestion. Lines are "token<TAB or space>tag"; a blank line ends a
// sentence; tags in {O, B-X, I-X}. In lenient mode a dangling I-X opens a
// new span; in strict mode it is a parse error.
std::vector<Sentence> parse_bio(const std::string& text, bool strict = false);

std::string serialize_bio(const std::vector<Sentence>& sentences);

std::vector<Sentence> read_bio_file(const std::string& path, bool strict = false);
void write_bio_file(const std::vector<Sentence>& sentences, const std::string& path);

// label -> distinct entity surface forms of that label. Surface forms are
// deduplicated case-insensitively; the stored form keeps the casing of the
// first occurrence. Iteration order is deterministic for a fixed corpus.
class EntityIndex {
 public:
  void add(const std::string& label, const std::vector<std::string>& surface);

  const std::vector<std::string>& labels() const { return labels_; }
  bool has_label(const std::string& label) const;
  const std::vector<std::vector<std::string>>& surfaces(const std::string& label) const;
  size_t size() const { return labels_.size(); }

 private:
  std::vector<std::string> labels_;  // insertion order
  std::map<std::string, std::vector<std::vector<std::string>>> forms_;
  std::map<std::string, std::map<std::string, bool>> seen_;  // label -> folded form
};

EntityIndex build_entity_index(const std::vector<Sentence>& sentences);

// Synthetic corpus generation. Templates hold literal context words and
// "{LABEL}" slots; each slot is filled with a surface form drawn from the
// label's lexicon. A "{O}" slot inserts a word from the filler lexicon
// without creating a span. Template choice is balanced so per-label slot
// counts stay near uniform.
struct SynthConfig {
  int n_sentences = 0;
  std::vector<std::string> labels;
  std::map<std::string, std::vector<std::vector<std::string>>> lexicons;  // label -> surface forms
  std::vector<std::vector<std::string>> fillers;  // non-entity insertions for {O}
  std::vector<std::string> templates;             // raw template strings
};

SynthConfig load_synth_config(const std::string& path);

std::vector<Sentence> generate_synthetic_corpus(const SynthConfig& config, uint64_t seed);

std::string lowercase(const std::string& s);

}  // namespace msdp
