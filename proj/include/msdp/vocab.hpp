#pragma once

#include <map>
#include <string>
#include <vector>

#include "msdp/corpus.hpp"

namespace msdp {

// Whitespace + lowercase vocabulary. Special tokens occupy fixed ids 0-4;
// [CLS]/[SEP]/[MASK]-style literals are recognized verbatim, everything
// else is lowercase-folded before lookup.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;

  Vocabulary();

  // Adds every corpus token plus the extra tokens (label names, template
  // words); min frequency 1, first-seen order.
  static Vocabulary build(const std::vector<Sentence>& corpus,
                          const std::vector<std::string>& extra_tokens = {});

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  std::vector<int> lookup(const std::vector<std::string>& tokens) const;

  void save(const std::string& path) const;  // one token per line, line = id
  static Vocabulary load(const std::string& path);

  uint64_t content_hash() const;

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

struct TokenizedSentence {
  std::vector<int> ids;  // [CLS] ... [SEP]
  // original token index -> positions in ids (always one position here;
  // kept as a list so span positions survive a sub-token tokenizer)
  std::vector<std::vector<int>> alignment;
  bool truncated = false;
  int dropped_tokens = 0;  // original tokens lost to truncation
};

// [CLS] + token ids + [SEP], truncated to max_len with the [SEP] kept.
TokenizedSentence tokenize(const Vocabulary& vocab, const std::vector<std::string>& tokens,
                           int max_len);

}  // namespace msdp
