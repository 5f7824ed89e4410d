#include "msdp/vocab.hpp"

#include <fstream>

#include "msdp/errors.hpp"
#include "msdp/rng.hpp"

namespace msdp {

namespace {
const std::vector<std::string> kSpecials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

bool is_special(const std::string& token) {
  for (const auto& s : kSpecials)
    if (token == s) return true;
  return false;
}
}  // namespace

Vocabulary::Vocabulary() {
  for (const auto& s : kSpecials) add(s);
}

void Vocabulary::add(const std::string& token) {
  if (ids_.count(token)) return;
  ids_[token] = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<Sentence>& corpus,
                             const std::vector<std::string>& extra_tokens) {
  Vocabulary v;
  for (const auto& s : corpus)
    for (const auto& t : s.tokens) v.add(lowercase(t));
  for (const auto& t : extra_tokens) v.add(is_special(t) ? t : lowercase(t));
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(is_special(token) ? token : lowercase(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw DataError("token id out of range: " + std::to_string(id));
  return tokens_[id];
}

std::vector<int> Vocabulary::lookup(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary: " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary: " + path);
  Vocabulary v;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    if (line_no < static_cast<int>(kSpecials.size())) {
      if (line != kSpecials[line_no])
        throw DataError("vocabulary file: special token mismatch at line " +
                        std::to_string(line_no));
    } else {
      v.add(line);
    }
    ++line_no;
  }
  if (line_no < static_cast<int>(kSpecials.size()))
    throw DataError("vocabulary file truncated: " + path);
  return v;
}

uint64_t Vocabulary::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    h = splitmix64(h ^ fnv1a(t));
  }
  return h;
}

TokenizedSentence tokenize(const Vocabulary& vocab, const std::vector<std::string>& tokens,
                           int max_len) {
  TokenizedSentence out;
  out.ids.push_back(Vocabulary::kCls);
  out.alignment.resize(tokens.size());
  int budget = max_len - 1;  // room for the trailing [SEP]
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (static_cast<int>(out.ids.size()) >= budget) {
      out.truncated = true;
      out.dropped_tokens = static_cast<int>(tokens.size() - i);
      break;
    }
    out.alignment[i].push_back(static_cast<int>(out.ids.size()));
    out.ids.push_back(vocab.id(tokens[i]));
  }
  out.ids.push_back(Vocabulary::kSep);
  return out;
}

}  // namespace msdp
