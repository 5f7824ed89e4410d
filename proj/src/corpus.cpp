#include "msdp/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "msdp/errors.hpp"
#include "msdp/rng.hpp"

namespace msdp {

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void validate_sentence(const Sentence& s) {
  if (s.tokens.empty()) throw DataError("sentence has no tokens");
  int prev_end = -1;
  for (const auto& span : s.spans) {
    if (span.label == "O" || span.label.empty())
      throw DataError("span carries a non-entity label");
    if (span.start < 0 || span.start > span.end ||
        span.end >= static_cast<int>(s.tokens.size()))
      throw DataError("span out of bounds: [" + std::to_string(span.start) + "," +
                      std::to_string(span.end) + "] in sentence of length " +
                      std::to_string(s.tokens.size()));
    if (span.start <= prev_end)
      throw DataError("spans overlap or are unsorted at token " +
                      std::to_string(span.start));
    prev_end = span.end;
  }
}

namespace {

void close_span(Sentence& sent, int start, int end, const std::string& label) {
  sent.spans.push_back({start, end, label});
}

}  // namespace

std::vector<Sentence> parse_bio(const std::string& text, bool strict) {
  std::vector<Sentence> out;
  Sentence current;
  int open_start = -1;
  std::string open_label;
  int line_no = 0;

  auto flush_sentence = [&]() {
    if (open_start >= 0) {
      close_span(current, open_start, static_cast<int>(current.tokens.size()) - 1, open_label);
      open_start = -1;
    }
    if (!current.tokens.empty()) {
      validate_sentence(current);
      out.push_back(std::move(current));
      current = Sentence{};
    }
  };

  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush_sentence();
      continue;
    }
    size_t sep = line.find_last_of("\t ");
    if (sep == std::string::npos || sep == 0 || sep + 1 >= line.size())
      throw DataError("line " + std::to_string(line_no) + ": expected \"token<TAB>tag\"");
    std::string token = line.substr(0, sep);
    std::string tag = line.substr(sep + 1);
    // token may not contain separators itself
    if (token.find_first_of("\t ") != std::string::npos)
      throw DataError("line " + std::to_string(line_no) + ": wrong column count");

    int pos = static_cast<int>(current.tokens.size());
    if (tag == "O") {
      if (open_start >= 0) {
        close_span(current, open_start, pos - 1, open_label);
        open_start = -1;
      }
    } else if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
      std::string label = tag.substr(2);
      if (tag[0] == 'B') {
        if (open_start >= 0) close_span(current, open_start, pos - 1, open_label);
        open_start = pos;
        open_label = label;
      } else {  // I-X
        if (open_start >= 0 && open_label == label) {
          // span continues
        } else if (strict) {
          throw DataError("line " + std::to_string(line_no) + ": dangling I-" + label);
        } else {
          if (open_start >= 0) close_span(current, open_start, pos - 1, open_label);
          open_start = pos;  // lenient: dangling I-X opens a span
          open_label = label;
        }
      }
    } else {
      throw DataError("line " + std::to_string(line_no) + ": bad tag \"" + tag + "\"");
    }
    current.tokens.push_back(token);
  }
  flush_sentence();
  return out;
}

std::string serialize_bio(const std::vector<Sentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    std::vector<std::string> tags(s.tokens.size(), "O");
    for (const auto& span : s.spans) {
      tags[span.start] = "B-" + span.label;
      for (int i = span.start + 1; i <= span.end; ++i) tags[i] = "I-" + span.label;
    }
    for (size_t i = 0; i < s.tokens.size(); ++i)
      out += s.tokens[i] + "\t" + tags[i] + "\n";
    out += "\n";
  }
  return out;
}

std::vector<Sentence> read_bio_file(const std::string& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open BIO file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_bio(buf.str(), strict);
}

void write_bio_file(const std::vector<Sentence>& sentences, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write BIO file: " + path);
  out << serialize_bio(sentences);
}

void EntityIndex::add(const std::string& label, const std::vector<std::string>& surface) {
  if (forms_.find(label) == forms_.end()) {
    labels_.push_back(label);
    forms_[label] = {};
  }
  std::string folded;
  for (const auto& t : surface) folded += lowercase(t) + "\x1f";
  auto& seen = seen_[label];
  if (seen.count(folded)) return;
  seen[folded] = true;
  forms_[label].push_back(surface);
}

bool EntityIndex::has_label(const std::string& label) const {
  return forms_.find(label) != forms_.end();
}

const std::vector<std::vector<std::string>>& EntityIndex::surfaces(
    const std::string& label) const {
  auto it = forms_.find(label);
  if (it == forms_.end()) throw DataError("label not in entity index: " + label);
  return it->second;
}

EntityIndex build_entity_index(const std::vector<Sentence>& sentences) {
  EntityIndex index;
  for (const auto& s : sentences) {
    for (const auto& span : s.spans) {
      std::vector<std::string> surface(s.tokens.begin() + span.start,
                                       s.tokens.begin() + span.end + 1);
      index.add(span.label, surface);
    }
  }
  return index;
}

namespace {

std::vector<std::string> split_whitespace(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

struct TemplatePart {
  bool is_slot = false;
  std::string text;  // literal token or slot label
};

std::vector<TemplatePart> parse_template(const std::string& tpl,
                                         const std::vector<std::string>& labels,
                                         bool has_fillers) {
  std::vector<TemplatePart> parts;
  int slot_count = 0;
  for (const auto& tok : split_whitespace(tpl)) {
    if (tok.size() > 2 && tok.front() == '{' && tok.back() == '}') {
      std::string label = tok.substr(1, tok.size() - 2);
      if (label == "O") {
        if (!has_fillers)
          throw ConfigError("template uses a {O} slot but no fillers are configured");
        parts.push_back({true, "O"});
        continue;
      }
      if (std::find(labels.begin(), labels.end(), label) == labels.end())
        throw ConfigError("template slot references unknown label: " + label);
      parts.push_back({true, label});
      ++slot_count;
    } else {
      parts.push_back({false, tok});
    }
  }
  if (slot_count < 1 || slot_count > 3)
    throw ConfigError("template must contain 1-3 entity slots: \"" + tpl + "\"");
  return parts;
}

}  // namespace

SynthConfig load_synth_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open generator config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("generator config is not valid JSON: " + std::string(e.what()));
  }

  SynthConfig cfg;
  cfg.n_sentences = j.value("n_sentences", 0);
  if (!j.contains("labels") || !j["labels"].is_object())
    throw ConfigError("generator config: missing \"labels\" object");

  std::string base_dir;
  if (auto slash = path.find_last_of('/'); slash != std::string::npos)
    base_dir = path.substr(0, slash + 1);

  for (const auto& [label, spec] : j["labels"].items()) {
    cfg.labels.push_back(label);
    std::vector<std::vector<std::string>> forms;
    if (spec.contains("lexicon")) {
      for (const auto& entry : spec["lexicon"])
        forms.push_back(split_whitespace(entry.get<std::string>()));
    } else if (spec.contains("lexicon_file")) {
      std::string lex_path = spec["lexicon_file"].get<std::string>();
      if (!lex_path.empty() && lex_path[0] != '/') lex_path = base_dir + lex_path;
      std::ifstream lex(lex_path);
      if (!lex)
        throw ConfigError("label " + label + ": cannot open lexicon file " + lex_path);
      std::string line;
      while (std::getline(lex, line)) {
        auto toks = split_whitespace(line);
        if (!toks.empty()) forms.push_back(toks);
      }
    } else {
      throw ConfigError("label " + label + ": needs \"lexicon\" or \"lexicon_file\"");
    }
    if (forms.empty()) throw ConfigError("label " + label + ": empty lexicon");
    cfg.lexicons[label] = std::move(forms);
  }
  if (j.contains("fillers"))
    for (const auto& f : j["fillers"])
      cfg.fillers.push_back(split_whitespace(f.get<std::string>()));
  if (!j.contains("templates") || !j["templates"].is_array() || j["templates"].empty())
    throw ConfigError("generator config: missing \"templates\" array");
  for (const auto& t : j["templates"]) cfg.templates.push_back(t.get<std::string>());
  return cfg;
}

std::vector<Sentence> generate_synthetic_corpus(const SynthConfig& config, uint64_t seed) {
  if (config.n_sentences <= 0) throw ConfigError("n_sentences must be positive");
  std::vector<std::vector<TemplatePart>> templates;
  for (const auto& t : config.templates)
    templates.push_back(parse_template(t, config.labels, !config.fillers.empty()));
  for (const auto& label : config.labels)
    if (config.lexicons.find(label) == config.lexicons.end() ||
        config.lexicons.at(label).empty())
      throw ConfigError("label " + label + ": empty lexicon");

  // templates usable per label; a label no template mentions can never
  // reach its share of slots
  std::map<std::string, std::vector<size_t>> by_label;
  for (size_t t = 0; t < templates.size(); ++t)
    for (const auto& part : templates[t])
      if (part.is_slot && part.text != "O") by_label[part.text].push_back(t);
  for (const auto& label : config.labels)
    if (by_label[label].empty())
      throw ConfigError("label " + label + " is not referenced by any template");

  Rng rng(derive_seed(seed, "synth"));
  std::map<std::string, long> slot_counts;
  for (const auto& label : config.labels) slot_counts[label] = 0;

  std::vector<Sentence> out;
  out.reserve(config.n_sentences);
  for (int n = 0; n < config.n_sentences; ++n) {
    // Bump the currently rarest label: pick it, then a template containing
    // it. Keeps every per-label slot count within a constant of the rest.
    long min_count = std::numeric_limits<long>::max();
    for (const auto& label : config.labels)
      min_count = std::min(min_count, slot_counts[label]);
    std::vector<std::string> rarest;
    for (const auto& label : config.labels)
      if (slot_counts[label] == min_count) rarest.push_back(label);
    const std::string& target = rarest[rng.uniform_index(rarest.size())];
    const auto& usable = by_label[target];
    size_t chosen = usable[rng.uniform_index(usable.size())];

    Sentence sent;
    for (const auto& part : templates[chosen]) {
      if (!part.is_slot) {
        sent.tokens.push_back(part.text);
        continue;
      }
      if (part.text == "O") {
        const auto& filler = config.fillers[rng.uniform_index(config.fillers.size())];
        for (const auto& tok : filler) sent.tokens.push_back(tok);
        continue;
      }
      const auto& lex = config.lexicons.at(part.text);
      const auto& surface = lex[rng.uniform_index(lex.size())];
      int start = static_cast<int>(sent.tokens.size());
      for (const auto& tok : surface) sent.tokens.push_back(tok);
      sent.spans.push_back({start, static_cast<int>(sent.tokens.size()) - 1, part.text});
      ++slot_counts[part.text];
    }
    validate_sentence(sent);
    out.push_back(std::move(sent));
  }
  return out;
}

}  // namespace msdp
