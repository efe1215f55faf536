#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sparsent/labels.hpp"

namespace sparsent {

struct Token {
  std::string surface;
  std::string pos;
  std::optional<std::string> lemma;
  std::optional<int> head;  // 1-based governor index, 0 = root
  std::optional<std::string> deprel;

  friend bool operator==(const Token&, const Token&) = default;
};

enum class SentenceState { Unlabeled, HumanLabeled, AutoLabeled };

inline const char* to_string(SentenceState s) {
  switch (s) {
    case SentenceState::Unlabeled: return "unlabeled";
    case SentenceState::HumanLabeled: return "human";
    case SentenceState::AutoLabeled: return "auto";
  }
  return "?";
}

inline SentenceState sentence_state_from_string(std::string_view s) {
  if (s == "unlabeled") return SentenceState::Unlabeled;
  if (s == "human") return SentenceState::HumanLabeled;
  if (s == "auto") return SentenceState::AutoLabeled;
  throw std::invalid_argument("unknown sentence state: " + std::string(s));
}

using SentenceId = int;

struct Sentence {
  SentenceId id = 0;
  std::vector<Token> tokens;
  // Typed IOB2 tags as read from the file ("B-LOC", "O", ...). Kept so the pool
  // can be restricted to another class later.
  std::optional<std::vector<std::string>> gold_tags;
  std::optional<LabelSeq> gold;
  SentenceState state = SentenceState::Unlabeled;
  std::optional<LabelSeq> working;  // present iff state != Unlabeled

  std::size_t size() const { return tokens.size(); }
  bool labeled() const { return state != SentenceState::Unlabeled; }
  bool has_dependencies() const {
    return !tokens.empty() && std::all_of(tokens.begin(), tokens.end(), [](const Token& t) {
      return t.head.has_value() && t.deprel.has_value();
    });
  }
  std::string surface(std::size_t start, std::size_t end) const {
    std::string out;
    for (std::size_t i = start; i < end; ++i) {
      if (i > start) out.push_back(' ');
      out += tokens[i].surface;
    }
    return out;
  }

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct Pool {
  std::vector<Sentence> sentences;
  std::string entity_class;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
  const Sentence& at(SentenceId id) const { return sentences.at(static_cast<std::size_t>(id)); }
  Sentence& at(SentenceId id) { return sentences.at(static_cast<std::size_t>(id)); }

  friend bool operator==(const Pool&, const Pool&) = default;
};

enum class CorpusFormat { Conll2003, Conllu };

inline CorpusFormat corpus_format_from_string(std::string_view s) {
  if (s == "conll2003" || s == "conll") return CorpusFormat::Conll2003;
  if (s == "conllu") return CorpusFormat::Conllu;
  throw std::invalid_argument("unknown corpus format: " + std::string(s));
}

class CorpusError : public std::runtime_error {
 public:
  CorpusError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct LoadOptions {
  bool conllu_use_xpos = false;
  // When set, gold is restricted to this class right after loading.
  std::string entity_class;
};

namespace detail {

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view rstrip(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ' || s.back() == '\t'))
    s.remove_suffix(1);
  return s;
}

// Parses "O", "B-X" or "I-X". Returns false on anything else.
inline bool parse_typed_tag(const std::string& tag, char& prefix, std::string& cls) {
  if (tag == "O") {
    prefix = 'O';
    cls.clear();
    return true;
  }
  if (tag.size() < 3 || tag[1] != '-' || (tag[0] != 'B' && tag[0] != 'I')) return false;
  prefix = tag[0];
  cls = tag.substr(2);
  return true;
}

// IOB1 → IOB2: an I-X that does not continue an X entity opens one.
inline void normalize_iob2(std::vector<std::string>& tags) {
  std::string prev_cls;
  for (auto& tag : tags) {
    char prefix = 'O';
    std::string cls;
    parse_typed_tag(tag, prefix, cls);
    if (prefix == 'I' && cls != prev_cls) tag = "B-" + cls;
    prev_cls = prefix == 'O' ? std::string() : cls;
  }
}

// Class-restricted projection of typed tags onto BIO. An empty class keeps every entity.
inline LabelSeq project_tags(const std::vector<std::string>& tags, const std::string& cls) {
  LabelSeq out;
  out.reserve(tags.size());
  for (const auto& tag : tags) {
    char prefix = 'O';
    std::string c;
    parse_typed_tag(tag, prefix, c);
    if (prefix == 'O' || (!cls.empty() && c != cls))
      out.push_back(Label::O);
    else
      out.push_back(prefix == 'B' ? Label::B : Label::I);
  }
  return out;
}

inline void finish_sentence(Pool& pool, Sentence& s, bool with_gold) {
  if (s.tokens.empty()) return;
  s.id = static_cast<SentenceId>(pool.sentences.size());
  if (with_gold) {
    normalize_iob2(*s.gold_tags);
    s.gold = project_tags(*s.gold_tags, pool.entity_class);
  } else {
    s.gold_tags.reset();
    s.gold.reset();
  }
  pool.sentences.push_back(std::move(s));
  s = Sentence{};
}

}  // namespace detail

inline Pool restrict_to_class(Pool pool, const std::string& cls);

inline Pool parse_conll2003(std::istream& in, const LoadOptions& opts = {}) {
  Pool pool;
  Sentence current;
  std::vector<std::string> tags;
  std::optional<bool> sentence_has_gold;
  std::string raw;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (!current.tokens.empty()) {
      bool gold = sentence_has_gold.value_or(false);
      if (gold) current.gold_tags = std::move(tags);
      detail::finish_sentence(pool, current, gold);
    }
    tags.clear();
    sentence_has_gold.reset();
  };

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::rstrip(raw);
    auto cols = detail::split_ws(line);
    if (cols.empty()) {
      flush();
      continue;
    }
    if (cols[0] == "-DOCSTART-") {
      flush();
      continue;
    }
    if (cols.size() < 2) throw CorpusError(line_no, "expected at least TOKEN and POS columns");
    bool has_ner = cols.size() >= 3;
    if (sentence_has_gold && *sentence_has_gold != has_ner)
      throw CorpusError(line_no, "inconsistent column count within sentence");
    sentence_has_gold = has_ner;
    Token tok;
    tok.surface = cols[0];
    tok.pos = cols[1];
    if (has_ner) {
      const std::string& tag = cols.back();
      char prefix = 'O';
      std::string cls;
      if (!detail::parse_typed_tag(tag, prefix, cls))
        throw CorpusError(line_no, "unknown label '" + tag + "'");
      tags.push_back(tag);
    }
    current.tokens.push_back(std::move(tok));
  }
  flush();
  if (!opts.entity_class.empty()) return restrict_to_class(std::move(pool), opts.entity_class);
  return pool;
}

inline Pool parse_conllu(std::istream& in, const LoadOptions& opts = {}) {
  Pool pool;
  Sentence current;
  std::vector<std::string> tags;
  std::vector<std::size_t> head_lines;
  std::vector<Sentence> staged;
  bool any_ne = false;
  std::string raw;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (current.tokens.empty()) return;
    const auto n = static_cast<int>(current.tokens.size());
    for (std::size_t i = 0; i < current.tokens.size(); ++i) {
      const auto& h = current.tokens[i].head;
      if (h && (*h < 0 || *h > n)) throw CorpusError(head_lines[i], "HEAD out of range");
    }
    current.gold_tags = std::move(tags);
    staged.push_back(std::move(current));
    current = Sentence{};
    tags.clear();
    head_lines.clear();
  };

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::rstrip(raw);
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.front() == '#') continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() != 10) throw CorpusError(line_no, "expected 10 tab-separated columns, got " + std::to_string(cols.size()));
    if (cols[0].find_first_of("-.") != std::string::npos) continue;  // multiword ranges, empty nodes
    Token tok;
    tok.surface = cols[1];
    if (tok.surface.empty() || tok.surface == "_") throw CorpusError(line_no, "empty FORM");
    const std::string& primary = opts.conllu_use_xpos ? cols[4] : cols[3];
    const std::string& fallback = opts.conllu_use_xpos ? cols[3] : cols[4];
    tok.pos = primary != "_" ? primary : fallback;
    if (tok.pos.empty() || tok.pos == "_") throw CorpusError(line_no, "missing POS tag");
    if (cols[2] != "_") tok.lemma = cols[2];
    if (cols[6] != "_") {
      try {
        std::size_t used = 0;
        tok.head = std::stoi(cols[6], &used);
        if (used != cols[6].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw CorpusError(line_no, "malformed HEAD '" + cols[6] + "'");
      }
    }
    if (cols[7] != "_") tok.deprel = cols[7];
    std::string tag = "O";
    for (const auto& item : detail::split(cols[9], '|')) {
      if (item.rfind("NE=", 0) == 0) {
        tag = item.substr(3);
        char prefix = 'O';
        std::string cls;
        if (!detail::parse_typed_tag(tag, prefix, cls))
          throw CorpusError(line_no, "unknown label '" + tag + "'");
        any_ne = true;
      }
    }
    tags.push_back(tag);
    head_lines.push_back(line_no);
    current.tokens.push_back(std::move(tok));
  }
  flush();
  for (auto& s : staged) detail::finish_sentence(pool, s, any_ne);
  if (!opts.entity_class.empty()) return restrict_to_class(std::move(pool), opts.entity_class);
  return pool;
}

inline Pool load_corpus(const std::string& path, CorpusFormat format, const LoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus: " + path);
  return format == CorpusFormat::Conll2003 ? parse_conll2003(in, opts) : parse_conllu(in, opts);
}

// Keeps only spans of `cls` in the gold annotation; every other span becomes O.
inline Pool restrict_to_class(Pool pool, const std::string& cls) {
  pool.entity_class = cls;
  for (auto& s : pool.sentences) {
    if (!s.gold_tags) continue;
    for (auto& tag : *s.gold_tags) {
      char prefix = 'O';
      std::string c;
      detail::parse_typed_tag(tag, prefix, c);
      if (prefix != 'O' && c != cls) tag = "O";
    }
    s.gold = detail::project_tags(*s.gold_tags, cls);
  }
  return pool;
}

// The copy handed to the learner: no gold anywhere.
inline Pool strip_gold(Pool pool) {
  for (auto& s : pool.sentences) {
    s.gold.reset();
    s.gold_tags.reset();
  }
  return pool;
}

enum class TagScheme { BIO, IO };

// Writes TOKEN POS CHUNK NER; CHUNK is not tracked and written as "O".
inline void write_conll2003_sentence(std::ostream& out, const Sentence& s, const LabelSeq& labels,
                                     const std::string& cls, TagScheme scheme = TagScheme::BIO) {
  const std::string name = cls.empty() ? "ENT" : cls;
  auto tags = scheme == TagScheme::BIO ? to_bio_tags(labels, name) : to_io_tags(labels, name);
  for (std::size_t i = 0; i < s.tokens.size(); ++i)
    out << s.tokens[i].surface << ' ' << s.tokens[i].pos << " O " << tags[i] << '\n';
  out << '\n';
}

}  // namespace sparsent
