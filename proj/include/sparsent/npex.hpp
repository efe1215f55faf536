#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sparsent/corpus.hpp"

namespace sparsent {

struct NPSpan {
  SentenceId sentence_id = 0;
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  std::string surface;

  friend bool operator==(const NPSpan&, const NPSpan&) = default;
};

struct NounPhrase {
  std::string surface;
  std::vector<NPSpan> occurrences;
  std::size_t count = 0;
};

struct NpexOptions {
  // Accept lowercase adjectives in the JJ prefix as well.
  bool relax_jj_case = false;
};

namespace detail {

inline bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_'; }

// Whole token matches \w+.
inline bool all_word_chars(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return is_word_char(c); });
}

// Whole token matches [A-Z]\w+.
inline bool capitalized_word(const std::string& s) {
  return s.size() >= 2 && std::isupper(static_cast<unsigned char>(s[0])) &&
         std::all_of(s.begin() + 1, s.end(), [](unsigned char c) { return is_word_char(c); });
}

inline bool is_noun_tag(const std::string& pos) {
  return !pos.empty() && pos[0] == 'N' &&
         std::all_of(pos.begin() + 1, pos.end(), [](unsigned char c) { return c >= 'A' && c <= 'Z'; });
}

inline bool is_np_adjective(const Token& t, const NpexOptions& opts) {
  if (t.pos != "JJ") return false;
  return opts.relax_jj_case ? all_word_chars(t.surface) : capitalized_word(t.surface);
}

inline bool is_np_number(const Token& t) { return t.pos == "CD" && all_word_chars(t.surface); }

}  // namespace detail

// Leftmost-longest, non-overlapping matches of  JJ-cap* N+ CD?  over the tag sequence.
inline std::vector<NPSpan> extract_nps(const Sentence& sentence, const NpexOptions& opts = {}) {
  std::vector<NPSpan> out;
  const auto& toks = sentence.tokens;
  const std::size_t n = toks.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && detail::is_np_adjective(toks[j], opts)) ++j;
    std::size_t k = j;
    while (k < n && detail::is_noun_tag(toks[k].pos)) ++k;
    if (k == j) {
      // A run of adjectives without a noun cannot start a match here; neither can
      // any suffix of it, so resume after the first token.
      ++i;
      continue;
    }
    if (k < n && detail::is_np_number(toks[k])) ++k;
    out.push_back({sentence.id, i, k, sentence.surface(i, k)});
    i = k;
  }
  return out;
}

// Groups spans by exact surface; ordered by descending count, then surface.
inline std::vector<NounPhrase> collect_nps(const Pool& pool, const NpexOptions& opts = {}) {
  std::map<std::string, NounPhrase> by_surface;
  for (const auto& s : pool.sentences) {
    for (auto& span : extract_nps(s, opts)) {
      auto& np = by_surface[span.surface];
      np.surface = span.surface;
      np.occurrences.push_back(std::move(span));
    }
  }
  std::vector<NounPhrase> out;
  out.reserve(by_surface.size());
  for (auto& [_, np] : by_surface) {
    np.count = np.occurrences.size();
    out.push_back(std::move(np));
  }
  std::stable_sort(out.begin(), out.end(), [](const NounPhrase& a, const NounPhrase& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.surface < b.surface;
  });
  return out;
}

// Distinct gold entity surfaces (over gold labels of the pool's class).
inline std::set<std::string> gold_entity_surfaces(const Pool& pool) {
  std::set<std::string> out;
  for (const auto& s : pool.sentences) {
    if (!s.gold) continue;
    for (const Span& sp : spans_of(*s.gold)) out.insert(s.surface(sp.start, sp.end));
  }
  return out;
}

// Fraction of distinct gold entity surfaces that were extracted as noun phrases.
inline double npex_recall(const Pool& pool, const std::vector<NounPhrase>& nps) {
  auto gold = gold_entity_surfaces(pool);
  if (gold.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& np : nps) hit += gold.count(np.surface);
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

}  // namespace sparsent
