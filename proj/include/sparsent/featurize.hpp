#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "sparsent/corpus.hpp"
#include "sparsent/diag.hpp"
#include "sparsent/npex.hpp"

namespace sparsent {

enum class FeatureFamily : std::uint8_t { LF_OF, LF_WS, LS, SF, SeF, CF };

inline constexpr FeatureFamily kAllFamilies[] = {FeatureFamily::LF_OF, FeatureFamily::LF_WS, FeatureFamily::LS,
                                                 FeatureFamily::SF,    FeatureFamily::SeF,   FeatureFamily::CF};

inline const char* to_string(FeatureFamily f) {
  switch (f) {
    case FeatureFamily::LF_OF: return "LF_OF";
    case FeatureFamily::LF_WS: return "LF_WS";
    case FeatureFamily::LS: return "LS";
    case FeatureFamily::SF: return "SF";
    case FeatureFamily::SeF: return "SeF";
    case FeatureFamily::CF: return "CF";
  }
  return "?";
}

inline FeatureFamily feature_family_from_string(std::string_view s) {
  for (auto f : kAllFamilies)
    if (s == to_string(f)) return f;
  throw std::invalid_argument("unknown feature family: " + std::string(s));
}

struct Feature {
  FeatureFamily family = FeatureFamily::LF_OF;
  std::string value;

  friend bool operator==(const Feature&, const Feature&) = default;
  friend auto operator<=>(const Feature&, const Feature&) = default;
};

struct FeatureCooc {
  std::string np;  // NounPhrase surface
  Feature feature;
  std::size_t count = 0;

  friend bool operator==(const FeatureCooc&, const FeatureCooc&) = default;
};

// lemma → sense classes, keyed on lowercase lemma.
class SenseLexicon {
 public:
  void add(const std::string& lemma, const std::string& sense_class) {
    auto& classes = entries_[lowercase(lemma)];
    if (std::find(classes.begin(), classes.end(), sense_class) == classes.end()) classes.push_back(sense_class);
  }

  const std::vector<std::string>& lookup(const std::string& word) const {
    static const std::vector<std::string> kEmpty;
    auto it = entries_.find(lowercase(word));
    return it == entries_.end() ? kEmpty : it->second;
  }

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  static std::string lowercase(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

// TSV rows "lemma<TAB>senseClass"; blank lines and '#' comments are ignored.
inline SenseLexicon load_sense_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon: " + path);
  SenseLexicon lex;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = detail::rstrip(line);
    if (view.empty() || view.front() == '#') continue;
    auto tab = view.find('\t');
    if (tab == std::string_view::npos || tab == 0 || tab + 1 == view.size())
      throw CorpusError(line_no, "expected lemma<TAB>senseClass");
    lex.add(std::string(view.substr(0, tab)), std::string(view.substr(tab + 1)));
  }
  return lex;
}

// Character class and case class. Tokens without letters carry no case class.
inline std::vector<Feature> orthographic_form(std::string_view word) {
  if (word.empty()) throw std::invalid_argument("orthographic_form: empty word");
  bool has_alpha = false, has_digit = false, has_other = false;
  bool any_upper = false, any_lower = false;
  for (unsigned char c : word) {
    if (c < 0x80 && std::isalpha(c)) {
      has_alpha = true;
      (std::isupper(c) ? any_upper : any_lower) = true;
    } else if (c < 0x80 && std::isdigit(c)) {
      has_digit = true;
    } else {
      has_other = true;
    }
  }
  std::vector<Feature> out;
  const char* char_class = has_other               ? "other"
                           : has_alpha && has_digit ? "alphanumeric"
                           : has_alpha              ? "alpha"
                                                    : "numeric";
  out.push_back({FeatureFamily::LF_OF, char_class});
  if (has_alpha) {
    const char* case_class = "mixed";
    if (!any_lower)
      case_class = "all-upper";
    else if (!any_upper)
      case_class = "all-lower";
    else {
      // Title: first letter upper, every later letter lower.
      bool first = true, title = true;
      for (unsigned char c : word) {
        if (!(c < 0x80 && std::isalpha(c))) continue;
        if (first ? !std::isupper(c) : !std::islower(c)) title = false;
        first = false;
      }
      if (title) case_class = "title";
    }
    out.push_back({FeatureFamily::LF_OF, case_class});
  }
  return out;
}

inline std::string long_word_shape(std::string_view word) {
  std::string out;
  out.reserve(word.size());
  for (unsigned char c : word) {
    if (c < 0x80 && std::isalpha(c))
      out.push_back('L');
    else if (c < 0x80 && std::isdigit(c))
      out.push_back('D');
    else
      out.push_back(static_cast<char>(c));
  }
  return out;
}

inline std::string short_word_shape(std::string_view word) {
  std::string lws = long_word_shape(word);
  std::string out;
  for (char c : lws)
    if (out.empty() || out.back() != c) out.push_back(c);
  return out;
}

// LWS and SWS, in that order.
inline std::vector<Feature> word_shape(std::string_view word) {
  if (word.empty()) throw std::invalid_argument("word_shape: empty word");
  return {{FeatureFamily::LF_WS, "lws:" + long_word_shape(word)},
          {FeatureFamily::LF_WS, "sws:" + short_word_shape(word)}};
}

inline constexpr std::string_view kSentenceStart = "\xE2\x9F\xA8S\xE2\x9F\xA9";    // ⟨S⟩
inline constexpr std::string_view kSentenceEnd = "\xE2\x9F\xA8/S\xE2\x9F\xA9";     // ⟨/S⟩

inline Feature lexico_syntactic(const NPSpan& np, const Sentence& sentence) {
  std::string prev = np.start == 0 ? std::string(kSentenceStart) : sentence.tokens[np.start - 1].surface;
  std::string next = np.end >= sentence.size() ? std::string(kSentenceEnd) : sentence.tokens[np.end].surface;
  return {FeatureFamily::LS, prev + "_NP_" + next};
}

// Governor and dependent relations of the NP head (its last token). Children
// inside the span are internal structure and skipped.
inline std::vector<Feature> syntactic(const NPSpan& np, const Sentence& sentence) {
  if (!sentence.has_dependencies() || np.end == 0) return {};
  const std::size_t head = np.end - 1;
  const int head_id = static_cast<int>(head) + 1;
  std::set<std::string> values;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (i >= np.start && i < np.end) continue;
    if (*sentence.tokens[i].head == head_id) values.insert("gov:" + *sentence.tokens[i].deprel);
  }
  values.insert("dep:" + *sentence.tokens[head].deprel);
  std::vector<Feature> out;
  for (auto& v : values) out.push_back({FeatureFamily::SF, v});
  return out;
}

inline std::string np_head_word(const std::string& surface) {
  auto pos = surface.rfind(' ');
  return pos == std::string::npos ? surface : surface.substr(pos + 1);
}

inline std::vector<Feature> semantic(const NounPhrase& np, const SenseLexicon& lexicon) {
  std::vector<Feature> out;
  for (const auto& cls : lexicon.lookup(np_head_word(np.surface))) out.push_back({FeatureFamily::SeF, "sense:" + cls});
  return out;
}

struct ContextualConfig {
  std::size_t dims = 50;
  std::size_t buckets = 10;
  std::size_t window = 2;
  std::uint64_t seed = 17;
};

namespace detail {

inline std::vector<std::string> split_spaces(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i <= s.size()) {
    auto j = s.find(' ', i);
    if (j == std::string::npos) j = s.size();
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

// Randomized truncated SVD of a symmetric non-negative matrix; returns U_k * sqrt(S_k).
inline Eigen::MatrixXd truncated_embedding(const Eigen::SparseMatrix<double>& m, std::size_t dims,
                                           std::uint64_t seed) {
  const Eigen::Index n = m.rows();
  const Eigen::Index k = std::min<Eigen::Index>(static_cast<Eigen::Index>(dims), n);
  const Eigen::Index l = std::min<Eigen::Index>(k + 10, n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd omega(n, l);
  for (Eigen::Index c = 0; c < l; ++c)
    for (Eigen::Index r = 0; r < n; ++r) omega(r, c) = gauss(rng);

  auto orthonormalize = [](const Eigen::MatrixXd& y) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
    return Eigen::MatrixXd(qr.householderQ() * Eigen::MatrixXd::Identity(y.rows(), y.cols()));
  };
  Eigen::MatrixXd q = orthonormalize(m * omega);
  for (int it = 0; it < 3; ++it) q = orthonormalize(m * Eigen::MatrixXd(m.transpose() * q));

  Eigen::MatrixXd b = q.transpose() * m;  // l × n
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU);
  Eigen::MatrixXd u = q * svd.matrixU();
  Eigen::MatrixXd emb(n, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::VectorXd col = u.col(c) * std::sqrt(svd.singularValues()(c));
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0) col = -col;
    emb.col(c) = col;
  }
  return emb;
}

}  // namespace detail

// Count-based token embeddings (PPMI over a ±window co-occurrence matrix, truncated
// SVD), averaged per NP and discretized into per-dimension quantile buckets.
inline std::vector<FeatureCooc> contextual(const Pool& pool, const std::vector<NounPhrase>& nps,
                                           const ContextualConfig& cfg = {}) {
  if (cfg.dims < 1) throw std::invalid_argument("contextual: dims must be >= 1");
  if (cfg.buckets < 2) throw std::invalid_argument("contextual: buckets must be >= 2");
  if (pool.size() < 2) {
    diag::warn("contextual features skipped: pool has fewer than 2 sentences");
    return {};
  }

  std::unordered_map<std::string, Eigen::Index> vocab;
  std::vector<std::vector<Eigen::Index>> ids;
  ids.reserve(pool.size());
  for (const auto& s : pool.sentences) {
    auto& row = ids.emplace_back();
    for (const auto& t : s.tokens) {
      auto key = SenseLexicon::lowercase(t.surface);
      auto [it, inserted] = vocab.try_emplace(key, static_cast<Eigen::Index>(vocab.size()));
      row.push_back(it->second);
    }
  }
  const auto v = static_cast<Eigen::Index>(vocab.size());
  if (v == 0 || nps.empty()) return {};

  std::map<std::pair<Eigen::Index, Eigen::Index>, double> counts;
  for (const auto& row : ids) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      const std::size_t lo = i >= cfg.window ? i - cfg.window : 0;
      const std::size_t hi = std::min(row.size(), i + cfg.window + 1);
      for (std::size_t j = lo; j < hi; ++j)
        if (j != i) counts[{row[i], row[j]}] += 1.0;
    }
  }
  std::vector<double> marginal(static_cast<std::size_t>(v), 0.0);
  double total = 0.0;
  for (const auto& [key, c] : counts) {
    marginal[static_cast<std::size_t>(key.first)] += c;
    total += c;
  }
  std::vector<Eigen::Triplet<double>> triplets;
  for (const auto& [key, c] : counts) {
    double pmi = std::log(c * total / (marginal[static_cast<std::size_t>(key.first)] *
                                       marginal[static_cast<std::size_t>(key.second)]));
    if (pmi > 0) triplets.emplace_back(key.first, key.second, pmi);
  }
  Eigen::SparseMatrix<double> ppmi(v, v);
  ppmi.setFromTriplets(triplets.begin(), triplets.end());

  const Eigen::MatrixXd emb = detail::truncated_embedding(ppmi, cfg.dims, cfg.seed);
  const Eigen::Index k = emb.cols();

  Eigen::MatrixXd np_vecs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nps.size()), k);
  for (std::size_t r = 0; r < nps.size(); ++r) {
    auto words = detail::split_spaces(nps[r].surface);
    std::size_t found = 0;
    for (const auto& w : words) {
      auto it = vocab.find(SenseLexicon::lowercase(w));
      if (it == vocab.end()) continue;
      np_vecs.row(static_cast<Eigen::Index>(r)) += emb.row(it->second);
      ++found;
    }
    if (found > 0) np_vecs.row(static_cast<Eigen::Index>(r)) /= static_cast<double>(found);
  }
  // Snap away rounding noise so equal contexts always share a bucket.
  np_vecs = np_vecs.unaryExpr([](double x) { return std::round(x * 1e12) / 1e12; });

  std::vector<FeatureCooc> out;
  const auto rows = static_cast<std::size_t>(np_vecs.rows());
  std::vector<std::vector<std::size_t>> bins(rows, std::vector<std::size_t>(static_cast<std::size_t>(k)));
  for (Eigen::Index d = 0; d < k; ++d) {
    std::vector<double> sorted(rows);
    for (std::size_t r = 0; r < rows; ++r) sorted[r] = np_vecs(static_cast<Eigen::Index>(r), d);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> thresholds;
    for (std::size_t j = 1; j < cfg.buckets; ++j) thresholds.push_back(sorted[j * rows / cfg.buckets]);
    for (std::size_t r = 0; r < rows; ++r) {
      double x = np_vecs(static_cast<Eigen::Index>(r), d);
      bins[r][static_cast<std::size_t>(d)] =
          static_cast<std::size_t>(std::upper_bound(thresholds.begin(), thresholds.end(), x) - thresholds.begin());
    }
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (Eigen::Index d = 0; d < k; ++d)
      out.push_back({nps[r].surface,
                     {FeatureFamily::CF, "cf:" + std::to_string(d) + ":" + std::to_string(bins[r][static_cast<std::size_t>(d)])},
                     nps[r].count});
  return out;
}

struct FeaturizeConfig {
  ContextualConfig cf;
  std::set<FeatureFamily> families{std::begin(kAllFamilies), std::end(kAllFamilies)};

  bool enabled(FeatureFamily f) const { return families.count(f) > 0; }
};

// Per-occurrence LF features: every token of the NP plus the joined phrase.
inline std::set<Feature> occurrence_lexical(const NPSpan& np, const Sentence& s, FeatureFamily family) {
  std::set<Feature> out;
  auto add = [&](std::string_view w) {
    auto feats = family == FeatureFamily::LF_OF ? orthographic_form(w) : word_shape(w);
    out.insert(feats.begin(), feats.end());
  };
  for (std::size_t i = np.start; i < np.end; ++i) add(s.tokens[i].surface);
  add(np.surface);
  return out;
}

// All families over all NP occurrences. A feature counts once per occurrence it
// fires on; SeF and CF are per-NP and count every occurrence.
inline std::vector<FeatureCooc> featurize_all(const Pool& pool, const std::vector<NounPhrase>& nps,
                                              const SenseLexicon& lexicon, const FeaturizeConfig& cfg = {}) {
  std::vector<FeatureCooc> out;
  std::vector<FeatureCooc> cf;
  if (cfg.enabled(FeatureFamily::CF)) cf = contextual(pool, nps, cfg.cf);
  std::size_t cf_pos = 0;

  for (const auto& np : nps) {
    std::map<Feature, std::size_t> counts;
    for (const auto& occ : np.occurrences) {
      const Sentence& s = pool.at(occ.sentence_id);
      std::set<Feature> feats;
      if (cfg.enabled(FeatureFamily::LF_OF)) feats.merge(occurrence_lexical(occ, s, FeatureFamily::LF_OF));
      if (cfg.enabled(FeatureFamily::LF_WS)) feats.merge(occurrence_lexical(occ, s, FeatureFamily::LF_WS));
      if (cfg.enabled(FeatureFamily::LS)) feats.insert(lexico_syntactic(occ, s));
      if (cfg.enabled(FeatureFamily::SF))
        for (auto& f : syntactic(occ, s)) feats.insert(std::move(f));
      for (const auto& f : feats) ++counts[f];
    }
    if (cfg.enabled(FeatureFamily::SeF))
      for (auto& f : semantic(np, lexicon)) counts[f] += np.occurrences.size();
    while (cf_pos < cf.size() && cf[cf_pos].np == np.surface) {
      counts[cf[cf_pos].feature] += cf[cf_pos].count;
      ++cf_pos;
    }
    for (auto& [f, c] : counts) out.push_back({np.surface, f, c});
  }
  return out;
}

}  // namespace sparsent
