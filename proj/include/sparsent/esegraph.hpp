#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sparsent/diag.hpp"
#include "sparsent/featurize.hpp"
#include "sparsent/npex.hpp"

namespace sparsent {

enum class WeightScheme { Count, Tfidf, TfidfSum };
enum class Similarity { Cosine, Context };

inline WeightScheme weight_scheme_from_string(std::string_view s) {
  if (s == "count") return WeightScheme::Count;
  if (s == "tfidf") return WeightScheme::Tfidf;
  if (s == "tfidfSum" || s == "tfidfsum" || s == "tfidf-sum") return WeightScheme::TfidfSum;
  throw std::invalid_argument("unknown weighting scheme: " + std::string(s));
}

inline const char* to_string(WeightScheme s) {
  switch (s) {
    case WeightScheme::Count: return "count";
    case WeightScheme::Tfidf: return "tfidf";
    case WeightScheme::TfidfSum: return "tfidfSum";
  }
  return "?";
}

inline Similarity similarity_from_string(std::string_view s) {
  if (s == "cosine") return Similarity::Cosine;
  if (s == "context") return Similarity::Context;
  throw std::invalid_argument("unknown similarity: " + std::string(s));
}

inline const char* to_string(Similarity s) { return s == Similarity::Cosine ? "cosine" : "context"; }

using SparseRow = std::vector<std::pair<std::size_t, double>>;  // (feature id, weight), sorted by id

// Bipartite NP–feature graph with weighted edges.
class FeatureGraph {
 public:
  FeatureGraph() = default;

  std::size_t num_nps() const { return nps_.size(); }
  std::size_t num_features() const { return features_.size(); }
  WeightScheme scheme() const { return scheme_; }

  const std::string& surface(std::size_t np) const { return nps_[np]; }
  std::size_t count(std::size_t np) const { return counts_[np]; }
  const Feature& feature(std::size_t f) const { return features_[f]; }
  const SparseRow& edges(std::size_t np) const { return edges_[np]; }

  std::optional<std::size_t> find(const std::string& surface) const {
    auto it = index_.find(surface);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Edge weight, 0 when absent.
  double weight(const std::string& np, const Feature& f) const {
    auto n = find(np);
    auto fi = feature_index_.find(f);
    if (!n || fi == feature_index_.end()) return 0.0;
    const auto& row = edges_[*n];
    auto it = std::lower_bound(row.begin(), row.end(), std::make_pair(fi->second, -1.0),
                               [](const auto& a, const auto& b) { return a.first < b.first; });
    return it != row.end() && it->first == fi->second ? it->second : 0.0;
  }

  // Every edge weight multiplied by `factor` (> 0).
  FeatureGraph scaled(double factor) const {
    FeatureGraph g = *this;
    for (auto& row : g.edges_)
      for (auto& e : row) e.second *= factor;
    return g;
  }

  friend FeatureGraph build_graph(const std::vector<FeatureCooc>&, WeightScheme,
                                  const std::map<std::string, std::size_t>&);

 private:
  std::vector<std::string> nps_;
  std::vector<std::size_t> counts_;
  std::vector<Feature> features_;
  std::vector<SparseRow> edges_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<Feature, std::size_t> feature_index_;
  WeightScheme scheme_ = WeightScheme::Count;
};

inline std::map<std::string, std::size_t> np_counts(const std::vector<NounPhrase>& nps) {
  std::map<std::string, std::size_t> out;
  for (const auto& np : nps) out[np.surface] = np.count;
  return out;
}

// Natural-log weights:
//   count     w = C(n,f)
//   tfidf     w = log(1+C) · (log|N| − log|N|_f)
//   tfidfSum  w = log(1+C) · (log|N| − log Σ_n C(n,f)), floored at 0
inline FeatureGraph build_graph(const std::vector<FeatureCooc>& coocs, WeightScheme scheme,
                                const std::map<std::string, std::size_t>& counts = {}) {
  if (coocs.empty()) throw std::invalid_argument("build_graph: no co-occurrences");
  FeatureGraph g;
  g.scheme_ = scheme;
  std::map<std::pair<std::size_t, std::size_t>, double> c;  // (np, feature) → C
  for (const auto& fc : coocs) {
    if (fc.count == 0) continue;
    auto [nit, nnew] = g.index_.try_emplace(fc.np, g.nps_.size());
    if (nnew) {
      g.nps_.push_back(fc.np);
      auto cit = counts.find(fc.np);
      g.counts_.push_back(cit == counts.end() ? 0 : cit->second);
    }
    g.feature_index_.try_emplace(fc.feature, 0);
  }
  // Feature ids follow feature order so rows sort naturally.
  std::size_t fid = 0;
  for (auto& [f, id] : g.feature_index_) {
    id = fid++;
    g.features_.push_back(f);
  }
  for (const auto& fc : coocs) {
    if (fc.count == 0) continue;
    c[{g.index_.at(fc.np), g.feature_index_.at(fc.feature)}] += static_cast<double>(fc.count);
  }

  const double n_total = static_cast<double>(g.nps_.size());
  if (scheme != WeightScheme::Count && g.nps_.size() < 2)
    throw std::invalid_argument("build_graph: TF-IDF weighting needs at least 2 noun phrases");
  std::vector<double> df(g.features_.size(), 0.0), mass(g.features_.size(), 0.0);
  for (const auto& [key, cnt] : c) {
    df[key.second] += 1.0;
    mass[key.second] += cnt;
  }
  g.edges_.assign(g.nps_.size(), {});
  for (const auto& [key, cnt] : c) {
    double w = cnt;
    if (scheme == WeightScheme::Tfidf)
      w = std::log1p(cnt) * (std::log(n_total) - std::log(df[key.second]));
    else if (scheme == WeightScheme::TfidfSum)
      w = std::max(0.0, std::log1p(cnt) * (std::log(n_total) - std::log(mass[key.second])));
    g.edges_[key.first].emplace_back(key.second, w);
  }
  return g;
}

inline double sim_cosine(const SparseRow& a, const SparseRow& b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto& e : a) na += e.second * e.second;
  for (const auto& e : b) nb += e.second * e.second;
  if (na == 0 || nb == 0) return 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first)
      ++i;
    else if (b[j].first < a[i].first)
      ++j;
    else
      dot += a[i++].second * b[j++].second;
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

inline double sim_context(const SparseRow& a, const SparseRow& b) {
  double lo = 0, hi = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
      hi += a[i++].second;
    } else if (i == a.size() || b[j].first < a[i].first) {
      hi += b[j++].second;
    } else {
      lo += std::min(a[i].second, b[j].second);
      hi += std::max(a[i].second, b[j].second);
      ++i;
      ++j;
    }
  }
  return hi == 0 ? 0.0 : lo / hi;
}

inline double similarity(const SparseRow& a, const SparseRow& b, Similarity kind) {
  return kind == Similarity::Cosine ? sim_cosine(a, b) : sim_context(a, b);
}

inline double sim_cosine(const std::string& n1, const std::string& n2, const FeatureGraph& g) {
  return sim_cosine(g.edges(g.find(n1).value()), g.edges(g.find(n2).value()));
}

inline double sim_context(const std::string& n1, const std::string& n2, const FeatureGraph& g) {
  return sim_context(g.edges(g.find(n1).value()), g.edges(g.find(n2).value()));
}

struct RankedEntry {
  std::string surface;
  double score = 0.0;
  std::size_t count = 0;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

struct RankedList {
  std::vector<RankedEntry> entries;
  std::size_t k = 30;
};

namespace detail {

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline void sort_ranked(std::vector<RankedEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.count != b.count) return a.count > b.count;
    return a.surface < b.surface;
  });
}

}  // namespace detail

class SeedNotFound : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t require_seed(const FeatureGraph& g, const std::string& seed) {
  if (auto id = g.find(seed)) return *id;
  std::vector<std::pair<std::size_t, std::string>> near;
  for (std::size_t i = 0; i < g.num_nps(); ++i) near.emplace_back(detail::edit_distance(seed, g.surface(i)), g.surface(i));
  std::sort(near.begin(), near.end());
  std::string msg = "seed '" + seed + "' is not a noun phrase in the graph";
  if (!near.empty()) {
    msg += "; nearest:";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, near.size()); ++i) msg += (i ? ", '" : " '") + near[i].second + "'";
  }
  throw SeedNotFound(msg);
}

// Top-k NPs by similarity to the seed (seed excluded).
inline RankedList rank_plain(const std::string& seed, const FeatureGraph& g, Similarity sim, std::size_t k = 30) {
  const std::size_t s = require_seed(g, seed);
  RankedList out;
  out.k = k;
  for (std::size_t i = 0; i < g.num_nps(); ++i) {
    if (i == s) continue;
    out.entries.push_back({g.surface(i), similarity(g.edges(s), g.edges(i), sim), g.count(i)});
  }
  detail::sort_ranked(out.entries);
  if (out.entries.size() > k) out.entries.resize(k);
  return out;
}

enum class FamilyGrouping { Six, Five };

// Coarse group a family belongs to; the five-way grouping folds OF and WS into LF.
inline int coarse_group(FeatureFamily f, FamilyGrouping grouping) {
  if (grouping == FamilyGrouping::Five && f == FeatureFamily::LF_WS) return static_cast<int>(FeatureFamily::LF_OF);
  return static_cast<int>(f);
}

// Leave-one-group-out subgraphs over one set of co-occurrences.
class EnsembleRanker {
 public:
  EnsembleRanker(const std::vector<FeatureCooc>& coocs, WeightScheme scheme,
                 const std::map<std::string, std::size_t>& counts = {},
                 FamilyGrouping grouping = FamilyGrouping::Six)
      : full_(build_graph(coocs, scheme, counts)) {
    std::set<int> groups;
    for (const auto& fc : coocs) groups.insert(coarse_group(fc.feature.family, grouping));
    groups_.assign(groups.begin(), groups.end());
    if (groups_.size() < 2) return;
    for (int left_out : groups_) {
      std::vector<FeatureCooc> sub;
      for (const auto& fc : coocs)
        if (coarse_group(fc.feature.family, grouping) != left_out) sub.push_back(fc);
      subgraphs_.push_back(build_graph(sub, scheme, counts));
    }
  }

  bool degenerate() const { return subgraphs_.empty(); }
  std::size_t num_sublists() const { return subgraphs_.size(); }
  const FeatureGraph& full_graph() const { return full_; }
  const std::vector<FeatureGraph>& subgraphs() const { return subgraphs_; }

  // Mean reciprocal rank over the sublists; 0 contribution outside a sublist's top-k.
  std::map<std::string, double> scores(const std::string& seed, Similarity sim, std::size_t k) const {
    require_seed(full_, seed);
    std::map<std::string, double> acc;
    for (const auto& g : subgraphs_) {
      if (!g.find(seed)) continue;
      auto ranked = rank_plain(seed, g, sim, k);
      for (std::size_t r = 0; r < ranked.entries.size(); ++r) acc[ranked.entries[r].surface] += 1.0 / static_cast<double>(r + 1);
    }
    for (auto& [_, v] : acc) v /= static_cast<double>(subgraphs_.size());
    return acc;
  }

  RankedList rank(const std::string& seed, Similarity sim, std::size_t k) const {
    if (degenerate()) {
      diag::warn("feature ensemble needs at least two coarse families; falling back to plain ranking");
      return rank_plain(seed, full_, sim, k);
    }
    return to_ranked(scores(seed, sim, k), k);
  }

  RankedList to_ranked(const std::map<std::string, double>& scores, std::size_t k) const {
    RankedList out;
    out.k = k;
    for (const auto& [surface, score] : scores)
      if (score > 0) out.entries.push_back({surface, score, full_.count(*full_.find(surface))});
    detail::sort_ranked(out.entries);
    if (out.entries.size() > k) out.entries.resize(k);
    return out;
  }

 private:
  FeatureGraph full_;
  std::vector<int> groups_;
  std::vector<FeatureGraph> subgraphs_;
};

inline RankedList rank_ensemble(const std::string& seed, const std::vector<FeatureCooc>& coocs, WeightScheme scheme,
                                Similarity sim, std::size_t k = 30,
                                const std::map<std::string, std::size_t>& counts = {},
                                FamilyGrouping grouping = FamilyGrouping::Six) {
  return EnsembleRanker(coocs, scheme, counts, grouping).rank(seed, sim, k);
}

struct ExpandConfig {
  WeightScheme scheme = WeightScheme::Tfidf;
  Similarity sim = Similarity::Context;
  bool ensemble = true;
  std::size_t k = 30;
  FamilyGrouping grouping = FamilyGrouping::Six;
};

// Multi-seed expansion: each NP scores the mean of its single-seed scores.
inline RankedList expand(const std::vector<std::string>& seeds, const std::vector<FeatureCooc>& coocs,
                         const ExpandConfig& cfg = {}, const std::map<std::string, std::size_t>& counts = {}) {
  if (seeds.empty()) throw std::invalid_argument("expand: empty seed set");
  EnsembleRanker ranker(coocs, cfg.scheme, counts, cfg.grouping);
  const FeatureGraph& g = ranker.full_graph();
  for (const auto& s : seeds) require_seed(g, s);
  const bool use_ensemble = cfg.ensemble && !ranker.degenerate();
  if (cfg.ensemble && !use_ensemble)
    diag::warn("feature ensemble needs at least two coarse families; falling back to plain ranking");

  std::set<std::string> seed_set(seeds.begin(), seeds.end());
  std::map<std::string, double> total;
  for (const auto& seed : seed_set) {
    if (use_ensemble) {
      for (const auto& [surface, score] : ranker.scores(seed, cfg.sim, cfg.k)) total[surface] += score;
    } else {
      const auto& row = g.edges(*g.find(seed));
      for (std::size_t i = 0; i < g.num_nps(); ++i) total[g.surface(i)] += similarity(row, g.edges(i), cfg.sim);
    }
  }
  RankedList out;
  out.k = cfg.k;
  for (auto& [surface, score] : total) {
    if (seed_set.count(surface)) continue;
    double mean = score / static_cast<double>(seed_set.size());
    if (use_ensemble && mean <= 0) continue;
    out.entries.push_back({surface, mean, g.count(*g.find(surface))});
  }
  detail::sort_ranked(out.entries);
  if (out.entries.size() > cfg.k) out.entries.resize(cfg.k);
  return out;
}

inline double precision_at_k(const RankedList& ranked, const std::set<std::string>& gold) {
  if (ranked.k < 1) throw std::invalid_argument("precision_at_k: k must be >= 1");
  std::size_t hits = 0;
  for (const auto& e : ranked.entries) hits += gold.count(e.surface);
  return static_cast<double>(hits) / static_cast<double>(ranked.k);
}

}  // namespace sparsent
