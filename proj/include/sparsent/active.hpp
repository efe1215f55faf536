#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sparsent/corpus.hpp"
#include "sparsent/crf.hpp"
#include "sparsent/diag.hpp"
#include "sparsent/npex.hpp"

namespace sparsent {

// AR samples at random; EAL samples by n-best entropy; FA/HFA/UFA add thresholded
// auto-annotation on top of EAL.
enum class Mode { AR, EAL, FA, HFA, UFA };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::AR: return "AR";
    case Mode::EAL: return "EAL";
    case Mode::FA: return "FA";
    case Mode::HFA: return "HFA";
    case Mode::UFA: return "UFA";
  }
  return "?";
}

inline Mode mode_from_string(std::string_view s) {
  for (Mode m : {Mode::AR, Mode::EAL, Mode::FA, Mode::HFA, Mode::UFA})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown annotation mode: " + std::string(s));
}

inline bool is_auto_mode(Mode m) { return m == Mode::FA || m == Mode::HFA || m == Mode::UFA; }

// Acceptance ratio thresholds for the auto-annotation modes.
inline double default_threshold(Mode m) {
  switch (m) {
    case Mode::FA: return 0.10;
    case Mode::HFA: return 0.15;
    case Mode::UFA: return 0.20;
    default: throw std::invalid_argument(std::string("mode ") + to_string(m) + " has no threshold");
  }
}

struct MetricPoint {
  std::size_t iteration = 0;
  std::size_t labeled = 0;  // human-labeled sentences
  std::size_t auto_labeled = 0;
  double sigma = 0.0;
  double ec = 0.0;
  std::optional<double> f;  // only when gold is available (harness)

  friend bool operator==(const MetricPoint&, const MetricPoint&) = default;
};

// Which sentences σ averages over.
enum class SigmaSet { Unlabeled, Pool };

struct SessionState {
  Pool pool;
  std::optional<crf::SequenceModel> model;
  Mode mode = Mode::EAL;
  std::size_t batch_size = 100;
  std::size_t n = 10;
  std::optional<double> threshold;
  std::set<std::string> confirmed_entities;
  std::vector<MetricPoint> history;
  std::vector<SentenceId> pending;  // batch waiting for human labels
  std::uint64_t rng_seed = 0;
  std::size_t iteration = 0;
  SigmaSet sigma_set = SigmaSet::Unlabeled;
  crf::TrainConfig train;
};

inline bool operator==(const SessionState& a, const SessionState& b) {
  return a.pool == b.pool && a.model == b.model && a.mode == b.mode && a.batch_size == b.batch_size && a.n == b.n &&
         a.threshold == b.threshold && a.confirmed_entities == b.confirmed_entities && a.history == b.history &&
         a.pending == b.pending && a.rng_seed == b.rng_seed && a.iteration == b.iteration &&
         a.sigma_set == b.sigma_set && a.train.l2sigma == b.train.l2sigma && a.train.max_iter == b.train.max_iter &&
         a.train.tol == b.train.tol && a.train.templates == b.train.templates && a.train.lexicon == b.train.lexicon;
}

inline void validate(const SessionState& s) {
  if (s.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (s.n < 1) throw std::invalid_argument("n must be >= 1");
  if (is_auto_mode(s.mode) != s.threshold.has_value())
    throw std::invalid_argument(std::string("threshold must be set exactly for FA/HFA/UFA (mode ") + to_string(s.mode) + ")");
  for (std::size_t i = 0; i < s.pool.size(); ++i) {
    const auto& sent = s.pool.sentences[i];
    if (sent.id != static_cast<SentenceId>(i)) throw std::invalid_argument("sentence ids must be dense");
    if (sent.labeled() != sent.working.has_value())
      throw std::invalid_argument("sentence " + std::to_string(sent.id) + ": working labels iff labeled");
  }
}

// A fresh session. The pool handed in should already be stripped of gold.
inline SessionState make_session(Pool pool, Mode mode, std::size_t batch_size = 100, std::size_t n = 10,
                                 std::optional<double> threshold = std::nullopt, std::uint64_t rng_seed = 0) {
  SessionState s;
  s.pool = std::move(pool);
  s.mode = mode;
  s.batch_size = batch_size;
  s.n = n;
  if (is_auto_mode(mode)) s.threshold = threshold.value_or(default_threshold(mode));
  s.rng_seed = rng_seed;
  validate(s);
  return s;
}

inline std::vector<SentenceId> unlabeled_ids(const SessionState& s) {
  std::vector<SentenceId> out;
  for (const auto& sent : s.pool.sentences)
    if (!sent.labeled()) out.push_back(sent.id);
  return out;
}

inline std::size_t count_state(const SessionState& s, SentenceState st) {
  return static_cast<std::size_t>(std::count_if(s.pool.sentences.begin(), s.pool.sentences.end(),
                                                [st](const Sentence& x) { return x.state == st; }));
}

// Everything the controller needs to know about one unlabeled sentence.
struct Uncertainty {
  SentenceId id = 0;
  double nse = 0.0;
  double expected_entities = 0.0;
  crf::NBest nbest;
};

inline Uncertainty assess(const crf::SequenceModel& model, const Sentence& s, std::size_t n) {
  Uncertainty u;
  u.id = s.id;
  u.nbest = crf::nbest(model, s, n);
  u.nse = crf::nbest_entropy(u.nbest.probs);
  for (std::size_t i = 0; i < u.nbest.sequences.size(); ++i)
    u.expected_entities += u.nbest.probs[i] * static_cast<double>(entity_count(u.nbest.sequences[i]));
  return u;
}

inline std::vector<Uncertainty> assess_all(const SessionState& s, const std::vector<SentenceId>& ids) {
  if (!s.model) throw std::logic_error("no model trained yet; bootstrap the session via entity set expansion first");
  std::vector<Uncertainty> out;
  out.reserve(ids.size());
  for (SentenceId id : ids) out.push_back(assess(*s.model, s.pool.at(id), s.n));
  return out;
}

namespace detail {
// Portable partial Fisher–Yates so sampling does not depend on library distributions.
inline std::vector<SentenceId> random_subset(std::vector<SentenceId> ids, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  k = std::min(k, ids.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng() % (ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  return ids;
}
}  // namespace detail

// Next batch to label: random in AR, otherwise the b highest-entropy unlabeled sentences.
inline std::vector<SentenceId> sample_batch(const SessionState& s) {
  auto ids = unlabeled_ids(s);
  if (ids.empty()) return {};
  if (s.mode == Mode::AR)
    return detail::random_subset(std::move(ids), s.batch_size, s.rng_seed * 0x9E3779B97F4A7C15ULL + s.iteration + 1);
  auto scored = assess_all(s, ids);
  std::stable_sort(scored.begin(), scored.end(), [](const Uncertainty& a, const Uncertainty& b) { return a.nse > b.nse; });
  std::vector<SentenceId> out;
  for (std::size_t i = 0; i < std::min(s.batch_size, scored.size()); ++i) out.push_back(scored[i].id);
  return out;
}

// Samples and records the batch the next step expects labels for.
inline std::vector<SentenceId> request_batch(SessionState& s) {
  if (s.pending.empty()) s.pending = sample_batch(s);
  return s.pending;
}

// Unlabeled sentences mentioning confirmed NPs, most mentions first (up to b).
inline std::vector<SentenceId> bootstrap_from_ese(SessionState& s, const std::vector<NounPhrase>& confirmed) {
  if (confirmed.empty()) throw std::invalid_argument("bootstrap_from_ese: no confirmed noun phrases");
  std::map<SentenceId, std::size_t> mentions;
  for (const auto& np : confirmed) {
    s.confirmed_entities.insert(np.surface);
    for (const auto& occ : np.occurrences)
      if (!s.pool.at(occ.sentence_id).labeled()) ++mentions[occ.sentence_id];
  }
  std::vector<std::pair<SentenceId, std::size_t>> ranked(mentions.begin(), mentions.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<SentenceId> out;
  for (std::size_t i = 0; i < std::min(s.batch_size, ranked.size()); ++i) out.push_back(ranked[i].first);
  s.pending = out;
  return out;
}

// SE₁/SE₂ ≤ t with SE_i = −log p_i. SE₂ = 0 rejects; SE₁ = 0 < SE₂ accepts.
inline bool accept_auto(double se1, double se2, double t) {
  if (se2 <= 0) return false;
  if (se1 <= 0) return true;
  return se1 / se2 <= t;
}

inline std::vector<SentenceId> auto_annotate(SessionState& s) {
  if (!is_auto_mode(s.mode) || !s.threshold) throw std::logic_error("auto-annotation needs FA, HFA or UFA mode");
  auto scored = assess_all(s, unlabeled_ids(s));
  std::vector<SentenceId> accepted;
  for (const auto& u : scored) {
    if (u.nbest.probs.size() < 2) continue;
    if (!accept_auto(crf::self_information(u.nbest, 1), crf::self_information(u.nbest, 2), *s.threshold)) continue;
    auto& sent = s.pool.at(u.id);
    sent.state = SentenceState::AutoLabeled;
    sent.working = repair_bio(u.nbest.sequences.front());
    accepted.push_back(u.id);
  }
  return accepted;
}

inline std::vector<SentenceId> sigma_ids(const SessionState& s) {
  if (s.sigma_set == SigmaSet::Unlabeled) return unlabeled_ids(s);
  std::vector<SentenceId> all;
  for (const auto& sent : s.pool.sentences) all.push_back(sent.id);
  return all;
}

// σ = 1 − mean normalized n-best entropy over the evaluation set.
inline double sigma_from(const std::vector<Uncertainty>& scored) {
  if (scored.empty()) {
    diag::warn("sigma: empty evaluation set, reporting 1.0");
    return 1.0;
  }
  double total = 0;
  for (const auto& u : scored) total += u.nse;
  return std::clamp(1.0 - total / static_cast<double>(scored.size()), 0.0, 1.0);
}

inline double sigma(const SessionState& s) { return sigma_from(assess_all(s, sigma_ids(s))); }

inline std::size_t annotated_entities(const SessionState& s) {
  std::size_t e = 0;
  for (const auto& sent : s.pool.sentences)
    if (sent.working) e += entity_count(*sent.working);
  return e;
}

// EC = E / (E + Σ_u E_u).
inline double estimated_coverage_from(std::size_t annotated, const std::vector<Uncertainty>& unlabeled) {
  if (unlabeled.empty()) return 1.0;
  double expected = 0;
  for (const auto& u : unlabeled) expected += u.expected_entities;
  const double e = static_cast<double>(annotated);
  if (e + expected <= 0) return 0.0;
  return e / (e + expected);
}

inline double estimated_coverage(const SessionState& s) {
  return estimated_coverage_from(annotated_entities(s), assess_all(s, unlabeled_ids(s)));
}

inline std::vector<Sentence> training_set(const SessionState& s) {
  std::vector<Sentence> out;
  for (const auto& sent : s.pool.sentences)
    if (sent.labeled()) out.push_back(sent);
  return out;
}

inline void retrain(SessionState& s) {
  auto cfg = s.train;
  if (cfg.templates.has(crf::Template::Lexicon)) cfg.lexicon = s.confirmed_entities;
  s.model = crf::train(training_set(s), cfg);
}

inline MetricPoint measure(const SessionState& s) {
  MetricPoint p;
  p.iteration = s.iteration;
  p.labeled = count_state(s, SentenceState::HumanLabeled);
  p.auto_labeled = count_state(s, SentenceState::AutoLabeled);
  auto unl = assess_all(s, unlabeled_ids(s));
  p.ec = estimated_coverage_from(annotated_entities(s), unl);
  p.sigma = s.sigma_set == SigmaSet::Unlabeled ? sigma_from(unl) : sigma_from(assess_all(s, sigma_ids(s)));
  return p;
}

// One loop iteration: merge the human labels for the pending batch, retrain on
// everything labeled, auto-annotate and retrain again in FA/HFA/UFA, record metrics.
inline const SessionState& step(SessionState& s, const std::map<SentenceId, LabelSeq>& labels) {
  if (s.pending.empty() && labels.empty()) {
    if (unlabeled_ids(s).empty()) {
      diag::warn("step: pool exhausted, nothing to do");
      return s;
    }
    throw std::invalid_argument("step: no batch was sampled");
  }
  std::set<SentenceId> expected(s.pending.begin(), s.pending.end());
  for (const auto& [id, seq] : labels) {
    if (!expected.count(id)) throw std::invalid_argument("step: sentence " + std::to_string(id) + " was not in the sampled batch");
    const auto& sent = s.pool.at(id);
    if (seq.size() != sent.size())
      throw std::invalid_argument("step: sentence " + std::to_string(id) + " label length mismatch");
    if (!is_valid_bio(seq)) throw std::invalid_argument("step: sentence " + std::to_string(id) + " has invalid BIO labels");
  }
  if (labels.size() != expected.size()) throw std::invalid_argument("step: labels must cover exactly the sampled batch");

  for (const auto& [id, seq] : labels) {
    auto& sent = s.pool.at(id);
    sent.state = SentenceState::HumanLabeled;
    sent.working = seq;
  }
  s.pending.clear();
  ++s.iteration;
  retrain(s);
  if (is_auto_mode(s.mode)) {
    if (!auto_annotate(s).empty()) retrain(s);
  }
  s.history.push_back(measure(s));
  return s;
}

}  // namespace sparsent
