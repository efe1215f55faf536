#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparsent/active.hpp"
#include "sparsent/corpus.hpp"
#include "sparsent/crf.hpp"
#include "sparsent/esegraph.hpp"
#include "sparsent/featurize.hpp"
#include "sparsent/fixture.hpp"
#include "sparsent/npex.hpp"

namespace sparsent::harness {

// Answers label queries from the gold pool. Only the harness ever sees gold.
class Emulator {
 public:
  explicit Emulator(const Pool& gold) : gold_(&gold), surfaces_(gold_entity_surfaces(gold)) {}

  std::map<SentenceId, LabelSeq> emulate_label(const std::vector<SentenceId>& ids) const {
    std::map<SentenceId, LabelSeq> out;
    for (SentenceId id : ids) {
      const auto& s = gold_->at(id);
      if (!s.gold) throw std::invalid_argument("emulator: sentence " + std::to_string(id) + " has no gold labels");
      out[id] = repair_bio(*s.gold);
    }
    return out;
  }

  // Surfaces from the ranked list that are gold entities, first occurrence order.
  std::vector<std::string> emulate_filter(const RankedList& ranked) const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& e : ranked.entries)
      if (surfaces_.count(e.surface) && seen.insert(e.surface).second) out.push_back(e.surface);
    return out;
  }

  const std::set<std::string>& gold_surfaces() const { return surfaces_; }

 private:
  const Pool* gold_;
  std::set<std::string> surfaces_;
};

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  std::size_t correct = 0, predicted = 0, gold = 0;
};

// Exact-span match over aligned sentences.
inline PRF f_score(const std::vector<LabelSeq>& predicted, const std::vector<LabelSeq>& gold) {
  if (predicted.size() != gold.size()) throw std::invalid_argument("f_score: sentence counts differ");
  PRF r;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i].size() != gold[i].size()) throw std::invalid_argument("f_score: label lengths differ");
    auto ps = spans_of(predicted[i]);
    auto gs = spans_of(gold[i]);
    std::set<Span> gset(gs.begin(), gs.end());
    r.predicted += ps.size();
    r.gold += gs.size();
    for (const auto& s : ps) r.correct += gset.count(s);
  }
  r.precision = r.predicted ? static_cast<double>(r.correct) / static_cast<double>(r.predicted) : 0.0;
  r.recall = r.gold ? static_cast<double>(r.correct) / static_cast<double>(r.gold) : 0.0;
  r.f = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

// Model Viterbi output over the whole pool against gold.
inline PRF evaluate(const crf::SequenceModel& model, const Pool& gold) {
  std::vector<LabelSeq> pred, ref;
  for (const auto& s : gold.sentences) {
    if (!s.gold) throw std::invalid_argument("evaluate: sentence " + std::to_string(s.id) + " has no gold labels");
    pred.push_back(repair_bio(crf::decode(model, s)));
    ref.push_back(*s.gold);
  }
  return f_score(pred, ref);
}

// Jensen–Shannon divergence of two curves after normalizing each to sum 1 (natural log).
inline double js_divergence(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || a.size() != b.size()) throw std::invalid_argument("js_divergence: curves must have equal length >= 1");
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || b[i] < 0) throw std::invalid_argument("js_divergence: negative curve value");
    sa += a[i];
    sb += b[i];
  }
  if (sa <= 0 || sb <= 0) throw std::invalid_argument("js_divergence: zero-sum curve");
  auto kl_to_mid = [](double p, double q) {
    const double m = 0.5 * (p + q);
    return p > 0 ? p * std::log(p / m) : 0.0;
  };
  double js = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = a[i] / sa, q = b[i] / sb;
    js += 0.5 * kl_to_mid(p, q) + 0.5 * kl_to_mid(q, p);
  }
  return std::max(0.0, js);
}

enum class StopAt { FullF, PoolExhausted, SigmaTarget };

inline const char* to_string(StopAt s) {
  switch (s) {
    case StopAt::FullF: return "fullF";
    case StopAt::PoolExhausted: return "poolExhausted";
    case StopAt::SigmaTarget: return "sigmaTarget";
  }
  return "?";
}

inline StopAt stop_at_from_string(const std::string& s) {
  for (StopAt x : {StopAt::FullF, StopAt::PoolExhausted, StopAt::SigmaTarget})
    if (s == to_string(x)) return x;
  throw std::invalid_argument("unknown stop condition: " + s);
}

struct ExperimentConfig {
  Mode mode = Mode::EAL;
  std::size_t batch_size = 100;
  std::size_t n = 10;
  std::optional<double> threshold;
  std::optional<std::string> seed_entity;  // defaults to the most frequent gold entity among NPs
  std::uint64_t rng_seed = 0;
  StopAt stop_at = StopAt::FullF;
  double sigma_target = 0.95;
  std::size_t max_iterations = 0;  // 0 = no limit
  crf::TrainConfig train;
  ExpandConfig expand;
  FeaturizeConfig featurize;
  NpexOptions npex;
  SigmaSet sigma_set = SigmaSet::Unlabeled;
};

struct ExperimentResult {
  std::vector<MetricPoint> history;
  std::string seed_entity;
  std::vector<std::string> confirmed;  // ESE candidates accepted by the emulator
  double p_at_k = 0.0;
  std::size_t bootstrap_size = 0;
  double percentage_cut = 0.0;  // 1 − human-labeled / |S| at stop
  double final_f = 0.0;
};

namespace detail {

inline std::string default_seed(const std::vector<NounPhrase>& nps, const std::set<std::string>& gold) {
  for (const auto& np : nps)  // nps are sorted by count desc
    if (gold.count(np.surface)) return np.surface;
  throw std::invalid_argument("no gold entity surface occurs as a noun phrase; pass a seed entity explicitly");
}

inline bool should_stop(const ExperimentConfig& cfg, const SessionState& s, double f) {
  if (unlabeled_ids(s).empty()) return true;
  if (cfg.max_iterations && s.iteration >= cfg.max_iterations) return true;
  switch (cfg.stop_at) {
    case StopAt::FullF: return f >= 1.0;
    case StopAt::SigmaTarget: return s.history.back().sigma >= cfg.sigma_target;
    case StopAt::PoolExhausted: return false;
  }
  return false;
}

}  // namespace detail

struct EseOutcome {
  std::string seed;
  RankedList ranked;
  std::vector<NounPhrase> confirmed;  // includes the seed
};

// Expands the seed over the pool's NPs and keeps the candidates the emulator accepts.
inline EseOutcome run_ese(const Pool& pool, const Emulator& emu, const ExperimentConfig& cfg,
                          const SenseLexicon& lexicon = {}) {
  const Pool plain = strip_gold(pool);
  auto nps = collect_nps(plain, cfg.npex);
  EseOutcome out;
  out.seed = cfg.seed_entity ? *cfg.seed_entity : detail::default_seed(nps, emu.gold_surfaces());
  auto coocs = featurize_all(plain, nps, lexicon, cfg.featurize);
  out.ranked = expand({out.seed}, coocs, cfg.expand, np_counts(nps));
  std::set<std::string> keep{out.seed};
  for (auto& s : emu.emulate_filter(out.ranked)) keep.insert(s);
  for (const auto& np : nps)
    if (keep.count(np.surface)) out.confirmed.push_back(np);
  return out;
}

// Runs one annotation path to its stop condition: AR is (sample, label, train)*;
// EAL is ESE bootstrap then entropy sampling; FA/HFA/UFA add auto-annotation
// after every retrain.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Pool& gold, const SenseLexicon& lexicon = {}) {
  if (gold.empty()) throw std::invalid_argument("run_experiment: empty pool");
  for (const auto& s : gold.sentences)
    if (!s.gold) throw std::invalid_argument("run_experiment: pool has no gold labels");
  Emulator emu(gold);
  SessionState state = make_session(strip_gold(gold), cfg.mode, cfg.batch_size, cfg.n, cfg.threshold, cfg.rng_seed);
  state.train = cfg.train;
  state.sigma_set = cfg.sigma_set;

  ExperimentResult result;
  if (cfg.mode == Mode::AR) {
    request_batch(state);
  } else {
    auto ese = run_ese(gold, emu, cfg, lexicon);
    result.seed_entity = ese.seed;
    for (const auto& np : ese.confirmed) result.confirmed.push_back(np.surface);
    result.p_at_k = precision_at_k(ese.ranked, emu.gold_surfaces());
    result.bootstrap_size = bootstrap_from_ese(state, ese.confirmed).size();
    if (state.pending.empty()) request_batch(state);
  }

  for (;;) {
    step(state, emu.emulate_label(state.pending));
    const double f = evaluate(*state.model, gold).f;
    state.history.back().f = f;
    if (detail::should_stop(cfg, state, f)) break;
    if (request_batch(state).empty()) break;
  }
  result.history = state.history;
  result.final_f = result.history.back().f.value_or(0.0);
  result.percentage_cut = 1.0 - static_cast<double>(result.history.back().labeled) / static_cast<double>(gold.size());
  return result;
}

struct BootstrapLift {
  std::size_t batch_size = 0;
  double ese_f = 0.0;
  double random_f = 0.0;
};

// Base model after the ESE bootstrap batch vs after a random batch of the same size.
inline BootstrapLift bootstrap_lift(const ExperimentConfig& cfg, const Pool& gold, const SenseLexicon& lexicon = {}) {
  Emulator emu(gold);
  BootstrapLift out;
  auto base_f = [&](const std::vector<SentenceId>& ids, const std::set<std::string>& lex) {
    std::vector<Sentence> train;
    for (auto& [id, labels] : emu.emulate_label(ids)) {
      Sentence s = gold.at(id);
      s.gold.reset();
      s.gold_tags.reset();
      s.state = SentenceState::HumanLabeled;
      s.working = labels;
      train.push_back(std::move(s));
    }
    auto tc = cfg.train;
    if (tc.templates.has(crf::Template::Lexicon)) tc.lexicon = lex;
    return evaluate(crf::train(train, tc), gold).f;
  };

  SessionState state = make_session(strip_gold(gold), Mode::EAL, cfg.batch_size, cfg.n, std::nullopt, cfg.rng_seed);
  auto ese = run_ese(gold, emu, cfg, lexicon);
  auto ids = bootstrap_from_ese(state, ese.confirmed);
  out.batch_size = ids.size();
  out.ese_f = base_f(ids, state.confirmed_entities);

  std::vector<SentenceId> all;
  for (const auto& s : gold.sentences) all.push_back(s.id);
  auto random_ids = sparsent::detail::random_subset(all, ids.size(), cfg.rng_seed * 0x9E3779B97F4A7C15ULL + 1);
  // The random arm has no ESE confirmations, so no lexicon.
  out.random_f = base_f(random_ids, {});
  return out;
}

// Plot-ready CSV: iteration,labeled,auto,sigma,ec[,f]
inline std::string curves_csv(const std::vector<MetricPoint>& history) {
  const bool with_f = std::any_of(history.begin(), history.end(), [](const MetricPoint& p) { return p.f.has_value(); });
  std::ostringstream out;
  out << "iteration,labeled,auto,sigma,ec" << (with_f ? ",f" : "") << '\n';
  out << std::fixed << std::setprecision(6);
  for (const auto& p : history) {
    out << p.iteration << ',' << p.labeled << ',' << p.auto_labeled << ',' << p.sigma << ',' << p.ec;
    if (with_f) out << ',' << p.f.value_or(0.0);
    out << '\n';
  }
  return out.str();
}

// --- experiment config file ------------------------------------------------

struct ExperimentFile {
  ExperimentConfig experiment;
  // Either a corpus path or the synthetic fixture.
  std::optional<std::string> corpus;
  CorpusFormat format = CorpusFormat::Conll2003;
  std::string entity_class;
  fixture::FixtureConfig fixture;
  std::optional<std::string> sense_lexicon;
};

inline ExperimentFile experiment_from_json(const nlohmann::json& j) {
  ExperimentFile f;
  auto& c = f.experiment;
  if (j.contains("mode")) c.mode = mode_from_string(j["mode"].get<std::string>());
  c.batch_size = j.value("batch_size", c.batch_size);
  c.n = j.value("n", c.n);
  if (j.contains("threshold") && !j["threshold"].is_null()) c.threshold = j["threshold"].get<double>();
  if (is_auto_mode(c.mode) && !c.threshold) c.threshold = default_threshold(c.mode);
  if (!is_auto_mode(c.mode) && c.threshold) throw std::invalid_argument("threshold is only valid for FA/HFA/UFA");
  if (j.contains("seed_entity") && !j["seed_entity"].is_null()) c.seed_entity = j["seed_entity"].get<std::string>();
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  if (j.contains("stop_at")) c.stop_at = stop_at_from_string(j["stop_at"].get<std::string>());
  c.sigma_target = j.value("sigma_target", c.sigma_target);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  if (j.contains("sigma_set")) {
    const auto s = j["sigma_set"].get<std::string>();
    if (s != "unlabeled" && s != "pool") throw std::invalid_argument("sigma_set must be unlabeled or pool");
    c.sigma_set = s == "pool" ? SigmaSet::Pool : SigmaSet::Unlabeled;
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    c.train.l2sigma = t.value("l2sigma", c.train.l2sigma);
    c.train.max_iter = t.value("max_iter", c.train.max_iter);
    c.train.tol = t.value("tol", c.train.tol);
    if (t.contains("templates")) {
      c.train.templates.templates.clear();
      for (const auto& name : t["templates"]) c.train.templates.templates.push_back(crf::template_from_string(name.get<std::string>()));
    }
  }
  if (j.contains("expand")) {
    const auto& e = j["expand"];
    if (e.contains("scheme")) c.expand.scheme = weight_scheme_from_string(e["scheme"].get<std::string>());
    if (e.contains("sim")) c.expand.sim = similarity_from_string(e["sim"].get<std::string>());
    c.expand.ensemble = e.value("ensemble", c.expand.ensemble);
    c.expand.k = e.value("k", c.expand.k);
    if (e.contains("grouping")) {
      const int g = e["grouping"].get<int>();
      if (g != 5 && g != 6) throw std::invalid_argument("expand.grouping must be 5 or 6");
      c.expand.grouping = g == 5 ? FamilyGrouping::Five : FamilyGrouping::Six;
    }
  }
  if (j.contains("cf")) {
    const auto& cf = j["cf"];
    c.featurize.cf.dims = cf.value("dims", c.featurize.cf.dims);
    c.featurize.cf.buckets = cf.value("buckets", c.featurize.cf.buckets);
    c.featurize.cf.window = cf.value("window", c.featurize.cf.window);
  }
  if (j.contains("np")) c.npex.relax_jj_case = j["np"].value("relaxJJCase", false);
  if (j.contains("corpus") && !j["corpus"].is_null()) {
    f.corpus = j["corpus"].get<std::string>();
    f.format = corpus_format_from_string(j.value("format", std::string("conll2003")));
    f.entity_class = j.value("entity_class", std::string());
  }
  if (j.contains("fixture")) {
    const auto& fx = j["fixture"];
    f.fixture.sentences = fx.value("sentences", f.fixture.sentences);
    f.fixture.sparsity = fx.value("sparsity", f.fixture.sparsity);
    f.fixture.entity_types = fx.value("entity_types", f.fixture.entity_types);
    f.fixture.seed = fx.value("seed", f.fixture.seed);
  }
  if (j.contains("sense_lexicon") && !j["sense_lexicon"].is_null()) f.sense_lexicon = j["sense_lexicon"].get<std::string>();
  return f;
}

inline ExperimentFile load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open experiment config: " + path);
  return experiment_from_json(nlohmann::json::parse(in));
}

inline Pool experiment_pool(const ExperimentFile& f) {
  if (!f.corpus) return fixture::generate(f.fixture);
  LoadOptions opts;
  opts.entity_class = f.entity_class;
  Pool p = load_corpus(*f.corpus, f.format, opts);
  if (!f.entity_class.empty()) p = restrict_to_class(std::move(p), f.entity_class);
  return p;
}

}  // namespace sparsent::harness
