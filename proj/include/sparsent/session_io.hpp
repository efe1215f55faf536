#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "sparsent/active.hpp"
#include "sparsent/corpus.hpp"
#include "sparsent/crf.hpp"

namespace sparsent {

inline constexpr int kSessionFormatVersion = 1;

class SessionFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline nlohmann::json token_to_json(const Token& t) {
  nlohmann::json j = {{"s", t.surface}, {"p", t.pos}};
  if (t.lemma) j["l"] = *t.lemma;
  if (t.head) j["h"] = *t.head;
  if (t.deprel) j["d"] = *t.deprel;
  return j;
}

inline Token token_from_json(const nlohmann::json& j) {
  Token t;
  t.surface = j.at("s").get<std::string>();
  t.pos = j.at("p").get<std::string>();
  if (j.contains("l")) t.lemma = j["l"].get<std::string>();
  if (j.contains("h")) t.head = j["h"].get<int>();
  if (j.contains("d")) t.deprel = j["d"].get<std::string>();
  return t;
}

inline nlohmann::json sentence_to_json(const Sentence& s) {
  nlohmann::json toks = nlohmann::json::array();
  for (const auto& t : s.tokens) toks.push_back(token_to_json(t));
  nlohmann::json j = {{"id", s.id}, {"tokens", toks}, {"state", to_string(s.state)}};
  if (s.gold_tags) j["gold_tags"] = *s.gold_tags;
  if (s.gold) j["gold"] = to_string(*s.gold);
  if (s.working) j["working"] = to_string(*s.working);
  return j;
}

inline Sentence sentence_from_json(const nlohmann::json& j) {
  Sentence s;
  s.id = j.at("id").get<SentenceId>();
  for (const auto& t : j.at("tokens")) s.tokens.push_back(token_from_json(t));
  s.state = sentence_state_from_string(j.at("state").get<std::string>());
  if (j.contains("gold_tags")) s.gold_tags = j["gold_tags"].get<std::vector<std::string>>();
  if (j.contains("gold")) s.gold = labels_from_string(j["gold"].get<std::string>());
  if (j.contains("working")) s.working = labels_from_string(j["working"].get<std::string>());
  return s;
}

inline nlohmann::json templates_to_json(const crf::FeatureTemplateSet& t) {
  nlohmann::json names = nlohmann::json::array();
  for (auto x : t.templates) names.push_back(std::string(crf::to_string(x)));
  return {{"templates", names}, {"window_radius", t.window_radius}, {"max_affix", t.max_affix}};
}

inline crf::FeatureTemplateSet templates_from_json(const nlohmann::json& j) {
  crf::FeatureTemplateSet t;
  for (const auto& n : j.at("templates")) t.templates.push_back(crf::template_from_string(n.get<std::string>()));
  t.window_radius = j.at("window_radius").get<std::size_t>();
  t.max_affix = j.at("max_affix").get<std::size_t>();
  return t;
}

}  // namespace detail

inline nlohmann::json session_to_json(const SessionState& s) {
  nlohmann::json sentences = nlohmann::json::array();
  for (const auto& sent : s.pool.sentences) sentences.push_back(detail::sentence_to_json(sent));
  nlohmann::json history = nlohmann::json::array();
  for (const auto& p : s.history) {
    nlohmann::json h = {{"iteration", p.iteration}, {"labeled", p.labeled}, {"auto", p.auto_labeled},
                        {"sigma", p.sigma},         {"ec", p.ec}};
    if (p.f) h["f"] = *p.f;
    history.push_back(h);
  }
  nlohmann::json j = {
      {"format", "sparsent-session"},
      {"version", kSessionFormatVersion},
      {"entity_class", s.pool.entity_class},
      {"sentences", sentences},
      {"model", s.model ? crf::to_json(*s.model) : nlohmann::json(nullptr)},
      {"mode", to_string(s.mode)},
      {"batch_size", s.batch_size},
      {"n", s.n},
      {"threshold", s.threshold ? nlohmann::json(*s.threshold) : nlohmann::json(nullptr)},
      {"confirmed_entities", s.confirmed_entities},
      {"history", history},
      {"pending", s.pending},
      {"rng_seed", s.rng_seed},
      {"iteration", s.iteration},
      {"sigma_set", s.sigma_set == SigmaSet::Unlabeled ? "unlabeled" : "pool"},
      {"train",
       {{"l2sigma", s.train.l2sigma},
        {"max_iter", s.train.max_iter},
        {"tol", s.train.tol},
        {"templates", detail::templates_to_json(s.train.templates)},
        {"lexicon", s.train.lexicon}}},
  };
  return j;
}

// Builds a complete state or throws; a failed load never yields a partial session.
inline SessionState session_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "sparsent-session")
    throw SessionFormatError("not a sparsent session file");
  const int version = j.at("version").get<int>();
  if (version != kSessionFormatVersion)
    throw SessionFormatError("session format version " + std::to_string(version) + " is not supported (expected " +
                             std::to_string(kSessionFormatVersion) + ")");
  try {
    SessionState s;
    s.pool.entity_class = j.at("entity_class").get<std::string>();
    for (const auto& sj : j.at("sentences")) s.pool.sentences.push_back(detail::sentence_from_json(sj));
    if (!j.at("model").is_null()) s.model = crf::model_from_json(j["model"]);
    s.mode = mode_from_string(j.at("mode").get<std::string>());
    s.batch_size = j.at("batch_size").get<std::size_t>();
    s.n = j.at("n").get<std::size_t>();
    if (!j.at("threshold").is_null()) s.threshold = j["threshold"].get<double>();
    s.confirmed_entities = j.at("confirmed_entities").get<std::set<std::string>>();
    for (const auto& h : j.at("history")) {
      MetricPoint p;
      p.iteration = h.at("iteration").get<std::size_t>();
      p.labeled = h.at("labeled").get<std::size_t>();
      p.auto_labeled = h.at("auto").get<std::size_t>();
      p.sigma = h.at("sigma").get<double>();
      p.ec = h.at("ec").get<double>();
      if (h.contains("f")) p.f = h["f"].get<double>();
      s.history.push_back(p);
    }
    s.pending = j.at("pending").get<std::vector<SentenceId>>();
    s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    s.iteration = j.at("iteration").get<std::size_t>();
    const auto sigma_set = j.at("sigma_set").get<std::string>();
    if (sigma_set != "unlabeled" && sigma_set != "pool") throw SessionFormatError("bad sigma_set: " + sigma_set);
    s.sigma_set = sigma_set == "unlabeled" ? SigmaSet::Unlabeled : SigmaSet::Pool;
    const auto& t = j.at("train");
    s.train.l2sigma = t.at("l2sigma").get<double>();
    s.train.max_iter = t.at("max_iter").get<std::size_t>();
    s.train.tol = t.at("tol").get<double>();
    s.train.templates = detail::templates_from_json(t.at("templates"));
    s.train.lexicon = t.at("lexicon").get<std::set<std::string>>();
    validate(s);
    for (SentenceId id : s.pending)
      if (id < 0 || static_cast<std::size_t>(id) >= s.pool.size()) throw SessionFormatError("pending id out of range");
    return s;
  } catch (const SessionFormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw SessionFormatError(std::string("corrupt session: ") + e.what());
  }
}

inline void save_session(const SessionState& s, const std::string& path) {
  // Write to a sibling file first so an interrupted save leaves the old one intact.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write session: " + tmp);
    out << session_to_json(s).dump() << '\n';
    if (!out) throw std::runtime_error("failed writing session: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline SessionState load_session(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open session: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SessionFormatError(std::string("corrupt session: ") + e.what());
  }
  return session_from_json(j);
}

}  // namespace sparsent
