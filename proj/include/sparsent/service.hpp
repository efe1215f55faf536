#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparsent/active.hpp"
#include "sparsent/corpus.hpp"
#include "sparsent/crf.hpp"
#include "sparsent/diag.hpp"
#include "sparsent/esegraph.hpp"
#include "sparsent/featurize.hpp"
#include "sparsent/npex.hpp"
#include "sparsent/session_io.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro.
#include <httplib.h>

namespace sparsent::service {

using nlohmann::json;

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string corpus_dir = "corpora";
  std::string session_dir;  // empty: sessions are not persisted
  std::optional<std::string> token;
  bool async_training = true;
};

inline ServiceConfig config_from_json(const json& j, ServiceConfig c = {}) {
  c.host = j.value("host", c.host);
  c.port = j.value("port", c.port);
  c.corpus_dir = j.value("corpus_dir", c.corpus_dir);
  c.session_dir = j.value("session_dir", c.session_dir);
  if (j.contains("token") && !j["token"].is_null()) c.token = j["token"].get<std::string>();
  c.async_training = j.value("async_training", c.async_training);
  return c;
}

// SPARSENT_PORT, SPARSENT_CORPUS_DIR, SPARSENT_SESSION_DIR and SPARSENT_TOKEN win over the file.
inline ServiceConfig apply_env(ServiceConfig c) {
  if (const char* v = std::getenv("SPARSENT_PORT")) c.port = std::stoi(v);
  if (const char* v = std::getenv("SPARSENT_CORPUS_DIR")) c.corpus_dir = v;
  if (const char* v = std::getenv("SPARSENT_SESSION_DIR")) c.session_dir = v;
  if (const char* v = std::getenv("SPARSENT_TOKEN")) c.token = std::string(v);
  return c;
}

class ApiError : public std::runtime_error {
 public:
  ApiError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

inline ApiError bad_request(const std::string& m) { return {400, m}; }
inline ApiError not_found(const std::string& m) { return {404, m}; }
inline ApiError conflict(const std::string& m) { return {409, m}; }

struct SpanLabel {
  SentenceId sentence_id = 0;
  std::size_t start = 0;
  std::size_t end = 0;
};

struct ServiceSession {
  std::string id;
  std::string corpus_ref;
  mutable std::mutex mu;
  SessionState state;
  std::uint64_t revision = 0;
  bool training = false;
  std::optional<std::string> last_error;
  // Lazily built expansion inputs; the pool's tokens never change.
  std::optional<std::vector<NounPhrase>> nps;
  std::optional<std::vector<FeatureCooc>> coocs;
  std::thread job;
};

class Service {
 public:
  explicit Service(ServiceConfig cfg = {}) : cfg_(std::move(cfg)) {}
  ~Service() { wait_idle(); }
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const { return cfg_; }

  // Body: {corpus, format?, entity_class, mode?, batch_size?, n?, threshold?, seed?}
  json create_session(const json& body) {
    const std::string ref = require_string(body, "corpus");
    if (ref.empty() || ref.find("..") != std::string::npos || std::filesystem::path(ref).is_absolute())
      throw bad_request("corpus must be a relative name inside the corpus directory");
    const auto path = std::filesystem::path(cfg_.corpus_dir) / ref;
    if (!std::filesystem::exists(path)) throw not_found("corpus not found: " + ref);
    const std::string cls = body.value("entity_class", std::string());
    CorpusFormat fmt;
    Mode mode;
    try {
      fmt = corpus_format_from_string(body.value("format", std::string("conll2003")));
      mode = mode_from_string(body.value("mode", std::string("EAL")));
    } catch (const std::invalid_argument& e) {
      throw bad_request(e.what());
    }
    auto s = std::make_unique<ServiceSession>();
    s->corpus_ref = ref;
    try {
      LoadOptions opts;
      opts.entity_class = cls;
      Pool pool = load_corpus(path.string(), fmt, opts);
      pool.entity_class = cls;
      std::optional<double> threshold;
      if (body.contains("threshold") && !body["threshold"].is_null()) threshold = body["threshold"].get<double>();
      if (!is_auto_mode(mode) && threshold) throw bad_request("threshold is only valid for FA/HFA/UFA");
      s->state = make_session(strip_gold(std::move(pool)), mode, body.value("batch_size", std::size_t{100}),
                              body.value("n", std::size_t{10}), threshold, body.value("seed", std::uint64_t{0}));
      if (body.contains("l2sigma")) s->state.train.l2sigma = body["l2sigma"].get<double>();
    } catch (const ApiError&) {
      throw;
    } catch (const std::exception& e) {
      throw bad_request(e.what());
    }
    std::lock_guard lk(registry_mu_);
    s->id = "s" + std::to_string(++next_id_);
    const std::string id = s->id;
    json out = {{"session_id", id}, {"revision", s->revision}, {"sentences", s->state.pool.size()}};
    persist(*s);
    sessions_[id] = std::move(s);
    return out;
  }

  // Current batch (sampled on demand) with Viterbi suggestions.
  json get_batch(const std::string& id) {
    auto& s = session(id);
    std::lock_guard lk(s.mu);
    if (s.state.pending.empty()) {
      ensure_idle(s);
      if (!s.state.model && s.state.mode != Mode::AR)
        throw conflict("no model yet: expand a seed and confirm candidates to bootstrap the session");
      if (!request_batch(s.state).empty()) {
        ++s.revision;
        persist(s);
      }
    }
    return batch_json(s);
  }

  // Body: {revision, spans: [{sentence_id, start, end}]}. Sentences of the batch
  // without spans are labeled all-O.
  json submit_labels(const std::string& id, const json& body) {
    auto& s = session(id);
    std::unique_lock lk(s.mu);
    ensure_idle(s);
    check_revision(s, body);
    if (s.state.pending.empty()) throw conflict("no batch is waiting for labels");
    auto labels = batch_labels(s.state, parse_spans(body));
    if (!cfg_.async_training) {
      SessionState next = s.state;
      try {
        step(next, labels);
      } catch (const std::exception& e) {
        throw bad_request(e.what());
      }
      s.state = std::move(next);
      ++s.revision;
      persist(s);
      return metrics_json(s);
    }
    ++s.revision;
    s.training = true;
    SessionState copy = s.state;
    if (s.job.joinable()) s.job.join();
    s.job = std::thread([this, sp = &s, copy = std::move(copy), labels = std::move(labels)]() mutable {
      std::optional<std::string> err;
      try {
        step(copy, labels);
      } catch (const std::exception& e) {
        err = e.what();
      }
      std::lock_guard g(sp->mu);
      if (!err) sp->state = std::move(copy);
      sp->last_error = err;
      sp->training = false;
      ++sp->revision;
      try {
        persist(*sp);
      } catch (const std::exception& e) {
        sp->last_error = std::string("persist failed: ") + e.what();
      }
    });
    return metrics_json(s);
  }

  // Body: {seed, k?} → ranked candidates.
  json seed_expand(const std::string& id, const json& body) {
    auto& s = session(id);
    std::lock_guard lk(s.mu);
    const std::string seed = require_string(body, "seed");
    ensure_features(s);
    ExpandConfig ec;
    ec.k = body.value("k", std::size_t{30});
    if (ec.k < 1) throw bad_request("k must be >= 1");
    RankedList ranked;
    try {
      ranked = expand({seed}, *s.coocs, ec, np_counts(*s.nps));
    } catch (const SeedNotFound& e) {
      throw not_found(e.what());
    } catch (const std::exception& e) {
      throw bad_request(e.what());
    }
    json out = json::array();
    for (std::size_t i = 0; i < ranked.entries.size(); ++i)
      out.push_back({{"rank", i + 1},
                     {"surface", ranked.entries[i].surface},
                     {"score", ranked.entries[i].score},
                     {"count", ranked.entries[i].count}});
    return {{"seed", seed}, {"k", ec.k}, {"candidates", out}};
  }

  // Body: {revision, surfaces: [...]} → bootstrap batch.
  json confirm_candidates(const std::string& id, const json& body) {
    auto& s = session(id);
    std::lock_guard lk(s.mu);
    ensure_idle(s);
    check_revision(s, body);
    if (!body.contains("surfaces") || !body["surfaces"].is_array()) throw bad_request("surfaces must be an array");
    ensure_features(s);
    std::set<std::string> wanted;
    for (const auto& x : body["surfaces"]) wanted.insert(x.get<std::string>());
    if (wanted.empty()) throw bad_request("no surfaces to confirm");
    std::vector<NounPhrase> confirmed;
    for (const auto& np : *s.nps)
      if (wanted.erase(np.surface)) confirmed.push_back(np);
    if (!wanted.empty()) throw bad_request("unknown noun phrase: " + *wanted.begin());
    if (!s.state.pending.empty() && s.state.model)
      throw conflict("a sampled batch is still waiting for labels");
    bootstrap_from_ese(s.state, confirmed);
    ++s.revision;
    persist(s);
    return batch_json(s);
  }

  json get_metrics(const std::string& id) {
    auto& s = session(id);
    std::lock_guard lk(s.mu);
    return metrics_json(s);
  }

  // Body: {revision, mode, threshold?}
  json set_mode(const std::string& id, const json& body) {
    auto& s = session(id);
    std::lock_guard lk(s.mu);
    ensure_idle(s);
    check_revision(s, body);
    try {
      const Mode m = mode_from_string(require_string(body, "mode"));
      std::optional<double> t;
      if (is_auto_mode(m)) t = body.contains("threshold") ? body["threshold"].get<double>() : default_threshold(m);
      if (!is_auto_mode(m) && body.contains("threshold")) throw bad_request("threshold is only valid for FA/HFA/UFA");
      if (m == Mode::AR && s.state.mode != Mode::AR) throw bad_request("cannot switch an entropy session to AR");
      s.state.mode = m;
      s.state.threshold = t;
    } catch (const std::invalid_argument& e) {
      throw bad_request(e.what());
    }
    ++s.revision;
    persist(s);
    return metrics_json(s);
  }

  json export_model(const std::string& id) {
    auto& s = session(id);
    std::lock_guard lk(s.mu);
    if (!s.state.model) throw conflict("no model has been trained yet");
    return crf::to_json(*s.state.model);
  }

  // format: conll2003 (labeled sentences, BIO) or json (all sentences, spans, gold/silver flag).
  std::string export_annotations(const std::string& id, const std::string& format, const std::string& scheme = "bio") {
    auto& s = session(id);
    std::lock_guard lk(s.mu);
    const std::string cls = s.state.pool.entity_class.empty() ? "ENT" : s.state.pool.entity_class;
    if (format == "conll2003") {
      if (scheme != "bio" && scheme != "io") throw bad_request("scheme must be bio or io");
      std::ostringstream out;
      for (const auto& sent : s.state.pool.sentences) {
        if (!sent.working) continue;
        write_conll2003_sentence(out, sent, *sent.working, cls, scheme == "io" ? TagScheme::IO : TagScheme::BIO);
      }
      return out.str();
    }
    if (format == "json") {
      json arr = json::array();
      for (const auto& sent : s.state.pool.sentences) {
        json toks = json::array();
        for (const auto& t : sent.tokens) toks.push_back(t.surface);
        json j = {{"id", sent.id}, {"tokens", toks}, {"state", to_string(sent.state)}};
        if (sent.working) {
          json spans = json::array();
          for (const auto& sp : spans_of(*sent.working)) spans.push_back({{"start", sp.start}, {"end", sp.end}});
          j["spans"] = spans;
          j["standard"] = sent.state == SentenceState::AutoLabeled ? "silver" : "gold";
        }
        arr.push_back(j);
      }
      return json{{"entity_class", cls}, {"sentences", arr}}.dump();
    }
    throw bad_request("unknown export format: " + format);
  }

  // Blocks until no session has a training job running.
  void wait_idle() {
    std::vector<ServiceSession*> all;
    {
      std::lock_guard lk(registry_mu_);
      for (auto& [id, s] : sessions_) all.push_back(s.get());
    }
    for (auto* s : all) {
      std::thread t;
      {
        std::lock_guard lk(s->mu);
        t = std::move(s->job);
      }
      if (t.joinable()) t.join();
    }
  }

  // Routes every endpoint under /v1 onto an httplib server.
  void bind(httplib::Server& srv) {
    auto wrap = [this](auto fn) {
      return [this, fn](const httplib::Request& req, httplib::Response& res) {
        try {
          authorize(req);
          fn(req, res);
        } catch (const ApiError& e) {
          res.status = e.status();
          res.set_content(json{{"error", e.what()}}.dump(), "application/json");
        } catch (const json::exception& e) {
          res.status = 400;
          res.set_content(json{{"error", std::string("bad request body: ") + e.what()}}.dump(), "application/json");
        } catch (const std::exception& e) {
          res.status = 500;
          res.set_content(json{{"error", e.what()}}.dump(), "application/json");
        }
      };
    };
    auto reply = [](httplib::Response& res, const json& j) { res.set_content(j.dump(), "application/json"); };
    auto body_of = [](const httplib::Request& req) { return req.body.empty() ? json::object() : json::parse(req.body); };

    srv.Get("/v1/health", wrap([reply](const httplib::Request&, httplib::Response& res) { reply(res, {{"ok", true}}); }));
    srv.Post("/v1/sessions", wrap([=, this](const httplib::Request& req, httplib::Response& res) {
               res.status = 201;
               reply(res, create_session(body_of(req)));
             }));
    srv.Get(R"(/v1/sessions/([^/]+)/batch)", wrap([=, this](const httplib::Request& req, httplib::Response& res) {
              reply(res, get_batch(req.matches[1]));
            }));
    srv.Post(R"(/v1/sessions/([^/]+)/labels)", wrap([=, this](const httplib::Request& req, httplib::Response& res) {
               reply(res, submit_labels(req.matches[1], body_of(req)));
             }));
    srv.Post(R"(/v1/sessions/([^/]+)/expand)", wrap([=, this](const httplib::Request& req, httplib::Response& res) {
               reply(res, seed_expand(req.matches[1], body_of(req)));
             }));
    srv.Post(R"(/v1/sessions/([^/]+)/confirm)", wrap([=, this](const httplib::Request& req, httplib::Response& res) {
               reply(res, confirm_candidates(req.matches[1], body_of(req)));
             }));
    srv.Post(R"(/v1/sessions/([^/]+)/mode)", wrap([=, this](const httplib::Request& req, httplib::Response& res) {
               reply(res, set_mode(req.matches[1], body_of(req)));
             }));
    srv.Get(R"(/v1/sessions/([^/]+)/metrics)", wrap([=, this](const httplib::Request& req, httplib::Response& res) {
              reply(res, get_metrics(req.matches[1]));
            }));
    srv.Get(R"(/v1/sessions/([^/]+)/model)", wrap([=, this](const httplib::Request& req, httplib::Response& res) {
              reply(res, export_model(req.matches[1]));
            }));
    srv.Get(R"(/v1/sessions/([^/]+)/annotations)", wrap([this](const httplib::Request& req, httplib::Response& res) {
              const std::string format = req.has_param("format") ? req.get_param_value("format") : "conll2003";
              const std::string scheme = req.has_param("scheme") ? req.get_param_value("scheme") : "bio";
              res.set_content(export_annotations(req.matches[1], format, scheme),
                              format == "json" ? "application/json" : "text/plain");
            }));
  }

 private:
  static std::string require_string(const json& body, const char* key) {
    if (!body.contains(key) || !body[key].is_string()) throw bad_request(std::string("missing string field: ") + key);
    return body[key].get<std::string>();
  }

  void authorize(const httplib::Request& req) const {
    if (!cfg_.token) return;
    if (req.get_header_value("Authorization") != "Bearer " + *cfg_.token) throw ApiError(401, "missing or invalid token");
  }

  ServiceSession& session(const std::string& id) {
    std::lock_guard lk(registry_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw not_found("unknown session: " + id);
    return *it->second;
  }

  static void ensure_idle(const ServiceSession& s) {
    if (s.training) throw conflict("training in progress; poll metrics until training is false");
  }

  static void check_revision(const ServiceSession& s, const json& body) {
    if (!body.contains("revision")) throw bad_request("missing revision");
    const auto rev = body["revision"].get<std::uint64_t>();
    if (rev != s.revision)
      throw conflict("stale revision " + std::to_string(rev) + " (current " + std::to_string(s.revision) + ")");
  }

  static std::vector<SpanLabel> parse_spans(const json& body) {
    std::vector<SpanLabel> out;
    if (!body.contains("spans")) return out;
    if (!body["spans"].is_array()) throw bad_request("spans must be an array");
    for (const auto& sp : body["spans"]) {
      const auto start = sp.at("start").get<std::int64_t>(), end = sp.at("end").get<std::int64_t>();
      if (start < 0 || end < 0) throw bad_request("negative span index");
      out.push_back({sp.at("sentence_id").get<SentenceId>(), static_cast<std::size_t>(start), static_cast<std::size_t>(end)});
    }
    return out;
  }

  static std::map<SentenceId, LabelSeq> batch_labels(const SessionState& st, const std::vector<SpanLabel>& spans) {
    std::set<SentenceId> batch(st.pending.begin(), st.pending.end());
    std::map<SentenceId, std::vector<Span>> by_sentence;
    for (const auto& sp : spans) {
      if (!batch.count(sp.sentence_id))
        throw bad_request("sentence " + std::to_string(sp.sentence_id) + " is not in the current batch");
      by_sentence[sp.sentence_id].push_back({sp.start, sp.end});
    }
    std::map<SentenceId, LabelSeq> out;
    for (SentenceId id : st.pending) {
      const std::size_t len = st.pool.at(id).size();
      try {
        out[id] = sparsent::labels_from_spans(len, by_sentence[id]);
      } catch (const std::exception& e) {
        throw bad_request("sentence " + std::to_string(id) + ": " + e.what());
      }
    }
    return out;
  }

  static void ensure_features(ServiceSession& s) {
    if (s.nps) return;
    s.nps = collect_nps(s.state.pool);
    if (s.nps->empty()) throw bad_request("the corpus contains no noun phrases");
    s.coocs = featurize_all(s.state.pool, *s.nps, SenseLexicon{});
  }

  static json batch_json(const ServiceSession& s) {
    json batch = json::array();
    for (SentenceId id : s.state.pending) {
      const auto& sent = s.state.pool.at(id);
      json toks = json::array(), pos = json::array(), suggestion = json::array();
      for (const auto& t : sent.tokens) {
        toks.push_back(t.surface);
        pos.push_back(t.pos);
      }
      if (s.state.model)
        for (const auto& sp : spans_of(crf::decode(*s.state.model, sent)))
          suggestion.push_back({{"start", sp.start}, {"end", sp.end}});
      batch.push_back({{"sentence_id", id}, {"tokens", toks}, {"pos", pos}, {"suggestion", suggestion}});
    }
    return {{"revision", s.revision}, {"batch", batch}};
  }

  static json metrics_json(const ServiceSession& s) {
    json hist = json::array();
    for (const auto& p : s.state.history) {
      json h = {{"iteration", p.iteration}, {"labeled", p.labeled}, {"auto", p.auto_labeled}, {"sigma", p.sigma}, {"ec", p.ec}};
      if (p.f) h["f"] = *p.f;
      hist.push_back(h);
    }
    json j = {{"revision", s.revision},
              {"training", s.training},
              {"mode", to_string(s.state.mode)},
              {"threshold", s.state.threshold ? json(*s.state.threshold) : json(nullptr)},
              {"labeled", count_state(s.state, SentenceState::HumanLabeled)},
              {"auto", count_state(s.state, SentenceState::AutoLabeled)},
              {"unlabeled", count_state(s.state, SentenceState::Unlabeled)},
              {"pending", s.state.pending.size()},
              {"history", hist}};
    if (s.last_error) j["last_error"] = *s.last_error;
    return j;
  }

  void persist(const ServiceSession& s) const {
    if (cfg_.session_dir.empty()) return;
    std::filesystem::create_directories(cfg_.session_dir);
    save_session(s.state, (std::filesystem::path(cfg_.session_dir) / (s.id + ".json")).string());
  }

  ServiceConfig cfg_;
  std::mutex registry_mu_;
  std::map<std::string, std::unique_ptr<ServiceSession>> sessions_;
  std::uint64_t next_id_ = 0;
};

}  // namespace sparsent::service
