#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparsent/corpus.hpp"
#include "sparsent/diag.hpp"
#include "sparsent/featurize.hpp"
#include "sparsent/labels.hpp"
#include "sparsent/lbfgs.hpp"

namespace sparsent::crf {

enum class Template {
  Word,          // current word
  LowerWord,     // lowercased current word
  LongShape,     // LWS of the current word
  ShortShape,    // SWS of the current word
  Prefix,        // prefixes of length 1..4
  Suffix,        // suffixes of length 1..4
  WindowWords,   // lowercased words at offsets -r..+r
  WindowShapes,  // SWS at offsets ±1
  Lexicon,       // token covered by a confirmed entity
  Transitions,   // label bigrams and start labels
  Bias,          // label prior
};

inline constexpr std::array<std::pair<Template, std::string_view>, 11> kTemplateNames{{
    {Template::Word, "word"},
    {Template::LowerWord, "lower"},
    {Template::LongShape, "lws"},
    {Template::ShortShape, "sws"},
    {Template::Prefix, "prefix"},
    {Template::Suffix, "suffix"},
    {Template::WindowWords, "window_words"},
    {Template::WindowShapes, "window_shapes"},
    {Template::Lexicon, "lexicon"},
    {Template::Transitions, "transitions"},
    {Template::Bias, "bias"},
}};

inline std::string_view to_string(Template t) {
  for (auto& [k, v] : kTemplateNames)
    if (k == t) return v;
  return "?";
}

inline Template template_from_string(std::string_view s) {
  for (auto& [k, v] : kTemplateNames)
    if (v == s) return k;
  throw std::invalid_argument("unknown feature template: " + std::string(s));
}

struct FeatureTemplateSet {
  std::vector<Template> templates;
  std::size_t window_radius = 2;
  std::size_t max_affix = 4;

  bool has(Template t) const { return std::find(templates.begin(), templates.end(), t) != templates.end(); }

  static FeatureTemplateSet defaults() {
    FeatureTemplateSet s;
    for (auto& [t, _] : kTemplateNames) s.templates.push_back(t);
    return s;
  }
  static FeatureTemplateSet none() { return {}; }

  friend bool operator==(const FeatureTemplateSet&, const FeatureTemplateSet&) = default;
};

// Matches confirmed entity surfaces (space-separated tokens) inside a sentence.
class EntityLexicon {
 public:
  EntityLexicon() = default;
  template <typename Range>
  explicit EntityLexicon(const Range& surfaces) {
    for (const auto& s : surfaces) add(s);
  }

  void add(const std::string& surface) {
    auto words = sparsent::detail::split_spaces(surface);
    if (words.empty()) return;
    if (!surfaces_.insert(surface).second) return;
    by_first_[words.front()].push_back(std::move(words));
  }

  bool empty() const { return surfaces_.empty(); }
  const std::set<std::string>& surfaces() const { return surfaces_; }

  // Per token: 0 = not covered, 1 = first token of a match, 2 = later token.
  std::vector<std::uint8_t> mark(const Sentence& s) const {
    std::vector<std::uint8_t> out(s.size(), 0);
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto it = by_first_.find(s.tokens[i].surface);
      if (it == by_first_.end()) continue;
      for (const auto& words : it->second) {
        if (i + words.size() > s.size()) continue;
        bool ok = true;
        for (std::size_t j = 1; j < words.size() && ok; ++j) ok = s.tokens[i + j].surface == words[j];
        if (!ok) continue;
        if (out[i] == 0) out[i] = 1;
        for (std::size_t j = 1; j < words.size(); ++j) out[i + j] = 2;
      }
    }
    return out;
  }

 private:
  std::set<std::string> surfaces_;
  std::map<std::string, std::vector<std::vector<std::string>>> by_first_;
};

// Observation attributes per token.
inline std::vector<std::vector<std::string>> extract_attributes(const Sentence& s, const FeatureTemplateSet& tpl,
                                                                const EntityLexicon& lexicon) {
  const std::size_t n = s.size();
  std::vector<std::string> lower(n), sws(n);
  for (std::size_t i = 0; i < n; ++i) {
    lower[i] = SenseLexicon::lowercase(s.tokens[i].surface);
    sws[i] = short_word_shape(s.tokens[i].surface);
  }
  std::vector<std::uint8_t> lex;
  if (tpl.has(Template::Lexicon) && !lexicon.empty()) lex = lexicon.mark(s);

  std::vector<std::vector<std::string>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = out[i];
    const std::string& w = s.tokens[i].surface;
    for (Template t : tpl.templates) {
      switch (t) {
        case Template::Word: a.push_back("w=" + w); break;
        case Template::LowerWord: a.push_back("lw=" + lower[i]); break;
        case Template::LongShape: a.push_back("lws=" + long_word_shape(w)); break;
        case Template::ShortShape: a.push_back("sws=" + sws[i]); break;
        case Template::Prefix:
          for (std::size_t k = 1; k <= tpl.max_affix && k <= w.size(); ++k)
            a.push_back("p" + std::to_string(k) + "=" + w.substr(0, k));
          break;
        case Template::Suffix:
          for (std::size_t k = 1; k <= tpl.max_affix && k <= w.size(); ++k)
            a.push_back("s" + std::to_string(k) + "=" + w.substr(w.size() - k));
          break;
        case Template::WindowWords: {
          const auto r = static_cast<std::ptrdiff_t>(tpl.window_radius);
          for (std::ptrdiff_t d = -r; d <= r; ++d) {
            if (d == 0) continue;
            const auto j = static_cast<std::ptrdiff_t>(i) + d;
            std::string v = j < 0 ? "<S>" : j >= static_cast<std::ptrdiff_t>(n) ? "</S>" : lower[static_cast<std::size_t>(j)];
            a.push_back("w[" + std::to_string(d) + "]=" + v);
          }
          break;
        }
        case Template::WindowShapes:
          a.push_back("sh[-1]=" + (i == 0 ? std::string("<S>") : sws[i - 1]));
          a.push_back("sh[+1]=" + (i + 1 >= n ? std::string("</S>") : sws[i + 1]));
          break;
        case Template::Lexicon:
          if (!lex.empty() && lex[i] != 0) a.push_back(lex[i] == 1 ? "lex=B" : "lex=I");
          break;
        case Template::Bias: a.push_back("bias"); break;
        case Template::Transitions: break;
      }
    }
  }
  return out;
}

// Scores of one sentence under fixed weights: emissions per token and label,
// label-bigram transitions and start scores.
struct Lattice {
  std::vector<std::array<double, kNumLabels>> emit;
  std::array<std::array<double, kNumLabels>, kNumLabels> trans{};  // [prev][cur]
  std::array<double, kNumLabels> start{};

  std::size_t length() const { return emit.size(); }

  double score(const LabelSeq& y) const {
    if (y.size() != emit.size()) throw std::invalid_argument("label sequence length mismatch");
    if (y.empty()) return 0.0;
    double s = start[index_of(y[0])] + emit[0][index_of(y[0])];
    for (std::size_t t = 1; t < y.size(); ++t) s += trans[index_of(y[t - 1])][index_of(y[t])] + emit[t][index_of(y[t])];
    return s;
  }
};

namespace detail {
inline double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}
}  // namespace detail

struct ForwardBackward {
  std::vector<std::array<double, kNumLabels>> alpha, beta;
  double log_z = 0.0;
};

inline ForwardBackward forward_backward(const Lattice& lat) {
  const std::size_t n = lat.length();
  ForwardBackward fb;
  fb.alpha.resize(n);
  fb.beta.resize(n);
  if (n == 0) return fb;  // one empty sequence with score 0
  for (std::size_t y = 0; y < kNumLabels; ++y) fb.alpha[0][y] = lat.start[y] + lat.emit[0][y];
  double buf[kNumLabels];
  for (std::size_t t = 1; t < n; ++t)
    for (std::size_t y = 0; y < kNumLabels; ++y) {
      for (std::size_t p = 0; p < kNumLabels; ++p) buf[p] = fb.alpha[t - 1][p] + lat.trans[p][y];
      fb.alpha[t][y] = detail::log_sum_exp(buf, kNumLabels) + lat.emit[t][y];
    }
  fb.beta[n - 1].fill(0.0);
  for (std::size_t t = n - 1; t-- > 0;)
    for (std::size_t y = 0; y < kNumLabels; ++y) {
      for (std::size_t q = 0; q < kNumLabels; ++q) buf[q] = lat.trans[y][q] + lat.emit[t + 1][q] + fb.beta[t + 1][q];
      fb.beta[t][y] = detail::log_sum_exp(buf, kNumLabels);
    }
  fb.log_z = detail::log_sum_exp(fb.alpha[n - 1].data(), kNumLabels);
  return fb;
}

inline double log_partition(const Lattice& lat) { return forward_backward(lat).log_z; }

// Most probable sequence; ties resolve to the lower label (B < I < O).
inline LabelSeq viterbi(const Lattice& lat) {
  const std::size_t n = lat.length();
  if (n == 0) return {};
  std::vector<std::array<double, kNumLabels>> delta(n);
  std::vector<std::array<std::uint8_t, kNumLabels>> back(n);
  for (std::size_t y = 0; y < kNumLabels; ++y) delta[0][y] = lat.start[y] + lat.emit[0][y];
  for (std::size_t t = 1; t < n; ++t)
    for (std::size_t y = 0; y < kNumLabels; ++y) {
      std::size_t arg = 0;
      double best = delta[t - 1][0] + lat.trans[0][y];
      for (std::size_t p = 1; p < kNumLabels; ++p) {
        double v = delta[t - 1][p] + lat.trans[p][y];
        if (v > best) {
          best = v;
          arg = p;
        }
      }
      delta[t][y] = best + lat.emit[t][y];
      back[t][y] = static_cast<std::uint8_t>(arg);
    }
  std::size_t y = 0;
  for (std::size_t q = 1; q < kNumLabels; ++q)
    if (delta[n - 1][q] > delta[n - 1][y]) y = q;
  LabelSeq out(n);
  for (std::size_t t = n; t-- > 0;) {
    out[t] = static_cast<Label>(y);
    if (t > 0) y = back[t][y];
  }
  return out;
}

struct NBest {
  std::vector<LabelSeq> sequences;
  std::vector<double> probs;   // p(y|s), not renormalized
  std::vector<double> scores;  // unnormalized log scores
};

// Exact n best label sequences: best-first search over the trellis with the exact
// best-completion score as heuristic, so complete sequences pop in score order.
inline NBest nbest(const Lattice& lat, std::size_t n) {
  if (n < 1) throw std::invalid_argument("nbest: n must be >= 1");
  const std::size_t len = lat.length();
  NBest out;
  const double log_z = log_partition(lat);
  if (len == 0) {
    out.sequences.emplace_back();
    out.probs.push_back(1.0);
    out.scores.push_back(0.0);
    return out;
  }
  // h[t][y]: best score of positions t+1.. given label y at t.
  std::vector<std::array<double, kNumLabels>> h(len);
  h[len - 1].fill(0.0);
  for (std::size_t t = len - 1; t-- > 0;)
    for (std::size_t y = 0; y < kNumLabels; ++y) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < kNumLabels; ++q)
        best = std::max(best, lat.trans[y][q] + lat.emit[t + 1][q] + h[t + 1][q]);
      h[t][y] = best;
    }

  struct Node {
    double priority;
    double prefix;
    LabelSeq labels;
  };
  auto worse = [](const Node& a, const Node& b) {
    if (a.priority != b.priority) return a.priority < b.priority;
    return b.labels < a.labels;  // lexicographically smaller pops first
  };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);
  for (std::size_t y = 0; y < kNumLabels; ++y) {
    double g = lat.start[y] + lat.emit[0][y];
    open.push({g + h[0][y], g, LabelSeq{static_cast<Label>(y)}});
  }
  while (!open.empty() && out.sequences.size() < n) {
    Node node = open.top();
    open.pop();
    const std::size_t t = node.labels.size() - 1;
    if (node.labels.size() == len) {
      out.scores.push_back(node.prefix);
      out.probs.push_back(std::exp(node.prefix - log_z));
      out.sequences.push_back(std::move(node.labels));
      continue;
    }
    const std::size_t prev = index_of(node.labels.back());
    for (std::size_t y = 0; y < kNumLabels; ++y) {
      double g = node.prefix + lat.trans[prev][y] + lat.emit[t + 1][y];
      LabelSeq labels = node.labels;
      labels.push_back(static_cast<Label>(y));
      open.push({g + h[t + 1][y], g, std::move(labels)});
    }
  }
  return out;
}

// Normalized n-best entropy of a top-n distribution: renormalize, take the
// natural-log entropy, divide by log of the number of sequences. In [0,1].
inline double nbest_entropy(std::span<const double> probs) {
  if (probs.size() <= 1) return 0.0;
  double total = 0;
  for (double p : probs) total += p;
  if (total <= 0) return 0.0;
  double h = 0;
  for (double p : probs) {
    double q = p / total;
    if (q > 0) h -= q * std::log(q);
  }
  return std::clamp(h / std::log(static_cast<double>(probs.size())), 0.0, 1.0);
}

// Self-information −log p of the i-th best sequence (1-based).
inline double self_information(const NBest& nb, std::size_t rank) {
  if (rank < 1 || rank > nb.probs.size())
    throw std::out_of_range("self_information: only " + std::to_string(nb.probs.size()) + " sequences available");
  return -std::log(nb.probs[rank - 1]);
}

struct TrainConfig {
  double l2sigma = 1.0;
  std::size_t max_iter = 200;
  double tol = 1e-5;
  FeatureTemplateSet templates = FeatureTemplateSet::defaults();
  std::set<std::string> lexicon;  // confirmed entity surfaces
};

class SequenceModel {
 public:
  SequenceModel() = default;

  // Builds the attribute index from a set of sentences (ids in first-seen order).
  SequenceModel(FeatureTemplateSet templates, std::set<std::string> lexicon, double l2sigma,
                const std::vector<const Sentence*>& sentences)
      : templates_(std::move(templates)), lexicon_(lexicon), lexicon_surfaces_(std::move(lexicon)), l2sigma_(l2sigma) {
    for (const Sentence* s : sentences)
      for (auto& attrs : extract_attributes(*s, templates_, lexicon_))
        for (auto& a : attrs) intern(a);
    theta_.assign(num_params(), 0.0);
  }

  SequenceModel(FeatureTemplateSet templates, std::set<std::string> lexicon, double l2sigma,
                std::vector<std::string> attributes, std::vector<double> theta)
      : templates_(std::move(templates)), lexicon_(lexicon), lexicon_surfaces_(std::move(lexicon)), l2sigma_(l2sigma) {
    for (auto& a : attributes) intern(a);
    if (attributes_.size() != attributes.size()) throw std::invalid_argument("duplicate attribute in model");
    if (theta.size() != num_params())
      throw std::invalid_argument("model has " + std::to_string(theta.size()) + " weights, expected " +
                                  std::to_string(num_params()));
    for (double v : theta)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite model weight");
    theta_ = std::move(theta);
  }

  const FeatureTemplateSet& templates() const { return templates_; }
  const std::set<std::string>& lexicon() const { return lexicon_surfaces_; }
  double l2sigma() const { return l2sigma_; }
  const std::vector<std::string>& attributes() const { return attributes_; }
  const std::vector<double>& theta() const { return theta_; }
  std::vector<double>& mutable_theta() { return theta_; }

  std::size_t num_attributes() const { return attributes_.size(); }
  std::size_t num_params() const { return attributes_.size() * kNumLabels + kNumLabels * kNumLabels + kNumLabels; }
  std::size_t trans_offset() const { return attributes_.size() * kNumLabels; }
  std::size_t start_offset() const { return trans_offset() + kNumLabels * kNumLabels; }

  // Attribute ids per token; unseen attributes are dropped.
  std::vector<std::vector<std::uint32_t>> encode(const Sentence& s) const {
    auto attrs = extract_attributes(s, templates_, lexicon_);
    std::vector<std::vector<std::uint32_t>> out(attrs.size());
    for (std::size_t t = 0; t < attrs.size(); ++t)
      for (auto& a : attrs[t]) {
        auto it = index_.find(a);
        if (it != index_.end()) out[t].push_back(it->second);
      }
    return out;
  }

  Lattice lattice(const std::vector<std::vector<std::uint32_t>>& ids, std::span<const double> theta) const {
    Lattice lat;
    lat.emit.resize(ids.size());
    for (std::size_t t = 0; t < ids.size(); ++t) {
      lat.emit[t].fill(0.0);
      for (std::uint32_t a : ids[t])
        for (std::size_t y = 0; y < kNumLabels; ++y) lat.emit[t][y] += theta[a * kNumLabels + y];
    }
    if (templates_.has(Template::Transitions)) {
      for (std::size_t p = 0; p < kNumLabels; ++p)
        for (std::size_t y = 0; y < kNumLabels; ++y) lat.trans[p][y] = theta[trans_offset() + p * kNumLabels + y];
      for (std::size_t y = 0; y < kNumLabels; ++y) lat.start[y] = theta[start_offset() + y];
    }
    return lat;
  }

  Lattice lattice(const Sentence& s) const { return lattice(encode(s), theta_); }

 private:
  void intern(const std::string& a) {
    if (index_.try_emplace(a, static_cast<std::uint32_t>(attributes_.size())).second) attributes_.push_back(a);
  }

  FeatureTemplateSet templates_;
  EntityLexicon lexicon_;
  std::set<std::string> lexicon_surfaces_;
  double l2sigma_ = 1.0;
  std::vector<std::string> attributes_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<double> theta_;
};

// Penalized negative conditional log-likelihood of a labeled set and its gradient.
class Objective {
 public:
  Objective(const SequenceModel& skeleton, const std::vector<const Sentence*>& sentences,
            const std::vector<LabelSeq>& labels)
      : model_(skeleton) {
    if (sentences.size() != labels.size()) throw std::invalid_argument("sentences/labels size mismatch");
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      if (labels[i].size() != sentences[i]->size()) throw std::invalid_argument("label length mismatch");
      ids_.push_back(model_.encode(*sentences[i]));
    }
    labels_ = labels;
  }

  std::size_t dimension() const { return model_.num_params(); }

  // Returns −Σ log p(y|s) + ||θ||²/(2σ²); grad receives its gradient.
  double operator()(const std::vector<double>& theta, std::vector<double>& grad) const {
    const std::size_t a_off = model_.trans_offset();
    const std::size_t s_off = model_.start_offset();
    const bool with_trans = model_.templates().has(Template::Transitions);
    grad.assign(theta.size(), 0.0);
    double nll = 0.0;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      const auto& ids = ids_[i];
      const auto& y = labels_[i];
      const Lattice lat = model_.lattice(ids, theta);
      const auto fb = forward_backward(lat);
      nll += fb.log_z - lat.score(y);
      const std::size_t n = ids.size();
      for (std::size_t t = 0; t < n; ++t) {
        std::array<double, kNumLabels> mu;
        for (std::size_t l = 0; l < kNumLabels; ++l) mu[l] = std::exp(fb.alpha[t][l] + fb.beta[t][l] - fb.log_z);
        mu[index_of(y[t])] -= 1.0;
        for (std::uint32_t a : ids[t])
          for (std::size_t l = 0; l < kNumLabels; ++l) grad[a * kNumLabels + l] += mu[l];
        if (!with_trans) continue;
        if (t == 0) {
          for (std::size_t l = 0; l < kNumLabels; ++l) grad[s_off + l] += mu[l];
        } else {
          for (std::size_t p = 0; p < kNumLabels; ++p)
            for (std::size_t l = 0; l < kNumLabels; ++l)
              grad[a_off + p * kNumLabels + l] +=
                  std::exp(fb.alpha[t - 1][p] + lat.trans[p][l] + lat.emit[t][l] + fb.beta[t][l] - fb.log_z);
          grad[a_off + index_of(y[t - 1]) * kNumLabels + index_of(y[t])] -= 1.0;
        }
      }
    }
    const double inv_var = 1.0 / (model_.l2sigma() * model_.l2sigma());
    double reg = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      reg += theta[j] * theta[j];
      grad[j] += theta[j] * inv_var;
    }
    return nll + 0.5 * reg * inv_var;
  }

 private:
  SequenceModel model_;
  std::vector<std::vector<std::vector<std::uint32_t>>> ids_;
  std::vector<LabelSeq> labels_;
};

inline bool operator==(const SequenceModel& a, const SequenceModel& b) {
  return a.templates() == b.templates() && a.lexicon() == b.lexicon() && a.l2sigma() == b.l2sigma() &&
         a.attributes() == b.attributes() && a.theta() == b.theta();
}

struct TrainReport {
  opt::LbfgsResult optimizer;
};

// Labels are read from each sentence's working annotation; gold is never consulted.
inline SequenceModel train(const std::vector<Sentence>& labeled, const TrainConfig& cfg = {},
                           TrainReport* report = nullptr) {
  if (labeled.empty()) throw std::invalid_argument("train: no labeled sentences");
  if (!(cfg.l2sigma > 0)) throw std::invalid_argument("train: l2sigma must be positive");
  std::vector<const Sentence*> ptrs;
  std::vector<LabelSeq> labels;
  bool any_entity = false;
  for (const auto& s : labeled) {
    if (!s.working) throw std::invalid_argument("train: sentence " + std::to_string(s.id) + " has no labels");
    if (s.working->size() != s.size())
      throw std::invalid_argument("train: label length mismatch in sentence " + std::to_string(s.id));
    if (!is_valid_bio(*s.working)) throw std::invalid_argument("train: invalid BIO in sentence " + std::to_string(s.id));
    any_entity = any_entity || entity_count(*s.working) > 0;
    ptrs.push_back(&s);
    labels.push_back(*s.working);
  }
  if (!any_entity) diag::warn("training set contains no entities; the model will predict all O");

  SequenceModel model(cfg.templates, cfg.lexicon, cfg.l2sigma, ptrs);
  Objective objective(model, ptrs, labels);
  std::vector<double> theta(model.num_params(), 0.0);
  opt::LbfgsConfig lc;
  lc.max_iter = cfg.max_iter;
  lc.tol = cfg.tol;
  auto res = opt::minimize([&](const std::vector<double>& x, std::vector<double>& g) { return objective(x, g); }, theta, lc);
  model.mutable_theta() = std::move(theta);
  if (report) report->optimizer = std::move(res);
  return model;
}

inline LabelSeq decode(const SequenceModel& model, const Sentence& s) { return viterbi(model.lattice(s)); }

struct L2Selection {
  double l2sigma = 1.0;
  std::vector<std::pair<double, double>> heldout_nll;  // (l2sigma, NLL) per grid point
};

// Picks the prior width with the lowest held-out negative log-likelihood; ties
// go to the narrower prior. Both sets are read from their working labels.
inline L2Selection select_l2sigma(const std::vector<Sentence>& train_set, const std::vector<Sentence>& heldout,
                                  const std::vector<double>& grid, TrainConfig cfg = {}) {
  if (grid.empty()) throw std::invalid_argument("select_l2sigma: empty grid");
  if (heldout.empty()) throw std::invalid_argument("select_l2sigma: empty held-out set");
  L2Selection out;
  double best = std::numeric_limits<double>::infinity();
  for (double sigma : grid) {
    cfg.l2sigma = sigma;
    const SequenceModel m = train(train_set, cfg);
    double nll = 0;
    for (const auto& s : heldout) {
      if (!s.working) throw std::invalid_argument("select_l2sigma: held-out sentence without labels");
      const Lattice lat = m.lattice(s);
      nll += log_partition(lat) - lat.score(*s.working);
    }
    out.heldout_nll.emplace_back(sigma, nll);
    if (nll < best || (nll == best && sigma < out.l2sigma)) {
      best = nll;
      out.l2sigma = sigma;
    }
  }
  return out;
}

inline NBest nbest(const SequenceModel& model, const Sentence& s, std::size_t n) { return nbest(model.lattice(s), n); }

// p(y|s) under the model.
inline double probability(const SequenceModel& model, const Sentence& s, const LabelSeq& y) {
  auto lat = model.lattice(s);
  return std::exp(lat.score(y) - log_partition(lat));
}

inline double sequence_entropy(const NBest& nb, std::size_t n) {
  if (n == 1) {
    diag::warn("n-best entropy with n = 1 is always 0");
    return 0.0;
  }
  return nbest_entropy(nb.probs);
}

inline double sequence_entropy(const SequenceModel& model, const Sentence& s, std::size_t n) {
  if (n < 1) throw std::invalid_argument("sequence_entropy: n must be >= 1");
  return sequence_entropy(nbest(model, s, n), n);
}

inline double sequence_self_info(const SequenceModel& model, const Sentence& s, std::size_t rank, std::size_t n = 2) {
  if (rank < 1 || rank > 2) throw std::invalid_argument("sequence_self_info: rank must be 1 or 2");
  return self_information(nbest(model, s, std::max<std::size_t>(n, 2)), rank);
}

// --- persistence -----------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const SequenceModel& m) {
  nlohmann::json tpl = nlohmann::json::array();
  for (Template t : m.templates().templates) tpl.push_back(std::string(to_string(t)));
  return {{"format", "sparsent-crf"},
          {"version", kModelFormatVersion},
          {"labels", {"B", "I", "O"}},
          {"templates", tpl},
          {"window_radius", m.templates().window_radius},
          {"max_affix", m.templates().max_affix},
          {"l2sigma", m.l2sigma()},
          {"lexicon", m.lexicon()},
          {"attributes", m.attributes()},
          {"theta", m.theta()}};
}

inline SequenceModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "sparsent-crf") throw std::runtime_error("not a sparsent CRF model");
  if (j.at("version").get<int>() != kModelFormatVersion)
    throw std::runtime_error("unsupported model version " + j.at("version").dump());
  FeatureTemplateSet tpl;
  for (const auto& t : j.at("templates")) tpl.templates.push_back(template_from_string(t.get<std::string>()));
  tpl.window_radius = j.at("window_radius").get<std::size_t>();
  tpl.max_affix = j.at("max_affix").get<std::size_t>();
  return SequenceModel(std::move(tpl), j.at("lexicon").get<std::set<std::string>>(), j.at("l2sigma").get<double>(),
                       j.at("attributes").get<std::vector<std::string>>(), j.at("theta").get<std::vector<double>>());
}

inline void save_model(const SequenceModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model: " + path);
  out << to_json(m).dump() << '\n';
}

inline SequenceModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model: " + path);
  return model_from_json(nlohmann::json::parse(in));
}

}  // namespace sparsent::crf
