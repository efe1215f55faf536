#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cctype>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparsent/corpus.hpp"

// Seeded generator for a synthetic biomedical-style pool with one sparse entity
// class (virus names). Members share word shapes and contexts; distractors reuse
// the same capitalized/code-like surface patterns in non-entity contexts.
namespace sparsent::fixture {

struct FixtureConfig {
  std::size_t sentences = 1000;
  double sparsity = 0.10;  // fraction of sentences mentioning the class
  std::size_t entity_types = 40;
  std::uint64_t seed = 1;
  std::string entity_class = "VIRUS";
};

namespace detail {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  template <class T>
  const T& pick(const std::vector<T>& v) { return v[below(v.size())]; }

 private:
  std::mt19937_64 gen_;
};

struct Piece {
  std::string surface;
  std::string pos;
};

// '@' marks the slot for an entity (or a second entity with '@2'); '$' slots
// take a filler from the named vocabulary.
struct TemplateTok {
  std::string text;
  std::string pos;
};

inline std::vector<TemplateTok> parse_template(std::string_view t) {
  std::vector<TemplateTok> out;
  std::size_t i = 0;
  while (i < t.size()) {
    while (i < t.size() && t[i] == ' ') ++i;
    std::size_t j = t.find(' ', i);
    if (j == std::string_view::npos) j = t.size();
    if (j > i) {
      std::string_view tok = t.substr(i, j - i);
      auto slash = tok.rfind('/');
      if (slash == std::string_view::npos || slash == 0) throw std::logic_error("bad template token");
      out.push_back({std::string(tok.substr(0, slash)), std::string(tok.substr(slash + 1))});
    }
    i = j;
  }
  return out;
}

inline const std::vector<std::string>& entity_templates() {
  static const std::vector<std::string> t = {
      "Cells/NNS were/VBD infected/VBN with/IN @/X ./.",
      "@/X replicates/VBZ in/IN $adj/JJ $cell/NNS ./.",
      "Expression/NN of/IN @/X was/VBD detected/VBN in/IN $num/CD patients/NNS ./.",
      "We/PRP isolated/VBD @/X from/IN $sample/NNS ./.",
      "Antibodies/NNS against/IN @/X were/VBD measured/VBN in/IN the/DT serum/NN ./.",
      "Infection/NN by/IN @/X and/CC @2/X was/VBD reported/VBN ./.",
      "The/DT @/X strain/NN was/VBD sequenced/VBN ./.",
      "Patients/NNS infected/VBN with/IN @/X developed/VBD fever/NN ./.",
      "@/X was/VBD detected/VBN in/IN $num/CD of/IN $num/CD samples/NNS ./.",
      "Replication/NN of/IN @/X was/VBD inhibited/VBN by/IN $drug/NNP ./.",
      "The/DT $adj/JJ $cell/NNS were/VBD exposed/VBN to/TO @/X for/IN $num/CD hours/NNS ./.",
      "Vaccination/NN reduced/VBD the/DT spread/NN of/IN @/X in/IN $city/NNP ./.",
  };
  return t;
}

inline const std::vector<std::string>& background_templates() {
  static const std::vector<std::string> t = {
      "The/DT patient/NN was/VBD treated/VBN with/IN $drug/NNP for/IN $num/CD days/NNS ./.",
      "Samples/NNS were/VBD analyzed/VBN with/IN the/DT $device/NNP analyzer/NN ./.",
      "Dr./NNP $name/NNP reported/VBD the/DT results/NNS in/IN $city/NNP ./.",
      "The/DT cells/NNS were/VBD cultured/VBN in/IN medium/NN for/IN $num/CD hours/NNS ./.",
      "Levels/NNS of/IN $gene/NNP increased/VBD after/IN treatment/NN with/IN $drug/NNP ./.",
      "We/PRP measured/VBD the/DT expression/NN of/IN $gene/NNP in/IN $cell/NNS ./.",
      "Cells/NNS were/VBD incubated/VBN with/IN $drug/NNP ./.",
      "The/DT study/NN was/VBD conducted/VBN in/IN $city/NNP in/IN $year/CD ./.",
      "Mutations/NNS in/IN $gene/NNP were/VBD detected/VBN in/IN $num/CD of/IN $num/CD samples/NNS ./.",
      "Protein/NN levels/NNS were/VBD measured/VBN by/IN $device/NNP ./.",
      "The/DT virus/NN spread/VBD rapidly/RB in/IN $city/NNP ./.",
      "$gene/NNP was/VBD expressed/VBN in/IN $adj/JJ $cell/NNS ./.",
      "We/PRP isolated/VBD RNA/NNP from/IN $sample/NNS ./.",
      "The/DT $polymer/NN activity/NN was/VBD low/JJ in/IN $cell/NNS ./.",
      "Patients/NNS treated/VBN with/IN $drug/NNP developed/VBD $symptom/NN ./.",
      "The/DT $adj/JJ $cell/NNS were/VBD exposed/VBN to/TO $drug/NNP for/IN $num/CD hours/NNS ./.",
      "$name/NNP and/CC $name/NNP described/VBD the/DT $polymer/NN ./.",
      "Serum/NN samples/NNS were/VBD stored/VBN at/IN $num/CD degrees/NNS ./.",
  };
  return t;
}

// Closed-class fillers are fixed; open-class distractor names (drugs, devices,
// genes, people) are drawn per fixture so the pool is not a handful of repeated
// sentences.
class Vocab {
 public:
  explicit Vocab(Rng& rng) {
    static const std::vector<std::string> syll = {"zor", "ba", "fel", "ta", "cor", "ti", "ha", "lo", "mi", "ne",
                                                  "pa", "ra", "vel", "co", "taz", "mo", "sul", "di", "qua", "ren"};
    static const std::vector<std::string> drug_end = {"cin", "mide", "vex", "drin", "xol", "tine", "rin", "mol", "zole", "pril"};
    static const std::string caps = "ABCDEFGHJKLMNPQRSTUWXYZ";
    auto unique_fill = [&](std::vector<std::string>& out, std::size_t n, auto make) {
      std::set<std::string> seen;
      while (out.size() < n) {
        std::string w = make();
        if (seen.insert(w).second) out.push_back(std::move(w));
      }
    };
    unique_fill(drugs_, 30, [&] {
      std::string w = rng.pick(syll) + rng.pick(syll) + rng.pick(drug_end);
      w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
      return w;
    });
    unique_fill(devices_, 20, [&] {
      std::string w{caps[rng.below(caps.size())], caps[rng.below(caps.size())], '-'};
      w += std::to_string(100 + 10 * rng.below(90));
      return w;
    });
    unique_fill(genes_, 30, [&] {
      std::string w;
      const std::size_t len = 3 + rng.below(2);
      for (std::size_t i = 0; i < len; ++i) w.push_back(caps[rng.below(caps.size())]);
      return w + std::to_string(1 + rng.below(12));
    });
    unique_fill(names_, 30, [&] {
      std::string w = rng.pick(syll) + rng.pick(syll);
      w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
      return w;
    });
  }

  const std::vector<std::string>& operator[](std::string_view name) const {
    static const std::map<std::string, std::vector<std::string>, std::less<>> fixed = {
        {"adj", {"epithelial", "human", "primary", "renal", "hepatic", "neural", "murine", "immune", "bronchial", "dermal"}},
        {"cell", {"cells", "fibroblasts", "macrophages", "hepatocytes", "lymphocytes", "neurons", "monocytes", "keratinocytes"}},
        {"num", {"2", "3", "5", "7", "12", "24", "48", "96", "15", "30", "6", "10", "72"}},
        {"year", {"1998", "2001", "2004", "2009", "2012", "2015", "2017"}},
        {"sample", {"swabs", "biopsies", "lesions", "tissues", "specimens", "aspirates"}},
        {"city", {"Boston", "Lyon", "Osaka", "Nairobi", "Perth", "Leipzig", "Quito", "Hanoi", "Porto", "Dakar"}},
        {"polymer", {"polymerase", "transcriptase", "protease", "integrase", "helicase", "kinase"}},
        {"symptom", {"fever", "rash", "fatigue", "nausea", "cough"}},
    };
    if (name == "drug") return drugs_;
    if (name == "device") return devices_;
    if (name == "gene") return genes_;
    if (name == "name") return names_;
    auto it = fixed.find(name);
    if (it == fixed.end()) throw std::logic_error("unknown fixture vocabulary: " + std::string(name));
    return it->second;
  }

 private:
  std::vector<std::string> drugs_, devices_, genes_, names_;
};

// Entity kinds: code ("HXV-3"), code + letter ("KRV-7 B"), lowercase -virus
// word ("lentavirus"), proper name + "virus" ("Sendai virus").
inline std::vector<Piece> make_entity(Rng& rng, std::size_t kind) {
  static const std::string letters = "ABCDEFGHJKLMNPRSTVWXZ";
  static const std::vector<std::string> syll = {"len", "ta", "ro", "cor", "ma", "vi", "pa", "ne", "sar", "lo", "zu", "ka"};
  static const std::vector<std::string> place = {"Sendai", "Marburg", "Hendra", "Nipah", "Lassa", "Rift", "Kyasanur", "Sindbis",
                                                 "Ebola", "Hantaan", "Junin", "Machupo"};
  auto code = [&] {
    std::string s;
    const std::size_t len = 2 + rng.below(3);
    for (std::size_t i = 0; i < len; ++i) s.push_back(letters[rng.below(letters.size())]);
    s += "V-";
    s += std::to_string(1 + rng.below(9));
    return s;
  };
  switch (kind) {
    case 0: return {{code(), "NNP"}};
    case 1: return {{code(), "NNP"}, {std::string(1, letters[rng.below(letters.size())]), "NNP"}};
    case 2: {
      std::string s = rng.pick(syll) + rng.pick(syll);
      return {{s + "virus", "NN"}};
    }
    default: return {{rng.pick(place), "NNP"}, {"virus", "NN"}};
  }
}

inline std::string joined(const std::vector<Piece>& e) {
  std::string s;
  for (const auto& p : e) s += (s.empty() ? "" : " ") + p.surface;
  return s;
}

}  // namespace detail

// Returns a pool with gold labels for cfg.entity_class and all states unlabeled.
inline Pool generate(const FixtureConfig& cfg) {
  if (cfg.sparsity < 0 || cfg.sparsity > 1) throw std::invalid_argument("fixture sparsity must lie in [0,1]");
  if (cfg.entity_types < 1) throw std::invalid_argument("fixture needs at least one entity type");
  detail::Rng rng(cfg.seed);

  std::vector<std::vector<detail::Piece>> types;
  std::set<std::string> seen;
  while (types.size() < cfg.entity_types) {
    const double u = rng.unit();
    const std::size_t kind = u < 0.5 ? 0 : u < 0.65 ? 1 : u < 0.85 ? 2 : 3;
    auto e = detail::make_entity(rng, kind);
    if (seen.insert(detail::joined(e)).second) types.push_back(std::move(e));
  }
  // Zipf-like mention frequencies.
  std::vector<double> cumulative;
  double total = 0;
  for (std::size_t r = 0; r < types.size(); ++r) cumulative.push_back(total += 1.0 / std::pow(r + 1.0, 0.8));
  auto draw_type = [&]() -> const std::vector<detail::Piece>& {
    const double u = rng.unit() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return types[std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), types.size() - 1)];
  };

  const auto n_entity = static_cast<std::size_t>(std::llround(cfg.sparsity * static_cast<double>(cfg.sentences)));
  std::vector<bool> has_entity(cfg.sentences, false);
  std::fill_n(has_entity.begin(), std::min(n_entity, cfg.sentences), true);
  for (std::size_t i = has_entity.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    const bool tmp = has_entity[i - 1];
    has_entity[i - 1] = has_entity[j];
    has_entity[j] = tmp;
  }

  const detail::Vocab vocab(rng);
  std::vector<std::vector<detail::TemplateTok>> ent_tpl, bg_tpl;
  for (const auto& t : detail::entity_templates()) ent_tpl.push_back(detail::parse_template(t));
  for (const auto& t : detail::background_templates()) bg_tpl.push_back(detail::parse_template(t));

  Pool pool;
  pool.entity_class = cfg.entity_class;
  const std::string b_tag = "B-" + cfg.entity_class, i_tag = "I-" + cfg.entity_class;
  for (std::size_t sid = 0; sid < cfg.sentences; ++sid) {
    const auto& tpl = has_entity[sid] ? rng.pick(ent_tpl) : rng.pick(bg_tpl);
    Sentence s;
    s.id = static_cast<SentenceId>(sid);
    std::vector<std::string> tags;
    for (const auto& tt : tpl) {
      if (tt.text == "@" || tt.text == "@2") {
        const auto& e = draw_type();
        for (std::size_t k = 0; k < e.size(); ++k) {
          s.tokens.push_back({e[k].surface, e[k].pos, std::nullopt, std::nullopt, std::nullopt});
          tags.push_back(k == 0 ? b_tag : i_tag);
        }
      } else if (tt.text.front() == '$') {
        s.tokens.push_back({rng.pick(vocab[std::string_view(tt.text).substr(1)]), tt.pos, std::nullopt, std::nullopt, std::nullopt});
        tags.push_back("O");
      } else {
        s.tokens.push_back({tt.text, tt.pos, std::nullopt, std::nullopt, std::nullopt});
        tags.push_back("O");
      }
    }
    s.gold = sparsent::detail::project_tags(tags, cfg.entity_class);
    s.gold_tags = std::move(tags);
    pool.sentences.push_back(std::move(s));
  }
  return pool;
}

}  // namespace sparsent::fixture
