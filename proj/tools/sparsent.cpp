// Command-line entry points: npex, expand, train, tag, simulate, serve, fixture.
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sparsent/corpus.hpp"
#include "sparsent/crf.hpp"
#include "sparsent/esegraph.hpp"
#include "sparsent/featurize.hpp"
#include "sparsent/fixture.hpp"
#include "sparsent/harness.hpp"
#include "sparsent/npex.hpp"
#include "sparsent/service.hpp"

namespace {

using namespace sparsent;

struct CorpusArgs {
  std::string path;
  std::string format = "conll2003";
  std::string entity_class;
  bool xpos = false;

  void add(CLI::App* app) {
    app->add_option("--in", path, "Input corpus")->required()->check(CLI::ExistingFile);
    app->add_option("--format", format, "conll2003 or conllu")->check(CLI::IsMember({"conll2003", "conllu"}));
    app->add_option("--class", entity_class, "Target entity class");
    app->add_flag("--xpos", xpos, "CoNLL-U: use XPOS instead of UPOS");
  }

  Pool load() const {
    LoadOptions opts;
    opts.entity_class = entity_class;
    opts.conllu_use_xpos = xpos;
    Pool p = load_corpus(path, corpus_format_from_string(format), opts);
    if (!entity_class.empty()) p = restrict_to_class(std::move(p), entity_class);
    return p;
  }
};

// Writes to the named file, or stdout for "-" / empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary);
      if (!file_) throw std::runtime_error("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

std::string fmt_score(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(6) << v;
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse entity annotation toolkit"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every random choice (SVD, sampling, fixtures)");

  // npex
  CorpusArgs npex_in;
  std::string npex_out;
  bool relax_jj = false;
  auto* npex_cmd = app.add_subcommand("npex", "Extract noun phrases: surface<TAB>count");
  npex_in.add(npex_cmd);
  npex_cmd->add_option("--out", npex_out, "Output TSV (default stdout)");
  npex_cmd->add_flag("--relax-jj", relax_jj, "Accept lowercase adjectives");

  // expand
  CorpusArgs expand_in;
  std::vector<std::string> expand_seeds;
  std::size_t expand_k = 30;
  std::string scheme = "tfidf", sim = "context", lexicon_path, expand_out;
  bool ensemble = true;
  int grouping = 6;
  std::size_t cf_dims = 50, cf_buckets = 10, cf_window = 2;
  auto* expand_cmd = app.add_subcommand("expand", "Entity set expansion: rank<TAB>surface<TAB>score");
  expand_in.add(expand_cmd);
  expand_cmd->add_option("--seed,--entity", expand_seeds, "Seed noun phrase (repeatable); the global --seed goes before the subcommand")->required();
  expand_cmd->add_option("--k", expand_k, "List size");
  expand_cmd->add_option("--scheme", scheme, "count, tfidf or tfidfSum")->check(CLI::IsMember({"count", "tfidf", "tfidfSum"}));
  expand_cmd->add_option("--sim", sim, "cosine or context")->check(CLI::IsMember({"cosine", "context"}));
  expand_cmd->add_flag("--ensemble,!--no-ensemble", ensemble, "Leave-one-family-out ensemble (default on)");
  expand_cmd->add_option("--grouping", grouping, "Coarse family grouping: 6 or 5")->check(CLI::IsMember({5, 6}));
  expand_cmd->add_option("--lexicon", lexicon_path, "Sense lexicon TSV (lemma<TAB>class)")->check(CLI::ExistingFile);
  expand_cmd->add_option("--cf-dims", cf_dims, "Contextual embedding dimensions");
  expand_cmd->add_option("--cf-buckets", cf_buckets, "Quantile buckets per dimension");
  expand_cmd->add_option("--cf-window", cf_window, "Co-occurrence window");
  expand_cmd->add_flag("--relax-jj", relax_jj, "Accept lowercase adjectives");
  expand_cmd->add_option("--out", expand_out, "Output TSV (default stdout)");

  // train
  CorpusArgs train_in;
  std::string model_out;
  crf::TrainConfig train_cfg;
  auto* train_cmd = app.add_subcommand("train", "Train a CRF on the corpus gold labels");
  train_in.add(train_cmd);
  train_cmd->add_option("--out", model_out, "Model JSON")->required();
  train_cmd->add_option("--l2sigma", train_cfg.l2sigma, "Gaussian prior width");
  train_cmd->add_option("--max-iter", train_cfg.max_iter, "Optimizer iterations");
  train_cmd->add_option("--tol", train_cfg.tol, "Relative gradient tolerance");

  // tag
  CorpusArgs tag_in;
  std::string tag_model, tag_out, tag_scheme = "bio";
  auto* tag_cmd = app.add_subcommand("tag", "Apply a model and write CoNLL-2003");
  tag_in.add(tag_cmd);
  tag_cmd->add_option("--model", tag_model, "Model JSON")->required()->check(CLI::ExistingFile);
  tag_cmd->add_option("--out", tag_out, "Output (default stdout)");
  tag_cmd->add_option("--scheme", tag_scheme, "bio or io")->check(CLI::IsMember({"bio", "io"}));

  // simulate
  std::string sim_config, sim_out, sim_mode, sim_summary;
  auto* sim_cmd = app.add_subcommand("simulate", "Emulated annotation run: iteration,labeled,auto,sigma,ec,f");
  sim_cmd->add_option("--config", sim_config, "Experiment JSON")->check(CLI::ExistingFile);
  sim_cmd->add_option("--mode", sim_mode, "Override mode: AR, EAL, FA, HFA, UFA");
  sim_cmd->add_option("--out", sim_out, "Curves CSV (default stdout)");
  sim_cmd->add_option("--summary", sim_summary, "Write a JSON run summary");

  // serve
  std::string serve_config;
  std::optional<int> serve_port;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP annotation service");
  serve_cmd->add_option("--config", serve_config, "Service JSON")->check(CLI::ExistingFile);
  serve_cmd->add_option("--port", serve_port, "Port (overrides config and environment)");

  // fixture
  fixture::FixtureConfig fx;
  std::string fx_out;
  auto* fx_cmd = app.add_subcommand("fixture", "Write a synthetic corpus in CoNLL-2003");
  fx_cmd->add_option("--out", fx_out, "Output (default stdout)");
  fx_cmd->add_option("--sentences", fx.sentences, "Number of sentences");
  fx_cmd->add_option("--sparsity", fx.sparsity, "Fraction of sentences with entities")->check(CLI::Range(0.0, 1.0));
  fx_cmd->add_option("--types", fx.entity_types, "Distinct entity names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*npex_cmd) {
      NpexOptions opts;
      opts.relax_jj_case = relax_jj;
      Output out(npex_out);
      for (const auto& np : collect_nps(npex_in.load(), opts)) out.stream() << np.surface << '\t' << np.count << '\n';
    } else if (*expand_cmd) {
      NpexOptions nopts;
      nopts.relax_jj_case = relax_jj;
      const Pool pool = strip_gold(expand_in.load());
      const auto nps = collect_nps(pool, nopts);
      FeaturizeConfig fc;
      fc.cf.dims = cf_dims;
      fc.cf.buckets = cf_buckets;
      fc.cf.window = cf_window;
      if (app.count("--seed")) fc.cf.seed = seed;
      const SenseLexicon lex = lexicon_path.empty() ? SenseLexicon{} : load_sense_lexicon(lexicon_path);
      ExpandConfig ec;
      ec.scheme = weight_scheme_from_string(scheme);
      ec.sim = similarity_from_string(sim);
      ec.ensemble = ensemble;
      ec.k = expand_k;
      ec.grouping = grouping == 5 ? FamilyGrouping::Five : FamilyGrouping::Six;
      const auto ranked = expand(expand_seeds, featurize_all(pool, nps, lex, fc), ec, np_counts(nps));
      Output out(expand_out);
      for (std::size_t i = 0; i < ranked.entries.size(); ++i)
        out.stream() << i + 1 << '\t' << ranked.entries[i].surface << '\t' << fmt_score(ranked.entries[i].score) << '\n';
    } else if (*train_cmd) {
      Pool pool = train_in.load();
      std::vector<Sentence> labeled;
      for (auto& s : pool.sentences) {
        if (!s.gold) throw std::runtime_error("train: the corpus carries no entity labels");
        s.working = repair_bio(*s.gold);
        s.state = SentenceState::HumanLabeled;
        labeled.push_back(std::move(s));
      }
      crf::save_model(crf::train(labeled, train_cfg), model_out);
    } else if (*tag_cmd) {
      const auto model = crf::load_model(tag_model);
      const Pool pool = strip_gold(tag_in.load());
      Output out(tag_out);
      for (const auto& s : pool.sentences)
        write_conll2003_sentence(out.stream(), s, repair_bio(crf::decode(model, s)), tag_in.entity_class,
                                 tag_scheme == "io" ? TagScheme::IO : TagScheme::BIO);
    } else if (*sim_cmd) {
      harness::ExperimentFile ef;
      if (!sim_config.empty()) ef = harness::load_experiment(sim_config);
      if (!sim_mode.empty()) {
        ef.experiment.mode = mode_from_string(sim_mode);
        ef.experiment.threshold = is_auto_mode(ef.experiment.mode)
                                      ? std::optional<double>(default_threshold(ef.experiment.mode))
                                      : std::nullopt;
      }
      if (app.count("--seed")) {
        ef.experiment.rng_seed = seed;
        ef.experiment.featurize.cf.seed = seed;
        ef.fixture.seed = seed;
      }
      const Pool pool = harness::experiment_pool(ef);
      const SenseLexicon lex = ef.sense_lexicon ? load_sense_lexicon(*ef.sense_lexicon) : SenseLexicon{};
      const auto result = harness::run_experiment(ef.experiment, pool, lex);
      Output out(sim_out);
      out.stream() << harness::curves_csv(result.history);
      if (!sim_summary.empty()) {
        std::ofstream sj(sim_summary);
        sj << nlohmann::json{{"mode", to_string(ef.experiment.mode)},
                             {"seed_entity", result.seed_entity},
                             {"confirmed", result.confirmed},
                             {"p_at_k", result.p_at_k},
                             {"bootstrap_size", result.bootstrap_size},
                             {"percentage_cut", result.percentage_cut},
                             {"final_f", result.final_f}}
                  .dump(2)
           << '\n';
      }
    } else if (*serve_cmd) {
      service::ServiceConfig cfg;
      if (!serve_config.empty()) {
        std::ifstream in(serve_config);
        cfg = service::config_from_json(nlohmann::json::parse(in));
      }
      cfg = service::apply_env(cfg);
      if (serve_port) cfg.port = *serve_port;
      service::Service svc(cfg);
      httplib::Server srv;
      svc.bind(srv);
      std::cerr << "listening on " << cfg.host << ':' << cfg.port << '\n';
      if (!srv.listen(cfg.host, cfg.port)) throw std::runtime_error("cannot listen on port " + std::to_string(cfg.port));
    } else if (*fx_cmd) {
      if (app.count("--seed")) fx.seed = seed;
      const Pool pool = fixture::generate(fx);
      Output out(fx_out);
      for (const auto& s : pool.sentences) write_conll2003_sentence(out.stream(), s, *s.gold, pool.entity_class);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
