#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "sparsent/esegraph.hpp"
#include "oracles.hpp"

using namespace sparsent;

using namespace oracle;

TEST(Graph, EdgeWeightWorkedExamples) {
  std::vector<FeatureCooc> coocs;
  for (int i = 0; i < 10; ++i) coocs.push_back(cooc("n" + std::to_string(i), FeatureFamily::LS, "g" + std::to_string(i), 3));
  coocs.push_back(cooc("n0", FeatureFamily::LS, "f", 1));
  auto tfidf = build_graph(coocs, WeightScheme::Tfidf);
  EXPECT_NEAR(tfidf.weight("n0", {FeatureFamily::LS, "f"}), 1.5960, 5e-5);
  EXPECT_NEAR(tfidf.weight("n0", {FeatureFamily::LS, "f"}), std::log(2.0) * std::log(10.0), 1e-12);
  EXPECT_EQ(build_graph(coocs, WeightScheme::Count).weight("n3", {FeatureFamily::LS, "g3"}), 3.0);

  std::vector<FeatureCooc> everywhere;
  for (int i = 0; i < 10; ++i) everywhere.push_back(cooc("n" + std::to_string(i), FeatureFamily::LS, "all", 1));
  auto sum = build_graph(everywhere, WeightScheme::TfidfSum);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sum.weight("n" + std::to_string(i), {FeatureFamily::LS, "all"}), 0.0);
}

TEST(Graph, BuildErrors) {
  EXPECT_THROW(build_graph({}, WeightScheme::Count), std::invalid_argument);
  std::vector<FeatureCooc> one{cooc("n", FeatureFamily::LS, "f", 1)};
  EXPECT_THROW(build_graph(one, WeightScheme::Tfidf), std::invalid_argument);
  EXPECT_NO_THROW(build_graph(one, WeightScheme::Count));
}

TEST(Graph, SimilarityWorkedExamples) {
  std::vector<FeatureCooc> coocs{cooc("n1", FeatureFamily::LS, "f1", 1), cooc("n1", FeatureFamily::LS, "f2", 1),
                                 cooc("n2", FeatureFamily::LS, "f1", 1), cooc("n3", FeatureFamily::LS, "f1", 2),
                                 cooc("n3", FeatureFamily::LS, "f2", 1), cooc("n4", FeatureFamily::LS, "f1", 1),
                                 cooc("n4", FeatureFamily::LS, "f2", 3), cooc("n5", FeatureFamily::LS, "f9", 1)};
  auto g = build_graph(coocs, WeightScheme::Count);
  EXPECT_NEAR(sim_cosine("n1", "n2", g), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(sim_context("n3", "n4", g), 0.4, 1e-12);
  EXPECT_NEAR(sim_cosine("n1", "n1", g), 1.0, 1e-12);
  EXPECT_NEAR(sim_context("n1", "n1", g), 1.0, 1e-12);
  EXPECT_EQ(sim_cosine("n1", "n5", g), 0.0);
  EXPECT_EQ(sim_context("n1", "n5", g), 0.0);
}

TEST(Graph, AllZeroVectorsScoreZero) {
  std::vector<FeatureCooc> coocs{cooc("a", FeatureFamily::LS, "all", 1), cooc("b", FeatureFamily::LS, "all", 1)};
  auto g = build_graph(coocs, WeightScheme::Tfidf);
  EXPECT_EQ(sim_cosine("a", "b", g), 0.0);
  EXPECT_EQ(sim_context("a", "b", g), 0.0);
}

TEST(Graph, SimilaritiesMatchBruteForceOnRandomGraphs) {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    auto rg = random_graph(rng);
    for (WeightScheme scheme : {WeightScheme::Count, WeightScheme::Tfidf, WeightScheme::TfidfSum}) {
      auto g = build_graph(rg.coocs, scheme, rg.counts);
      auto w = oracle_weights(rg.coocs, scheme);
      ASSERT_EQ(g.num_nps(), w.size());
      for (const auto& [np, row] : w)
        for (const auto& [f, x] : row) ASSERT_NEAR(g.weight(np, f), x, 1e-12);
      for (std::size_t i = 0; i < g.num_nps(); ++i)
        for (std::size_t j = 0; j < g.num_nps(); ++j) {
          const auto &a = g.surface(i), &b = g.surface(j);
          for (Similarity sim : {Similarity::Cosine, Similarity::Context}) {
            const double got = sim == Similarity::Cosine ? sim_cosine(a, b, g) : sim_context(a, b, g);
            ASSERT_NEAR(got, oracle_sim(w, a, b, sim), 1e-10);
            ASSERT_GE(got, 0.0);
            ASSERT_LE(got, 1.0 + 1e-12);
          }
        }
    }
  }
}

TEST(Graph, SymmetryAndSelfSimilarityUnderFuzzing) {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    auto rg = random_graph(rng, 20);
    auto g = build_graph(rg.coocs, WeightScheme::Count);
    for (std::size_t i = 0; i < g.num_nps(); ++i) {
      EXPECT_NEAR(sim_cosine(g.edges(i), g.edges(i)), 1.0, 1e-12);
      EXPECT_NEAR(sim_context(g.edges(i), g.edges(i)), 1.0, 1e-12);
      for (std::size_t j = 0; j < g.num_nps(); ++j) {
        EXPECT_EQ(sim_cosine(g.edges(i), g.edges(j)), sim_cosine(g.edges(j), g.edges(i)));
        EXPECT_EQ(sim_context(g.edges(i), g.edges(j)), sim_context(g.edges(j), g.edges(i)));
      }
    }
  }
}

TEST(Rank, PlainMatchesBruteForceOrder) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    auto rg = random_graph(rng);
    for (WeightScheme scheme : {WeightScheme::Count, WeightScheme::Tfidf}) {
      for (Similarity sim : {Similarity::Cosine, Similarity::Context}) {
        auto g = build_graph(rg.coocs, scheme, rg.counts);
        auto w = oracle_weights(rg.coocs, scheme);
        const std::string seed = g.surface(rng() % g.num_nps());
        std::vector<std::tuple<double, std::size_t, std::string>> all;
        for (const auto& [np, _] : w)
          if (np != seed) all.emplace_back(oracle_sim(w, seed, np, sim), rg.counts[np], np);
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
          if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
          if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) > std::get<1>(b);
          return std::get<2>(a) < std::get<2>(b);
        });
        const std::size_t k = 1 + rng() % 40;
        auto ranked = rank_plain(seed, g, sim, k);
        ASSERT_EQ(ranked.entries.size(), std::min(k, all.size()));
        for (std::size_t r = 0; r < ranked.entries.size(); ++r) {
          const auto& e = ranked.entries[r];
          EXPECT_NEAR(e.score, std::get<0>(all[r]), 1e-10);
          if (e.surface != std::get<2>(all[r]))  // only a floating-point near-tie may reorder
            EXPECT_NEAR(oracle_sim(w, seed, e.surface, sim), std::get<0>(all[r]), 1e-12);
        }
        for (std::size_t r = 1; r < ranked.entries.size(); ++r)
          EXPECT_GE(ranked.entries[r - 1].score, ranked.entries[r].score);
      }
    }
  }
}

TEST(Rank, ScalingWeightsKeepsOrder) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    auto rg = random_graph(rng, 30);
    auto g = build_graph(rg.coocs, WeightScheme::Tfidf, rg.counts);
    const std::string seed = g.surface(0);
    const double factor = 0.01 + 50.0 * (rng() % 1000) / 1000.0;
    auto scaled = g.scaled(factor);
    for (Similarity sim : {Similarity::Cosine, Similarity::Context}) {
      auto a = rank_plain(seed, g, sim, 100), b = rank_plain(seed, scaled, sim, 100);
      ASSERT_EQ(a.entries.size(), b.entries.size());
      for (std::size_t r = 0; r < a.entries.size(); ++r) {
        EXPECT_NEAR(a.entries[r].score, b.entries[r].score, 1e-10);
        if (a.entries[r].surface != b.entries[r].surface) EXPECT_NEAR(a.entries[r].score, b.entries[r].score, 1e-12);
      }
    }
  }
}

TEST(Rank, CloneFirstAndLargeK) {
  std::vector<FeatureCooc> coocs{cooc("seed", FeatureFamily::LS, "f1", 2), cooc("seed", FeatureFamily::LS, "f2", 1),
                                 cooc("clone", FeatureFamily::LS, "f1", 2), cooc("clone", FeatureFamily::LS, "f2", 1),
                                 cooc("other", FeatureFamily::LS, "f2", 5), cooc("far", FeatureFamily::LS, "f3", 1)};
  auto g = build_graph(coocs, WeightScheme::Count);
  for (Similarity sim : {Similarity::Cosine, Similarity::Context}) {
    auto r = rank_plain("seed", g, sim, 30);
    ASSERT_EQ(r.entries.size(), 3u);
    EXPECT_EQ(r.entries[0].surface, "clone");
    EXPECT_NEAR(r.entries[0].score, 1.0, 1e-12);
    for (const auto& e : r.entries) EXPECT_NE(e.surface, "seed");
  }
}

TEST(Rank, SeedNotFoundListsNearestSurfaces) {
  std::vector<FeatureCooc> coocs{cooc("insulin", FeatureFamily::LS, "f", 1), cooc("Insulin", FeatureFamily::LS, "f", 1)};
  auto g = build_graph(coocs, WeightScheme::Count);
  try {
    rank_plain("insulln", g, Similarity::Cosine);
    FAIL();
  } catch (const SeedNotFound& e) {
    EXPECT_NE(std::string(e.what()).find("'insulin'"), std::string::npos);
  }
}

TEST(Ensemble, MeanReciprocalRankWorkedExample) {
  auto coocs = mrr_layout();
  EnsembleRanker ranker(coocs, WeightScheme::Count);
  ASSERT_EQ(ranker.num_sublists(), 3u);
  std::vector<std::size_t> ranks;
  for (const auto& g : ranker.subgraphs()) {
    auto r = rank_plain("seed", g, Similarity::Context, 30);
    for (std::size_t i = 0; i < r.entries.size(); ++i)
      if (r.entries[i].surface == "X") ranks.push_back(i + 1);
  }
  std::sort(ranks.begin(), ranks.end());
  EXPECT_EQ(ranks, (std::vector<std::size_t>{1, 2, 4}));

  auto ranked = rank_ensemble("seed", coocs, WeightScheme::Count, Similarity::Context, 30);
  double x = -1;
  for (const auto& e : ranked.entries)
    if (e.surface == "X") x = e.score;
  EXPECT_NEAR(x, (1.0 + 0.5 + 0.25) / 3.0, 1e-12);
  EXPECT_NEAR(x, 0.5833, 5e-5);
}

TEST(Ensemble, OutsideEveryTopKIsExcluded) {
  auto ranked = rank_ensemble("seed", mrr_layout(), WeightScheme::Count, Similarity::Context, 1);
  for (const auto& e : ranked.entries) EXPECT_GT(e.score, 0.0);
  std::set<std::string> seen;
  for (const auto& e : ranked.entries) seen.insert(e.surface);
  EXPECT_FALSE(seen.count("D3"));
}

TEST(Ensemble, IdenticalFamiliesDegenerateToPlain) {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<FeatureCooc> coocs;
    std::map<std::string, std::size_t> counts;
    const std::size_t n = 3 + rng() % 20;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string np = "np" + std::to_string(i);
      counts[np] = 1 + rng() % 4;
      for (std::size_t f = 0; f < 3; ++f) {
        const std::size_t c = rng() % 4;
        if (!c && f) continue;
        for (FeatureFamily fam : {FeatureFamily::LF_OF, FeatureFamily::LS, FeatureFamily::CF})
          coocs.push_back(cooc(np, fam, "f" + std::to_string(f), c + 1));
      }
    }
    const std::string seed = "np0";
    auto full = build_graph(coocs, WeightScheme::Count, counts);
    auto plain = rank_plain(seed, full, Similarity::Context, 30);
    auto ens = rank_ensemble(seed, coocs, WeightScheme::Count, Similarity::Context, 30, counts);
    std::vector<std::string> a, b;
    for (const auto& e : plain.entries) a.push_back(e.surface);
    for (const auto& e : ens.entries) b.push_back(e.surface);
    EXPECT_EQ(a, b);
  }
}

TEST(Ensemble, SingleFamilyFallsBackToPlain) {
  std::vector<FeatureCooc> coocs{cooc("a", FeatureFamily::LS, "x", 1), cooc("b", FeatureFamily::LS, "x", 2),
                                 cooc("c", FeatureFamily::LS, "y", 1)};
  EnsembleRanker r(coocs, WeightScheme::Count);
  EXPECT_TRUE(r.degenerate());
  auto got = rank_ensemble("a", coocs, WeightScheme::Count, Similarity::Cosine);
  auto want = rank_plain("a", build_graph(coocs, WeightScheme::Count), Similarity::Cosine);
  EXPECT_EQ(got.entries, want.entries);
}

TEST(Ensemble, FiveFamilyGroupingFoldsLexicalFeatures) {
  auto coocs = mrr_layout();
  EXPECT_EQ(EnsembleRanker(coocs, WeightScheme::Count, {}, FamilyGrouping::Six).num_sublists(), 3u);
  EXPECT_EQ(EnsembleRanker(coocs, WeightScheme::Count, {}, FamilyGrouping::Five).num_sublists(), 2u);
}

TEST(Expand, SingleSeedEqualsEnsembleAndRespectsK) {
  auto coocs = mrr_layout();
  ExpandConfig cfg;
  cfg.scheme = WeightScheme::Count;
  cfg.k = 30;
  auto got = expand({"seed"}, coocs, cfg);
  auto want = rank_ensemble("seed", coocs, WeightScheme::Count, Similarity::Context, 30);
  EXPECT_EQ(got.entries, want.entries);

  std::mt19937 rng(1);
  auto rg = random_graph(rng, 50);
  while (rg.counts.size() < 45) rg = random_graph(rng, 50);
  cfg.scheme = WeightScheme::Tfidf;
  cfg.ensemble = false;
  EXPECT_EQ(expand({"np0"}, rg.coocs, cfg, rg.counts).entries.size(), 30u);
}

TEST(Expand, TwoSeedsAreOrderFreeAndErrorsSurface) {
  auto coocs = mrr_layout();
  ExpandConfig cfg;
  cfg.scheme = WeightScheme::Count;
  auto ab = expand({"X", "D1"}, coocs, cfg), ba = expand({"D1", "X"}, coocs, cfg);
  EXPECT_EQ(ab.entries, ba.entries);
  for (const auto& e : ab.entries) {
    EXPECT_NE(e.surface, "X");
    EXPECT_NE(e.surface, "D1");
  }
  EXPECT_THROW(expand({}, coocs, cfg), std::invalid_argument);
  EXPECT_THROW(expand({"nope"}, coocs, cfg), SeedNotFound);
}

TEST(Expand, PrecisionAtK) {
  RankedList r;
  r.k = 30;
  std::set<std::string> gold;
  for (int i = 0; i < 30; ++i) {
    r.entries.push_back({"e" + std::to_string(i), 1.0, 1});
    if (i < 22) gold.insert("e" + std::to_string(i));
  }
  EXPECT_NEAR(precision_at_k(r, gold), 22.0 / 30.0, 1e-12);
  EXPECT_NEAR(precision_at_k(r, gold), 0.7333, 5e-5);
  EXPECT_EQ(precision_at_k(r, {}), 0.0);
  std::set<std::string> all;
  for (const auto& e : r.entries) all.insert(e.surface);
  EXPECT_EQ(precision_at_k(r, all), 1.0);
}
