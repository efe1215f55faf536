#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sparsent/crf.hpp"
#include "sparsent/lbfgs.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace sparsent;
using testutil::all_sequences;
using testutil::labeled;
using testutil::tagged;

using namespace oracle;

TEST(Crf, PartitionMatchesEnumeration) {
  std::mt19937 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    auto lat = random_lattice(rng, 1 + rng() % 8);
    const double z = crf::log_partition(lat);
    EXPECT_NEAR(z, enumerate(lat).log_z, 1e-8 * std::max(1.0, std::abs(z)));
  }
}

TEST(Crf, ViterbiMatchesExhaustiveArgmax) {
  std::mt19937 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    auto lat = random_lattice(rng, 1 + rng() % 8);
    EXPECT_EQ(crf::viterbi(lat), enumerate(lat).by_prob.front().second);
  }
}

TEST(Crf, ViterbiTiesPreferLabelOrder) {
  crf::Lattice flat;
  flat.emit.resize(4);
  for (auto& row : flat.emit) row.fill(0.0);
  EXPECT_EQ(to_string(crf::viterbi(flat)), "BBBB");
}

TEST(Crf, NBestMatchesEnumeration) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto lat = random_lattice(rng, 1 + rng() % 8);
    auto e = enumerate(lat);
    auto nb = crf::nbest(lat, 10);
    ASSERT_EQ(nb.sequences.size(), std::min<std::size_t>(10, e.by_prob.size()));
    for (std::size_t i = 0; i < nb.sequences.size(); ++i) {
      EXPECT_EQ(nb.sequences[i], e.by_prob[i].second);
      EXPECT_NEAR(nb.probs[i], e.by_prob[i].first, 1e-8);
      if (i) EXPECT_GE(nb.probs[i - 1], nb.probs[i]);
      EXPECT_GT(nb.probs[i], 0.0);
      EXPECT_LE(nb.probs[i], 1.0);
    }
    EXPECT_LE(std::accumulate(nb.probs.begin(), nb.probs.end(), 0.0), 1.0 + 1e-9);
    EXPECT_EQ(crf::nbest(lat, 1).sequences.front(), crf::viterbi(lat));
  }
}

TEST(Crf, NBestBeyondAllSequencesReturnsEverything) {
  std::mt19937 rng(4);
  auto lat = random_lattice(rng, 3);
  auto nb = crf::nbest(lat, 100);
  ASSERT_EQ(nb.sequences.size(), 27u);
  EXPECT_NEAR(std::accumulate(nb.probs.begin(), nb.probs.end(), 0.0), 1.0, 1e-8);
  std::set<LabelSeq> distinct(nb.sequences.begin(), nb.sequences.end());
  EXPECT_EQ(distinct.size(), 27u);
  EXPECT_THROW(crf::nbest(lat, 0), std::invalid_argument);
}

TEST(Crf, ModelLatticeAgreesWithEnumeration) {
  std::mt19937 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto data = random_training_set(rng);
    auto model = crf::train(data, {1.0, 3});
    for (auto& w : model.mutable_theta()) w = g(rng);
    for (const auto& s : data) {
      auto lat = model.lattice(s);
      auto e = enumerate(lat);
      for (const auto& [p, y] : e.by_prob) ASSERT_NEAR(crf::probability(model, s, y), p, 1e-10);
    }
  }
}

TEST(Crf, GradientMatchesFiniteDifferences) {
  std::mt19937 rng(6);
  std::normal_distribution<double> g(0.0, 0.7);
  for (int trial = 0; trial < 25; ++trial) {
    auto data = random_training_set(rng);
    std::vector<const Sentence*> ptrs;
    std::vector<LabelSeq> labels;
    for (const auto& s : data) {
      ptrs.push_back(&s);
      labels.push_back(*s.working);
    }
    crf::SequenceModel skeleton(crf::FeatureTemplateSet::defaults(), {}, 0.5 + (rng() % 4), ptrs);
    crf::Objective f(skeleton, ptrs, labels);
    std::vector<double> theta(f.dimension());
    for (auto& w : theta) w = g(rng);
    std::vector<double> grad, scratch;
    f(theta, grad);
    double diff2 = 0, norm2 = 0;
    const double h = 1e-5;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      auto plus = theta, minus = theta;
      plus[j] += h;
      minus[j] -= h;
      const double fd = (f(plus, scratch) - f(minus, scratch)) / (2 * h);
      diff2 += (fd - grad[j]) * (fd - grad[j]);
      norm2 += grad[j] * grad[j];
    }
    EXPECT_LT(std::sqrt(diff2) / std::max(1e-12, std::sqrt(norm2)), 1e-4) << "trial " << trial;
  }
}

TEST(Crf, MemorizesSingleSentence) {
  std::vector<Sentence> data{labeled("Paris/NNP is/VBZ big/JJ", "BOO")};
  auto model = crf::train(data);
  EXPECT_EQ(to_string(crf::decode(model, data[0])), "BOO");
}

TEST(Crf, EmptyFeatureSpaceIsUniform) {
  crf::TrainConfig cfg;
  cfg.templates = crf::FeatureTemplateSet::none();
  std::vector<Sentence> data{labeled("Paris/NNP is/VBZ big/JJ", "BOO")};
  auto model = crf::train(data, cfg);
  Sentence probe = tagged("a/DT b/NN c/NN d/VB");
  for (const auto& y : all_sequences(4)) EXPECT_NEAR(crf::probability(model, probe, y), 1.0 / 81.0, 1e-12);
}

TEST(Crf, AllOutsideTrainingPredictsOutside) {
  std::vector<Sentence> data{labeled("Paris/NNP is/VBZ big/JJ", "OOO", 0), labeled("the/DT cat/NN", "OO", 1)};
  auto model = crf::train(data);
  EXPECT_EQ(to_string(crf::decode(model, tagged("Paris/NNP cat/NN big/JJ"))), "OOO");
}

TEST(Crf, TrainingObjectiveNeverIncreases) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    crf::TrainReport report;
    crf::train(random_training_set(rng), {}, &report);
    const auto& tr = report.optimizer.trace;
    ASSERT_FALSE(tr.empty());
    for (std::size_t i = 1; i < tr.size(); ++i) EXPECT_LE(tr[i], tr[i - 1] + 1e-12);
  }
}

TEST(Crf, TrainingIsDeterministic) {
  std::mt19937 rng(8);
  auto data = random_training_set(rng);
  auto a = crf::train(data), b = crf::train(data);
  EXPECT_TRUE(a == b);
  for (const auto& s : data) EXPECT_EQ(crf::decode(a, s), crf::decode(b, s));
}

TEST(Crf, TrainRejectsBadInput) {
  EXPECT_THROW(crf::train({}), std::invalid_argument);
  auto bad = labeled("a/DT b/NN", "OI");
  EXPECT_THROW(crf::train({bad}), std::invalid_argument);
  auto unlabeled = tagged("a/DT");
  EXPECT_THROW(crf::train({unlabeled}), std::invalid_argument);
  crf::TrainConfig cfg;
  cfg.l2sigma = 0;
  EXPECT_THROW(crf::train({labeled("a/DT", "O")}, cfg), std::invalid_argument);
}

TEST(Crf, LexiconFeatureFires) {
  crf::TrainConfig cfg;
  cfg.lexicon = {"Lassa virus"};
  std::vector<Sentence> data{labeled("the/DT Lassa/NNP virus/NN spreads/VBZ", "OBIO")};
  auto model = crf::train(data, cfg);
  const auto& attrs = model.attributes();
  EXPECT_NE(std::find(attrs.begin(), attrs.end(), "lex=B"), attrs.end());
  EXPECT_NE(std::find(attrs.begin(), attrs.end(), "lex=I"), attrs.end());
}

TEST(Entropy, WorkedExamples) {
  const std::vector<double> two{0.9, 0.1};
  const double want = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1)) / std::log(2.0);
  EXPECT_NEAR(crf::nbest_entropy(two), want, 1e-12);
  EXPECT_NEAR(crf::nbest_entropy(two), 0.4690, 5e-5);
  EXPECT_NEAR(crf::nbest_entropy(std::vector<double>(7, 0.01)), 1.0, 1e-12);
  EXPECT_EQ(crf::nbest_entropy(std::vector<double>{1.0}), 0.0);
  // Renormalization: a scaled top-n gives the same value.
  EXPECT_NEAR(crf::nbest_entropy(std::vector<double>{0.45, 0.05}), want, 1e-12);
}

TEST(Entropy, PointMassIsBelowEverythingElse) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(0.001, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(2 + rng() % 9);
    for (auto& x : p) x = u(rng);
    std::vector<double> point(p.size(), 0.0);
    point[0] = 1.0;
    EXPECT_LT(crf::nbest_entropy(point), crf::nbest_entropy(p));
  }
}

TEST(Entropy, NormalizedRangeUnderFuzzing) {
  std::mt19937 rng(10);
  for (int trial = 0; trial < 300; ++trial) {
    auto lat = random_lattice(rng, 1 + rng() % 10, 0.1 + (rng() % 40) / 5.0);
    auto nb = crf::nbest(lat, 1 + rng() % 12);
    const double h = crf::sequence_entropy(nb, nb.probs.size());
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, 1.0);
  }
}

TEST(Entropy, SelfInformation) {
  crf::NBest certain{{labels_from_string("B")}, {1.0}, {0.0}};
  EXPECT_EQ(crf::self_information(certain, 1), 0.0);
  EXPECT_THROW(crf::self_information(certain, 2), std::out_of_range);
  crf::NBest peaked{{labels_from_string("B"), labels_from_string("O")}, {0.99, 0.005}, {0, 0}};
  const double ratio = crf::self_information(peaked, 1) / crf::self_information(peaked, 2);
  EXPECT_NEAR(ratio, -std::log(0.99) / -std::log(0.005), 1e-12);
  EXPECT_NEAR(ratio, 0.0019, 5e-5);
}

TEST(Entropy, ModelLevelEntryPoints) {
  std::vector<Sentence> data{labeled("Paris/NNP is/VBZ big/JJ", "BOO")};
  auto model = crf::train(data);
  EXPECT_EQ(crf::sequence_entropy(model, data[0], 1), 0.0);
  const double h = crf::sequence_entropy(model, data[0], 10);
  EXPECT_GT(h, 0.0);
  EXPECT_LT(h, 1.0);
  EXPECT_LT(crf::sequence_self_info(model, data[0], 1), crf::sequence_self_info(model, data[0], 2));
  EXPECT_THROW(crf::sequence_self_info(model, data[0], 3), std::invalid_argument);
}

TEST(Crf, JsonRoundTrip) {
  std::mt19937 rng(11);
  crf::TrainConfig cfg;
  cfg.lexicon = {"Paris"};
  auto model = crf::train(random_training_set(rng), cfg);
  auto back = crf::model_from_json(nlohmann::json::parse(crf::to_json(model).dump()));
  EXPECT_TRUE(back == model);

  testutil::TempDir dir("crf");
  crf::save_model(model, dir.file("m.json"));
  EXPECT_TRUE(crf::load_model(dir.file("m.json")) == model);

  auto j = crf::to_json(model);
  j["version"] = 99;
  EXPECT_THROW(crf::model_from_json(j), std::runtime_error);
  j = crf::to_json(model);
  j["theta"].erase(0);
  EXPECT_THROW(crf::model_from_json(j), std::invalid_argument);
}

TEST(Lbfgs, MinimizesRosenbrock) {
  auto rosen = [](const std::vector<double>& x, std::vector<double>& g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    g = {-2 * a - 400 * x[0] * b, 200 * b};
    return a * a + 100 * b * b;
  };
  std::vector<double> x{-1.2, 1.0};
  opt::LbfgsConfig cfg;
  cfg.max_iter = 500;
  cfg.tol = 1e-10;
  auto res = opt::minimize(rosen, x, cfg);
  EXPECT_EQ(res.status, opt::LbfgsStatus::Converged);
  EXPECT_NEAR(x[0], 1.0, 1e-6);
  EXPECT_NEAR(x[1], 1.0, 1e-6);
}

TEST(Crf, L2SelectionPicksLowestHeldOutLoss) {
  std::vector<Sentence> train{labeled("Paris/NNP is/VBZ big/JJ", "BOO", 0), labeled("Rome/NNP is/VBZ old/JJ", "BOO", 1)};
  std::vector<Sentence> held{labeled("Oslo/NNP is/VBZ cold/JJ", "BOO", 2)};
  auto sel = crf::select_l2sigma(train, held, {0.1, 1.0, 10.0});
  ASSERT_EQ(sel.heldout_nll.size(), 3u);
  auto best = std::min_element(sel.heldout_nll.begin(), sel.heldout_nll.end(),
                               [](const auto& a, const auto& b) { return a.second < b.second; });
  EXPECT_EQ(sel.l2sigma, best->first);
  EXPECT_THROW(crf::select_l2sigma(train, held, {}), std::invalid_argument);
}
