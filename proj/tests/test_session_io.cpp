#include <gtest/gtest.h>

#include <fstream>

#include "sparsent/fixture.hpp"
#include "sparsent/harness.hpp"
#include "sparsent/session_io.hpp"
#include "test_util.hpp"

using namespace sparsent;

namespace {

SessionState session_with_three_labeled() {
  auto gold = fixture::generate({60, 0.3, 6, 9, "VIRUS"});
  auto s = make_session(strip_gold(gold), Mode::HFA, 3, 10, std::nullopt, 11);
  s.confirmed_entities = {"Lassa virus"};
  // Two plain sentences plus the first one with an entity, so the model sees one.
  SentenceId with_entity = 2;
  for (const auto& sent : gold.sentences)
    if (sent.id > 1 && entity_count(*sent.gold) > 0) {
      with_entity = sent.id;
      break;
    }
  s.pending = {0, 1, with_entity};
  harness::Emulator emu(gold);
  auto labels = emu.emulate_label(s.pending);
  step(s, labels);
  request_batch(s);
  return s;
}

}  // namespace

TEST(SessionIo, RoundTripPreservesEverything) {
  auto s = session_with_three_labeled();
  EXPECT_EQ(count_state(s, SentenceState::HumanLabeled), 3u);
  testutil::TempDir dir("session");
  save_session(s, dir.file("s.json"));
  auto back = load_session(dir.file("s.json"));
  EXPECT_TRUE(back == s);
  EXPECT_EQ(count_state(back, SentenceState::HumanLabeled), 3u);
  EXPECT_EQ(back.history.size(), 1u);
  EXPECT_EQ(back.pending, s.pending);

  // A resumed session continues exactly like the original.
  auto gold = fixture::generate({60, 0.3, 6, 9, "VIRUS"});
  harness::Emulator emu(gold);
  step(s, emu.emulate_label(s.pending));
  step(back, emu.emulate_label(back.pending));
  EXPECT_TRUE(back == s);
}

TEST(SessionIo, GoldNeverWritten) {
  auto s = session_with_three_labeled();
  const auto text = session_to_json(s).dump();
  EXPECT_EQ(text.find("\"gold"), std::string::npos);
}

TEST(SessionIo, CorruptFileRejected) {
  testutil::TempDir dir("session");
  {
    std::ofstream out(dir.file("bad.json"));
    out << "{\"format\": \"sparsent-session\", \"version\": 1, ";
  }
  EXPECT_THROW(load_session(dir.file("bad.json")), SessionFormatError);
  EXPECT_THROW(load_session(dir.file("missing.json")), std::runtime_error);
}

TEST(SessionIo, VersionMismatchRejected) {
  auto j = session_to_json(session_with_three_labeled());
  j["version"] = kSessionFormatVersion + 1;
  try {
    session_from_json(j);
    FAIL() << "expected SessionFormatError";
  } catch (const SessionFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  j["version"] = kSessionFormatVersion;
  j["format"] = "other";
  EXPECT_THROW(session_from_json(j), SessionFormatError);
}

TEST(SessionIo, DamagedFieldsNeverYieldPartialState) {
  const auto good = session_to_json(session_with_three_labeled());
  std::vector<nlohmann::json> broken(6, good);
  broken[0].erase("history");
  broken[1]["sentences"][0]["state"] = "bogus";
  broken[2]["pending"] = {100000};
  broken[3]["batch_size"] = 0;
  broken[4]["sigma_set"] = "everything";
  broken[5]["model"]["theta"] = nlohmann::json::array();
  for (const auto& j : broken) EXPECT_THROW(session_from_json(j), SessionFormatError) << j.dump().substr(0, 80);
}

TEST(SessionIo, FailedSaveKeepsPreviousFile) {
  auto s = session_with_three_labeled();
  testutil::TempDir dir("session");
  save_session(s, dir.file("s.json"));
  EXPECT_THROW(save_session(s, dir.file("no/such/dir/s.json")), std::runtime_error);
  EXPECT_TRUE(load_session(dir.file("s.json")) == s);
}
