#include "amtk/mock_asr.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "amtk/metrics.hpp"
#include "doctest.h"

using amtk::mock_asr;
using amtk::MockAsrModel;
using amtk::NBestList;
using amtk::segment_stream;
using amtk::TimedWord;
using amtk::wer;

namespace {

TimedWord tw(std::string token, double start, double end) {
  TimedWord w;
  w.word = std::move(token);
  w.start = start;
  w.end = end;
  return w;
}

// A long single-segment stream of unique tokens, so the scorer counts the
// injected errors exactly (no accidental realignments).
std::vector<TimedWord> unique_stream(int n) {
  std::vector<TimedWord> words;
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%05d", i);
    words.push_back(tw(buf, i * 0.4, i * 0.4 + 0.3));
  }
  return words;
}

std::vector<std::string> top_tokens(const std::vector<NBestList>& lists) {
  std::vector<std::string> toks;
  for (const auto& list : lists)
    for (const auto& w : list.entries.front().words) toks.push_back(w.word);
  return toks;
}

std::vector<std::string> tokens_of(const std::vector<TimedWord>& words) {
  std::vector<std::string> toks;
  for (const auto& w : words) toks.push_back(w.word);
  return toks;
}

}  // namespace

TEST_CASE("zero error probabilities reproduce the truth") {
  auto truth = unique_stream(50);
  MockAsrModel model;
  model.time_jitter_ms = 0.0;
  auto lists = mock_asr(truth, model);
  auto report = wer(tokens_of(truth), top_tokens(lists));
  CHECK(report.wer_pct == doctest::Approx(0.0));

  size_t i = 0;
  for (const auto& list : lists) {
    CHECK(list.entries.front().score == doctest::Approx(0.0));
    for (const auto& w : list.entries.front().words) {
      CHECK(w.word == truth[i].word);
      CHECK(w.start == doctest::Approx(truth[i].start));
      CHECK(w.confidence >= 0.75f);
      CHECK(w.confidence <= 0.95f);
      ++i;
    }
  }
  CHECK(i == truth.size());

  SUBCASE("jitter moves times but not tokens") {
    MockAsrModel jittery;
    jittery.time_jitter_ms = 10.0;
    auto moved = mock_asr(truth, jittery);
    CHECK(top_tokens(moved) == tokens_of(truth));
    size_t k = 0;
    for (const auto& list : moved)
      for (const auto& w : list.entries.front().words) {
        CHECK(std::abs(w.start - truth[k].start) <= 0.0101);
        CHECK(w.end - w.start == doctest::Approx(0.3));
        ++k;
      }
  }
}

TEST_CASE("streams split at silences longer than the threshold") {
  std::vector<TimedWord> words{tw("a", 0.0, 0.3), tw("b", 0.55, 0.8),
                               tw("c", 1.1, 1.3),   // 0.30 s gap: no split
                               tw("d", 1.601, 1.8),  // 0.301 s gap: split
                               tw("e", 2.5, 2.7)};   // 0.70 s gap: split
  auto segs = segment_stream(words, 300.0);
  REQUIRE(segs.size() == 3);
  CHECK(segs[0].size() == 3);
  CHECK(segs[1].size() == 1);
  CHECK(segs[2].size() == 1);
  CHECK(segs[1][0].word == "d");

  SUBCASE("n-best spans cover each truth segment") {
    MockAsrModel model;
    model.time_jitter_ms = 0.0;
    auto lists = mock_asr(words, model);
    REQUIRE(lists.size() == 3);
    CHECK(lists[0].span.start == doctest::Approx(0.0));
    CHECK(lists[0].span.end == doctest::Approx(1.3));
    CHECK(lists[2].span.start == doctest::Approx(2.5));
  }
  SUBCASE("unordered or malformed words are rejected") {
    CHECK_THROWS_AS(segment_stream({tw("b", 1.0, 1.2), tw("a", 0.0, 0.2)}, 300.0),
                    amtk::InvalidArgument);
    CHECK_THROWS_AS(segment_stream({tw("a", 1.0, 1.0)}, 300.0),
                    amtk::InvalidArgument);
    CHECK_THROWS_AS(segment_stream({tw("", 0.0, 0.2)}, 300.0),
                    amtk::InvalidArgument);
  }
  SUBCASE("empty input yields no segments") {
    CHECK(segment_stream({}, 300.0).empty());
    CHECK(mock_asr({}, MockAsrModel{}).empty());
  }
}

TEST_CASE("injected error rates land near their probabilities") {
  auto truth = unique_stream(10000);
  auto ref = tokens_of(truth);

  SUBCASE("substitutions") {
    MockAsrModel model;
    model.p_sub = 0.2;
    model.seed = 101;
    auto report = wer(ref, top_tokens(mock_asr(truth, model)));
    CHECK(report.wer_pct == doctest::Approx(20.0).epsilon(0.05));
    CHECK(std::abs(report.wer_pct - 20.0) <= 1.0);
    CHECK(report.counts.ins == 0);
    CHECK(report.counts.del == 0);
  }
  SUBCASE("deletions") {
    MockAsrModel model;
    model.p_del = 0.1;
    model.seed = 102;
    auto report = wer(ref, top_tokens(mock_asr(truth, model)));
    CHECK(std::abs(report.wer_pct - 10.0) <= 1.0);
    CHECK(report.counts.sub == 0);
    CHECK(report.counts.ins == 0);
  }
  SUBCASE("insertions") {
    MockAsrModel model;
    model.p_ins = 0.1;
    model.seed = 103;
    auto report = wer(ref, top_tokens(mock_asr(truth, model)));
    CHECK(std::abs(report.wer_pct - 10.0) <= 1.0);
    CHECK(report.counts.sub == 0);
    CHECK(report.counts.del == 0);
  }
  SUBCASE("severity scales the configured rates") {
    MockAsrModel model;
    model.p_sub = 0.2;
    model.seed = 104;
    auto harsh = wer(ref, top_tokens(mock_asr(truth, model, 0, 2.0)));
    CHECK(std::abs(harsh.wer_pct - 40.0) <= 1.5);
    auto clean = wer(ref, top_tokens(mock_asr(truth, model, 0, 0.0)));
    CHECK(clean.wer_pct == doctest::Approx(0.0));
  }
}

TEST_CASE("the mock recognizer is seed-deterministic") {
  auto truth = unique_stream(200);
  MockAsrModel model;
  model.p_sub = 0.3;
  model.p_del = 0.05;
  model.p_ins = 0.05;
  model.seed = 7;

  auto a = mock_asr(truth, model, 2);
  auto b = mock_asr(truth, model, 2);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].entries.size() == b[i].entries.size());
    CHECK(a[i].entries[0].score == b[i].entries[0].score);
    CHECK(tokens_of(a[i].entries[0].words) == tokens_of(b[i].entries[0].words));
  }

  auto other_channel = mock_asr(truth, model, 3);
  auto other_seed_model = model;
  other_seed_model.seed = 8;
  auto other_seed = mock_asr(truth, other_seed_model, 2);
  CHECK(top_tokens(a) != top_tokens(other_channel));
  CHECK(top_tokens(a) != top_tokens(other_seed));
}

TEST_CASE("n-best lists hold distinct draws sorted by score") {
  auto truth = unique_stream(30);
  MockAsrModel model;
  model.p_sub = 0.3;
  model.nbest_depth = 5;
  model.seed = 21;
  auto lists = mock_asr(truth, model);
  REQUIRE(lists.size() == 1);
  const auto& entries = lists[0].entries;
  CHECK(entries.size() >= 2);
  CHECK(entries.size() <= 5);
  for (size_t i = 1; i < entries.size(); ++i) {
    CHECK(entries[i].score <= entries[i - 1].score);
    CHECK(tokens_of(entries[i].words) != tokens_of(entries[i - 1].words));
  }
  for (const auto& e : entries) CHECK(std::isfinite(e.score));
  CHECK_NOTHROW(lists[0].validate());

  SUBCASE("a fully deleted draw still yields a valid entry") {
    MockAsrModel lossy;
    lossy.p_del = 0.95;
    lossy.seed = 3;
    auto out = mock_asr({tw("a", 0.0, 0.2), tw("b", 0.3, 0.5)}, lossy);
    REQUIRE(out.size() == 1);
    CHECK_NOTHROW(out[0].validate());
    CHECK(out[0].span.end == doctest::Approx(0.5));
  }
}

TEST_CASE("model contracts reject invalid configurations") {
  MockAsrModel model;
  model.p_sub = -0.1;
  CHECK_THROWS_AS(model.validate(), amtk::InvalidArgument);
  model = MockAsrModel{};
  model.p_sub = 0.5;
  model.p_del = 0.3;
  model.p_ins = 0.2;  // sums to exactly 1
  CHECK_THROWS_AS(model.validate(), amtk::InvalidArgument);
  model = MockAsrModel{};
  model.nbest_depth = 0;
  CHECK_THROWS_AS(model.validate(), amtk::InvalidArgument);
  model = MockAsrModel{};
  model.segment_silence_ms = -1.0;
  CHECK_THROWS_AS(model.validate(), amtk::InvalidArgument);

  SUBCASE("severity cannot push the rates to one") {
    MockAsrModel m;
    m.p_sub = 0.6;
    auto truth = unique_stream(3);
    CHECK_THROWS_AS(mock_asr(truth, m, 0, 1.8), amtk::InvalidArgument);
    CHECK_THROWS_AS(mock_asr(truth, m, 0, -1.0), amtk::InvalidArgument);
    CHECK_THROWS_AS(mock_asr(truth, m, -1), amtk::InvalidArgument);
  }
}
