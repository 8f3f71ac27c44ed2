#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "phaseseg/annotate.hpp"

using namespace phaseseg;

TEST(Timestamp, Examples) {
  EXPECT_EQ(parse_timestamp("00:00:00"), 0);
  EXPECT_EQ(parse_timestamp("01:02:03"), 3723);
  EXPECT_EQ(parse_timestamp("100:00:01"), 360001);
}

TEST(Timestamp, MalformedReportsPosition) {
  try {
    parse_timestamp("00:99:00");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 3u);
  }
  try {
    parse_timestamp("00:00:5x");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 7u);
  }
  for (const char* bad : {"", "1:2:3", "00:00:60", "00:00:01.5", "aa:00:00", "00-00-00",
                          "00:00:00 ", "-1:00:00"}) {
    EXPECT_THROW(parse_timestamp(bad), ParseError) << bad;
  }
}

TEST(Timestamp, RoundTripIsCanonical) {
  for (std::int64_t s : {0, 59, 60, 3599, 3600, 3723, 86399, 360000}) {
    EXPECT_EQ(parse_timestamp(format_timestamp(s)), s);
  }
  EXPECT_EQ(format_timestamp(parse_timestamp("1:02:03")), "01:02:03");
  EXPECT_EQ(format_timestamp(3723), "01:02:03");
}

TEST(SecondsToFrame, Examples) {
  EXPECT_EQ(seconds_to_frame(100, 15.0), 1500);
  EXPECT_EQ(seconds_to_frame(0, 25.0), 0);
  EXPECT_EQ(seconds_to_frame(10, 1.0), 10);
  EXPECT_EQ(seconds_to_frame(7, 0.5), 3);
  EXPECT_THROW(seconds_to_frame(1, 0.0), ValidationError);
}

TEST(Ontology, DefaultsAndMatching) {
  const auto o = PhaseOntology::pituitary();
  ASSERT_EQ(o.size(), 4u);
  EXPECT_EQ(o.name(0), "nasal");
  EXPECT_EQ(o.name(3), "closure");
  EXPECT_EQ(o.find("Sellar"), 2);
  EXPECT_EQ(o.find("unknown"), -1);
  EXPECT_EQ(o.match("Tumour RESECTION under way"), std::vector<int>{2});
  EXPECT_TRUE(o.match("irrigation").empty());
  // Whole words only.
  EXPECT_TRUE(o.match("nasalis").empty());
  EXPECT_THROW(PhaseOntology({"a", "a"}, {{"x"}, {"y"}}), ValidationError);
  EXPECT_THROW(PhaseOntology({"a", "b"}, {{"x"}, {}}), ValidationError);
}

TEST(Ontology, LexiconOverride) {
  auto o = PhaseOntology::pituitary();
  std::istringstream lex("# custom\nclosure: fat graft, glue\n\nnasal: nose\n");
  o.apply_lexicon(lex);
  EXPECT_EQ(o.match("fat graft placed"), std::vector<int>{3});
  EXPECT_TRUE(o.match("flap").empty());
  EXPECT_EQ(o.match("nose"), std::vector<int>{0});
  std::istringstream bad("tumor stuff\n");
  EXPECT_THROW(o.apply_lexicon(bad), ParseError);
  std::istringstream unknown("brain: x\n");
  EXPECT_THROW(o.apply_lexicon(unknown), ParseError);
}

TEST(ExtractBoundaries, WorkedExample) {
  const std::vector<NoteRecord> notes = {{"00:00:10", "start nasal stage"},
                                         {"00:20:00", "sphenoid drilling begins"}};
  const auto marks = extract_boundaries(notes, PhaseOntology::pituitary());
  EXPECT_EQ(marks, (std::vector<PhaseMark>{{10, 0}, {1200, 1}}));
}

TEST(ExtractBoundaries, EmptyIgnoredAndDuplicates) {
  const auto o = PhaseOntology::pituitary();
  EXPECT_TRUE(extract_boundaries(std::vector<NoteRecord>{}, o).empty());
  EXPECT_TRUE(extract_boundaries(std::vector<NoteRecord>{{"00:01:00", "irrigation"}}, o).empty());
  const std::vector<NoteRecord> dup = {{"00:00:05", "nasal"},
                                       {"00:00:30", "turbinate out"},
                                       {"00:02:00", "sella opened"}};
  EXPECT_EQ(extract_boundaries(dup, o), (std::vector<PhaseMark>{{5, 0}, {120, 2}}));
}

TEST(ExtractBoundaries, ConflictAndOrderErrors) {
  const auto o = PhaseOntology::pituitary();
  EXPECT_THROW(extract_boundaries(std::vector<NoteRecord>{{"00:00:05", "nasal and flap"}}, o),
               ConflictError);
  const std::vector<NoteRecord> backwards = {{"00:00:05", "sellar"},
                                             {"00:00:10", "nasal"},
                                             {"00:00:20", "sphenoid"}};
  try {
    extract_boundaries(backwards, o);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("00:00:10"), std::string::npos);
    EXPECT_NE(msg.find("00:00:20"), std::string::npos);
  }
}

TEST(ExtractBoundaries, InvariantToNoteOrder) {
  std::vector<NoteRecord> notes = {{"00:00:10", "nasal"},     {"00:05:00", "irrigation"},
                                   {"00:10:00", "sphenoidotomy"}, {"00:30:00", "tumor"},
                                   {"00:31:00", "resection"}, {"01:00:00", "flap"}};
  const auto o = PhaseOntology::pituitary();
  const auto want = extract_boundaries(notes, o);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(notes.begin(), notes.end(), rng);
    EXPECT_EQ(extract_boundaries(notes, o), want);
  }
}

TEST(BuildTimeline, IntervalArithmetic) {
  const std::vector<Boundary> b = {{0, 0}, {100, 1}};
  const auto tl = build_timeline(b, 150);
  const auto labels = tl.labels();
  ASSERT_EQ(labels.size(), 150u);
  EXPECT_EQ(std::count(labels.begin(), labels.end(), 0), 100);
  EXPECT_EQ(std::count(labels.begin(), labels.end(), 1), 50);
  EXPECT_EQ(labels[99], 0);
  EXPECT_EQ(labels[100], 1);
}

TEST(BuildTimeline, SingleBoundaryAndLeadingIgnore) {
  const auto all = build_timeline(std::vector<Boundary>{{0, 2}}, 20).labels();
  EXPECT_EQ(all, PhaseTimeline(20, 2));

  const auto tl = build_timeline(std::vector<Boundary>{{10, 0}}, 15);
  const auto labels = tl.labels();
  for (int t = 0; t < 10; ++t) {
    EXPECT_EQ(labels[t], kIgnoreLabel);
    EXPECT_EQ(tl.ignore[t], 1);
  }
  for (int t = 10; t < 15; ++t) EXPECT_EQ(labels[t], 0);
}

TEST(BuildTimeline, Errors) {
  EXPECT_THROW(build_timeline(std::vector<Boundary>{{150, 0}}, 150), ValidationError);
  EXPECT_THROW(build_timeline(std::vector<Boundary>{{0, 1}, {5, 0}}, 10), ValidationError);
  EXPECT_THROW(build_timeline(std::vector<Boundary>{{5, 0}, {2, 1}}, 10), ValidationError);
}

TEST(BuildTimeline, PartitionsFramesMonotonically) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t frames = 1 + static_cast<std::int64_t>(rng() % 500);
    std::vector<Boundary> b;
    std::int64_t frame = static_cast<std::int64_t>(rng() % frames);
    for (int p = 0; p < 4 && frame < frames; ++p) {
      if (rng() % 4 == 0) continue;
      b.push_back({frame, p});
      frame += 1 + static_cast<std::int64_t>(rng() % 100);
    }
    const auto tl = build_timeline(b, frames);
    const auto labels = tl.labels();
    ASSERT_EQ(static_cast<std::int64_t>(labels.size()), frames);
    int last = -1;
    for (std::int64_t t = 0; t < frames; ++t) {
      const bool ignored = tl.ignore[t] != 0;
      ASSERT_EQ(ignored, labels[t] == kIgnoreLabel);
      if (!ignored) {
        ASSERT_GE(labels[t], last);
        last = labels[t];
      }
    }
  }
}

TEST(BuildTimeline, FromSecondMarks) {
  const std::vector<PhaseMark> marks = {{10, 0}, {1200, 1}};
  const auto tl = build_timeline(marks, 1500, 1.0);
  EXPECT_EQ(tl.boundaries, (std::vector<Boundary>{{10, 0}, {1200, 1}}));
  const auto half = build_timeline(marks, 1500, 0.5);
  EXPECT_EQ(half.boundaries, (std::vector<Boundary>{{5, 0}, {600, 1}}));
}

TEST(ReadNotes, ParsesJsonLines) {
  std::istringstream in(
      "{\"t\": \"00:00:10\", \"note\": \"start nasal stage\"}\n\n"
      "{\"t\": \"00:20:00\", \"note\": \"sphenoid drilling begins\"}\n");
  const auto notes = read_notes(in);
  ASSERT_EQ(notes.size(), 2u);
  EXPECT_EQ(notes[1].timestamp, "00:20:00");
  EXPECT_EQ(notes[1].text, "sphenoid drilling begins");
}

TEST(ReadNotes, ErrorsCarryLineNumber) {
  std::istringstream bad_time(
      "{\"t\": \"00:00:10\", \"note\": \"a\"}\n{\"t\": \"00:61:00\", \"note\": \"b\"}\n");
  try {
    read_notes(bad_time);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 2u);
  }
  std::istringstream bad_json("{\"t\": \"00:00:10\"\n");
  EXPECT_THROW(read_notes(bad_json), ParseError);
  std::istringstream missing("{\"time\": \"00:00:10\", \"note\": \"x\"}\n");
  EXPECT_THROW(read_notes(missing), ParseError);
}
