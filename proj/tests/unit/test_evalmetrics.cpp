#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "phaseseg/evalmetrics.hpp"

using namespace phaseseg;
namespace fs = std::filesystem;

TEST(Confusion, DirectTally) {
  const std::vector<int> gt = {0, 0, 1};
  const std::vector<int> pred = {0, 1, 1};
  const auto cm = confusion(gt, pred, 2);
  EXPECT_EQ(cm(0, 0), 1);
  EXPECT_EQ(cm(0, 1), 1);
  EXPECT_EQ(cm(1, 1), 1);
  EXPECT_EQ(cm(1, 0), 0);
  EXPECT_EQ(cm.total(), 3);
}

TEST(Confusion, IdentityIsDiagonalAndIgnoresMaskedFrames) {
  const std::vector<int> x = {0, 1, 2, 2, 1};
  const auto cm = confusion(x, x, 3);
  EXPECT_EQ(cm.trace(), cm.total());

  const std::vector<std::uint8_t> all(5, 1);
  EXPECT_EQ(confusion(x, x, 3, all).total(), 0);

  const std::vector<int> gt = {kIgnoreLabel, 0, 1};
  EXPECT_EQ(confusion(gt, std::vector<int>{2, 0, 1}, 3).total(), 2);
}

TEST(Confusion, Errors) {
  EXPECT_THROW(confusion(std::vector<int>{0, 1}, std::vector<int>{0}, 2), ShapeError);
  EXPECT_THROW(confusion(std::vector<int>{0, 3}, std::vector<int>{0, 0}, 2), ValidationError);
  EXPECT_THROW(report(ConfusionMatrix(2)), ValidationError);
}

TEST(Report, HandComputedTwoClassExample) {
  ConfusionMatrix cm(2);
  cm.add(0, 0, 2);
  cm.add(0, 1, 1);
  cm.add(1, 1, 3);
  const auto r = report(cm);
  EXPECT_DOUBLE_EQ(r.per_class[0].precision, 100.0);
  EXPECT_NEAR(r.per_class[0].recall, 200.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.per_class[0].f1, 80.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.per_class[1].precision, 75.0);
  EXPECT_DOUBLE_EQ(r.per_class[1].recall, 100.0);
  EXPECT_NEAR(r.per_class[1].f1, 600.0 / 7.0, 1e-12);
  EXPECT_NEAR(r.accuracy, 500.0 / 6.0, 1e-12);
  EXPECT_NEAR(r.macro_f1, (80.0 + 600.0 / 7.0) / 2.0, 1e-12);

  const std::vector<std::string> names = {"a", "b"};
  const auto table = to_table(r, names);
  EXPECT_NE(table.find("66.67"), std::string::npos);
  EXPECT_NE(table.find("85.71"), std::string::npos);
  EXPECT_NE(table.find("83.33"), std::string::npos);
}

TEST(Report, PerfectAndSingleClass) {
  const std::vector<int> x = {0, 1, 2, 3, 3, 2};
  const auto r = report(confusion(x, x, 4));
  EXPECT_EQ(r.accuracy, 100.0);
  EXPECT_EQ(r.macro_f1, 100.0);
  for (const auto& c : r.per_class) EXPECT_EQ(c.f1, 100.0);

  const std::vector<int> one = {2, 2, 2};
  const auto s = report(confusion(one, one, 4));
  EXPECT_EQ(s.accuracy, 100.0);
  EXPECT_EQ(s.macro_precision, 100.0);
  EXPECT_FALSE(s.per_class[0].in_macro);
  EXPECT_TRUE(s.per_class[2].in_macro);
}

TEST(Report, ZeroDenominatorsAreFlagged) {
  ConfusionMatrix cm(3);
  cm.add(0, 1, 4);
  const auto r = report(cm);
  EXPECT_TRUE(r.per_class[0].precision_undefined);
  EXPECT_EQ(r.per_class[0].precision, 0.0);
  EXPECT_TRUE(r.per_class[1].recall_undefined);
  EXPECT_FALSE(r.per_class[2].in_macro);
}

TEST(Report, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int classes = 2 + static_cast<int>(rng() % 4);
    const int frames = 1 + static_cast<int>(rng() % 300);
    std::uniform_int_distribution<int> label(-1, classes - 1);
    std::uniform_int_distribution<int> guess(0, classes - 1);
    std::vector<int> gt(frames), pred(frames);
    for (int t = 0; t < frames; ++t) {
      gt[t] = label(rng);
      pred[t] = rng() % 3 == 0 ? guess(rng) : std::max(gt[t], 0);
    }
    if (std::all_of(gt.begin(), gt.end(), [](int g) { return g < 0; })) gt[0] = 0;
    const auto r = report(confusion(gt, pred, classes));
    const auto b = oracle::brute_metrics(gt, pred, classes);
    EXPECT_NEAR(r.accuracy, b.accuracy, 1e-9);
    EXPECT_NEAR(r.macro_precision, b.macro_p, 1e-9);
    EXPECT_NEAR(r.macro_recall, b.macro_r, 1e-9);
    EXPECT_NEAR(r.macro_f1, b.macro_f1, 1e-9);
    for (int c = 0; c < classes; ++c) {
      EXPECT_NEAR(r.per_class[c].precision, b.precision[c], 1e-9);
      EXPECT_NEAR(r.per_class[c].recall, b.recall[c], 1e-9);
      EXPECT_NEAR(r.per_class[c].f1, b.f1[c], 1e-9);
    }
  }
}

TEST(Report, ClassPermutationPermutesMetrics) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> label(0, 3);
  std::vector<int> gt(200), pred(200);
  for (int t = 0; t < 200; ++t) {
    gt[t] = label(rng);
    pred[t] = rng() % 2 ? gt[t] : label(rng);
  }
  const std::vector<int> perm = {2, 0, 3, 1};
  std::vector<int> pg(200), pp(200);
  for (int t = 0; t < 200; ++t) {
    pg[t] = perm[gt[t]];
    pp[t] = perm[pred[t]];
  }
  const auto a = report(confusion(gt, pred, 4));
  const auto b = report(confusion(pg, pp, 4));
  EXPECT_DOUBLE_EQ(a.accuracy, b.accuracy);
  for (int c = 0; c < 4; ++c) {
    EXPECT_DOUBLE_EQ(a.per_class[c].f1, b.per_class[perm[c]].f1);
    EXPECT_DOUBLE_EQ(a.per_class[c].precision, b.per_class[perm[c]].precision);
  }
}

TEST(Report, JsonHasStableKeys) {
  const std::vector<int> x = {0, 1, 1};
  const std::vector<std::string> names = {"p", "q"};
  const auto j = to_json(report(confusion(x, x, 2)), names);
  EXPECT_TRUE(j.contains("accuracy"));
  EXPECT_TRUE(j.contains("macro"));
  EXPECT_TRUE(j.contains("classes"));
  EXPECT_EQ(j.dump(), to_json(report(confusion(x, x, 2)), names).dump());
}

TEST(SegmentCount, Examples) {
  EXPECT_EQ(segment_count(std::vector<int>(9, 2)), 1u);
  EXPECT_EQ(segment_count(std::vector<int>{0, 1, 0, 1}), 4u);
  EXPECT_EQ(segment_count(std::vector<int>{0, 0, 1, 1, 1, 3}), 3u);
  EXPECT_THROW(segment_count(std::vector<int>{}), ValidationError);
}

TEST(Ribbon, WritesSvgAndCsv) {
  const auto dir = fs::temp_directory_path() / "phaseseg_test_ribbon";
  fs::create_directories(dir);
  const std::vector<int> gt = {kIgnoreLabel, 0, 0, 1, 2, 3, 3};
  const std::vector<int> pred = {0, 0, 1, 1, 2, 3, 3};
  const std::vector<std::string> names = {"a", "b", "c", "d"};
  const auto svg = (dir / "r.svg").string();
  export_ribbon(gt, pred, names, svg);

  std::ifstream csv(dir / "r.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "frame,gt,pred");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, gt.size());

  std::ifstream in(svg);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_NE(text.find("<svg"), std::string::npos);
  EXPECT_NE(text.find("</svg>"), std::string::npos);
  for (int p = 0; p < 4; ++p) EXPECT_NE(text.find(phase_color(p)), std::string::npos);
  EXPECT_NE(text.find(phase_color(kIgnoreLabel)), std::string::npos);

  EXPECT_THROW(export_ribbon(gt, pred, names, "/nonexistent_dir/x/r.svg"), IoError);
  EXPECT_THROW(export_ribbon(gt, std::vector<int>{0}, names, svg), ShapeError);
}

TEST(Ribbon, PaletteIsDistinct) {
  std::set<std::string> colors;
  for (int p = -1; p < 4; ++p) colors.insert(phase_color(p));
  EXPECT_EQ(colors.size(), 5u);
}
