#include "capaa/eval.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "capaa/error.hpp"
#include "oracles.hpp"

namespace capaa::eval {
namespace {

EvaluationRecord make_record(int pose, int classifier, int pattern, bool fooled, double delta_e,
                             const std::string& variant = "capaa", double d_thr = 2.0) {
  EvaluationRecord r;
  r.pattern_id = "p" + std::to_string(pattern);
  r.scene_id = "s0";
  r.variant = variant;
  r.pose_id = "pose" + std::to_string(pose);
  r.classifier_id = "f" + std::to_string(classifier);
  r.true_label = 1;
  r.predicted = fooled ? 2 : 1;
  r.d_thr = d_thr;
  r.metrics = {delta_e, 10.0 * delta_e, 20.0 * delta_e, 1.0 - 0.01 * delta_e};
  return r;
}

TEST(StealthSuccess, Predicate) {
  const EvaluationRecord r = make_record(0, 0, 0, true, 2.01);
  EXPECT_EQ(stealth_success(r, 2.0), 0);
  EXPECT_EQ(stealth_success(r, 2.01), 1);
  EXPECT_EQ(stealth_success(make_record(0, 0, 0, false, 0.1), 5.0), 0);
  EXPECT_EQ(stealth_success(r, std::numeric_limits<double>::infinity()), is_fooled(r) ? 1 : 0);

  EvaluationRecord t = r;
  t.targeted = true;
  t.target = 2;
  EXPECT_TRUE(is_fooled(t));
  t.target = 3;
  EXPECT_FALSE(is_fooled(t));
}

TEST(CumulativeCurve, AllSuccessfulIsConstantOne) {
  std::vector<EvaluationRecord> recs;
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k) recs.push_back(make_record(j, k, 0, true, 0.0));
  const SuccessCurve c = cumulative_curve(recs, default_grid());
  for (double v : c.values) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(c.thresholds.size(), 49u);
  EXPECT_EQ(c.thresholds.back(), 12.0);
}

TEST(CumulativeCurve, HandEnumeratedEightCellGrid) {
  // 2 poses x 2 classifiers x 2 patterns.
  std::vector<EvaluationRecord> recs;
  std::vector<oracle::GridCell> cells;
  const bool fooled[8] = {true, false, true, true, false, true, true, false};
  const double de[8] = {0.5, 1.0, 2.5, 4.0, 0.1, 7.5, 3.0, 9.0};
  int i = 0;
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k)
      for (int l = 0; l < 2; ++l, ++i) {
        recs.push_back(make_record(j, k, l, fooled[i], de[i]));
        cells.push_back({j, k, l, fooled[i], de[i]});
      }
  const auto grid = default_grid();
  const SuccessCurve c = cumulative_curve(recs, grid);
  EXPECT_EQ(c.poses, 2);
  EXPECT_EQ(c.classifiers, 2);
  EXPECT_EQ(c.patterns, 2);
  for (std::size_t g = 0; g < grid.size(); ++g) EXPECT_EQ(c.values[g], oracle::cumulative_success(cells, 2, 2, 2, grid[g]));
  // Counted by hand: successes at dE 0.5, 2.5, 3.0, 4.0, 7.5.
  EXPECT_EQ(c.values[0], 0.0);
  EXPECT_EQ(c.values[2], 1.0 / 8);   // h = 0.5
  EXPECT_EQ(c.values[12], 3.0 / 8);  // h = 3.0
  EXPECT_EQ(c.values[48], 5.0 / 8);
}

TEST(CumulativeCurve, MatchesBruteForceOnRandomInstancesWithGaps) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> dim(1, 4);
  std::uniform_real_distribution<double> u(0.0, 12.0);
  std::bernoulli_distribution coin(0.6), keep(0.85);
  for (int trial = 0; trial < 50; ++trial) {
    const int p = dim(rng), n = dim(rng), h = dim(rng);
    std::vector<EvaluationRecord> recs;
    std::vector<oracle::GridCell> cells;
    for (int j = 0; j < p; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < h; ++l) {
          // Keep the corner cells so P, N and H are visible to the curve.
          const bool edge = (l == h - 1 && k == n - 1) || (j == p - 1 && l == h - 1) || (j == p - 1 && k == n - 1);
          if (!keep(rng) && !edge) continue;
          const bool f = coin(rng);
          const double d = std::round(u(rng) * 4) / 4;  // lands on grid points too
          recs.push_back(make_record(j, k, l, f, d));
          cells.push_back({j, k, l, f, d});
        }
    const auto grid = default_grid();
    const SuccessCurve c = cumulative_curve(recs, grid);
    ASSERT_EQ(c.poses * c.classifiers * c.patterns, p * n * h);
    EXPECT_EQ(c.missing, p * n * h - static_cast<int>(recs.size()));
    for (std::size_t g = 0; g < grid.size(); ++g) {
      ASSERT_EQ(c.values[g], oracle::cumulative_success(cells, p, n, h, grid[g]));
      if (g > 0) ASSERT_GE(c.values[g], c.values[g - 1]);
    }
  }
}

TEST(CumulativeCurve, EmptyIsAnError) { EXPECT_THROW(cumulative_curve({}, default_grid()), Error); }

TEST(TableReport, GroupsAndAverages) {
  std::vector<EvaluationRecord> recs;
  for (double d_thr : {2.0, 3.0}) {
    for (int j = 0; j < 2; ++j) {
      recs.push_back(make_record(j, 0, 0, j == 0 || d_thr == 3.0, 1.0 + j, "capaa", d_thr));
      recs.push_back(make_record(j, 0, 0, false, 1.5, "spaa", d_thr));
    }
  }
  const Table t = table_report(recs);
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.rows[0].variant, "capaa");
  EXPECT_DOUBLE_EQ(t.rows[0].success_rate, 0.5);
  EXPECT_DOUBLE_EQ(t.rows[1].success_rate, 1.0);
  EXPECT_DOUBLE_EQ(t.average.at("capaa"), 0.75);
  EXPECT_DOUBLE_EQ(t.rows[0].delta_e, 1.5);
  EXPECT_DOUBLE_EQ(t.average.at("spaa"), 0.0);
  EXPECT_TRUE(std::isfinite(t.rows[2].delta_e));
  EXPECT_DOUBLE_EQ(t.rows[2].delta_e, 1.5);
  const Table s = table_report(recs, true);
  EXPECT_DOUBLE_EQ(s.rows[0].delta_e, 1.0);
  EXPECT_NE(t.markdown("Untargeted").find("| capaa | 2 |"), std::string::npos);
}

TEST(TransferEval, DisjointAndNonEmpty) {
  std::vector<EvaluationRecord> recs{make_record(0, 0, 0, true, 1.0), make_record(0, 1, 0, false, 1.0)};
  const Table t = transfer_eval(recs, {"f0"}, {"f1"});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(t.rows[0].success_rate, 0.0);
  EXPECT_THROW(transfer_eval(recs, {"f0"}, {}), Error);
  EXPECT_THROW(transfer_eval(recs, {"f0"}, {"f0"}), Error);
  EXPECT_THROW(transfer_eval(recs, {"f0"}, {"f7"}), Error);
}

TEST(EvaluatePattern, UsesSharedNoiseAndEveryPose) {
  std::mt19937_64 rng(4);
  const scene::Scene s = scene::make_scene(2, 32, rng);
  nn::Network net = zoo::architecture("convC", 10);
  net.initialize(rng);
  const zoo::Classifier f("convC", std::move(net), 10, 32);
  const auto poses = scene::pose_set(32, 32);
  const ProjectorImage x0 = scene::gray_pattern(32, 32);
  PatternInfo info{"x", "s", "capaa", false, 2, -1, 2.0};
  const auto same = evaluate_pattern(info, x0, x0, s, poses, {&f, &f}, 7);
  ASSERT_EQ(same.size(), 14u);
  for (const auto& r : same) {
    EXPECT_EQ(r.metrics.delta_e, 0.0);
    EXPECT_EQ(r.metrics.l_inf, 0.0);
  }
  const auto bright = evaluate_pattern(info, scene::gray_pattern(32, 32, 0.8), x0, s, poses, {&f}, 7);
  for (const auto& r : bright) EXPECT_GT(r.metrics.delta_e, 0.0);
}

TEST(Writers, CsvRoundTripAndSvg) {
  const auto dir = std::filesystem::temp_directory_path() / "capaa_eval_test";
  std::filesystem::create_directories(dir);
  std::vector<EvaluationRecord> recs{make_record(0, 0, 0, true, 1.25), make_record(1, 0, 0, false, 0.3)};
  write_records_csv(dir / "records.csv", recs);
  const auto back = read_records_csv(dir / "records.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].metrics.delta_e, 1.25);
  EXPECT_EQ(back[1].pose_id, "pose1");
  EXPECT_EQ(back[0].predicted, recs[0].predicted);

  std::map<std::string, SuccessCurve> curves{{"capaa", cumulative_curve(recs, default_grid())}};
  write_curves_csv(dir / "curves.csv", curves);
  write_curves_svg(dir / "curves.svg", curves, "Untargeted");
  std::ifstream svg(dir / "curves.svg");
  const std::string text((std::istreambuf_iterator<char>(svg)), std::istreambuf_iterator<char>());
  EXPECT_NE(text.find("<polyline"), std::string::npos);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace capaa::eval
