#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "nebula/binio.hpp"
#include "nebula/eval.hpp"
#include "oracles.hpp"

namespace nebula {
namespace {

using testing::error_code;

std::vector<ScoredSession> make(std::initializer_list<std::pair<double, int>> rows) {
  std::vector<ScoredSession> out;
  int i = 0;
  for (auto [score, label] : rows) {
    ScoredSession s;
    s.session_id = "s" + std::to_string(i++);
    s.score = score;
    s.label = label;
    s.truth = label ? SessionLabel::exfil_chain : SessionLabel::benign;
    out.push_back(s);
  }
  return out;
}

std::vector<ScoredSession> random_sessions(Rng& rng, std::size_t n) {
  std::vector<ScoredSession> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].session_id = "s" + std::to_string(i);
    out[i].label = static_cast<int>(rng.below(2));
    // Coarse grid so ties are common.
    out[i].score = static_cast<double>(rng.below(12)) / 11.0;
  }
  out[0].label = 0;
  out[1].label = 1;
  return out;
}

TEST(Auroc, Examples) {
  EXPECT_EQ(auroc(make({{1, 1}, {1, 1}, {0, 0}, {0, 0}})), 1.0);
  EXPECT_EQ(auroc(make({{0.3, 1}, {0.3, 0}, {0.3, 0}})), 0.5);
  EXPECT_EQ(error_code([] { auroc(make({{0.3, 0}, {0.2, 0}})); }), Errc::degenerate_labels);
}

TEST(Auroc, MatchesPairwiseOracle) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const auto s = random_sessions(rng, 2 + rng.below(199));
    ASSERT_NEAR(auroc(s), oracle::auroc(s), 1e-9);
  }
}

TEST(AveragePrecision, Examples) {
  EXPECT_DOUBLE_EQ(average_precision(make({{.9, 1}, {.8, 1}, {.7, 1}, {.6, 1}, {.5, 1},
                                           {.4, 0}, {.3, 0}, {.2, 0}, {.1, 0}, {.05, 0}})),
                   1.0);
  std::vector<ScoredSession> inverted = make({{0.0, 1}});
  for (int i = 0; i < 9; ++i) inverted.push_back(make({{0.1 * (i + 1), 0}})[0]);
  for (std::size_t i = 0; i < inverted.size(); ++i) inverted[i].session_id = "s" + std::to_string(i);
  EXPECT_DOUBLE_EQ(average_precision(inverted), 0.1);
}

TEST(AveragePrecision, MatchesSweepOracle) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const auto s = random_sessions(rng, 2 + rng.below(199));
    ASSERT_NEAR(average_precision(s), oracle::average_precision(s), 1e-9);
  }
}

TEST(RecallAtFpr, CapZeroSeparable) {
  const auto val = make({{0.9, 1}, {0.8, 1}, {0.4, 0}, {0.3, 0}});
  const auto test = make({{0.85, 1}, {0.5, 1}, {0.45, 0}, {0.2, 0}});
  const auto op = recall_at_fpr(val, test, 0.0);
  EXPECT_GT(op.threshold, 0.4);
  EXPECT_EQ(op.threshold, 0.8);
  EXPECT_EQ(op.recall, 0.5);
  EXPECT_EQ(op.achieved_fpr, 0.0);
}

TEST(RecallAtFpr, CapOneAlertsEverything) {
  const auto val = make({{0.9, 1}, {0.4, 0}});
  const auto test = make({{0.1, 1}, {0.0, 1}, {0.5, 0}});
  const auto op = recall_at_fpr(val, test, 1.0);
  EXPECT_TRUE(std::isinf(op.threshold) && op.threshold < 0);
  EXPECT_EQ(op.recall, 1.0);
}

TEST(RecallAtFpr, MatchesSweepOracle) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const auto val = random_sessions(rng, 2 + rng.below(199));
    const auto test = random_sessions(rng, 2 + rng.below(199));
    const double cap = rng.uniform(0.0, 0.3);
    const auto op = recall_at_fpr(val, test, cap);
    const auto ref = oracle::threshold_sweep(val, test, cap);
    ASSERT_EQ(op.threshold, ref.threshold);
    ASSERT_NEAR(op.recall, ref.recall, 1e-9);
    ASSERT_NEAR(op.achieved_fpr, ref.fpr, 1e-9);
  }
}

TEST(RecallAtFpr, BadCapRejected) {
  const auto val = make({{0.9, 1}, {0.4, 0}});
  EXPECT_EQ(error_code([&] { select_threshold(val, 1.5); }), Errc::invalid_argument);
  EXPECT_EQ(error_code([&] { select_threshold(make({{0.9, 1}}), 0.02); }), Errc::degenerate_labels);
}

TEST(FpPerHour, Arithmetic) {
  EXPECT_EQ(fp_per_hour(0, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(fp_per_hour(3, 1.5), 2.0);
  EXPECT_EQ(error_code([] { fp_per_hour(3, 0.0); }), Errc::zero_duration);
  EXPECT_EQ(benign_alerted(make({{0.9, 0}, {0.1, 0}, {0.95, 1}}), 0.5), 1u);
}

Alert alert(std::string session, double fused, Components s = {}) {
  Alert a;
  a.session_id = std::move(session);
  a.edge_eid = a.session_id + ":e";
  a.s = s;
  a.fused = fused;
  return a;
}

TEST(SessionScores, MaxOverAlertsWithReweighting) {
  const FusionWeights fw;
  const Components c{1, 0, 1, 0, 0};
  std::vector<Alert> alerts{alert("a", fuse(c, fw), c), alert("a", 0.1, {0.25, 0, 0, 0, 0}), alert("b", 0.3, {0, 0, 0, 1, 1})};
  auto scores = session_scores(alerts, fw);
  EXPECT_DOUBLE_EQ(scores.at("a"), 0.55);
  EXPECT_DOUBLE_EQ(scores.at("b"), 0.2);

  FusionWeights no_nov = fw;
  no_nov.w[comp::nov] = 0;
  EXPECT_DOUBLE_EQ(session_scores(alerts, no_nov).at("a"), 0.4);

  alerts[2].guardrail = 1.0;
  EXPECT_DOUBLE_EQ(alert_score(alerts[2], fw), 0.8 * 0.2 + 0.2 * 1.0);
}

GroundTruth small_truth(int n_benign, int n_attack) {
  GroundTruth t;
  for (int i = 0; i < n_benign + n_attack; ++i) {
    SessionTruth s;
    char sid[16];
    std::snprintf(sid, sizeof sid, "s%03d", i);
    s.session_id = sid;
    s.label = i < n_benign ? SessionLabel::benign : SessionLabel::exfil_chain;
    s.start_ts = i * 60000;
    s.end_ts = s.start_ts + 1000;
    s.rule2 = i >= n_benign && i % 2 == 0;
    t.sessions.push_back(s);
  }
  return t;
}

TEST(Evaluate, ReportRowsAndStability) {
  const auto truth = small_truth(40, 10);
  std::map<std::string, Split, std::less<>> splits;
  for (std::size_t i = 0; i < truth.sessions.size(); ++i) {
    splits[truth.sessions[i].session_id] = static_cast<Split>(i % 3 == 0 ? 1 + (i / 3) % 2 : 0);
  }
  std::vector<Alert> alerts;
  for (std::size_t i = 0; i < truth.sessions.size(); ++i) {
    const double x = truth.sessions[i].is_attack() ? 0.9 - 0.01 * static_cast<double>(i % 5) : 0.02 * static_cast<double>(i % 20);
    alerts.push_back(alert(truth.sessions[i].session_id, x, {x, x, x, x, x}));
  }
  EvalOptions opt;
  const auto r = evaluate(alerts, truth, splits, opt);
  ASSERT_FALSE(r.degenerate);
  for (const char* m : {"auroc", "average_precision", "recall_at_fpr", "fp_per_hour", "rules.auroc"}) {
    EXPECT_TRUE(r.metric(m).has_value()) << m;
  }
  EXPECT_EQ(*r.metric("auroc"), 1.0);
  EXPECT_FALSE(r.metric("no_such_metric"));

  const auto dir = std::filesystem::temp_directory_path() / "nebula_report_test";
  write_report(dir / "a", r, "seed = 7\n");
  write_report(dir / "b", evaluate(alerts, truth, splits, opt), "seed = 7\n");
  for (const char* f : {"metrics.csv", "sessions.csv", "summary.txt"}) {
    EXPECT_EQ(read_file_text(dir / "a" / f), read_file_text(dir / "b" / f)) << f;
  }
  std::filesystem::remove_all(dir);
}

TEST(Evaluate, EmptyTestSplitIsDegenerate) {
  const auto truth = small_truth(10, 4);
  std::map<std::string, Split, std::less<>> splits;
  for (const auto& s : truth.sessions) splits[s.session_id] = Split::train;
  const auto r = evaluate({}, truth, splits, EvalOptions{});
  EXPECT_TRUE(r.degenerate);
  EXPECT_FALSE(r.metric("auroc"));
}

}  // namespace
}  // namespace nebula
