#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nebula/fusion.hpp"
#include "nebula/scenarios.hpp"

namespace nebula {

struct ScoredSession {
  std::string session_id;
  double score = 0.0;
  int label = 0;  // 1 for any attack label
  SessionLabel truth = SessionLabel::benign;
  Split split = Split::train;
};

// Probability a random positive outscores a random negative, ties 1/2.
// Throws DegenerateLabels unless both classes are present.
double auroc(std::span<const ScoredSession> s);

// Sum of (R_k - R_{k-1}) P_k over descending score; equal scores form one
// step. Throws DegenerateLabels when there is no positive.
double average_precision(std::span<const ScoredSession> s);

struct ThresholdPick {
  double threshold = 0.0;  // sessions alert when score >= threshold
  double val_fpr = 0.0;
};

// Smallest candidate threshold whose validation FPR is <= cap. Candidates are
// -inf, every validation score, and +inf. Throws DegenerateLabels when val
// lacks either class, InvalidArgument unless cap is in [0, 1].
ThresholdPick select_threshold(std::span<const ScoredSession> val, double cap);

struct Operating {
  double threshold = 0.0;
  double recall = 0.0;
  double achieved_fpr = 0.0;
};

// Recall and FPR of `test` at a fixed threshold. Throws DegenerateLabels
// when test lacks either class.
Operating apply_threshold(std::span<const ScoredSession> test, double threshold);
Operating recall_at_fpr(std::span<const ScoredSession> val, std::span<const ScoredSession> test, double cap);

// Benign sessions alerting at `threshold`.
std::size_t benign_alerted(std::span<const ScoredSession> s, double threshold);
// Throws ZeroDuration for hours <= 0.
double fp_per_hour(std::size_t benign_alerted_sessions, double hours);

// Alert score after optional reweighting: w.s, mixed with the guardrail
// score when the edge carried a prompt.
double alert_score(const Alert& a, const FusionWeights& w);
// Session -> max alert score.
std::map<std::string, double, std::less<>> session_scores(std::span<const Alert> alerts, const FusionWeights& w);
// Weak rules as a scorer: 1 when either rule fires, else 0.
std::map<std::string, double, std::less<>> rule_scores(const GroundTruth& truth);

// Sessions of the truth table with their split and score (0 when absent).
std::vector<ScoredSession> scored_sessions(const GroundTruth& truth,
                                           const std::map<std::string, Split, std::less<>>& splits,
                                           const std::map<std::string, double, std::less<>>& scores);

// Sessions of one split; with `positive`, only benign sessions and that label.
std::vector<ScoredSession> select(std::span<const ScoredSession> s, Split split,
                                  std::optional<SessionLabel> positive = std::nullopt);

struct EvalOptions {
  double fpr_cap = 0.02;
  double stream_hours = 0.0;  // 0: derived from the truth table span
  FusionWeights weights;
};

struct MetricRow {
  std::string name;
  std::optional<double> value;  // nullopt: degenerate
};

struct EvalResult {
  std::vector<MetricRow> rows;
  std::vector<ScoredSession> sessions;
  std::map<std::string, double, std::less<>> rule_score;
  bool degenerate = false;  // the headline test metrics could not be computed

  std::optional<double> metric(std::string_view name) const;
};

// Headline metrics on the test split, the rules-only baseline, and per-label
// subsets under each single-component ablation (weight set to 0).
// Thresholds are selected on val and applied to test.
EvalResult evaluate(std::span<const Alert> alerts, const GroundTruth& truth,
                    const std::map<std::string, Split, std::less<>>& splits, const EvalOptions& opt);

// metrics.csv, sessions.csv and summary.txt; byte-stable for equal inputs.
// `echo` is copied into the summary verbatim.
void write_report(const std::filesystem::path& dir, const EvalResult& r, std::string_view echo);

}  // namespace nebula
