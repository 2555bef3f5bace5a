#include "nebula/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "nebula/binio.hpp"
#include "nebula/error.hpp"

namespace nebula {

namespace {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts count_classes(std::span<const ScoredSession> s) {
  ClassCounts c;
  for (const auto& x : s) (x.label ? c.pos : c.neg)++;
  return c;
}

void require_both(const ClassCounts& c, std::string_view what) {
  if (c.pos == 0 || c.neg == 0) {
    throw Error(Errc::degenerate_labels, std::string(what),
                std::to_string(c.pos) + " positives, " + std::to_string(c.neg) + " negatives");
  }
}

std::vector<ScoredSession> descending(std::span<const ScoredSession> s) {
  std::vector<ScoredSession> v(s.begin(), s.end());
  std::stable_sort(v.begin(), v.end(), [](const ScoredSession& a, const ScoredSession& b) { return a.score > b.score; });
  return v;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double auroc(std::span<const ScoredSession> s) {
  const auto c = count_classes(s);
  require_both(c, "auroc");
  // Mann-Whitney over tie groups.
  const auto v = descending(s);
  double wins = 0.0;
  std::size_t neg_below = c.neg;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    std::size_t pos = 0;
    std::size_t neg = 0;
    for (; j < v.size() && v[j].score == v[i].score; ++j) (v[j].label ? pos : neg)++;
    neg_below -= neg;
    wins += static_cast<double>(pos) * (static_cast<double>(neg_below) + 0.5 * static_cast<double>(neg));
    i = j;
  }
  return wins / (static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

double average_precision(std::span<const ScoredSession> s) {
  const auto c = count_classes(s);
  if (c.pos == 0) throw Error(Errc::degenerate_labels, "average_precision", "no positives");
  const auto v = descending(s);
  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    for (; j < v.size() && v[j].score == v[i].score; ++j) {
      tp += static_cast<std::size_t>(v[j].label != 0);
      ++seen;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(c.pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

ThresholdPick select_threshold(std::span<const ScoredSession> val, double cap) {
  if (!(cap >= 0.0 && cap <= 1.0)) throw Error(Errc::invalid_argument, "fpr_cap", "must be in [0, 1]");
  const auto c = count_classes(val);
  require_both(c, "validation split");
  if (cap >= 1.0) return {-std::numeric_limits<double>::infinity(), 1.0};

  // Walk candidates from high to low; FPR only grows, so the last admissible
  // candidate is the smallest.
  const auto v = descending(val);
  ThresholdPick best{std::numeric_limits<double>::infinity(), 0.0};
  std::size_t fp = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    for (; j < v.size() && v[j].score == v[i].score; ++j) fp += static_cast<std::size_t>(v[j].label == 0);
    const double fpr = static_cast<double>(fp) / static_cast<double>(c.neg);
    if (fpr > cap) break;
    best = {v[i].score, fpr};
    i = j;
  }
  return best;
}

Operating apply_threshold(std::span<const ScoredSession> test, double threshold) {
  const auto c = count_classes(test);
  require_both(c, "test split");
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const auto& x : test) {
    if (x.score >= threshold) (x.label ? tp : fp)++;
  }
  return {threshold, static_cast<double>(tp) / static_cast<double>(c.pos),
          static_cast<double>(fp) / static_cast<double>(c.neg)};
}

Operating recall_at_fpr(std::span<const ScoredSession> val, std::span<const ScoredSession> test, double cap) {
  return apply_threshold(test, select_threshold(val, cap).threshold);
}

std::size_t benign_alerted(std::span<const ScoredSession> s, double threshold) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [&](const ScoredSession& x) { return x.label == 0 && x.score >= threshold; }));
}

double fp_per_hour(std::size_t benign_alerted_sessions, double hours) {
  if (!(hours > 0.0)) throw Error(Errc::zero_duration, "stream_hours", "duration must be > 0");
  return static_cast<double>(benign_alerted_sessions) / hours;
}

double alert_score(const Alert& a, const FusionWeights& w) {
  const double f = fuse(a.s, w);
  if (a.guardrail) return w.behavior_mix * f + w.guardrail_mix * *a.guardrail;
  return f;
}

std::map<std::string, double, std::less<>> session_scores(std::span<const Alert> alerts, const FusionWeights& w) {
  std::map<std::string, double, std::less<>> out;
  for (const auto& a : alerts) {
    auto [it, fresh] = out.try_emplace(a.session_id, 0.0);
    it->second = std::max(it->second, alert_score(a, w));
  }
  return out;
}

std::map<std::string, double, std::less<>> rule_scores(const GroundTruth& truth) {
  std::map<std::string, double, std::less<>> out;
  for (const auto& s : truth.sessions) out[s.session_id] = s.weak_flag() ? 1.0 : 0.0;
  return out;
}

std::vector<ScoredSession> scored_sessions(const GroundTruth& truth,
                                           const std::map<std::string, Split, std::less<>>& splits,
                                           const std::map<std::string, double, std::less<>>& scores) {
  std::vector<ScoredSession> out;
  out.reserve(truth.sessions.size());
  for (const auto& t : truth.sessions) {
    auto sp = splits.find(t.session_id);
    if (sp == splits.end()) throw Error(Errc::schema_violation, "splits", "no split for session " + t.session_id);
    ScoredSession s;
    s.session_id = t.session_id;
    s.truth = t.label;
    s.label = t.is_attack() ? 1 : 0;
    s.split = sp->second;
    if (auto it = scores.find(t.session_id); it != scores.end()) s.score = it->second;
    if (!std::isfinite(s.score)) throw Error(Errc::invalid_argument, "score", "non-finite score for " + t.session_id);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ScoredSession> select(std::span<const ScoredSession> s, Split split, std::optional<SessionLabel> positive) {
  std::vector<ScoredSession> out;
  for (const auto& x : s) {
    if (x.split != split) continue;
    if (positive && x.label && x.truth != *positive) continue;
    out.push_back(x);
  }
  return out;
}

std::optional<double> EvalResult::metric(std::string_view name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r.value;
  }
  return std::nullopt;
}

EvalResult evaluate(std::span<const Alert> alerts, const GroundTruth& truth,
                    const std::map<std::string, Split, std::less<>>& splits, const EvalOptions& opt) {
  opt.weights.validate();
  EvalResult r;
  r.rule_score = rule_scores(truth);
  r.sessions = scored_sessions(truth, splits, session_scores(alerts, opt.weights));

  double hours = opt.stream_hours;
  if (hours <= 0.0 && !truth.sessions.empty()) {
    std::int64_t lo = truth.sessions.front().start_ts;
    std::int64_t hi = truth.sessions.front().end_ts;
    for (const auto& s : truth.sessions) {
      lo = std::min(lo, s.start_ts);
      hi = std::max(hi, s.end_ts);
    }
    hours = static_cast<double>(hi - lo) / 3600000.0;
  }

  auto add = [&](std::string name, std::optional<double> v) { r.rows.push_back({std::move(name), v}); };
  auto guarded = [](auto&& f) -> std::optional<double> {
    try {
      return f();
    } catch (const Error& e) {
      if (e.code() == Errc::degenerate_labels || e.code() == Errc::zero_duration) return std::nullopt;
      throw;
    }
  };

  const auto test = select(r.sessions, Split::test);
  const auto val = select(r.sessions, Split::val);
  add("sessions_total", static_cast<double>(r.sessions.size()));
  add("sessions_test", static_cast<double>(test.size()));
  add("positives_test", static_cast<double>(count_classes(test).pos));
  add("stream_hours", hours);

  const auto tc = count_classes(test);
  const auto vc = count_classes(val);
  r.degenerate = tc.pos == 0 || tc.neg == 0 || vc.pos == 0 || vc.neg == 0;

  // FP/hour over the test split's share of the stream.
  const double test_hours =
      r.sessions.empty() ? 0.0 : hours * static_cast<double>(test.size()) / static_cast<double>(r.sessions.size());

  auto headline = [&](const std::string& prefix, std::span<const ScoredSession> v, std::span<const ScoredSession> t,
                      bool with_fp) {
    std::optional<Operating> op;
    try {
      op = recall_at_fpr(v, t, opt.fpr_cap);
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate_labels) throw;
    }
    add(prefix + "auroc", guarded([&] { return auroc(t); }));
    add(prefix + "average_precision", guarded([&] { return average_precision(t); }));
    add(prefix + "recall_at_fpr", op ? std::optional<double>(op->recall) : std::nullopt);
    add(prefix + "threshold", op ? std::optional<double>(op->threshold) : std::nullopt);
    add(prefix + "achieved_fpr", op ? std::optional<double>(op->achieved_fpr) : std::nullopt);
    if (with_fp) {
      add(prefix + "fp_per_hour",
          op ? guarded([&] { return fp_per_hour(benign_alerted(t, op->threshold), test_hours); }) : std::nullopt);
    }
  };

  headline("", val, test, true);

  const auto rules = scored_sessions(truth, splits, r.rule_score);
  headline("rules.", select(rules, Split::val), select(rules, Split::test), true);

  std::vector<SessionLabel> kinds;
  for (auto k : {SessionLabel::exfil_chain, SessionLabel::install_persistence, SessionLabel::device_impact}) {
    if (std::any_of(truth.sessions.begin(), truth.sessions.end(), [&](const SessionTruth& s) { return s.label == k; })) {
      kinds.push_back(k);
    }
  }
  for (std::size_t ablate = 0; ablate <= kComponents; ++ablate) {
    FusionWeights w = opt.weights;
    std::string tag = "full";
    if (ablate < kComponents) {
      if (w.w[ablate] == 0.0) continue;
      w.w[ablate] = 0.0;
      bool any = false;
      for (double x : w.w) any = any || x > 0.0;
      if (!any) continue;
      tag = "no_" + std::string(component_name(ablate)).substr(2);
    }
    const auto all = scored_sessions(truth, splits, session_scores(alerts, w));
    if (ablate < kComponents) headline(tag + ".", select(all, Split::val), select(all, Split::test), false);
    for (auto k : kinds) {
      headline(std::string(to_string(k)) + "." + tag + ".", select(all, Split::val, k), select(all, Split::test, k),
               false);
    }
  }
  return r;
}

void write_report(const std::filesystem::path& dir, const EvalResult& r, std::string_view echo) {
  std::filesystem::create_directories(dir);
  std::string metrics = "metric,value\n";
  for (const auto& row : r.rows) {
    metrics += row.name;
    metrics += ',';
    metrics += row.value ? fmt(*row.value) : std::string("degenerate");
    metrics += '\n';
  }
  write_file_text(dir / "metrics.csv", metrics);

  std::string sessions = "session_id,split,label,truth,score,rule_score\n";
  for (const auto& s : r.sessions) {
    sessions += s.session_id + ',' + std::string(to_string(s.split)) + ',' + std::to_string(s.label) + ',' +
                std::string(to_string(s.truth)) + ',' + fmt(s.score) + ',';
    auto it = r.rule_score.find(s.session_id);
    sessions += fmt(it == r.rule_score.end() ? 0.0 : it->second);
    sessions += '\n';
  }
  write_file_text(dir / "sessions.csv", sessions);

  std::string summary;
  if (r.degenerate) summary += "status: degenerate (a split lacks positives or negatives)\n";
  else summary += "status: ok\n";
  for (const char* key : {"auroc", "average_precision", "recall_at_fpr", "threshold", "achieved_fpr", "fp_per_hour",
                          "rules.auroc", "rules.average_precision", "rules.recall_at_fpr"}) {
    const auto v = r.metric(key);
    summary += std::string(key) + ": " + (v ? fmt(*v) : std::string("degenerate")) + "\n";
  }
  summary += "\n[config]\n";
  summary += echo;
  if (!echo.empty() && echo.back() != '\n') summary += '\n';
  write_file_text(dir / "summary.txt", summary);
}

}  // namespace nebula
