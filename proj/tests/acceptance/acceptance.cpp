// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails. Run from the build tree; scratch data goes under the
// system temp directory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "nebula/binio.hpp"
#include "nebula/collector.hpp"
#include "nebula/config.hpp"
#include "nebula/encoder.hpp"
#include "nebula/error.hpp"
#include "nebula/eval.hpp"
#include "nebula/fusion.hpp"
#include "nebula/guardrail.hpp"
#include "nebula/novelty.hpp"
#include "nebula/pipeline.hpp"
#include "nebula/rng.hpp"
#include "nebula/scenarios.hpp"
#include "nebula/windowing.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace nebula;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nebula_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

std::map<std::string, std::optional<double>> read_metrics(const fs::path& csv) {
  std::map<std::string, std::optional<double>> out;
  std::istringstream in(read_file_text(csv));
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    const std::string value = line.substr(comma + 1);
    out[line.substr(0, comma)] = value == "degenerate" ? std::nullopt : std::optional<double>(std::stod(value));
  }
  return out;
}

// ---- 1 ----------------------------------------------------------------------

Outcome pipeline_determinism() {
  std::vector<std::string> manifests;
  double worst = 0.0;
  for (const char* run : {"det_a", "det_b"}) {
    PipelineConfig cfg;
    cfg.work_dir = scratch(run);
    cfg.scenario.seed = 7;
    cfg.hours = 2.0;
    const auto t0 = Clock::now();
    run_all(cfg);
    worst = std::max(worst, seconds_since(t0));
    manifests.push_back(read_file_text(cfg.manifest_path()));
  }
  const auto& m = manifests[0];
  const bool covers = m.find("\"windows/") != std::string::npos && m.find("\"alerts/") != std::string::npos &&
                      m.find("\"reports/") != std::string::npos;
  Outcome o;
  o.pass = manifests[0] == manifests[1] && covers && worst < 120.0;
  o.detail = std::string(manifests[0] == manifests[1] ? "manifests identical" : "manifests differ") +
             (covers ? "" : ", manifest lacks windows/alerts/reports") + fmt(", slowest run %.2f s (budget 120 s)", worst);
  return o;
}

// ---- 2 and 3 ------------------------------------------------------------------

std::map<std::string, std::optional<double>> day_metrics;
double day_seconds = 0.0;

void run_day() {
  PipelineConfig cfg;
  cfg.work_dir = scratch("day");
  cfg.hours = 24.0;
  const auto t0 = Clock::now();
  run_all(cfg);
  day_seconds = seconds_since(t0);
  day_metrics = read_metrics(cfg.reports_dir() / "metrics.csv");
}

double metric(const std::string& name) {
  const auto it = day_metrics.find(name);
  if (it == day_metrics.end() || !it->second) return std::nan("");
  return *it->second;
}

Outcome desk_detection() {
  const double au = metric("auroc");
  const double rec = metric("recall_at_fpr");
  const double rules = metric("rules.auroc");
  Outcome o;
  o.pass = au >= 0.90 && rec >= 0.40 && au > rules;
  o.detail = fmt("AUROC %.4f (>= 0.90)", au) + fmt(", Recall@2%%FPR %.4f (>= 0.40)", rec) +
             fmt(", rules-only AUROC %.4f", rules) + fmt(", AP %.4f", metric("average_precision")) +
             fmt(", FP/h %.3f", metric("fp_per_hour")) + fmt(", %.0f sessions", metric("sessions_total")) +
             fmt(", run %.1f s", day_seconds);
  return o;
}

Outcome ablation_direction() {
  const double rec_full = metric("install_persistence.full.recall_at_fpr");
  const double rec_no_nov = metric("install_persistence.no_nov.recall_at_fpr");
  const double ap_full = metric("exfil_chain.full.average_precision");
  const double ap_no_dag = metric("exfil_chain.no_dag.average_precision");
  const bool nov_ok = rec_full - rec_no_nov > 0.0;
  const bool dag_ok = ap_full - ap_no_dag > 0.0;
  Outcome o;
  o.pass = nov_ok && dag_ok;
  o.detail = fmt("install_persistence recall full %.4f", rec_full) + fmt(" vs no_nov %.4f", rec_no_nov) +
             (nov_ok ? " (drop)" : " (no drop)") + fmt("; exfil_chain AP full %.4f", ap_full) +
             fmt(" vs no_dag %.4f", ap_no_dag) + (dag_ok ? " (drop)" : " (no drop)");
  return o;
}

// ---- 4 ----------------------------------------------------------------------

// 50 sessions of 10 invoke + net_out pairs: 1000 scored edges.
BuiltWindow latency_window(std::uint64_t seed, std::int64_t id) {
  Rng rng(seed);
  std::vector<Event> events;
  const std::int64_t t0 = id * 10000;
  for (int s = 0; s < 50; ++s) {
    const std::string sid = "w" + std::to_string(id) + "s" + std::to_string(s);
    for (int k = 0; k < 10; ++k) {
      const std::int64_t ts = t0 + static_cast<std::int64_t>(rng.below(9000));
      const std::string tool = "tool_" + std::to_string(rng.below(40));
      const std::string eid = sid + "-" + std::to_string(k);
      Event inv;
      inv.eid = eid;
      inv.ts = ts;
      inv.etype = EdgeType::invoke;
      inv.src = {NodeType::agent, "main"};
      inv.dst = {NodeType::tool, tool};
      inv.tool_name = tool;
      inv.session_id = sid;
      inv.provider = "core";
      inv.scope = rng.uniform() < 0.2 ? "credential" : "text";
      events.push_back(inv);
      Event net;
      net.eid = eid + ":net";
      net.ts = ts;
      net.etype = EdgeType::net_out;
      net.src = {NodeType::tool, tool};
      const std::string host = "h" + std::to_string(rng.below(300)) + ".example";
      const std::int64_t port = rng.uniform() < 0.7 ? 443 : 8080;
      net.dst = {NodeType::remote, host + ":" + std::to_string(port)};
      net.tool_name = tool;
      net.session_id = sid;
      net.provider = "core";
      net.dest_host = host;
      net.dest_port = port;
      net.bytes = static_cast<std::int64_t>(rng.below(100000));
      events.push_back(net);
    }
  }
  NodeIndex index;
  SeenState seen;
  return build_window(events, id, index, seen, WindowConfig{}, CountMinSketch());
}

Outcome latency() {
  const ModelWeights w = ModelWeights::init(32, 32, 7);
  const Scorer scorer{Profile::standard, &w, nullptr};
  const ScoringConfig cfg;
  const Allowlist allow = generator_allowlist();
  std::vector<double> times;
  std::size_t min_alerts = SIZE_MAX;
  for (int i = 0; i < 100; ++i) {
    const auto bw = latency_window(1000 + i, i);
    ScoringState state;
    const auto t0 = Clock::now();
    const auto alerts = score_window(bw.graph, bw.summaries, state, allow, scorer, cfg);
    times.push_back(seconds_since(t0));
    min_alerts = std::min(min_alerts, alerts.size());
  }
  std::sort(times.begin(), times.end());
  const double p95 = times[94];
  Outcome o;
  o.pass = min_alerts == 1000 && times.back() < 1.0;
  o.detail = fmt("P95 %.4f s", p95) + fmt(", max %.4f s", times.back()) + fmt(", median %.4f s", times[49]) +
             " over 100 windows, " + std::to_string(min_alerts) + " scored edges per window (d=32)";
  return o;
}

// ---- 5 ----------------------------------------------------------------------

Outcome novelty_semantics() {
  using Kind = TtlTable::Kind;
  const std::int64_t now = 50'000'000;
  bool examples = true;
  {
    TtlTable t(600000);
    examples = examples && ttl_novelty(t, "tool|net_out|remote", now) == 1;
    t.touch(Kind::triple, "tool|net_out|remote", now - 5000);
    examples = examples && ttl_novelty(t, "tool|net_out|remote", now) == 0;
    TtlTable u(600000);
    u.touch(Kind::triple, "tool|net_out|remote", now - 600001);
    examples = examples && ttl_novelty(u, "tool|net_out|remote", now) == 1;
  }

  Rng rng(5);
  std::size_t failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::int64_t ttl = 1 + static_cast<std::int64_t>(rng.below(1'000'000));
    TtlTable t(ttl);
    const std::string key = "k" + std::to_string(rng.below(5));
    std::optional<std::int64_t> last;
    if (rng.uniform() < 0.8) {
      last = static_cast<std::int64_t>(rng.below(10'000'000));
      t.touch(Kind::triple, key, *last);
    }
    const std::int64_t base = last.value_or(0);
    const std::int64_t a = base + static_cast<std::int64_t>(rng.below(2'000'000));
    const std::int64_t b = a + static_cast<std::int64_t>(rng.below(2'000'000));
    const int na = ttl_novelty(t, key, a);
    const int nb = ttl_novelty(t, key, b);
    const int expect_a = !last || a - *last > ttl ? 1 : 0;
    // Later queries are never less novel; touching makes the key fresh.
    bool ok = na <= nb && na == expect_a;
    t.touch(Kind::triple, key, b);
    ok = ok && ttl_novelty(t, key, b) == 0 && ttl_novelty(t, key, b + ttl) == 0 && ttl_novelty(t, key, b + ttl + 1) == 1;
    failures += ok ? 0 : 1;
  }
  Outcome o;
  o.pass = examples && failures == 0;
  o.detail = std::string(examples ? "3/3 examples" : "examples FAILED") + ", " + std::to_string(failures) +
             " of 10000 randomized cases violated monotonicity";
  return o;
}

// ---- 6 ----------------------------------------------------------------------

Outcome cms_error() {
  std::size_t undercounts = 0;
  double worst_share = 1.0;
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    Rng rng(100 + trial);
    CountMinSketch s(4, 2048, 0x6e6562756c61ULL + trial);
    std::unordered_map<std::string, std::uint64_t> exact;
    // Heavy-tailed counts over 10,000 distinct keys.
    for (int k = 0; k < 10000; ++k) {
      const std::string key = "key-" + std::to_string(trial) + "-" + std::to_string(k);
      const auto count = 1 + static_cast<std::uint64_t>(std::floor(std::pow(rng.uniform(), 4.0) * 50.0));
      exact[key] = count;
      s.update(key, count);
    }
    const double bound = s.epsilon() * static_cast<double>(s.total());
    std::size_t within = 0;
    for (const auto& [key, c] : exact) {
      const auto est = s.estimate(key);
      if (est < c) ++undercounts;
      if (static_cast<double>(est - std::min(est, c)) <= bound) ++within;
    }
    worst_share = std::min(worst_share, static_cast<double>(within) / static_cast<double>(exact.size()));
  }
  Outcome o;
  o.pass = undercounts == 0 && worst_share >= 0.99;
  o.detail = std::to_string(undercounts) + " undercounts; worst share within eN " + fmt("%.4f", worst_share) +
             " (>= 0.99) over 5 streams of 10000 keys";
  return o;
}

// ---- 7 ----------------------------------------------------------------------

Outcome gradient_check() {
  Rng rng(77);
  double worst = 0.0;
  double weakest_mutation = INFINITY;
  for (int t = 0; t < 10; ++t) {
    WindowGraph g;
    const std::size_t nodes = 4 + rng.below(6);
    const std::size_t edges = 3 + rng.below(10);
    for (std::size_t i = 0; i < nodes; ++i) {
      g.node_ids.push_back(2 * i + 1);
      g.node_types.push_back(static_cast<NodeType>(rng.below(5)));
    }
    std::vector<std::size_t> idx;
    std::vector<FeatureRow> rows;
    std::vector<double> labels;
    for (std::size_t e = 0; e < edges; ++e) {
      g.edge_src.push_back(g.node_ids[rng.below(nodes)]);
      g.edge_dst.push_back(g.node_ids[rng.below(nodes)]);
      g.edge_types.push_back(static_cast<EdgeType>(rng.below(3)));
      g.edge_ts.push_back(static_cast<std::int64_t>(e));
      g.edge_eids.push_back("e" + std::to_string(e));
      idx.push_back(e);
      FeatureRow r{};
      for (double& x : r) x = rng.uniform();
      rows.push_back(r);
      labels.push_back(static_cast<double>(rng.below(2)));
    }
    g.edge_attrs.resize(edges);
    const auto w = ModelWeights::init(4, 6, 500 + static_cast<std::uint64_t>(t));
    worst = std::max(worst, grad_check(w, g, idx, rows, labels));
    weakest_mutation = std::min(weakest_mutation, grad_check(w, g, idx, rows, labels, GradOptions{true}));
  }
  Outcome o;
  o.pass = worst < 1e-4 && weakest_mutation > 1e-2;
  o.detail = fmt("max relative error %.3e (< 1e-4)", worst) +
             fmt("; zeroed neighbor gradient detected with error >= %.3e (> 1e-2) on all 10 graphs", weakest_mutation);
  return o;
}

// ---- 8 ----------------------------------------------------------------------

Outcome metric_oracles() {
  Rng rng(8);
  double worst = 0.0;
  std::size_t threshold_mismatch = 0;
  for (int i = 0; i < 1000; ++i) {
    auto draw = [&](std::size_t n) {
      std::vector<ScoredSession> s(n);
      const std::uint64_t grid = 2 + rng.below(60);
      for (std::size_t k = 0; k < n; ++k) {
        s[k].session_id = "s" + std::to_string(k);
        s[k].label = rng.uniform() < 0.3 ? 1 : 0;
        s[k].score = static_cast<double>(rng.below(grid)) / static_cast<double>(grid - 1);
      }
      s[0].label = 1;
      s[1].label = 0;
      return s;
    };
    const auto val = draw(2 + rng.below(199));
    const auto test = draw(2 + rng.below(199));
    const double cap = rng.below(4) == 0 ? 0.0 : rng.uniform(0.0, 0.5);
    worst = std::max(worst, std::abs(auroc(test) - oracle::auroc(test)));
    worst = std::max(worst, std::abs(average_precision(test) - oracle::average_precision(test)));
    const auto op = recall_at_fpr(val, test, cap);
    const auto ref = oracle::threshold_sweep(val, test, cap);
    if (op.threshold != ref.threshold) ++threshold_mismatch;
    worst = std::max(worst, std::abs(op.recall - ref.recall));
    worst = std::max(worst, std::abs(op.achieved_fpr - ref.fpr));
  }
  Outcome o;
  o.pass = worst <= 1e-9 && threshold_mismatch == 0;
  o.detail = fmt("max deviation %.3e (<= 1e-9)", worst) + ", " + std::to_string(threshold_mismatch) +
             " threshold mismatches over 1000 instances";
  return o;
}

// ---- 9 ----------------------------------------------------------------------

std::vector<std::vector<std::uint8_t>> window_bytes(std::span<const BuiltWindow> ws) {
  std::vector<std::vector<std::uint8_t>> out;
  for (const auto& w : ws) {
    auto b = window_to_bytes(w.graph);
    for (const auto& s : w.summaries) {
      const auto text = summary_to_json(s).dump();
      b.insert(b.end(), text.begin(), text.end());
    }
    out.push_back(std::move(b));
  }
  return out;
}

Outcome replay_dedup() {
  // Midday stream: dense enough that most replays land inside the watermark.
  ScenarioConfig cfg;
  cfg.start_ms += 12 * 3'600'000;
  cfg.duration_ms = 2 * 3'600'000;
  const auto sc = generate(cfg);

  // Each duplicated record is replayed a few records after its original, as a
  // reconnecting collector would.
  Rng rng(9);
  std::vector<Event> replayed;
  std::vector<std::pair<std::size_t, Event>> pending;
  std::size_t dups = 0;
  for (std::size_t i = 0; i < sc.events.size(); ++i) {
    replayed.push_back(sc.events[i]);
    if (i % 5 == 0) {
      pending.emplace_back(i + 1 + rng.below(8), sc.events[i]);
      ++dups;
    }
    for (auto it = pending.begin(); it != pending.end();) {
      if (it->first <= i) {
        replayed.push_back(it->second);
        it = pending.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& p : pending) replayed.push_back(p.second);

  // Round-trip through the capture format, as build-windows would read it.
  const fs::path dir = scratch("dedup");
  fs::create_directories(dir);
  write_events(dir / "orig.nebula.jsonl", sc.events);
  write_events(dir / "dup.nebula.jsonl", replayed);
  const auto a = replay_capture(dir / "orig.nebula.jsonl").events;
  const auto b = replay_capture(dir / "dup.nebula.jsonl").events;

  WindowStats sa, sb;
  const auto wa = build_all_windows(a, WindowConfig{}, &sa);
  const auto wb = build_all_windows(b, WindowConfig{}, &sb);
  const bool same = window_bytes(wa) == window_bytes(wb);
  Outcome o;
  o.pass = same && dups * 5 >= sc.events.size();
  o.detail = std::to_string(dups) + " of " + std::to_string(sc.events.size()) + " events duplicated; " +
             std::to_string(wa.size()) + " windows " + (same ? "byte-identical" : "DIFFER") + "; " +
             std::to_string(sb.duplicates) + " dropped by dedup, " + std::to_string(sb.too_late - sa.too_late) +
             " past the watermark";
  return o;
}

// ---- 10 ---------------------------------------------------------------------

Outcome guardrail_separation() {
  const auto& corpus = GuardrailCorpus::builtin();
  const FusionWeights fw;
  const double behavior = 0.5;
  auto fused2 = [&](const std::string& p) { return fw.behavior_mix * behavior + fw.guardrail_mix * guardrail_score(p); };
  double min_inj = INFINITY, max_ben = -INFINITY;
  for (const auto& p : corpus.injection) min_inj = std::min(min_inj, fused2(p));
  for (const auto& p : corpus.benign) max_ben = std::max(max_ben, fused2(p));

  std::vector<int> evading(corpus.injection.size(), 0), total(corpus.injection.size(), 0);
  for (const auto& p : builtin_paraphrases()) {
    ++total[p.phrase];
    if (guardrail_eval(p.text).keyword_hit == 0.0) ++evading[p.phrase];
  }
  std::size_t missed = 0;
  for (std::size_t i = 0; i < total.size(); ++i) missed += total[i] > 0 && evading[i] == total[i];
  Outcome o;
  o.pass = corpus.injection.size() == 20 && corpus.benign.size() == 20 && min_inj > max_ben && missed >= 5;
  o.detail = fmt("min injection fused2 %.4f", min_inj) + fmt(" > max benign fused2 %.4f", max_ben) + "; keyword_hit " +
             "misses every paraphrase of " + std::to_string(missed) + " of 20 injection phrases (>= 5)";
  return o;
}

// ---- 11 ---------------------------------------------------------------------

Outcome hysteresis() {
  Rng rng(11);
  std::size_t mismatches = 0;
  std::size_t steps = 0;
  for (int c = 0; c < 10000; ++c) {
    SeverityConfig cfg;
    cfg.t_obs = rng.uniform(0.2, 0.6);
    cfg.t_high = rng.uniform(cfg.t_obs + 0.05, 0.95);
    cfg.margin = rng.uniform(0.0, 0.1);
    cfg.cooldown = 1 + static_cast<std::int64_t>(rng.below(4));
    oracle::SeverityMachine ref{cfg};
    SessionSeverity st;
    const std::size_t len = 1 + rng.below(40);
    bool ok = true;
    for (std::size_t i = 0; i < len; ++i, ++steps) {
      // Bias draws toward the thresholds so boundary cases are common.
      double fused;
      switch (rng.below(4)) {
        case 0: fused = cfg.t_obs + rng.uniform(-cfg.margin - 0.01, 0.01); break;
        case 1: fused = cfg.t_high + rng.uniform(-cfg.margin - 0.01, 0.01); break;
        case 2: fused = rng.below(2) ? cfg.t_high : cfg.t_obs - cfg.margin; break;
        default: fused = rng.uniform(); break;
      }
      const bool flag = rng.uniform() < 0.1;
      const Severity before = st.level;
      const Severity got = severity_step(fused, flag, st, cfg, static_cast<std::int64_t>(i));
      ok = ok && got == ref.step(fused, flag);
      ok = ok && st.since_ts == (got != before ? static_cast<std::int64_t>(i) : st.since_ts);
      ok = ok && !(before == Severity::none && got == Severity::high && fused < cfg.t_high);
    }
    mismatches += ok ? 0 : 1;
  }
  Outcome o;
  o.pass = mismatches == 0;
  o.detail = std::to_string(mismatches) + " of 10000 sequences (" + std::to_string(steps) +
             " steps) disagree with the reference machine";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "pipeline determinism", pipeline_determinism},
      {2, "desk-scale detection", [] {
         run_day();
         return desk_detection();
       }},
      {3, "ablation direction", ablation_direction},
      {4, "per-window latency", latency},
      {5, "novelty semantics", novelty_semantics},
      {6, "count-min one-sided error", cms_error},
      {7, "gradient check", gradient_check},
      {8, "metric oracles", metric_oracles},
      {9, "replay idempotence and dedup", replay_dedup},
      {10, "guardrail corpus separation", guardrail_separation},
      {11, "hysteresis state machine", hysteresis},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
