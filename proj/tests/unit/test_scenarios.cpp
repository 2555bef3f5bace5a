#include <gtest/gtest.h>

#include <filesystem>
#include <map>

#include "helpers.hpp"
#include "nebula/binio.hpp"
#include "nebula/fusion.hpp"
#include "nebula/scenarios.hpp"

namespace nebula {
namespace {

namespace fs = std::filesystem;
using testing::error_code;

constexpr std::int64_t kHour = 3'600'000;

ScenarioConfig quiet_config() {
  ScenarioConfig cfg;
  cfg.evasion = Evasion::none();
  return cfg;
}

std::size_t count_type(std::span<const Event> ev, EdgeType t) {
  return static_cast<std::size_t>(std::count_if(ev.begin(), ev.end(), [&](const Event& e) { return e.etype == t; }));
}

std::string stream_bytes(const Scenario& s) {
  std::string out;
  for (const auto& e : s.events) out += serialize_event(e) + "\n";
  return out;
}

TEST(Generate, SameSeedSameBytes) {
  ScenarioConfig cfg;
  cfg.sessions_per_hour = 30;
  EXPECT_EQ(stream_bytes(generate(cfg)), stream_bytes(generate(cfg)));
  ScenarioConfig other = cfg;
  other.seed = 8;
  EXPECT_NE(stream_bytes(generate(cfg)), stream_bytes(generate(other)));
}

TEST(Generate, EventsValidOrderedAndUnique) {
  ScenarioConfig cfg;
  cfg.device_impact = true;
  const auto sc = generate(cfg);
  std::set<std::string> eids;
  for (std::size_t i = 0; i < sc.events.size(); ++i) {
    ASSERT_TRUE(validate_event(sc.events[i]).empty()) << serialize_event(sc.events[i]);
    ASSERT_EQ(normalize_event(sc.events[i]), sc.events[i]);
    ASSERT_TRUE(eids.insert(sc.events[i].eid).second);
    if (i > 0) {
      ASSERT_LE(sc.events[i - 1].ts, sc.events[i].ts);
    }
  }
  EXPECT_TRUE(std::is_sorted(sc.truth.sessions.begin(), sc.truth.sessions.end(),
                             [](const auto& a, const auto& b) { return a.session_id < b.session_id; }));
}

TEST(Generate, PrevalenceWithinOneSession) {
  ScenarioConfig cfg;
  cfg.duration_ms = 6 * kHour;
  const auto sc = generate(cfg);
  const double n = static_cast<double>(sc.truth.sessions.size());
  const auto attacks = std::count_if(sc.truth.sessions.begin(), sc.truth.sessions.end(),
                                     [](const SessionTruth& t) { return t.is_attack(); });
  EXPECT_LE(std::abs(static_cast<double>(attacks) - 0.1 * n), 1.0);
}

TEST(Generate, BenignCorpusWithoutHardNegativesIsUnflagged) {
  ScenarioConfig cfg;
  cfg.hard_negative_rate = 0.0;
  cfg.attack_prevalence = 0.0;
  cfg.duration_ms = 6 * kHour;
  const auto sc = generate(cfg);
  const Allowlist allow = generator_allowlist();
  for (const auto& e : sc.events) {
    if (e.etype == EdgeType::net_out) {
      EXPECT_TRUE(allow.allows(*e.dest_host, e.dest_port)) << *e.dest_host;
    }
    EXPECT_NE(e.etype, EdgeType::install);
  }
  for (const auto& t : sc.truth.sessions) EXPECT_FALSE(t.weak_flag()) << t.session_id << " " << t.variant;
}

TEST(Generate, DiurnalProfile) {
  const auto m = diurnal_multipliers();
  ASSERT_EQ(m.size(), 24u);
  EXPECT_LT(m[3], m[12]);

  ScenarioConfig cfg;
  cfg.duration_ms = 24 * kHour;
  const auto sc = generate(cfg);
  std::array<int, 24> per_hour{};
  for (const auto& t : sc.truth.sessions) ++per_hour[((t.start_ts - cfg.start_ms) / kHour) % 24];
  EXPECT_LT(per_hour[3], per_hour[12]);
}

TEST(Generate, ValidatesConfig) {
  ScenarioConfig cfg;
  cfg.attack_prevalence = 1.5;
  EXPECT_EQ(error_code([&] { generate(cfg); }), Errc::invalid_argument);
  cfg = ScenarioConfig{};
  cfg.plugin_install_share = -0.1;
  EXPECT_EQ(error_code([&] { cfg.validate(); }), Errc::invalid_argument);
}

std::vector<Event> exfil(const ScenarioConfig& cfg, std::uint64_t seed, std::string sid = "x1") {
  Rng rng(seed);
  std::vector<Event> out;
  gen_exfil_chain(cfg, SessionSlot{std::move(sid), kDefaultEpochMs}, rng, out);
  return out;
}

std::vector<std::string> invoked_tools(std::span<const Event> ev) {
  std::vector<std::string> tools;
  for (const auto& e : ev) {
    if (e.etype == EdgeType::invoke) {
      tools.push_back(*e.tool_name);
    }
  }
  return tools;
}

TEST(ExfilChain, CanonicalWithoutEvasion) {
  const auto ev = exfil(quiet_config(), 1);
  ASSERT_EQ(ev.size(), 5u);
  EXPECT_EQ(invoked_tools(ev), (std::vector<std::string>{"read_config", "summarize", "log", "http_post"}));
  EXPECT_EQ(ev.back().etype, EdgeType::net_out);
  EXPECT_EQ(ev.back().ts, ev[3].ts);
  EXPECT_FALSE(generator_allowlist().allows(*ev.back().dest_host, ev.back().dest_port));
}

TEST(ExfilChain, FillerStepsAddInvokes) {
  ScenarioConfig cfg = quiet_config();
  cfg.evasion.filler_steps = {2, 2};
  const auto ev = exfil(cfg, 1);
  EXPECT_EQ(count_type(ev, EdgeType::invoke), 6u);
  EXPECT_EQ(count_type(ev, EdgeType::net_out), 1u);
  EXPECT_EQ(ev.back().etype, EdgeType::net_out);
  EXPECT_EQ(*ev[ev.size() - 2].tool_name, "http_post");
}

TEST(ExfilChain, ChurnGivesDistinctHosts) {
  ScenarioConfig cfg = quiet_config();
  cfg.evasion.endpoint_churn = true;
  EXPECT_NE(*exfil(cfg, 1).back().dest_host, *exfil(cfg, 2).back().dest_host);
  cfg.evasion.endpoint_churn = false;
  EXPECT_EQ(*exfil(cfg, 1).back().dest_host, *exfil(cfg, 2).back().dest_host);
}

TEST(ExfilChain, JitterSpacesSteps) {
  ScenarioConfig cfg = quiet_config();
  cfg.evasion.delay_jitter_ms = {5000, 5000};
  const auto ev = exfil(cfg, 3);
  EXPECT_GE(ev[1].ts - ev[0].ts, 5000);
}

TEST(Persistence, RepeatedInvokesSameProvider) {
  const ScenarioConfig cfg = quiet_config();
  Rng rng(4);
  const auto plan = plan_persistence(cfg, rng);
  EXPECT_NE(plan.tool, plan.harvest_tool);
  std::vector<Event> ev;
  gen_install_persistence(cfg, SessionSlot{"p1", kDefaultEpochMs}, plan, 2, true, rng, ev);
  EXPECT_EQ(count_type(ev, EdgeType::install), 1u);
  EXPECT_EQ(count_type(ev, EdgeType::invoke), 2u);
  EXPECT_EQ(count_type(ev, EdgeType::net_out), 2u);
  EXPECT_EQ(ev.size(), 5u);
  EXPECT_EQ(ev[0].etype, EdgeType::install);
  for (const auto& e : ev) {
    if (e.etype != EdgeType::net_out) {
      EXPECT_EQ(e.provider, plan.provider);
    } else {
      EXPECT_EQ(*e.dest_host, plan.endpoint_host);
    }
  }
}

TEST(Persistence, FollowOnReusesProviderWithoutInstall) {
  const ScenarioConfig cfg = quiet_config();
  Rng rng(4);
  const auto plan = plan_persistence(cfg, rng);
  std::vector<Event> ev;
  gen_install_persistence(cfg, SessionSlot{"p2", kDefaultEpochMs}, plan, 2, false, rng, ev);
  EXPECT_EQ(count_type(ev, EdgeType::install), 0u);
  const auto tools = invoked_tools(ev);
  ASSERT_EQ(tools.size(), 2u);
  EXPECT_EQ(tools[0], plan.harvest_tool);
  EXPECT_EQ(tools[1], plan.tool);
  EXPECT_EQ(ev[0].provider, plan.provider);
  EXPECT_EQ(ev[0].scope, "credential");
}

TEST(Persistence, FollowOnSessionsAppearInStream) {
  ScenarioConfig cfg;
  cfg.duration_ms = 6 * kHour;
  const auto sc = generate(cfg);
  std::map<std::string, std::string> variant;
  for (const auto& t : sc.truth.sessions) variant[t.session_id] = t.variant;
  std::size_t follow = 0;
  for (const auto& t : sc.truth.sessions) follow += t.variant == "persistence_follow_on";
  EXPECT_GT(follow, 0u);
  for (const auto& e : sc.events) {
    if (variant[e.session_id] == "persistence_follow_on") {
      EXPECT_NE(e.etype, EdgeType::install);
    }
  }
}

std::vector<Event> impact(ImpactKind k, std::int64_t start) {
  Rng rng(6);
  std::vector<Event> out;
  gen_device_impact(quiet_config(), SessionSlot{"d1", start}, k, rng, out);
  return out;
}

TEST(DeviceImpact, NightUnlock) {
  const auto ev = impact(ImpactKind::night_unlock, kDefaultEpochMs + 3 * kHour);
  const auto it = std::find_if(ev.begin(), ev.end(), [](const Event& e) { return e.scope == "lock:open" && e.etype == EdgeType::action; });
  ASSERT_NE(it, ev.end());
  EXPECT_TRUE(EscalatorConfig{}.is_night(it->ts));
}

TEST(DeviceImpact, AlarmSuppressionPrecedesUnlock) {
  const auto ev = impact(ImpactKind::alarm_suppression, kDefaultEpochMs + 2 * kHour);
  std::optional<std::size_t> siren, lock;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (ev[i].etype != EdgeType::action) continue;
    if (ev[i].scope == "siren:off" && !siren) siren = i;
    if (ev[i].scope == "lock:open" && !lock) lock = i;
  }
  ASSERT_TRUE(siren && lock);
  EXPECT_LT(*siren, *lock);
}

TEST(DeviceImpact, SilentCameraSkipsNotification) {
  const auto ev = impact(ImpactKind::silent_camera, kDefaultEpochMs + 2 * kHour);
  EXPECT_EQ(count_type(ev, EdgeType::net_out), 1u);
  EXPECT_TRUE(std::any_of(ev.begin(), ev.end(), [](const Event& e) { return e.tool_name == "reolink_snapshot"; }));
  for (const auto& e : ev) {
    EXPECT_NE(e.tool_name, "webhook_send");
    EXPECT_NE(e.scope, "notify");
  }
}

TEST(WeakLabel, PersistenceTripsRuleOne) {
  const ScenarioConfig cfg = quiet_config();
  Rng rng(4);
  const auto plan = plan_persistence(cfg, rng);
  std::vector<Event> ev;
  gen_install_persistence(cfg, SessionSlot{"p1", kDefaultEpochMs}, plan, 2, true, rng, ev);
  const auto w = weak_label(ev, generator_allowlist());
  EXPECT_TRUE(w.rule1);
  EXPECT_FALSE(w.red_edges.empty());
}

TEST(WeakLabel, ExfilTripsRuleTwo) {
  const auto w = weak_label(exfil(quiet_config(), 1), generator_allowlist());
  EXPECT_TRUE(w.rule2);
  EXPECT_FALSE(w.rule1);
}

TEST(WeakLabel, AllowlistedEgressAfterSensitiveReadIsClean) {
  std::vector<Event> ev{testing::invoke("a", 0, "read_config"),
                        testing::net_out("b", 10, "sftp_upload", "nas.home.example", 22)};
  ev[0].scope = "config";
  EXPECT_FALSE(weak_label(ev, generator_allowlist()).rule2);
  ev[1] = testing::net_out("b", 10, "http_post", "drop.example", 443);
  EXPECT_TRUE(weak_label(ev, generator_allowlist()).rule2);
  // Egress before the sensitive read does not count.
  std::swap(ev[0].ts, ev[1].ts);
  std::swap(ev[0], ev[1]);
  EXPECT_FALSE(weak_label(ev, generator_allowlist()).rule2);
}

TEST(Splits, StratifiedDisjointAndStable) {
  ScenarioConfig cfg;
  cfg.duration_ms = 4 * kHour;
  const auto sc = generate(cfg);
  const auto a = assign_splits(sc.truth, 11);
  EXPECT_EQ(a, assign_splits(sc.truth, 11));
  EXPECT_EQ(a.size(), sc.truth.sessions.size());
  std::map<std::pair<SessionLabel, Split>, int> cells;
  std::map<SessionLabel, int> per_label;
  for (const auto& t : sc.truth.sessions) {
    ++cells[{t.label, a.at(t.session_id)}];
    ++per_label[t.label];
  }
  for (const auto& [label, n] : per_label) {
    const auto train = cells[std::make_pair(label, Split::train)];
    const auto test = cells[std::make_pair(label, Split::test)];
    EXPECT_NEAR(train, 0.6 * n, 1.0) << to_string(label);
    EXPECT_NEAR(test, 0.2 * n, 1.0) << to_string(label);
  }
}

TEST(Files, TruthAndSplitsRoundTrip) {
  ScenarioConfig cfg;
  cfg.sessions_per_hour = 60;
  const auto sc = generate(cfg);
  const fs::path dir = fs::temp_directory_path() / "nebula_scenario_test";
  write_scenario(dir, sc, 11);
  EXPECT_EQ(read_truth(dir / "truth.jsonl").sessions, sc.truth.sessions);
  EXPECT_EQ(read_splits(dir / "splits.csv"), assign_splits(sc.truth, 11));
  EXPECT_EQ(read_file_text(dir / "events.nebula.jsonl"), stream_bytes(sc));
  fs::remove_all(dir);
}

TEST(EvasionSpec, ParseAndPrint) {
  const Evasion e = Evasion::parse("filler=1-3,jitter=100-200,churn=0,paraphrase=1");
  EXPECT_EQ(e.filler_steps, (Range{1, 3}));
  EXPECT_EQ(e.delay_jitter_ms, (Range{100, 200}));
  EXPECT_FALSE(e.endpoint_churn);
  EXPECT_TRUE(e.paraphrase);
  EXPECT_EQ(Evasion::parse(e.to_string()), e);
  EXPECT_EQ(Evasion::parse("none"), Evasion::none());
  EXPECT_EQ(error_code([] { Evasion::parse("filler=3-1"); }), Errc::invalid_argument);
}

}  // namespace
}  // namespace nebula
