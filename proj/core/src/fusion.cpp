#include "nebula/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "nebula/binio.hpp"
#include "nebula/error.hpp"
#include "nebula/guardrail.hpp"

namespace nebula {

namespace {

constexpr std::array<std::string_view, kComponents> kComponentNames = {"s_edge", "s_dag", "s_nov", "s_attr",
                                                                       "s_struct"};
constexpr std::array<std::string_view, 3> kSeverityNames = {"none", "observe", "high"};

std::string instance_key(const WindowGraph& g, std::size_t i) {
  std::string k = std::to_string(g.edge_src[i]);
  k += '|';
  k += to_string(g.edge_types[i]);
  k += '|';
  k += std::to_string(g.edge_dst[i]);
  return k;
}

std::optional<std::string> dest_of(const EdgeAttrs& a) {
  if (!a.dest_host) return std::nullopt;
  return host_port_key(*a.dest_host, a.dest_port.value_or(0));
}

template <typename F>
void for_each_line(const std::string& text, F&& f) {
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + start, nl - start);
    if (!line.empty()) f(line);
    start = nl + 1;
  }
}

}  // namespace

std::string_view component_name(std::size_t i) { return kComponentNames.at(i); }

void FusionWeights::validate() const {
  bool positive = false;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(Errc::invalid_argument, "weights", "components must be >= 0");
    positive = positive || x > 0.0;
  }
  if (!positive) throw Error(Errc::invalid_argument, "weights", "at least one weight must be > 0");
  if (behavior_mix < 0.0 || guardrail_mix < 0.0) throw Error(Errc::invalid_argument, "guardrail_mix", "must be >= 0");
}

double fuse(const Components& s, const FusionWeights& fw) {
  double f = 0.0;
  for (std::size_t i = 0; i < kComponents; ++i) f += fw.w[i] * s[i];
  return f;
}

double dag_score(const SessionDagSummary& s) {
  const double v = 0.3 * squash(static_cast<double>(s.chain_len)) + 0.2 * squash(static_cast<double>(s.branching)) +
                   0.3 * s.install_proximity + 0.2 * s.rare_path;
  return std::clamp(v, 0.0, 1.0);
}

std::string_view to_string(Severity s) noexcept { return kSeverityNames[static_cast<std::size_t>(s)]; }

Severity parse_severity(std::string_view label) {
  for (std::size_t i = 0; i < kSeverityNames.size(); ++i) {
    if (kSeverityNames[i] == label) return static_cast<Severity>(i);
  }
  throw Error(Errc::schema_violation, "severity", "unknown severity '" + std::string(label) + "'");
}

void SeverityConfig::validate() const {
  if (!(t_obs < t_high)) throw Error(Errc::invalid_argument, "thresholds", "T_obs must be below T_high");
  if (margin < 0.0) throw Error(Errc::invalid_argument, "margin", "must be >= 0");
  if (cooldown < 1) throw Error(Errc::invalid_argument, "cooldown", "must be >= 1");
}

Severity severity_step(double fused, bool flagged, SessionSeverity& st, const SeverityConfig& cfg, std::int64_t ts) {
  const Severity before = st.level;
  switch (st.level) {
    case Severity::none:
      st.quiet_windows = 0;
      if (fused >= cfg.t_high) {
        st.level = Severity::high;
      } else if (fused >= cfg.t_obs || flagged) {
        st.level = Severity::observe;
      }
      break;
    case Severity::observe:
      if (fused >= cfg.t_high) {
        st.level = Severity::high;
        st.quiet_windows = 0;
      } else if (fused < cfg.t_obs - cfg.margin && !flagged) {
        if (++st.quiet_windows >= cfg.cooldown) {
          st.level = Severity::none;
          st.quiet_windows = 0;
        }
      } else {
        st.quiet_windows = 0;
      }
      break;
    case Severity::high:
      if (fused < cfg.t_high - cfg.margin) {
        if (++st.quiet_windows >= cfg.cooldown) {
          st.level = Severity::observe;
          st.quiet_windows = 0;
        }
      } else {
        st.quiet_windows = 0;
      }
      break;
  }
  if (st.level != before) st.since_ts = ts;
  return st.level;
}

bool EscalatorConfig::is_night(std::int64_t ts) const {
  constexpr std::int64_t kDayMin = 24 * 60;
  const std::int64_t minute = ((ts / 60000) % kDayMin + kDayMin) % kDayMin;
  if (night_start_min <= night_end_min) return minute >= night_start_min && minute < night_end_min;
  return minute >= night_start_min || minute < night_end_min;
}

std::vector<EscalatorFlags> escalators(const WindowGraph& g, const Allowlist& allow, const TtlTable& ttl,
                                       const EscalatorConfig& cfg,
                                       const std::map<std::string, std::int64_t, std::less<>>& install_sessions) {
  std::vector<EscalatorFlags> flags(g.num_edges());
  std::unordered_map<std::string_view, std::int64_t> first_install;
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    if (g.edge_types[i] != EdgeType::install) continue;
    first_install.try_emplace(g.edge_attrs[i].session_id, g.edge_ts[i]);
  }
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    const auto& a = g.edge_attrs[i];
    if (g.edge_types[i] == EdgeType::net_out && a.dest_host) {
      bool has_install = install_sessions.count(a.session_id) > 0;
      if (auto it = first_install.find(a.session_id); it != first_install.end() && it->second <= g.edge_ts[i]) {
        has_install = true;
      }
      if (has_install && dst_novelty(*a.dest_host, a.dest_port, g.edge_ts[i], allow, ttl) == 1.0) {
        flags[i].install_new_egress = true;
      }
    } else if (g.edge_types[i] == EdgeType::action) {
      const bool lock_open = (a.scope && cfg.lock_open_markers.count(*a.scope)) ||
                             (a.tool_name && cfg.lock_open_markers.count(*a.tool_name));
      if (lock_open && cfg.is_night(g.edge_ts[i])) flags[i].night_unlock = true;
    }
  }
  return flags;
}

nlohmann::ordered_json alert_to_json(const Alert& a) {
  nlohmann::ordered_json j;
  j["window_id"] = a.window_id;
  j["edge_eid"] = a.edge_eid;
  j["session_id"] = a.session_id;
  j["ts"] = a.ts;
  j["etype"] = to_string(a.etype);
  for (std::size_t i = 0; i < kComponents; ++i) j[std::string(kComponentNames[i])] = a.s[i];
  if (a.guardrail) j["guardrail"] = *a.guardrail;
  j["fused"] = a.fused;
  if (a.fused2) j["fused2"] = *a.fused2;
  j["severity"] = to_string(a.severity);
  j["install_new_egress"] = a.flags.install_new_egress;
  j["night_unlock"] = a.flags.night_unlock;
  nlohmann::ordered_json ev;
  ev["triple"] = a.evidence.triple;
  ev["instance"] = a.evidence.instance;
  if (a.evidence.dest) ev["dest"] = *a.evidence.dest;
  ev["chain_len"] = a.evidence.chain_len;
  ev["branching"] = a.evidence.branching;
  ev["install_proximity"] = a.evidence.install_proximity;
  ev["rare_path"] = a.evidence.rare_path;
  j["evidence"] = std::move(ev);
  return j;
}

Alert alert_from_json(const nlohmann::json& j) {
  Alert a;
  try {
    a.window_id = j.at("window_id").get<std::uint64_t>();
    a.edge_eid = j.at("edge_eid").get<std::string>();
    a.session_id = j.at("session_id").get<std::string>();
    a.ts = j.at("ts").get<std::int64_t>();
    a.etype = parse_edge_type(j.at("etype").get<std::string>());
    for (std::size_t i = 0; i < kComponents; ++i) a.s[i] = j.at(std::string(kComponentNames[i])).get<double>();
    if (j.contains("guardrail")) a.guardrail = j["guardrail"].get<double>();
    a.fused = j.at("fused").get<double>();
    if (j.contains("fused2")) a.fused2 = j["fused2"].get<double>();
    a.severity = parse_severity(j.at("severity").get<std::string>());
    a.flags.install_new_egress = j.at("install_new_egress").get<bool>();
    a.flags.night_unlock = j.at("night_unlock").get<bool>();
    const auto& ev = j.at("evidence");
    a.evidence.triple = ev.at("triple").get<std::string>();
    a.evidence.instance = ev.at("instance").get<std::string>();
    if (ev.contains("dest")) a.evidence.dest = ev["dest"].get<std::string>();
    a.evidence.chain_len = ev.at("chain_len").get<std::int64_t>();
    a.evidence.branching = ev.at("branching").get<std::int64_t>();
    a.evidence.install_proximity = ev.at("install_proximity").get<double>();
    a.evidence.rare_path = ev.at("rare_path").get<double>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::malformed_record, "alert", ex.what());
  }
  return a;
}

void write_alerts(const std::filesystem::path& path, std::span<const Alert> alerts) {
  std::string out;
  for (const auto& a : alerts) {
    out += alert_to_json(a).dump();
    out += '\n';
  }
  write_file_text(path, out);
}

std::vector<Alert> read_alerts(const std::filesystem::path& path) {
  std::vector<Alert> out;
  for_each_line(read_file_text(path), [&](std::string_view line) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      throw Error(Errc::malformed_record, path.string(), ex.what());
    }
    out.push_back(alert_from_json(j));
  });
  return out;
}

std::string_view to_string(Profile p) noexcept { return p == Profile::standard ? "standard" : "lite"; }

Profile parse_profile(std::string_view label) {
  if (label == "standard") return Profile::standard;
  if (label == "lite") return Profile::lite;
  throw Error(Errc::invalid_argument, "profile", "expected 'standard' or 'lite', got '" + std::string(label) + "'");
}

std::vector<double> Scorer::score(const WindowGraph& g, std::span<const std::size_t> edges,
                                  std::span<const FeatureRow> rows) const {
  if (profile == Profile::lite) {
    if (!lite) throw Error(Errc::missing_weights, "lite", "no lite model loaded");
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(lite->score(r));
    return out;
  }
  if (!weights) throw Error(Errc::missing_weights, "standard", "no encoder weights loaded");
  return forward(g, *weights, edges, weights->f ? rows : std::span<const FeatureRow>{});
}

void ScoringState::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  ttl.save(dir / "ttl.nebt");
  triples.save(dir / "triples.nebs");
  std::string out;
  nlohmann::ordered_json meta;
  meta["last_window"] = last_window;
  out += meta.dump() + "\n";
  for (const auto& [sid, st] : sessions) {
    nlohmann::ordered_json j;
    j["session_id"] = sid;
    j["severity"] = to_string(st.level);
    j["quiet_windows"] = st.quiet_windows;
    j["since_ts"] = st.since_ts;
    if (auto it = install_sessions.find(sid); it != install_sessions.end()) j["install_ts"] = it->second;
    out += j.dump() + "\n";
  }
  for (const auto& [sid, ts] : install_sessions) {
    if (sessions.count(sid)) continue;
    nlohmann::ordered_json j;
    j["session_id"] = sid;
    j["install_ts"] = ts;
    out += j.dump() + "\n";
  }
  write_file_text(dir / "sessions.jsonl", out);
}

ScoringState ScoringState::load(const std::filesystem::path& dir) {
  ScoringState st;
  st.ttl = TtlTable::load(dir / "ttl.nebt");
  st.triples = CountMinSketch::load(dir / "triples.nebs");
  const auto source = (dir / "sessions.jsonl").string();
  bool first = true;
  for_each_line(read_file_text(dir / "sessions.jsonl"), [&](std::string_view line) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      if (first) {
        st.last_window = j.at("last_window").get<std::int64_t>();
        first = false;
        return;
      }
      const auto sid = j.at("session_id").get<std::string>();
      if (j.contains("severity")) {
        SessionSeverity s;
        s.level = parse_severity(j["severity"].get<std::string>());
        s.quiet_windows = j.at("quiet_windows").get<std::int64_t>();
        s.since_ts = j.at("since_ts").get<std::int64_t>();
        st.sessions.emplace(sid, s);
      }
      if (j.contains("install_ts")) st.install_sessions.emplace(sid, j["install_ts"].get<std::int64_t>());
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::corrupt_container, source, ex.what());
    }
  });
  return st;
}

void absorb_window(const WindowGraph& g, ScoringState& state) {
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    const std::int64_t ts = g.edge_ts[i];
    const auto& a = g.edge_attrs[i];
    const std::string triple = edge_type_triple(g, i);
    state.ttl.touch(TtlTable::Kind::instance, instance_key(g, i), ts);
    state.ttl.touch(TtlTable::Kind::triple, triple, ts);
    state.triples.update(triple);
    if (g.edge_types[i] == EdgeType::invoke && a.tool_name) {
      state.ttl.touch(TtlTable::Kind::provider_tool, provider_tool_key(a.provider, *a.tool_name), ts);
    }
    if (g.edge_types[i] == EdgeType::net_out && a.dest_host) {
      state.ttl.touch(TtlTable::Kind::host, *a.dest_host, ts);
      state.ttl.touch(TtlTable::Kind::host_port, host_port_key(*a.dest_host, a.dest_port.value_or(0)), ts);
    }
    if (g.edge_types[i] == EdgeType::install) {
      auto& slot = state.install_sessions[a.session_id];
      slot = std::max(slot, ts);
    }
  }
  // Install memory only needs to outlive the TTL horizon.
  const std::int64_t horizon = g.t_end - state.ttl.ttl_ms();
  for (auto it = state.install_sessions.begin(); it != state.install_sessions.end();) {
    it = it->second < horizon ? state.install_sessions.erase(it) : std::next(it);
  }
}

std::vector<std::size_t> new_edges(const WindowGraph& g, const TtlTable& ttl, Profile profile,
                                   const std::set<std::string, std::less<>>& sensitive_tools) {
  std::vector<std::size_t> out;
  std::vector<std::size_t> lite;
  if (profile == Profile::lite) lite = lite_filter(g, sensitive_tools);
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    if (!is_scored(g.edge_types[i])) continue;
    if (profile == Profile::lite && !std::binary_search(lite.begin(), lite.end(), i)) continue;
    const auto seen = ttl.last_seen(TtlTable::Kind::instance, instance_key(g, i));
    if (!seen || g.edge_ts[i] - *seen > ttl.ttl_ms()) out.push_back(i);
  }
  return out;
}

std::vector<Alert> score_window(const WindowGraph& g, std::span<const SessionDagSummary> summaries,
                                ScoringState& state, const Allowlist& allow, const Scorer& scorer,
                                const ScoringConfig& cfg) {
  if (static_cast<std::int64_t>(g.window_id) <= state.last_window) {
    throw Error(Errc::state_desync, "window_id",
                "window " + std::to_string(g.window_id) + " after " + std::to_string(state.last_window));
  }
  check_window(g);

  const FeatureMatrix fm = build_features(g, summaries, state.triples, state.ttl, allow, cfg.features);
  std::vector<std::size_t> row_of(g.num_edges(), static_cast<std::size_t>(-1));
  for (std::size_t r = 0; r < fm.edges.size(); ++r) row_of[fm.edges[r]] = r;

  const auto selected = new_edges(g, state.ttl, scorer.profile, cfg.sensitive_tools);
  std::vector<FeatureRow> rows;
  rows.reserve(selected.size());
  for (auto i : selected) rows.push_back(fm.rows[row_of[i]]);
  const std::vector<double> behavior = selected.empty() ? std::vector<double>{} : scorer.score(g, selected, rows);

  const auto flags = escalators(g, allow, state.ttl, cfg.escalator, state.install_sessions);

  std::unordered_map<std::uint64_t, std::int64_t> outdeg;
  std::unordered_map<std::uint64_t, std::int64_t> indeg;
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    ++outdeg[g.edge_src[i]];
    ++indeg[g.edge_dst[i]];
  }
  std::unordered_map<std::string_view, const SessionDagSummary*> by_session;
  for (const auto& s : summaries) by_session.emplace(s.session_id, &s);

  auto make_alert = [&](std::size_t i) {
    Alert a;
    a.window_id = g.window_id;
    a.edge_eid = g.edge_eids[i];
    a.session_id = g.edge_attrs[i].session_id;
    a.ts = g.edge_ts[i];
    a.etype = g.edge_types[i];
    a.flags = flags[i];
    a.evidence.triple = edge_type_triple(g, i);
    a.evidence.instance = instance_key(g, i);
    a.evidence.dest = dest_of(g.edge_attrs[i]);
    const SessionDagSummary& s = *by_session.at(a.session_id);
    a.evidence.chain_len = s.chain_len;
    a.evidence.branching = s.branching;
    a.evidence.install_proximity = s.install_proximity;
    a.evidence.rare_path = s.rare_path;
    return a;
  };

  std::vector<Alert> alerts;
  std::vector<bool> alerted(g.num_edges(), false);
  for (std::size_t k = 0; k < selected.size(); ++k) {
    const std::size_t i = selected[k];
    const FeatureRow& row = rows[k];
    Alert a = make_alert(i);
    a.s[comp::edge] = behavior[k];
    a.s[comp::dag] = dag_score(*by_session.at(a.session_id));
    a.s[comp::nov] = ttl_novelty(state.ttl, a.evidence.triple, g.edge_ts[i]);
    double attr = 0.0;
    for (std::size_t c = feat::kAttrBegin; c < feat::kAttrEnd; ++c) attr += row[c];
    a.s[comp::attr] = attr / static_cast<double>(feat::kAttrEnd - feat::kAttrBegin);
    a.s[comp::structure] = 0.5 * (squash(static_cast<double>(outdeg[g.edge_src[i]])) +
                                  squash(static_cast<double>(indeg[g.edge_dst[i]])));
    a.fused = fuse(a.s, cfg.weights);
    if (const auto& prompt = g.edge_attrs[i].prompt_text) {
      a.guardrail = guardrail_score(*prompt);
      a.fused2 = cfg.weights.behavior_mix * a.fused + cfg.weights.guardrail_mix * *a.guardrail;
    }
    alerts.push_back(std::move(a));
    alerted[i] = true;
  }
  // Escalated edges always surface, even when the new-edge filter dropped them.
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    if (flags[i].any() && !alerted[i]) alerts.push_back(make_alert(i));
  }

  // Severity: one step per session present in the window.
  std::map<std::string_view, std::pair<double, bool>> per_session;
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    auto& slot = per_session[g.edge_attrs[i].session_id];
    slot.second = slot.second || flags[i].any();
  }
  for (const auto& a : alerts) {
    auto& slot = per_session[a.session_id];
    slot.first = std::max(slot.first, a.fused);
  }
  std::map<std::string_view, Severity> level;
  for (const auto& [sid, v] : per_session) {
    auto it = state.sessions.try_emplace(std::string(sid)).first;
    level[sid] = severity_step(v.first, v.second, it->second, cfg.severity, g.t_end);
  }
  for (auto& a : alerts) a.severity = level.at(a.session_id);

  absorb_window(g, state);
  state.last_window = static_cast<std::int64_t>(g.window_id);

  std::sort(alerts.begin(), alerts.end(), [](const Alert& x, const Alert& y) {
    if (x.fused != y.fused) return x.fused > y.fused;
    return x.edge_eid < y.edge_eid;
  });
  return alerts;
}

}  // namespace nebula
