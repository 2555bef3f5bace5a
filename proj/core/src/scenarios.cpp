#include "nebula/scenarios.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "nebula/binio.hpp"
#include "nebula/collector.hpp"
#include "nebula/data.hpp"
#include "nebula/error.hpp"
#include "nebula/guardrail.hpp"

namespace nebula {

namespace {

constexpr std::int64_t kHourMs = 3600000;
constexpr std::int64_t kDayMs = 24 * kHourMs;

constexpr std::array<double, 24> kDiurnal = {0.20, 0.15, 0.10, 0.10, 0.10, 0.20, 0.60, 1.20,
                                             1.50, 1.20, 1.00, 1.00, 1.10, 1.00, 0.90, 0.90,
                                             1.10, 1.40, 1.60, 1.50, 1.30, 1.00, 0.60, 0.35};

const char* const kCoreProvider = "core";
const char* const kHomeProvider = "homeassistant";

struct PluginSpec {
  const char* provider;
  const char* tool;
};
constexpr std::array<PluginSpec, 6> kPlugins = {{{"hacs-weather", "forecast_fetch"},
                                                 {"zigbee2mqtt", "zigbee_pair"},
                                                 {"esphome", "esphome_flash"},
                                                 {"frigate", "frigate_clip"},
                                                 {"node-red", "flow_trigger"},
                                                 {"music-assistant", "music_queue"}}};

constexpr std::array<const char*, 5> kAttackerTools = {"sync_helper", "device_optimizer", "cache_warmer",
                                                       "telemetry_boost", "backup_agent"};
constexpr std::array<const char*, 4> kDropSuffixes = {"drop-zone.example", "paste-relay.example",
                                                      "cdn-sync.example", "files-share.example"};
constexpr std::array<const char*, 6> kSiteWords = {"recipes", "news", "forum", "deals", "travel", "wiki"};

const char* const kCloudBackupHost = "backup.cloudvault.example";

std::int64_t hour_of(std::int64_t ts) { return ((ts % kDayMs) + kDayMs) % kDayMs / kHourMs; }

bool is_night(std::int64_t ts) {
  const auto h = hour_of(ts);
  return h >= 22 || h < 6;
}

std::string hex(Rng& rng, int digits) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  for (int i = 0; i < digits; ++i) s += kDigits[rng.below(16)];
  return s;
}

template <typename T, std::size_t N>
const T& pick(const std::array<T, N>& a, Rng& rng) {
  return a[rng.below(N)];
}

// Appends one session's events with sequential eids and a running clock.
class SessionWriter {
 public:
  SessionWriter(const SessionSlot& slot, std::vector<Event>& out) : slot_(slot), out_(out), ts_(slot.start_ts) {}

  std::int64_t now() const noexcept { return ts_; }
  void advance(std::int64_t ms) { ts_ += std::max<std::int64_t>(ms, 1); }

  Event& invoke(std::string_view tool, std::string_view provider, std::optional<std::string> scope = std::nullopt,
                std::optional<std::string> prompt = std::nullopt) {
    Event e = base(EdgeType::invoke);
    e.src = NodeRef{NodeType::agent, "main"};
    e.dst = NodeRef{NodeType::tool, std::string(tool)};
    e.provider = std::string(provider);
    e.tool_name = std::string(tool);
    e.scope = std::move(scope);
    e.prompt_text = std::move(prompt);
    out_.push_back(std::move(e));
    last_invoke_ = out_.size() - 1;
    return out_.back();
  }

  // net_out for the latest invoke through the collector's synthesis rule.
  void net_out(std::string_view url, std::int64_t bytes) {
    const Event inv = out_.at(last_invoke_);
    NetPrimitiveTable table = NetPrimitiveTable::defaults();
    if (!table.find(*inv.tool_name)) table.add(*inv.tool_name, {});
    ParamsDigest d;
    d.tool_name = inv.tool_name;
    d.url = std::string(url);
    d.bytes = bytes;
    out_.push_back(normalize_event(*synthesize_net_out(inv, d, table)));
  }

  void action(std::string_view tool, std::string_view device, std::string_view scope) {
    advance(50);
    Event e = base(EdgeType::action);
    e.src = NodeRef{NodeType::tool, std::string(tool)};
    e.dst = NodeRef{NodeType::device, std::string(device)};
    e.provider = kHomeProvider;
    e.tool_name = std::string(tool);
    e.scope = std::string(scope);
    out_.push_back(std::move(e));
  }

  void install(std::string_view provider, std::optional<std::string> prompt = std::nullopt) {
    Event e = base(EdgeType::install);
    e.src = NodeRef{NodeType::agent, "main"};
    e.dst = NodeRef{NodeType::mcp_server, std::string(provider)};
    e.provider = std::string(provider);
    e.scope = "install";
    e.prompt_text = std::move(prompt);
    out_.push_back(std::move(e));
  }

 private:
  Event base(EdgeType t) {
    Event e;
    char buf[16];
    std::snprintf(buf, sizeof buf, "-%03d", n_++);
    e.eid = slot_.session_id + buf;
    e.ts = ts_;
    e.etype = t;
    e.session_id = slot_.session_id;
    e.status = Status::ok;
    return e;
  }

  const SessionSlot& slot_;
  std::vector<Event>& out_;
  std::int64_t ts_;
  int n_ = 0;
  std::size_t last_invoke_ = 0;
};

std::int64_t benign_gap(Rng& rng) { return rng.range(300, 2500); }

std::int64_t attack_gap(const ScenarioConfig& cfg, Rng& rng) {
  return 400 + rng.range(cfg.evasion.delay_jitter_ms.lo, cfg.evasion.delay_jitter_ms.hi);
}

std::optional<std::string> maybe_benign_prompt(Rng& rng) {
  if (rng.uniform() >= 0.3) return std::nullopt;
  const auto& benign = GuardrailCorpus::builtin().benign;
  return benign[rng.below(benign.size())];
}

void device_step(SessionWriter& w, const DeviceEntry& d, Rng& rng, std::optional<std::string> prompt = std::nullopt,
                 std::optional<std::string> scope = std::nullopt) {
  const std::string s = scope.value_or(d.scope);
  w.invoke(d.tool, kHomeProvider, s, std::move(prompt));
  w.action(d.tool, d.device, s);
  w.advance(benign_gap(rng));
}

const DeviceEntry& device_by_role(const ScenarioConfig& cfg, std::string_view tool, Rng& rng) {
  std::vector<const DeviceEntry*> hits;
  for (const auto& d : cfg.catalog) {
    if (d.tool == tool) hits.push_back(&d);
  }
  if (hits.empty()) throw Error(Errc::invalid_argument, "catalog", "no device for tool " + std::string(tool));
  return *hits[rng.below(hits.size())];
}

void filler(const ScenarioConfig& cfg, SessionWriter& w, Rng& rng) {
  std::vector<const DeviceEntry*> pool;
  for (const auto& d : cfg.catalog) {
    if (d.role != "security") pool.push_back(&d);
  }
  const DeviceEntry& d = *pool[rng.below(pool.size())];
  w.invoke(d.tool, kHomeProvider, d.scope);
  w.action(d.tool, d.device, d.scope);
  w.advance(attack_gap(cfg, rng));
}

std::string drop_host(const ScenarioConfig& cfg, Rng& rng) {
  if (!cfg.evasion.endpoint_churn) return kDropSuffixes[0];
  return hex(rng, 6) + "." + pick(kDropSuffixes, rng);
}

std::int64_t attack_port(Rng& rng) {
  static constexpr std::array<std::int64_t, 4> kPorts = {8080, 8443, 4444, 9001};
  return rng.uniform() < 0.6 ? 443 : pick(kPorts, rng);
}

std::string injection_prompt(const ScenarioConfig& cfg, Rng& rng) {
  const auto& inj = GuardrailCorpus::builtin().injection;
  const std::size_t i = rng.below(inj.size());
  if (!cfg.evasion.paraphrase) return inj[i];
  std::vector<const Paraphrase*> variants;
  for (const auto& p : builtin_paraphrases()) {
    if (p.phrase == i) variants.push_back(&p);
  }
  if (variants.empty()) return inj[i];
  return variants[rng.below(variants.size())]->text;
}

std::string url_of(std::string_view scheme, std::string_view host, std::int64_t port, std::string_view path) {
  return std::string(scheme) + "://" + std::string(host) + ":" + std::to_string(port) + std::string(path);
}

}  // namespace

// ---- evasion / catalog / labels -------------------------------------------

Evasion Evasion::none() { return Evasion{{0, 0}, {0, 0}, false, false}; }

Evasion Evasion::parse(std::string_view text, Evasion base) {
  if (text == "none") return none();
  if (text.empty() || text == "default") return base;
  auto parse_range = [](std::string_view key, std::string_view v) {
    Range r;
    const auto dash = v.find('-');
    try {
      r.lo = std::stoll(std::string(v.substr(0, dash)));
      r.hi = dash == std::string_view::npos ? r.lo : std::stoll(std::string(v.substr(dash + 1)));
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument, std::string(key), "expected N or LO-HI");
    }
    if (r.lo < 0 || r.hi < r.lo) throw Error(Errc::invalid_argument, std::string(key), "range must be 0 <= lo <= hi");
    return r;
  };
  auto parse_bool = [](std::string_view key, std::string_view v) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw Error(Errc::invalid_argument, std::string(key), "expected a boolean");
  };
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    const auto item = text.substr(start, comma - start);
    start = comma + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw Error(Errc::invalid_argument, std::string(item), "expected key=value");
    const auto key = item.substr(0, eq);
    const auto val = item.substr(eq + 1);
    if (key == "filler") {
      base.filler_steps = parse_range(key, val);
    } else if (key == "jitter") {
      base.delay_jitter_ms = parse_range(key, val);
    } else if (key == "churn") {
      base.endpoint_churn = parse_bool(key, val);
    } else if (key == "paraphrase") {
      base.paraphrase = parse_bool(key, val);
    } else {
      throw Error(Errc::invalid_argument, std::string(key), "unknown evasion key");
    }
  }
  return base;
}

Evasion Evasion::parse(std::string_view text) { return parse(text, Evasion{}); }

std::string Evasion::to_string() const {
  return "filler=" + std::to_string(filler_steps.lo) + "-" + std::to_string(filler_steps.hi) +
         ",jitter=" + std::to_string(delay_jitter_ms.lo) + "-" + std::to_string(delay_jitter_ms.hi) +
         ",churn=" + (endpoint_churn ? "1" : "0") + ",paraphrase=" + (paraphrase ? "1" : "0");
}

std::vector<DeviceEntry> parse_device_catalog(std::string_view text) {
  std::vector<DeviceEntry> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cols;
    std::size_t c = 0;
    while (true) {
      const auto tab = line.find('\t', c);
      cols.emplace_back(line.substr(c, tab == std::string_view::npos ? std::string_view::npos : tab - c));
      if (tab == std::string_view::npos) break;
      c = tab + 1;
    }
    if (cols.size() != 4 || std::any_of(cols.begin(), cols.end(), [](const auto& s) { return s.empty(); })) {
      throw Error(Errc::malformed_record, "device_catalog", "expected 4 tab-separated columns: " + std::string(line));
    }
    out.push_back({cols[0], cols[1], cols[2], cols[3]});
  }
  return out;
}

const std::vector<DeviceEntry>& builtin_device_catalog() {
  static const std::vector<DeviceEntry> catalog = parse_device_catalog(data::kDeviceCatalog);
  return catalog;
}

std::string_view to_string(SessionLabel l) noexcept {
  switch (l) {
    case SessionLabel::benign: return "benign";
    case SessionLabel::exfil_chain: return "exfil_chain";
    case SessionLabel::install_persistence: return "install_persistence";
    case SessionLabel::device_impact: return "device_impact";
  }
  return "benign";
}

SessionLabel parse_session_label(std::string_view s) {
  for (auto l : {SessionLabel::benign, SessionLabel::exfil_chain, SessionLabel::install_persistence,
                 SessionLabel::device_impact}) {
    if (to_string(l) == s) return l;
  }
  throw Error(Errc::schema_violation, "label", "unknown session label '" + std::string(s) + "'");
}

void ScenarioConfig::validate() const {
  if (duration_ms <= 0) throw Error(Errc::invalid_argument, "duration_ms", "must be > 0");
  if (!(sessions_per_hour > 0.0)) throw Error(Errc::invalid_argument, "sessions_per_hour", "must be > 0");
  if (!(attack_prevalence >= 0.0 && attack_prevalence <= 1.0)) {
    throw Error(Errc::invalid_argument, "attack_prevalence", "must be in [0, 1]");
  }
  if (!(hard_negative_rate >= 0.0 && hard_negative_rate <= 1.0)) {
    throw Error(Errc::invalid_argument, "hard_negative_rate", "must be in [0, 1]");
  }
  if (!(plugin_install_share >= 0.0 && plugin_install_share <= 1.0)) {
    throw Error(Errc::invalid_argument, "plugin_install_share", "must be in [0, 1]");
  }
  if (!(cross_session_rate >= 0.0 && cross_session_rate <= 1.0)) {
    throw Error(Errc::invalid_argument, "cross_session_rate", "must be in [0, 1]");
  }
  for (const Range& r : {evasion.filler_steps, evasion.delay_jitter_ms}) {
    if (r.lo < 0 || r.hi < r.lo) throw Error(Errc::invalid_argument, "evasion", "ranges must be 0 <= lo <= hi");
  }
  if (catalog.empty()) throw Error(Errc::invalid_argument, "catalog", "device catalog is empty");
}

const SessionTruth* GroundTruth::find(std::string_view session_id) const {
  auto it = std::lower_bound(sessions.begin(), sessions.end(), session_id,
                             [](const SessionTruth& s, std::string_view id) { return s.session_id < id; });
  return it != sessions.end() && it->session_id == session_id ? &*it : nullptr;
}

std::set<std::string, std::less<>> GroundTruth::red_edges() const {
  std::set<std::string, std::less<>> out;
  for (const auto& s : sessions) out.insert(s.red_edges.begin(), s.red_edges.end());
  return out;
}

WeakLabel weak_label(std::span<const Event> events, const Allowlist& allow, const WeakLabelConfig& cfg) {
  WeakLabel out;
  std::vector<bool> red(events.size(), false);
  std::map<std::string, std::size_t, std::less<>> installed;  // provider -> install index
  std::vector<std::size_t> sensitive;

  auto causing_invoke = [&](std::size_t net) -> std::optional<std::size_t> {
    const auto& e = events[net];
    for (std::size_t j = net; j-- > 0;) {
      const auto& c = events[j];
      if (c.etype == EdgeType::invoke && c.dst == e.src && c.ts <= e.ts) return j;
    }
    return std::nullopt;
  };

  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.etype == EdgeType::install) installed.try_emplace(e.provider, i);
    if (e.etype == EdgeType::invoke || e.etype == EdgeType::net_out) {
      if (auto it = installed.find(e.provider); it != installed.end()) {
        out.rule1 = true;
        red[it->second] = true;
        red[i] = true;
      }
    }
    if (e.etype == EdgeType::net_out && e.dest_host && !sensitive.empty() && !allow.allows(*e.dest_host, e.dest_port)) {
      out.rule2 = true;
      for (auto s : sensitive) red[s] = true;
      red[i] = true;
      if (auto c = causing_invoke(i)) red[*c] = true;
    }
    if (e.scope && cfg.sensitive_scopes.count(*e.scope)) sensitive.push_back(i);
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (red[i]) out.red_edges.push_back(events[i].eid);
  }
  return out;
}

void apply_weak_labels(std::span<const Event> events, GroundTruth& truth, const Allowlist& allow,
                       const WeakLabelConfig& cfg) {
  std::map<std::string, std::vector<Event>, std::less<>> by_session;
  for (const auto& e : events) by_session[e.session_id].push_back(e);
  for (auto& s : truth.sessions) {
    auto it = by_session.find(s.session_id);
    if (it == by_session.end()) continue;
    auto& evs = it->second;
    std::sort(evs.begin(), evs.end(), [](const Event& a, const Event& b) {
      return a.ts != b.ts ? a.ts < b.ts : a.eid < b.eid;
    });
    const WeakLabel wl = weak_label(evs, allow, cfg);
    s.rule1 = wl.rule1;
    s.rule2 = wl.rule2;
    s.red_edges = wl.red_edges;
  }
}

std::span<const double> diurnal_multipliers() { return kDiurnal; }

Allowlist generator_allowlist() {
  Allowlist a;
  a.add("api.weather.example");
  a.add("*.ha-cloud.example");
  a.add("nas.home.example");
  for (const auto& p : kPlugins) a.add(std::string("api.") + p.provider + ".example");
  return a;
}

// ---- templates -------------------------------------------------------------

void gen_benign_session(const ScenarioConfig& cfg, const SessionSlot& slot, Rng& rng, std::vector<Event>& out,
                        std::string& variant) {
  SessionWriter w(slot, out);
  const auto h = hour_of(slot.start_ts);

  if (rng.uniform() < cfg.hard_negative_rate) {
    const double u = rng.uniform();
    const double backup_cut = cfg.plugin_install_share + 0.5 * (1.0 - cfg.plugin_install_share);
    if (u < cfg.plugin_install_share) {
      variant = "plugin_install";
      const auto& p = pick(kPlugins, rng);
      w.install(p.provider, maybe_benign_prompt(rng));
      w.advance(benign_gap(rng));
      const auto reps = rng.range(1, 2);
      for (std::int64_t r = 0; r < reps; ++r) {
        w.invoke(p.tool, p.provider, "plugin");
        w.net_out(url_of("https", std::string("api.") + p.provider + ".example", 443, "/v1"), rng.range(200, 4000));
        w.advance(benign_gap(rng));
      }
    } else if (u < backup_cut) {
      variant = "cloud_backup";
      w.invoke("read_config", kCoreProvider, "config", maybe_benign_prompt(rng));
      w.advance(benign_gap(rng));
      w.invoke("sftp_upload", kCoreProvider, "backup");
      w.net_out(url_of("sftp", kCloudBackupHost, 22, "/home"), rng.range(20000, 200000));
    } else {
      variant = "new_site";
      w.invoke("http_get", kCoreProvider, "web", maybe_benign_prompt(rng));
      w.net_out(url_of("https", std::string(pick(kSiteWords, rng)) + "-" + hex(rng, 4) + ".example", 443, "/"),
                rng.range(500, 8000));
      w.advance(benign_gap(rng));
      w.invoke("summarize", kCoreProvider, "text");
    }
    return;
  }

  const double u = rng.uniform();
  if (h >= 6 && h < 10 && u < 0.5) {
    variant = "morning_routine";
    device_step(w, device_by_role(cfg, "light_set", rng), rng, maybe_benign_prompt(rng));
    device_step(w, device_by_role(cfg, "thermostat_set", rng), rng);
    device_step(w, device_by_role(cfg, "plug_toggle", rng), rng);
    w.invoke("http_get", kCoreProvider, "weather");
    w.net_out(url_of("https", "api.weather.example", 443, "/today"), rng.range(300, 1500));
    w.advance(benign_gap(rng));
    device_step(w, device_by_role(cfg, "speaker_announce", rng), rng);
  } else if (h >= 19 && h < 23 && u < 0.4) {
    variant = "evening_lockdown";
    device_step(w, device_by_role(cfg, "lock_control", rng), rng, maybe_benign_prompt(rng), "lock:close");
    device_step(w, device_by_role(cfg, "lock_control", rng), rng, std::nullopt, "lock:close");
    device_step(w, device_by_role(cfg, "alarm_arm", rng), rng, std::nullopt, "alarm:arm");
    device_step(w, device_by_role(cfg, "light_set", rng), rng);
  } else if (h >= 16 && h < 20 && u < 0.6) {
    variant = "arrival";
    device_step(w, device_by_role(cfg, "lock_control", rng), rng, maybe_benign_prompt(rng), "lock:open");
    device_step(w, device_by_role(cfg, "light_set", rng), rng);
    device_step(w, device_by_role(cfg, "thermostat_set", rng), rng);
  } else {
    const double v = rng.uniform();
    if (v < 0.08) {
      variant = "leak_response";
      device_step(w, device_by_role(cfg, "sensor_read", rng), rng, maybe_benign_prompt(rng));
      device_step(w, device_by_role(cfg, "valve_control", rng), rng, std::nullopt, "irrigation:close");
      device_step(w, device_by_role(cfg, "speaker_announce", rng), rng);
      w.invoke("webhook_send", kCoreProvider, "notify");
      w.net_out(url_of("https", "notify.ha-cloud.example", 443, "/push"), rng.range(200, 800));
    } else if (v < 0.18) {
      variant = "energy_report";
      device_step(w, device_by_role(cfg, "energy_read", rng), rng, maybe_benign_prompt(rng));
      w.invoke("http_post", kCoreProvider, "metrics");
      w.net_out(url_of("https", "metrics.ha-cloud.example", 443, "/ingest"), rng.range(1000, 4000));
    } else if (v < 0.28) {
      variant = "camera_check";
      const auto& cam = device_by_role(cfg, "reolink_snapshot", rng);
      device_step(w, cam, rng, maybe_benign_prompt(rng));
      w.invoke("sftp_upload", kCoreProvider, "camera");
      w.net_out(url_of("sftp", "nas.home.example", 22, "/snapshots"), rng.range(80000, 400000));
    } else if (v < 0.36) {
      variant = "firmware_check";
      w.invoke("http_get", kCoreProvider, "firmware", maybe_benign_prompt(rng));
      w.net_out(url_of("https", "fw-" + std::to_string(rng.range(100, 999)) + ".cdn.ha-cloud.example", 443, "/latest"),
                rng.range(300, 2000));
      w.advance(benign_gap(rng));
      w.invoke("log", kCoreProvider, "log");
    } else {
      variant = "adhoc";
      std::vector<const DeviceEntry*> pool;
      for (const auto& d : cfg.catalog) {
        if (d.role != "security") pool.push_back(&d);
      }
      const auto n = rng.range(1, 3);
      for (std::int64_t i = 0; i < n; ++i) {
        device_step(w, *pool[rng.below(pool.size())], rng, i == 0 ? maybe_benign_prompt(rng) : std::nullopt);
      }
    }
  }
}

void gen_exfil_chain(const ScenarioConfig& cfg, const SessionSlot& slot, Rng& rng, std::vector<Event>& out) {
  SessionWriter w(slot, out);
  const auto fillers = rng.range(cfg.evasion.filler_steps.lo, cfg.evasion.filler_steps.hi);
  // Filler positions: after step 1, 2 or 3 of the canonical chain.
  std::array<std::int64_t, 3> after{};
  for (std::int64_t i = 0; i < fillers; ++i) ++after[rng.below(3)];

  w.invoke("read_config", kCoreProvider, "config", injection_prompt(cfg, rng));
  w.advance(attack_gap(cfg, rng));
  for (std::int64_t i = 0; i < after[0]; ++i) filler(cfg, w, rng);
  w.invoke("summarize", kCoreProvider, "text");
  w.advance(attack_gap(cfg, rng));
  for (std::int64_t i = 0; i < after[1]; ++i) filler(cfg, w, rng);
  w.invoke("log", kCoreProvider, "log");
  w.advance(attack_gap(cfg, rng));
  for (std::int64_t i = 0; i < after[2]; ++i) filler(cfg, w, rng);
  w.invoke("http_post", kCoreProvider, "export");
  w.net_out(url_of("https", drop_host(cfg, rng), attack_port(rng), "/upload"), rng.range(2000, 64000));
}

PersistencePlan plan_persistence(const ScenarioConfig& cfg, Rng& rng) {
  PersistencePlan p;
  p.provider = "attacker-" + hex(rng, 8);
  const std::size_t t = rng.below(kAttackerTools.size());
  p.tool = kAttackerTools[t];
  p.harvest_tool = kAttackerTools[(t + 1 + rng.below(kAttackerTools.size() - 1)) % kAttackerTools.size()];
  p.endpoint_host = cfg.evasion.endpoint_churn ? p.provider + ".svc-hub.example" : "svc-hub.example";
  p.endpoint_port = attack_port(rng);
  return p;
}

void gen_install_persistence(const ScenarioConfig& cfg, const SessionSlot& slot, const PersistencePlan& plan,
                             std::int64_t k, bool install, Rng& rng, std::vector<Event>& out) {
  SessionWriter w(slot, out);
  if (install) {
    w.install(plan.provider, rng.uniform() < 0.5 ? std::optional<std::string>(injection_prompt(cfg, rng))
                                                 : std::nullopt);
    w.advance(attack_gap(cfg, rng));
  }
  const auto fillers = rng.range(cfg.evasion.filler_steps.lo, cfg.evasion.filler_steps.hi);
  for (std::int64_t r = 0; r < k; ++r) {
    // The follow-on session reads credentials through another of the provider's tools.
    const bool harvest = !install && r == 0;
    w.invoke(harvest ? plan.harvest_tool : plan.tool, plan.provider, harvest ? "credential" : "sync");
    w.net_out(url_of("https", plan.endpoint_host, plan.endpoint_port, "/beacon"), rng.range(500, 16000));
    w.advance(attack_gap(cfg, rng));
    if (r == 0) {
      for (std::int64_t i = 0; i < fillers; ++i) filler(cfg, w, rng);
    }
  }
}

std::string_view to_string(ImpactKind k) noexcept {
  switch (k) {
    case ImpactKind::night_unlock: return "night_unlock";
    case ImpactKind::alarm_suppression: return "alarm_suppression";
    case ImpactKind::silent_camera: return "silent_camera";
  }
  return "night_unlock";
}

void gen_device_impact(const ScenarioConfig& cfg, const SessionSlot& slot, ImpactKind kind, Rng& rng,
                       std::vector<Event>& out) {
  SessionWriter w(slot, out);
  auto step = [&](std::string_view tool, std::string_view scope, std::optional<std::string> prompt = std::nullopt) {
    const auto& d = device_by_role(cfg, tool, rng);
    w.invoke(d.tool, kHomeProvider, std::string(scope), std::move(prompt));
    w.action(d.tool, d.device, scope);
    w.advance(attack_gap(cfg, rng));
  };
  switch (kind) {
    case ImpactKind::night_unlock:
      step("lock_control", "lock:open", injection_prompt(cfg, rng));
      break;
    case ImpactKind::alarm_suppression:
      step("alarm_arm", "siren:off", injection_prompt(cfg, rng));
      step("lock_control", "lock:open");
      break;
    case ImpactKind::silent_camera: {
      const auto& cam = device_by_role(cfg, "reolink_snapshot", rng);
      w.invoke(cam.tool, kHomeProvider, "camera", injection_prompt(cfg, rng));
      w.action(cam.tool, cam.device, "camera");
      w.advance(attack_gap(cfg, rng));
      w.invoke("http_post", kCoreProvider, "export");
      w.net_out(url_of("https", drop_host(cfg, rng), attack_port(rng), "/img"), rng.range(80000, 400000));
      break;
    }
  }
}

// ---- full stream -------------------------------------------------------------

Scenario generate(const ScenarioConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  const double mean = std::accumulate(kDiurnal.begin(), kDiurnal.end(), 0.0) / kDiurnal.size();
  std::vector<std::int64_t> starts;
  const std::int64_t end = cfg.start_ms + cfg.duration_ms;
  for (double t = static_cast<double>(cfg.start_ms);;) {
    const double rate = cfg.sessions_per_hour * kDiurnal[hour_of(static_cast<std::int64_t>(t))] / mean / kHourMs;
    t += rng.exponential(rate);
    if (t >= static_cast<double>(end)) break;
    starts.push_back(static_cast<std::int64_t>(t));
  }

  const std::size_t n = starts.size();
  const auto attacks = static_cast<std::size_t>(std::llround(cfg.attack_prevalence * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::size_t> attack_slots(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(attacks));
  std::sort(attack_slots.begin(), attack_slots.end());

  enum class Kind { benign, exfil, install, follow_on, impact };
  std::vector<Kind> kind(n, Kind::benign);
  std::vector<std::size_t> plan_of(n, 0);
  std::vector<ImpactKind> impact_of(n, ImpactKind::night_unlock);
  std::vector<PersistencePlan> plans;
  for (std::size_t a = 0; a < attack_slots.size(); ++a) {
    const std::size_t i = attack_slots[a];
    if (kind[i] == Kind::follow_on) continue;
    const double u = rng.uniform();
    if (cfg.device_impact && u < 0.2 && is_night(starts[i])) {
      kind[i] = Kind::impact;
      impact_of[i] = static_cast<ImpactKind>(rng.below(3));
    } else if (u < 0.6) {
      kind[i] = Kind::exfil;
    } else {
      kind[i] = Kind::install;
      plan_of[i] = plans.size();
      plans.push_back(plan_persistence(cfg, rng));
      if (a + 1 < attack_slots.size() && rng.uniform() < cfg.cross_session_rate) {
        const std::size_t next = attack_slots[a + 1];
        kind[next] = Kind::follow_on;
        plan_of[next] = plan_of[i];
      }
    }
  }

  Scenario sc;
  sc.truth.sessions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char sid[24];
    std::snprintf(sid, sizeof sid, "s%06zu", i + 1);
    const SessionSlot slot{sid, starts[i]};
    const std::size_t first = sc.events.size();
    SessionTruth t;
    t.session_id = sid;
    switch (kind[i]) {
      case Kind::benign:
        gen_benign_session(cfg, slot, rng, sc.events, t.variant);
        break;
      case Kind::exfil:
        t.label = SessionLabel::exfil_chain;
        t.variant = "exfil_chain";
        gen_exfil_chain(cfg, slot, rng, sc.events);
        break;
      case Kind::install:
        t.label = SessionLabel::install_persistence;
        t.variant = "install_persistence";
        gen_install_persistence(cfg, slot, plans[plan_of[i]], rng.range(2, 3), true, rng, sc.events);
        break;
      case Kind::follow_on:
        t.label = SessionLabel::install_persistence;
        t.variant = "persistence_follow_on";
        gen_install_persistence(cfg, slot, plans[plan_of[i]], rng.range(2, 3), false, rng, sc.events);
        break;
      case Kind::impact:
        t.label = SessionLabel::device_impact;
        t.variant = std::string(to_string(impact_of[i]));
        gen_device_impact(cfg, slot, impact_of[i], rng, sc.events);
        break;
    }
    t.start_ts = sc.events[first].ts;
    t.end_ts = sc.events.back().ts;
    sc.truth.sessions.push_back(std::move(t));
  }

  std::sort(sc.events.begin(), sc.events.end(), [](const Event& a, const Event& b) {
    return a.ts != b.ts ? a.ts < b.ts : a.eid < b.eid;
  });
  apply_weak_labels(sc.events, sc.truth, generator_allowlist());
  return sc;
}

// ---- splits and files --------------------------------------------------------

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw Error(Errc::schema_violation, "split", "unknown split '" + std::string(s) + "'");
}

std::map<std::string, Split, std::less<>> assign_splits(const GroundTruth& truth, std::uint64_t seed) {
  std::map<SessionLabel, std::vector<std::string>> by_label;
  for (const auto& s : truth.sessions) by_label[s.label].push_back(s.session_id);
  std::map<std::string, Split, std::less<>> out;
  Rng rng(seed);
  for (auto& [label, ids] : by_label) {
    rng.shuffle(ids);
    const std::size_t n = ids.size();
    const std::size_t n_train = (n * 6 + 5) / 10;  // rounded, so a lone session lands in train
    const std::size_t n_val = (n * 8 + 5) / 10;
    for (std::size_t i = 0; i < n; ++i) {
      out[ids[i]] = i < n_train ? Split::train : i < n_val ? Split::val : Split::test;
    }
  }
  return out;
}

void write_truth(const std::filesystem::path& path, const GroundTruth& truth) {
  std::string out;
  for (const auto& s : truth.sessions) {
    nlohmann::ordered_json j;
    j["session_id"] = s.session_id;
    j["label"] = to_string(s.label);
    j["variant"] = s.variant;
    j["start_ts"] = s.start_ts;
    j["end_ts"] = s.end_ts;
    j["rule1"] = s.rule1;
    j["rule2"] = s.rule2;
    j["red_edges"] = s.red_edges;
    out += j.dump();
    out += '\n';
  }
  write_file_text(path, out);
}

GroundTruth read_truth(const std::filesystem::path& path) {
  GroundTruth t;
  const std::string text = read_file_text(path);
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string::npos) nl = text.size();
    const std::string_view line(text.data() + start, nl - start);
    start = nl + 1;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SessionTruth s;
      s.session_id = j.at("session_id").get<std::string>();
      s.label = parse_session_label(j.at("label").get<std::string>());
      s.variant = j.at("variant").get<std::string>();
      s.start_ts = j.at("start_ts").get<std::int64_t>();
      s.end_ts = j.at("end_ts").get<std::int64_t>();
      s.rule1 = j.at("rule1").get<bool>();
      s.rule2 = j.at("rule2").get<bool>();
      s.red_edges = j.at("red_edges").get<std::vector<std::string>>();
      t.sessions.push_back(std::move(s));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::malformed_record, path.string(), ex.what());
    }
  }
  std::sort(t.sessions.begin(), t.sessions.end(),
            [](const SessionTruth& a, const SessionTruth& b) { return a.session_id < b.session_id; });
  return t;
}

void write_splits(const std::filesystem::path& path, const std::map<std::string, Split, std::less<>>& splits) {
  std::string out = "session_id,split\n";
  for (const auto& [sid, s] : splits) {
    out += sid;
    out += ',';
    out += to_string(s);
    out += '\n';
  }
  write_file_text(path, out);
}

std::map<std::string, Split, std::less<>> read_splits(const std::filesystem::path& path) {
  std::map<std::string, Split, std::less<>> out;
  const std::string text = read_file_text(path);
  std::size_t start = 0;
  bool header = true;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + start, nl - start);
    start = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line == "session_id,split") continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) throw Error(Errc::malformed_record, path.string(), "expected session_id,split");
    const std::string sid(line.substr(0, comma));
    if (!out.emplace(sid, parse_split(line.substr(comma + 1))).second) {
      throw Error(Errc::schema_violation, "split", "session " + sid + " listed twice");
    }
  }
  return out;
}

void write_scenario(const std::filesystem::path& dir, const Scenario& s, std::uint64_t split_seed) {
  std::filesystem::create_directories(dir);
  write_events(dir / "events.nebula.jsonl", s.events);
  write_truth(dir / "truth.jsonl", s.truth);
  write_splits(dir / "splits.csv", assign_splits(s.truth, split_seed));
  write_file_text(dir / "allowlist.txt", generator_allowlist().to_text());
}

}  // namespace nebula
