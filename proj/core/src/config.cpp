#include "nebula/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include "nebula/binio.hpp"
#include "nebula/error.hpp"

namespace nebula {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double d = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw Error(Errc::invalid_argument, std::string(key), "expected a number, got '" + s + "'");
  }
  return d;
}

std::int64_t to_int(std::string_view key, std::string_view v) {
  std::int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw Error(Errc::invalid_argument, std::string(key), "expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::int64_t to_nonneg(std::string_view key, std::string_view v) {
  const auto x = to_int(key, v);
  if (x < 0) throw Error(Errc::invalid_argument, std::string(key), "must be >= 0");
  return x;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw Error(Errc::invalid_argument, std::string(key), "expected a boolean, got '" + std::string(v) + "'");
}

// "HH:MM" -> minutes after midnight.
std::int64_t to_minute(std::string_view key, std::string_view v) {
  const auto colon = v.find(':');
  if (colon == std::string_view::npos) throw Error(Errc::invalid_argument, std::string(key), "expected HH:MM");
  const auto h = to_int(key, v.substr(0, colon));
  const auto m = to_int(key, v.substr(colon + 1));
  if (h < 0 || h > 23 || m < 0 || m > 59) throw Error(Errc::invalid_argument, std::string(key), "expected HH:MM");
  return h * 60 + m;
}

std::set<std::string, std::less<>> to_set(std::string_view v) {
  std::set<std::string, std::less<>> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    auto comma = v.find(',', start);
    if (comma == std::string_view::npos) comma = v.size();
    const auto item = trim(v.substr(start, comma - start));
    if (!item.empty()) out.emplace(item);
    start = comma + 1;
  }
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string join(const std::set<std::string, std::less<>>& s) {
  std::string out;
  for (const auto& x : s) {
    if (!out.empty()) out += ',';
    out += x;
  }
  return out;
}

std::string hhmm(std::int64_t minute) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld", static_cast<long long>(minute / 60),
                static_cast<long long>(minute % 60));
  return buf;
}

struct Key {
  std::function<void(PipelineConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

const std::map<std::string, Key, std::less<>>& key_table() {
  static const std::map<std::string, Key, std::less<>> table = [] {
    std::map<std::string, Key, std::less<>> t;
    auto weight = [&](const char* name, std::size_t i) {
      t[name] = {[i](PipelineConfig& c, auto k, auto v) { c.scoring.weights.w[i] = to_double(k, v); },
                 [i](const PipelineConfig& c) { return num(c.scoring.weights.w[i]); }};
    };
    weight("w_edge", comp::edge);
    weight("w_dag", comp::dag);
    weight("w_nov", comp::nov);
    weight("w_attr", comp::attr);
    weight("w_struct", comp::structure);

    auto path_key = [&](const char* name, std::filesystem::path PipelineConfig::*member) {
      t[name] = {[member](PipelineConfig& c, auto, auto v) { c.*member = std::string(v); },
                 [member](const PipelineConfig& c) { return (c.*member).generic_string(); }};
    };
    path_key("events", &PipelineConfig::events);
    path_key("truth", &PipelineConfig::truth);
    path_key("splits", &PipelineConfig::splits);
    path_key("windows", &PipelineConfig::windows);
    path_key("weights", &PipelineConfig::weights);
    path_key("lite_weights", &PipelineConfig::lite_weights);
    path_key("state", &PipelineConfig::state);
    path_key("alerts", &PipelineConfig::alerts);
    path_key("reports", &PipelineConfig::reports);

    t["allowlist"] = {[](PipelineConfig& c, auto, auto v) { c.allowlist = std::string(v); },
                      [](const PipelineConfig& c) { return c.allowlist.generic_string(); }};
    t["batch"] = {[](PipelineConfig& c, auto k, auto v) { c.train.batch = to_int(k, v); },
                  [](const PipelineConfig& c) { return std::to_string(c.train.batch); }};
    t["behavior_mix"] = {[](PipelineConfig& c, auto k, auto v) { c.scoring.weights.behavior_mix = to_double(k, v); },
                         [](const PipelineConfig& c) { return num(c.scoring.weights.behavior_mix); }};
    t["calibrate"] = {[](PipelineConfig& c, auto k, auto v) { c.calibrate = to_bool(k, v); },
                      [](const PipelineConfig& c) { return std::string(c.calibrate ? "true" : "false"); }};
    t["cooldown"] = {[](PipelineConfig& c, auto k, auto v) { c.scoring.severity.cooldown = to_int(k, v); },
                     [](const PipelineConfig& c) { return std::to_string(c.scoring.severity.cooldown); }};
    t["cross_session_rate"] = {
        [](PipelineConfig& c, auto k, auto v) { c.scenario.cross_session_rate = to_double(k, v); },
        [](const PipelineConfig& c) { return num(c.scenario.cross_session_rate); }};
    t["device_impact"] = {[](PipelineConfig& c, auto k, auto v) { c.scenario.device_impact = to_bool(k, v); },
                          [](const PipelineConfig& c) { return std::string(c.scenario.device_impact ? "true" : "false"); }};
    t["dim"] = {[](PipelineConfig& c, auto k, auto v) { c.dim = static_cast<std::uint32_t>(to_nonneg(k, v)); },
                [](const PipelineConfig& c) { return std::to_string(c.dim); }};
    t["epochs"] = {[](PipelineConfig& c, auto k, auto v) { c.train.epochs = to_int(k, v); },
                   [](const PipelineConfig& c) { return std::to_string(c.train.epochs); }};
    t["evasion"] = {[](PipelineConfig& c, auto, auto v) { c.scenario.evasion = Evasion::parse(v, c.scenario.evasion); },
                    [](const PipelineConfig& c) { return c.scenario.evasion.to_string(); }};
    t["fpr_cap"] = {[](PipelineConfig& c, auto k, auto v) { c.fpr_cap = to_double(k, v); },
                    [](const PipelineConfig& c) { return num(c.fpr_cap); }};
    t["guardrail_mix"] = {[](PipelineConfig& c, auto k, auto v) { c.scoring.weights.guardrail_mix = to_double(k, v); },
                          [](const PipelineConfig& c) { return num(c.scoring.weights.guardrail_mix); }};
    t["plugin_install_share"] = {
        [](PipelineConfig& c, auto k, auto v) { c.scenario.plugin_install_share = to_double(k, v); },
        [](const PipelineConfig& c) { return num(c.scenario.plugin_install_share); }};
    t["hard_negative_rate"] = {
        [](PipelineConfig& c, auto k, auto v) { c.scenario.hard_negative_rate = to_double(k, v); },
        [](const PipelineConfig& c) { return num(c.scenario.hard_negative_rate); }};
    t["hidden"] = {[](PipelineConfig& c, auto k, auto v) { c.hidden = static_cast<std::uint32_t>(to_nonneg(k, v)); },
                   [](const PipelineConfig& c) { return std::to_string(c.hidden); }};
    t["high_fpr_cap"] = {[](PipelineConfig& c, auto k, auto v) { c.high_fpr_cap = to_double(k, v); },
                         [](const PipelineConfig& c) { return num(c.high_fpr_cap); }};
    t["hours"] = {[](PipelineConfig& c, auto k, auto v) { c.hours = to_double(k, v); },
                  [](const PipelineConfig& c) { return num(c.hours); }};
    t["l2"] = {[](PipelineConfig& c, auto k, auto v) { c.train.l2 = to_double(k, v); },
               [](const PipelineConfig& c) { return num(c.train.l2); }};
    t["lateness_ms"] = {[](PipelineConfig& c, auto k, auto v) { c.window.lateness_ms = to_int(k, v); },
                        [](const PipelineConfig& c) { return std::to_string(c.window.lateness_ms); }};
    t["lr"] = {[](PipelineConfig& c, auto k, auto v) { c.train.learning_rate = to_double(k, v); },
               [](const PipelineConfig& c) { return num(c.train.learning_rate); }};
    t["margin"] = {[](PipelineConfig& c, auto k, auto v) { c.scoring.severity.margin = to_double(k, v); },
                   [](const PipelineConfig& c) { return num(c.scoring.severity.margin); }};
    t["night_end"] = {[](PipelineConfig& c, auto k, auto v) { c.scoring.escalator.night_end_min = to_minute(k, v); },
                      [](const PipelineConfig& c) { return hhmm(c.scoring.escalator.night_end_min); }};
    t["night_start"] = {
        [](PipelineConfig& c, auto k, auto v) { c.scoring.escalator.night_start_min = to_minute(k, v); },
        [](const PipelineConfig& c) { return hhmm(c.scoring.escalator.night_start_min); }};
    t["obs_fpr_cap"] = {[](PipelineConfig& c, auto k, auto v) { c.obs_fpr_cap = to_double(k, v); },
                        [](const PipelineConfig& c) { return num(c.obs_fpr_cap); }};
    t["prevalence"] = {[](PipelineConfig& c, auto k, auto v) { c.scenario.attack_prevalence = to_double(k, v); },
                       [](const PipelineConfig& c) { return num(c.scenario.attack_prevalence); }};
    t["profile"] = {[](PipelineConfig& c, auto, auto v) { c.profile = parse_profile(v); },
                    [](const PipelineConfig& c) { return std::string(to_string(c.profile)); }};
    t["seed"] = {[](PipelineConfig& c, auto k, auto v) { c.scenario.seed = static_cast<std::uint64_t>(to_nonneg(k, v)); },
                 [](const PipelineConfig& c) { return std::to_string(c.scenario.seed); }};
    t["sensitive_scopes"] = {[](PipelineConfig& c, auto, auto v) { c.scoring.features.sensitive_scopes = to_set(v); },
                             [](const PipelineConfig& c) { return join(c.scoring.features.sensitive_scopes); }};
    t["sensitive_tools"] = {[](PipelineConfig& c, auto, auto v) { c.scoring.sensitive_tools = to_set(v); },
                            [](const PipelineConfig& c) { return join(c.scoring.sensitive_tools); }};
    t["sessions_per_hour"] = {
        [](PipelineConfig& c, auto k, auto v) { c.scenario.sessions_per_hour = to_double(k, v); },
        [](const PipelineConfig& c) { return num(c.scenario.sessions_per_hour); }};
    t["split_seed"] = {[](PipelineConfig& c, auto k, auto v) { c.split_seed = static_cast<std::uint64_t>(to_nonneg(k, v)); },
                       [](const PipelineConfig& c) { return std::to_string(c.split_seed); }};
    t["t_high"] = {[](PipelineConfig& c, auto k, auto v) { c.scoring.severity.t_high = to_double(k, v); },
                   [](const PipelineConfig& c) { return num(c.scoring.severity.t_high); }};
    t["t_obs"] = {[](PipelineConfig& c, auto k, auto v) { c.scoring.severity.t_obs = to_double(k, v); },
                  [](const PipelineConfig& c) { return num(c.scoring.severity.t_obs); }};
    t["train_seed"] = {[](PipelineConfig& c, auto k, auto v) { c.train.seed = static_cast<std::uint64_t>(to_nonneg(k, v)); },
                       [](const PipelineConfig& c) { return std::to_string(c.train.seed); }};
    t["ttl_ms"] = {[](PipelineConfig& c, auto k, auto v) { c.ttl_ms = to_int(k, v); },
                   [](const PipelineConfig& c) { return std::to_string(c.ttl_ms); }};
    t["use_features"] = {[](PipelineConfig& c, auto k, auto v) { c.use_features = to_bool(k, v); },
                         [](const PipelineConfig& c) { return std::string(c.use_features ? "true" : "false"); }};
    t["window_ms"] = {[](PipelineConfig& c, auto k, auto v) {
                        c.window.window_len_ms = to_int(k, v);
                        c.scoring.features.window_len_ms = c.window.window_len_ms;
                      },
                      [](const PipelineConfig& c) { return std::to_string(c.window.window_len_ms); }};
    t["work_dir"] = {[](PipelineConfig& c, auto, auto v) { c.work_dir = std::string(v); }, nullptr};
    t["workers"] = {[](PipelineConfig& c, auto k, auto v) { c.train.workers = static_cast<std::uint32_t>(to_nonneg(k, v)); },
                    [](const PipelineConfig& c) { return std::to_string(c.train.workers); }};
    return t;
  }();
  return table;
}

}  // namespace

std::filesystem::path PipelineConfig::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : work_dir / p;
}

void PipelineConfig::validate() const {
  scenario.validate();
  if (!(hours > 0.0)) throw Error(Errc::invalid_argument, "hours", "must be > 0");
  window.validate();
  if (ttl_ms <= 0) throw Error(Errc::invalid_argument, "ttl_ms", "must be > 0");
  if (dim == 0 || hidden == 0) throw Error(Errc::invalid_argument, "dim", "encoder sizes must be > 0");
  train.validate();
  scoring.weights.validate();
  scoring.severity.validate();
  for (auto [name, cap] : {std::pair{"fpr_cap", fpr_cap}, {"obs_fpr_cap", obs_fpr_cap}, {"high_fpr_cap", high_fpr_cap}}) {
    if (!(cap >= 0.0 && cap <= 1.0)) throw Error(Errc::invalid_argument, name, "must be in [0, 1]");
  }
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
  const auto& t = key_table();
  auto it = t.find(key);
  if (it == t.end()) throw Error(Errc::invalid_argument, std::string(key), "unknown configuration key");
  it->second.set(*this, key, trim(value));
}

std::string PipelineConfig::to_text() const {
  std::string out;
  for (const auto& [name, k] : key_table()) {
    if (!k.get) continue;
    out += name + " = " + k.get(*this) + "\n";
  }
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [name, k] : key_table()) out.push_back(name);
    return out;
  }();
  return keys;
}

std::map<std::string, std::string> parse_config_text(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(Errc::malformed_record, "config line " + std::to_string(line_no), "expected key = value");
    }
    out[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

std::string env_name(std::string_view key) {
  std::string out = "NEBULA_";
  for (char c : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void apply_env_overrides(PipelineConfig& cfg) {
  for (const auto& key : config_keys()) {
    if (const char* v = std::getenv(env_name(key).c_str())) cfg.set(key, v);
  }
}

void load_config(PipelineConfig& cfg, const std::filesystem::path& file) {
  if (!file.empty()) {
    for (const auto& [k, v] : parse_config_text(read_file_text(file))) cfg.set(k, v);
  }
  apply_env_overrides(cfg);
}

}  // namespace nebula
