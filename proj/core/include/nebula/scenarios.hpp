#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nebula/novelty.hpp"
#include "nebula/rng.hpp"
#include "nebula/schema.hpp"

namespace nebula {

// 2026-01-01T00:00:00Z.
inline constexpr std::int64_t kDefaultEpochMs = 1767225600000;

struct Range {
  std::int64_t lo = 0;
  std::int64_t hi = 0;

  friend bool operator==(const Range&, const Range&) = default;
};

struct Evasion {
  Range filler_steps{0, 2};
  Range delay_jitter_ms{300, 1500};
  bool endpoint_churn = true;
  bool paraphrase = false;

  // "filler=0-2,jitter=300-1500,churn=1,paraphrase=0" or "none"; unlisted
  // keys keep their current values. Throws InvalidArgument.
  static Evasion parse(std::string_view text, Evasion base);
  static Evasion parse(std::string_view text);
  static Evasion none();
  std::string to_string() const;

  friend bool operator==(const Evasion&, const Evasion&) = default;
};

struct DeviceEntry {
  std::string device;
  std::string tool;
  std::string role;
  std::string scope;
};

// TSV rows: device, tool, role, scope. Throws MalformedRecord.
std::vector<DeviceEntry> parse_device_catalog(std::string_view text);
const std::vector<DeviceEntry>& builtin_device_catalog();

enum class SessionLabel : std::uint8_t { benign, exfil_chain, install_persistence, device_impact };
std::string_view to_string(SessionLabel l) noexcept;
SessionLabel parse_session_label(std::string_view s);

struct ScenarioConfig {
  std::uint64_t seed = 7;
  std::int64_t start_ms = kDefaultEpochMs;
  std::int64_t duration_ms = 3600000;
  double sessions_per_hour = 500.0;
  double attack_prevalence = 0.10;
  // Share of benign sessions drawn from templates that trip a weak rule or
  // reach a first-seen host.
  double hard_negative_rate = 0.10;
  // Part of the hard negatives that install a catalog plugin; the rest split
  // evenly between cloud backups and first-visit sites.
  double plugin_install_share = 0.3;
  bool device_impact = false;
  double cross_session_rate = 0.3;  // install_persistence attacks continued in a later session
  Evasion evasion;
  std::vector<DeviceEntry> catalog = builtin_device_catalog();

  void validate() const;  // InvalidArgument
};

struct SessionTruth {
  std::string session_id;
  SessionLabel label = SessionLabel::benign;
  std::string variant;  // template name
  std::int64_t start_ts = 0;
  std::int64_t end_ts = 0;
  bool rule1 = false;
  bool rule2 = false;
  std::vector<std::string> red_edges;  // eids flagged by the weak rules

  bool is_attack() const noexcept { return label != SessionLabel::benign; }
  bool weak_flag() const noexcept { return rule1 || rule2; }
  friend bool operator==(const SessionTruth&, const SessionTruth&) = default;
};

struct GroundTruth {
  std::vector<SessionTruth> sessions;  // ordered by session_id

  const SessionTruth* find(std::string_view session_id) const;
  std::set<std::string, std::less<>> red_edges() const;
};

struct WeakLabelConfig {
  std::set<std::string, std::less<>> sensitive_scopes{"config", "credential", "secret"};
};

struct WeakLabel {
  bool rule1 = false;
  bool rule2 = false;
  std::vector<std::string> red_edges;  // in event order
};

// Rule 1: an install followed by an invoke of the provider it introduced.
// Rule 2: a sensitive-scope event followed by net_out to a host the
// allowlist rejects. `events` is one session in (ts, eid) order.
WeakLabel weak_label(std::span<const Event> events, const Allowlist& allow, const WeakLabelConfig& cfg = {});

// Applies weak_label to every session of `events` and fills the rule fields.
void apply_weak_labels(std::span<const Event> events, GroundTruth& truth, const Allowlist& allow,
                       const WeakLabelConfig& cfg = {});

struct Scenario {
  std::vector<Event> events;  // ordered by (ts, eid)
  GroundTruth truth;
};

// Relative session rate per UTC hour.
std::span<const double> diurnal_multipliers();

// Hosts every benign template egresses to.
Allowlist generator_allowlist();

// Template builders. Sessions are appended to `out` with eids
// "<session_id>-<n>"; net_outs follow their invoke at the same ts.
struct SessionSlot {
  std::string session_id;
  std::int64_t start_ts = 0;
};

void gen_benign_session(const ScenarioConfig& cfg, const SessionSlot& slot, Rng& rng, std::vector<Event>& out,
                        std::string& variant);
void gen_exfil_chain(const ScenarioConfig& cfg, const SessionSlot& slot, Rng& rng, std::vector<Event>& out);

struct PersistencePlan {
  std::string provider;  // "attacker-*"
  std::string tool;
  std::string harvest_tool;  // second provider tool, used by the follow-on session
  std::string endpoint_host;
  std::int64_t endpoint_port = 443;
};
PersistencePlan plan_persistence(const ScenarioConfig& cfg, Rng& rng);
// k >= 2 invoke + net_out repetitions; with `install` the session opens with
// the install of plan.provider.
void gen_install_persistence(const ScenarioConfig& cfg, const SessionSlot& slot, const PersistencePlan& plan,
                             std::int64_t k, bool install, Rng& rng, std::vector<Event>& out);

enum class ImpactKind : std::uint8_t { night_unlock, alarm_suppression, silent_camera };
std::string_view to_string(ImpactKind k) noexcept;
void gen_device_impact(const ScenarioConfig& cfg, const SessionSlot& slot, ImpactKind kind, Rng& rng,
                       std::vector<Event>& out);

// Full stream: benign + attack sessions, weak labels applied.
Scenario generate(const ScenarioConfig& cfg);

enum class Split : std::uint8_t { train, val, test };
std::string_view to_string(Split s) noexcept;
Split parse_split(std::string_view s);

// Stratified by label, 60/20/20, seeded.
std::map<std::string, Split, std::less<>> assign_splits(const GroundTruth& truth, std::uint64_t seed);

void write_truth(const std::filesystem::path& path, const GroundTruth& truth);
GroundTruth read_truth(const std::filesystem::path& path);
void write_splits(const std::filesystem::path& path, const std::map<std::string, Split, std::less<>>& splits);
std::map<std::string, Split, std::less<>> read_splits(const std::filesystem::path& path);

// Writes events.nebula.jsonl, truth.jsonl, splits.csv and allowlist.txt.
void write_scenario(const std::filesystem::path& dir, const Scenario& s, std::uint64_t split_seed);

}  // namespace nebula
