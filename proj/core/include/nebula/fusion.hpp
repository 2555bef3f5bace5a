#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nebula/dagfeat.hpp"
#include "nebula/encoder.hpp"
#include "nebula/graph.hpp"
#include "nebula/novelty.hpp"

namespace nebula {

// Component order: s_edge, s_dag, s_nov, s_attr, s_struct.
inline constexpr std::size_t kComponents = 5;
using Components = std::array<double, kComponents>;
namespace comp {
enum : std::size_t { edge = 0, dag, nov, attr, structure };
}
std::string_view component_name(std::size_t i);

struct FusionWeights {
  Components w{0.4, 0.25, 0.15, 0.1, 0.1};
  double behavior_mix = 0.8;
  double guardrail_mix = 0.2;

  void validate() const;  // InvalidArgument
};

double fuse(const Components& s, const FusionWeights& fw);

// clip01(0.3 n(chain_len) + 0.2 n(branching) + 0.3 install_proximity + 0.2 rare_path).
double dag_score(const SessionDagSummary& s);

enum class Severity : std::uint8_t { none = 0, observe = 1, high = 2 };
std::string_view to_string(Severity s) noexcept;
Severity parse_severity(std::string_view label);

struct SeverityConfig {
  double t_obs = 0.5;
  double t_high = 0.8;
  double margin = 0.05;
  std::int64_t cooldown = 2;

  void validate() const;  // InvalidArgument
};

struct SessionSeverity {
  Severity level = Severity::none;
  std::int64_t quiet_windows = 0;  // consecutive windows qualifying for de-escalation
  std::int64_t since_ts = 0;       // timestamp of the last transition

  friend bool operator==(const SessionSeverity&, const SessionSeverity&) = default;
};

// One window's step of the per-session dual-threshold state machine.
Severity severity_step(double fused, bool flagged, SessionSeverity& state, const SeverityConfig& cfg,
                       std::int64_t ts = 0);

struct EscalatorConfig {
  std::int64_t night_start_min = 22 * 60;  // minutes after UTC midnight
  std::int64_t night_end_min = 6 * 60;
  // Matched against an action edge's scope or tool_name.
  std::set<std::string, std::less<>> lock_open_markers{"lock:open", "unlock_door"};

  bool is_night(std::int64_t ts) const;
};

struct EscalatorFlags {
  bool install_new_egress = false;
  bool night_unlock = false;

  bool any() const noexcept { return install_new_egress || night_unlock; }
  friend bool operator==(const EscalatorFlags&, const EscalatorFlags&) = default;
};

// Per-edge flags over the whole window, read-only over the TTL snapshot.
// `install_sessions` maps sessions with an install in earlier windows to its
// timestamp; installs inside this window are picked up from g.
std::vector<EscalatorFlags> escalators(const WindowGraph& g, const Allowlist& allow, const TtlTable& ttl,
                                       const EscalatorConfig& cfg,
                                       const std::map<std::string, std::int64_t, std::less<>>& install_sessions = {});

struct Evidence {
  std::string triple;                 // type triple
  std::string instance;               // "src_id|etype|dst_id"
  std::optional<std::string> dest;    // host:port for net_out
  std::int64_t chain_len = 0;
  std::int64_t branching = 0;
  double install_proximity = 0.0;
  double rare_path = 0.0;

  friend bool operator==(const Evidence&, const Evidence&) = default;
};

struct Alert {
  std::uint64_t window_id = 0;
  std::string edge_eid;
  std::string session_id;
  std::int64_t ts = 0;
  EdgeType etype = EdgeType::invoke;
  Components s{};
  std::optional<double> guardrail;
  double fused = 0.0;
  std::optional<double> fused2;  // behavior/guardrail mix, when the edge carries a prompt
  Severity severity = Severity::none;
  EscalatorFlags flags;
  Evidence evidence;

  friend bool operator==(const Alert&, const Alert&) = default;
};

nlohmann::ordered_json alert_to_json(const Alert& a);
Alert alert_from_json(const nlohmann::json& j);
void write_alerts(const std::filesystem::path& path, std::span<const Alert> alerts);
std::vector<Alert> read_alerts(const std::filesystem::path& path);

enum class Profile : std::uint8_t { standard, lite };
std::string_view to_string(Profile p) noexcept;
Profile parse_profile(std::string_view label);

// Behavior scorer for one window: the graph encoder (standard) or the
// feature-only logistic model (lite).
struct Scorer {
  Profile profile = Profile::standard;
  const ModelWeights* weights = nullptr;
  const LiteModel* lite = nullptr;

  std::vector<double> score(const WindowGraph& g, std::span<const std::size_t> edges,
                            std::span<const FeatureRow> rows) const;
};

struct ScoringConfig {
  FusionWeights weights;
  SeverityConfig severity;
  EscalatorConfig escalator;
  FeatureConfig features;
  std::set<std::string, std::less<>> sensitive_tools = default_sensitive_tools();
};

// Live stream state mutated only by score_window.
struct ScoringState {
  TtlTable ttl;
  CountMinSketch triples;
  std::map<std::string, SessionSeverity, std::less<>> sessions;
  std::map<std::string, std::int64_t, std::less<>> install_sessions;  // session -> latest install ts
  std::int64_t last_window = -1;

  ScoringState() = default;
  explicit ScoringState(std::int64_t ttl_ms) : ttl(ttl_ms) {}

  void save(const std::filesystem::path& dir) const;
  static ScoringState load(const std::filesystem::path& dir);
  friend bool operator==(const ScoringState&, const ScoringState&) = default;
};

// Updates the instance/type/provider/host last-seen tables and the triple
// sketch for every edge of the window.
void absorb_window(const WindowGraph& g, ScoringState& state);

// Edges passing the new-edge filter: scored types whose instance triple is
// absent or expired, intersected with the Lite filter for that profile.
std::vector<std::size_t> new_edges(const WindowGraph& g, const TtlTable& ttl, Profile profile,
                                   const std::set<std::string, std::less<>>& sensitive_tools);

// Scores one window and advances the state. Throws StateDesync when window
// ids are not strictly increasing. Alerts are ordered by fused descending,
// then eid.
std::vector<Alert> score_window(const WindowGraph& g, std::span<const SessionDagSummary> summaries,
                                ScoringState& state, const Allowlist& allow, const Scorer& scorer,
                                const ScoringConfig& cfg);

}  // namespace nebula
