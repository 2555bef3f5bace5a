#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nebula/graph.hpp"
#include "nebula/novelty.hpp"
#include "nebula/schema.hpp"

namespace nebula {

// Precedence DAG over one session's events: a temporal chain through every
// event except net_outs paired with their causing invoke, plus one branch
// edge from each such invoke to its net_out.
struct SessionDag {
  std::size_t num_nodes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

SessionDag build_session_dag(std::span<const Event> events);
std::int64_t longest_path_edges(const SessionDag& dag);
std::int64_t max_out_degree(const SessionDag& dag);

// 1/(1+k) per event, k = events since the latest install (the install itself
// scores 1); 0 before any install.
std::vector<double> install_proximity_series(std::span<const EdgeType> etypes);

// Tool names of the session's invokes, in order.
std::vector<std::string> tool_sequence(std::span<const Event> events);
std::string bigram_key(std::string_view a, std::string_view b);
void record_bigrams(std::span<const std::string> tools, CountMinSketch& bigrams);
double rare_path_score(std::span<const std::string> tools, const CountMinSketch& bigrams);

// events: one session, ordered by (ts, eid). Throws EmptySession.
SessionDagSummary summarize_session(std::span<const Event> events, const CountMinSketch& bigrams);

inline double squash(double x) { return x / (1.0 + x); }

inline constexpr std::size_t kFeatureDim = 17;
using FeatureRow = std::array<double, kFeatureDim>;

namespace feat {
enum : std::size_t {
  is_install = 0,
  is_invoke,
  is_net_out,
  chain_len,
  branching,
  install_proximity,
  rare_path,
  unique_tools,
  net_out_count,
  duration,
  rarity_pct,
  dst_novelty,
  log_bytes,
  status_error,
  nonstandard_port,
  scope_shift,
  sensitive_scope,
};
inline constexpr std::size_t kAttrBegin = log_bytes;
inline constexpr std::size_t kAttrEnd = kFeatureDim;
}  // namespace feat

std::span<const std::string_view> feature_names();

struct FeatureConfig {
  std::int64_t window_len_ms = 10000;
  std::set<std::string, std::less<>> sensitive_scopes{"config", "credential", "secret"};
  std::set<std::int64_t> standard_ports{80, 443, 8443, 1883};
};

struct FeatureMatrix {
  std::vector<FeatureRow> rows;
  std::vector<std::size_t> edges;  // window edge index of each row
};

bool is_scored(EdgeType t) noexcept;

// Read-only over the sketch, TTL table and allowlist. Throws
// MissingSummary(session_id) when a session in the window has no summary.
FeatureMatrix build_features(const WindowGraph& g, std::span<const SessionDagSummary> summaries,
                             const CountMinSketch& triples, const TtlTable& ttl, const Allowlist& allow,
                             const FeatureConfig& cfg = {});

// Type-triple key of edge i ("src_type|etype|dst_type").
std::string edge_type_triple(const WindowGraph& g, std::size_t i);

inline const std::set<std::string, std::less<>>& default_sensitive_tools() {
  static const std::set<std::string, std::less<>> tools{"read_config", "credential_harvester", "reolink_snapshot",
                                                        "remove_server"};
  return tools;
}

// Edges kept by the Lite profile: installs, net_outs and invokes of sensitive
// tools.
std::vector<std::size_t> lite_filter(const WindowGraph& g,
                                     const std::set<std::string, std::less<>>& sensitive_tools =
                                         default_sensitive_tools());

}  // namespace nebula
