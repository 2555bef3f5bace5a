#include "nebula/dagfeat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <map>
#include <unordered_map>

#include "nebula/error.hpp"

namespace nebula {

namespace {

constexpr std::array<std::string_view, kFeatureDim> kFeatureNames = {
    "is_install",   "is_invoke",     "is_net_out", "chain_len",   "branching",   "install_proximity",
    "rare_path",    "unique_tools",  "net_out_count", "duration", "rarity_pct",  "dst_novelty",
    "log_bytes",    "status_error",  "nonstandard_port", "scope_shift", "sensitive_scope"};

}  // namespace

std::span<const std::string_view> feature_names() { return kFeatureNames; }

SessionDag build_session_dag(std::span<const Event> events) {
  SessionDag dag;
  dag.num_nodes = events.size();
  std::vector<bool> paired(events.size(), false);
  std::vector<bool> used_invoke(events.size(), false);

  for (std::size_t j = 0; j < events.size(); ++j) {
    if (events[j].etype != EdgeType::net_out) continue;
    for (std::size_t i = j; i-- > 0 && events[i].ts == events[j].ts;) {
      if (events[i].etype == EdgeType::invoke && !used_invoke[i]) {
        used_invoke[i] = true;
        paired[j] = true;
        dag.edges.emplace_back(i, j);
        break;
      }
    }
  }

  std::optional<std::size_t> prev;
  for (std::size_t j = 0; j < events.size(); ++j) {
    if (paired[j]) continue;
    if (prev) dag.edges.emplace_back(*prev, j);
    prev = j;
  }
  std::sort(dag.edges.begin(), dag.edges.end());
  return dag;
}

std::int64_t longest_path_edges(const SessionDag& dag) {
  // Every edge points forward in event order, so index order is topological.
  std::vector<std::int64_t> best(dag.num_nodes, 0);
  std::int64_t longest = 0;
  for (const auto& [from, to] : dag.edges) {
    best[to] = std::max(best[to], best[from] + 1);
    longest = std::max(longest, best[to]);
  }
  return longest;
}

std::int64_t max_out_degree(const SessionDag& dag) {
  std::vector<std::int64_t> out(dag.num_nodes, 0);
  std::int64_t m = 0;
  for (const auto& edge : dag.edges) m = std::max(m, ++out[edge.first]);
  return m;
}

std::vector<double> install_proximity_series(std::span<const EdgeType> etypes) {
  std::vector<double> out(etypes.size(), 0.0);
  std::optional<std::size_t> last_install;
  for (std::size_t i = 0; i < etypes.size(); ++i) {
    if (etypes[i] == EdgeType::install) {
      last_install = i;
      out[i] = 1.0;
    } else if (last_install) {
      const double k = static_cast<double>(i - *last_install - 1);
      out[i] = 1.0 / (1.0 + k);
    }
  }
  return out;
}

std::vector<std::string> tool_sequence(std::span<const Event> events) {
  std::vector<std::string> tools;
  for (const auto& e : events) {
    if (e.etype != EdgeType::invoke) continue;
    tools.push_back(e.tool_name ? *e.tool_name : e.dst.key);
  }
  return tools;
}

std::string bigram_key(std::string_view a, std::string_view b) {
  std::string k(a);
  k += '|';
  k += b;
  return k;
}

void record_bigrams(std::span<const std::string> tools, CountMinSketch& bigrams) {
  for (std::size_t i = 1; i < tools.size(); ++i) bigrams.update(bigram_key(tools[i - 1], tools[i]));
}

double rare_path_score(std::span<const std::string> tools, const CountMinSketch& bigrams) {
  if (tools.size() < 2) return 0.0;
  std::uint64_t min_est = std::numeric_limits<std::uint64_t>::max();
  for (std::size_t i = 1; i < tools.size(); ++i) {
    min_est = std::min(min_est, bigrams.estimate(bigram_key(tools[i - 1], tools[i])));
  }
  const double v = 1.0 - static_cast<double>(min_est) / (1.0 + static_cast<double>(bigrams.total()));
  return std::clamp(v, 0.0, 1.0);
}

SessionDagSummary summarize_session(std::span<const Event> events, const CountMinSketch& bigrams) {
  if (events.empty()) throw Error(Errc::empty_session, "events", "session has no events");

  SessionDagSummary s;
  s.session_id = events.front().session_id;
  const SessionDag dag = build_session_dag(events);
  s.chain_len = std::max<std::int64_t>(1, longest_path_edges(dag));
  s.branching = max_out_degree(dag);

  std::vector<EdgeType> etypes;
  etypes.reserve(events.size());
  std::set<std::string, std::less<>> tools;
  std::int64_t t_min = events.front().ts;
  std::int64_t t_max = events.front().ts;
  for (const auto& e : events) {
    etypes.push_back(e.etype);
    if (e.etype == EdgeType::net_out) ++s.net_out_count;
    if (e.etype == EdgeType::install) ++s.install_count;
    if (e.etype == EdgeType::invoke) tools.insert(e.tool_name ? *e.tool_name : e.dst.key);
    t_min = std::min(t_min, e.ts);
    t_max = std::max(t_max, e.ts);
  }
  s.has_install = s.install_count > 0;
  s.unique_tools = static_cast<std::int64_t>(tools.size());
  s.duration_ms = t_max - t_min;
  const auto prox = install_proximity_series(etypes);
  s.install_proximity = prox.empty() ? 0.0 : *std::max_element(prox.begin(), prox.end());
  s.rare_path = rare_path_score(tool_sequence(events), bigrams);
  return s;
}

bool is_scored(EdgeType t) noexcept {
  return t == EdgeType::install || t == EdgeType::invoke || t == EdgeType::net_out;
}

std::string edge_type_triple(const WindowGraph& g, std::size_t i) {
  // node_ids is ascending, so the type lookup is a binary search.
  auto type_of = [&](std::uint64_t id) {
    auto it = std::lower_bound(g.node_ids.begin(), g.node_ids.end(), id);
    if (it == g.node_ids.end() || *it != id) throw Error(Errc::shape_mismatch, "edge_index", "unknown node id");
    return g.node_types[static_cast<std::size_t>(it - g.node_ids.begin())];
  };
  return type_triple_key(type_of(g.edge_src[i]), g.edge_types[i], type_of(g.edge_dst[i]));
}

FeatureMatrix build_features(const WindowGraph& g, std::span<const SessionDagSummary> summaries,
                             const CountMinSketch& triples, const TtlTable& ttl, const Allowlist& allow,
                             const FeatureConfig& cfg) {
  std::unordered_map<std::string_view, const SessionDagSummary*> by_session;
  for (const auto& s : summaries) by_session.emplace(s.session_id, &s);

  // Per-session walks in window edge order give install proximity and the
  // modal scope seen so far.
  struct SessionWalk {
    std::vector<std::size_t> edges;
  };
  std::map<std::string_view, SessionWalk> walks;
  for (std::size_t i = 0; i < g.num_edges(); ++i) walks[g.edge_attrs[i].session_id].edges.push_back(i);

  std::vector<double> proximity(g.num_edges(), 0.0);
  std::vector<double> scope_shift(g.num_edges(), 0.0);
  for (const auto& [sid, walk] : walks) {
    if (!by_session.count(sid)) throw Error(Errc::missing_summary, std::string(sid), "no DAG summary for session");
    std::vector<EdgeType> etypes;
    etypes.reserve(walk.edges.size());
    for (auto i : walk.edges) etypes.push_back(g.edge_types[i]);
    const auto prox = install_proximity_series(etypes);

    std::map<std::string, std::int64_t, std::less<>> scope_counts;
    std::string modal;
    std::int64_t modal_count = 0;
    for (std::size_t k = 0; k < walk.edges.size(); ++k) {
      const auto i = walk.edges[k];
      proximity[i] = prox[k];
      const auto& scope = g.edge_attrs[i].scope;
      if (!scope) continue;
      if (modal_count > 0 && *scope != modal) scope_shift[i] = 1.0;
      const auto c = ++scope_counts[*scope];
      if (c > modal_count) {
        modal_count = c;
        modal = *scope;
      }
    }
  }

  FeatureMatrix m;
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    const EdgeType et = g.edge_types[i];
    if (!is_scored(et)) continue;
    const auto& a = g.edge_attrs[i];
    const SessionDagSummary& s = *by_session.at(a.session_id);

    FeatureRow r{};
    r[feat::is_install] = et == EdgeType::install ? 1.0 : 0.0;
    r[feat::is_invoke] = et == EdgeType::invoke ? 1.0 : 0.0;
    r[feat::is_net_out] = et == EdgeType::net_out ? 1.0 : 0.0;
    r[feat::chain_len] = squash(static_cast<double>(s.chain_len));
    r[feat::branching] = squash(static_cast<double>(s.branching));
    r[feat::install_proximity] = proximity[i];
    r[feat::rare_path] = s.rare_path;
    r[feat::unique_tools] = squash(static_cast<double>(s.unique_tools));
    r[feat::net_out_count] = squash(static_cast<double>(s.net_out_count));
    r[feat::duration] =
        std::min(1.0, static_cast<double>(s.duration_ms) / static_cast<double>(std::max<std::int64_t>(1, cfg.window_len_ms)));
    r[feat::rarity_pct] = rarity_percentile(triples, edge_type_triple(g, i));
    if (et == EdgeType::net_out && a.dest_host) {
      r[feat::dst_novelty] = dst_novelty(*a.dest_host, a.dest_port, g.edge_ts[i], allow, ttl);
    }
    if (a.bytes) {
      r[feat::log_bytes] = std::clamp(std::log2(1.0 + static_cast<double>(*a.bytes)) / 32.0, 0.0, 1.0);
    }
    r[feat::status_error] = a.status == Status::ok ? 0.0 : 1.0;
    if (a.dest_port) r[feat::nonstandard_port] = cfg.standard_ports.count(*a.dest_port) ? 0.0 : 1.0;
    r[feat::scope_shift] = scope_shift[i];
    r[feat::sensitive_scope] = a.scope && cfg.sensitive_scopes.count(*a.scope) ? 1.0 : 0.0;

    m.rows.push_back(r);
    m.edges.push_back(i);
  }
  return m;
}

std::vector<std::size_t> lite_filter(const WindowGraph& g, const std::set<std::string, std::less<>>& sensitive_tools) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    const EdgeType et = g.edge_types[i];
    if (et == EdgeType::install || et == EdgeType::net_out) {
      keep.push_back(i);
    } else if (et == EdgeType::invoke) {
      const auto& tool = g.edge_attrs[i].tool_name;
      if (tool && sensitive_tools.count(*tool)) keep.push_back(i);
    }
  }
  return keep;
}

}  // namespace nebula
