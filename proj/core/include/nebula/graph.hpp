#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nebula/schema.hpp"

namespace nebula {

// Per-edge attributes carried alongside the typed edge arrays.
struct EdgeAttrs {
  std::string session_id;
  std::string provider;
  std::optional<std::string> tool_name;
  std::optional<std::string> scope;
  Status status = Status::ok;
  std::optional<std::int64_t> bytes;
  std::optional<std::string> dest_host;
  std::optional<std::int64_t> dest_port;
  std::optional<std::string> prompt_text;

  friend bool operator==(const EdgeAttrs&, const EdgeAttrs&) = default;
};

EdgeAttrs attrs_of(const Event& e);
nlohmann::ordered_json attrs_to_json(const EdgeAttrs& a);
EdgeAttrs attrs_from_json(const nlohmann::json& j);

struct WindowGraph {
  std::uint64_t window_id = 0;
  std::int64_t t_start = 0;
  std::int64_t t_end = 0;
  std::vector<std::uint64_t> node_ids;
  std::vector<NodeType> node_types;
  std::vector<std::uint64_t> edge_src;
  std::vector<std::uint64_t> edge_dst;
  std::vector<EdgeType> edge_types;
  std::vector<std::int64_t> edge_ts;
  std::vector<std::string> edge_eids;
  std::vector<EdgeAttrs> edge_attrs;

  std::size_t num_nodes() const noexcept { return node_ids.size(); }
  std::size_t num_edges() const noexcept { return edge_types.size(); }

  friend bool operator==(const WindowGraph&, const WindowGraph&) = default;
};

// Throws ShapeMismatch when array lengths disagree or an endpoint id is not
// among node_ids.
void check_window(const WindowGraph& g);

struct SessionDagSummary {
  std::string session_id;
  std::int64_t chain_len = 0;
  std::int64_t branching = 0;
  double install_proximity = 0.0;
  double rare_path = 0.0;
  std::int64_t unique_tools = 0;
  std::int64_t net_out_count = 0;
  std::int64_t install_count = 0;
  std::int64_t duration_ms = 0;
  bool has_install = false;

  friend bool operator==(const SessionDagSummary&, const SessionDagSummary&) = default;
};

nlohmann::ordered_json summary_to_json(const SessionDagSummary& s);
SessionDagSummary summary_from_json(const nlohmann::json& j);

}  // namespace nebula
