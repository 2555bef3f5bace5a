#include "nebula/graph.hpp"

#include <algorithm>

#include "nebula/error.hpp"

namespace nebula {

EdgeAttrs attrs_of(const Event& e) {
  EdgeAttrs a;
  a.session_id = e.session_id;
  a.provider = e.provider;
  a.tool_name = e.tool_name;
  a.scope = e.scope;
  a.status = e.status;
  a.bytes = e.bytes;
  a.dest_host = e.dest_host;
  a.dest_port = e.dest_port;
  a.prompt_text = e.prompt_text;
  return a;
}

nlohmann::ordered_json attrs_to_json(const EdgeAttrs& a) {
  nlohmann::ordered_json j;
  j["session_id"] = a.session_id;
  j["provider"] = a.provider;
  if (a.tool_name) j["tool_name"] = *a.tool_name;
  if (a.scope) j["scope"] = *a.scope;
  j["status"] = to_string(a.status);
  if (a.bytes) j["bytes"] = *a.bytes;
  if (a.dest_host) j["dest_host"] = *a.dest_host;
  if (a.dest_port) j["dest_port"] = *a.dest_port;
  if (a.prompt_text) j["prompt_text"] = *a.prompt_text;
  return j;
}

EdgeAttrs attrs_from_json(const nlohmann::json& j) {
  EdgeAttrs a;
  try {
    a.session_id = j.at("session_id").get<std::string>();
    a.provider = j.at("provider").get<std::string>();
    if (j.contains("tool_name")) a.tool_name = j["tool_name"].get<std::string>();
    if (j.contains("scope")) a.scope = j["scope"].get<std::string>();
    a.status = parse_status(j.at("status").get<std::string>());
    if (j.contains("bytes")) a.bytes = j["bytes"].get<std::int64_t>();
    if (j.contains("dest_host")) a.dest_host = j["dest_host"].get<std::string>();
    if (j.contains("dest_port")) a.dest_port = j["dest_port"].get<std::int64_t>();
    if (j.contains("prompt_text")) a.prompt_text = j["prompt_text"].get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::corrupt_container, "edge_attrs", ex.what());
  }
  return a;
}

void check_window(const WindowGraph& g) {
  const std::size_t e = g.edge_types.size();
  if (g.node_types.size() != g.node_ids.size()) throw Error(Errc::shape_mismatch, "node_types");
  if (g.edge_src.size() != e || g.edge_dst.size() != e || g.edge_ts.size() != e || g.edge_eids.size() != e ||
      g.edge_attrs.size() != e) {
    throw Error(Errc::shape_mismatch, "edges", "edge arrays differ in length");
  }
  std::vector<std::uint64_t> ids = g.node_ids;
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 0; i < e; ++i) {
    if (!std::binary_search(ids.begin(), ids.end(), g.edge_src[i]) ||
        !std::binary_search(ids.begin(), ids.end(), g.edge_dst[i])) {
      throw Error(Errc::shape_mismatch, "edge_index", "endpoint id not among node_ids");
    }
  }
}

nlohmann::ordered_json summary_to_json(const SessionDagSummary& s) {
  nlohmann::ordered_json j;
  j["session_id"] = s.session_id;
  j["chain_len"] = s.chain_len;
  j["branching"] = s.branching;
  j["install_proximity"] = s.install_proximity;
  j["rare_path"] = s.rare_path;
  j["unique_tools"] = s.unique_tools;
  j["net_out_count"] = s.net_out_count;
  j["install_count"] = s.install_count;
  j["duration_ms"] = s.duration_ms;
  j["has_install"] = s.has_install;
  return j;
}

SessionDagSummary summary_from_json(const nlohmann::json& j) {
  SessionDagSummary s;
  try {
    s.session_id = j.at("session_id").get<std::string>();
    s.chain_len = j.at("chain_len").get<std::int64_t>();
    s.branching = j.at("branching").get<std::int64_t>();
    s.install_proximity = j.at("install_proximity").get<double>();
    s.rare_path = j.at("rare_path").get<double>();
    s.unique_tools = j.at("unique_tools").get<std::int64_t>();
    s.net_out_count = j.at("net_out_count").get<std::int64_t>();
    s.install_count = j.at("install_count").get<std::int64_t>();
    s.duration_ms = j.at("duration_ms").get<std::int64_t>();
    s.has_install = j.at("has_install").get<bool>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::malformed_record, "summary", ex.what());
  }
  return s;
}

}  // namespace nebula
