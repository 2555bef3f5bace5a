#include "nebula/schema.hpp"

#include <algorithm>
#include <cctype>

#include "nebula/error.hpp"

namespace nebula {

namespace {

constexpr std::array<std::string_view, kNodeTypeCount> kNodeTypeNames = {
    "agent", "mcp_server", "tool", "device", "remote", "resource", "host", "session"};
constexpr std::array<std::string_view, kEdgeTypeCount> kEdgeTypeNames = {
    "invoke", "install", "net_out", "action", "access", "perm"};
constexpr std::array<std::string_view, 3> kStatusNames = {"ok", "error", "denied"};

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

const nlohmann::json& require(const nlohmann::json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) throw Error(Errc::schema_violation, field, "missing required field");
  return *it;
}

std::string require_string(const nlohmann::json& j, const char* field) {
  const auto& v = require(j, field);
  if (!v.is_string()) throw Error(Errc::schema_violation, field, "expected string");
  return v.get<std::string>();
}

std::int64_t require_int(const nlohmann::json& v, const char* field) {
  if (!v.is_number_integer()) throw Error(Errc::schema_violation, field, "expected integer");
  return v.get<std::int64_t>();
}

std::optional<std::string> optional_string(const nlohmann::json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(Errc::schema_violation, field, "expected string");
  return it->get<std::string>();
}

std::optional<std::int64_t> optional_int(const nlohmann::json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return require_int(*it, field);
}

// Strips any number of redundant "<type>:" prefixes, e.g. "tool:tool:log".
std::string strip_type_prefix(std::string key, NodeType type) {
  const std::string prefix = std::string(to_string(type)) + ":";
  while (key.size() > prefix.size() && key.compare(0, prefix.size(), prefix) == 0) {
    key.erase(0, prefix.size());
  }
  return key;
}

}  // namespace

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view to_string(NodeType t) noexcept { return kNodeTypeNames[static_cast<std::size_t>(t)]; }
std::string_view to_string(EdgeType t) noexcept { return kEdgeTypeNames[static_cast<std::size_t>(t)]; }
std::string_view to_string(Status s) noexcept { return kStatusNames[static_cast<std::size_t>(s)]; }

NodeType parse_node_type(std::string_view label, std::string_view field) {
  for (std::size_t i = 0; i < kNodeTypeNames.size(); ++i) {
    if (kNodeTypeNames[i] == label) return static_cast<NodeType>(i);
  }
  throw Error(Errc::schema_violation, std::string(field), "unknown node type '" + std::string(label) + "'");
}

EdgeType parse_edge_type(std::string_view label, std::string_view field) {
  for (std::size_t i = 0; i < kEdgeTypeNames.size(); ++i) {
    if (kEdgeTypeNames[i] == label) return static_cast<EdgeType>(i);
  }
  throw Error(Errc::schema_violation, std::string(field), "unknown edge type '" + std::string(label) + "'");
}

Status parse_status(std::string_view label, std::string_view field) {
  for (std::size_t i = 0; i < kStatusNames.size(); ++i) {
    if (kStatusNames[i] == label) return static_cast<Status>(i);
  }
  throw Error(Errc::schema_violation, std::string(field), "unknown status '" + std::string(label) + "'");
}

NodeType node_type_from_u8(std::uint8_t v) {
  if (v >= kNodeTypeCount) throw Error(Errc::corrupt_container, "node_types", "out-of-range node type");
  return static_cast<NodeType>(v);
}

EdgeType edge_type_from_u8(std::uint8_t v) {
  if (v >= kEdgeTypeCount) throw Error(Errc::corrupt_container, "edge_types", "out-of-range edge type");
  return static_cast<EdgeType>(v);
}

std::string NodeRef::canonical() const {
  std::string s(to_string(type));
  s += ':';
  s += key;
  return s;
}

NodeRef NodeRef::parse(std::string_view encoded, std::string_view field) {
  const auto colon = encoded.find(':');
  if (colon == std::string_view::npos) {
    throw Error(Errc::schema_violation, std::string(field), "expected '<node_type>:<key>'");
  }
  NodeRef ref{parse_node_type(encoded.substr(0, colon), field), std::string(encoded.substr(colon + 1))};
  if (ref.key.empty()) throw Error(Errc::schema_violation, std::string(field), "empty node key");
  return ref;
}

std::vector<Violation> validate_event(const Event& e) {
  std::vector<Violation> out;
  auto add = [&](const char* field, const char* msg) { out.push_back({field, msg}); };

  if (e.eid.empty()) add("eid", "eid must be non-empty");
  if (e.ts < 0) add("ts", "ts must be >= 0");
  if (e.session_id.empty()) add("session_id", "session_id must be non-empty");
  if (e.src.key.empty()) add("src", "src key must be non-empty");
  if (e.dst.key.empty()) add("dst", "dst key must be non-empty");

  switch (e.etype) {
    case EdgeType::net_out:
      if (e.dst.type != NodeType::remote) add("dst", "net_out requires a remote destination");
      if (!e.dest_port) add("dest_port", "net_out requires dest_port");
      break;
    case EdgeType::install:
      if (e.dst.type != NodeType::mcp_server) add("dst", "install requires an mcp_server destination");
      break;
    case EdgeType::invoke:
      if (e.src.type != NodeType::agent) add("src", "invoke requires an agent source");
      if (e.dst.type != NodeType::tool) add("dst", "invoke requires a tool destination");
      break;
    default:
      break;
  }
  if (e.dest_port && (*e.dest_port < 1 || *e.dest_port > 65535)) add("dest_port", "dest_port outside [1, 65535]");
  if (e.bytes && *e.bytes < 0) add("bytes", "bytes must be >= 0");
  return out;
}

Event event_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::malformed_record, "record", "expected a JSON object");

  Event e;
  e.eid = require_string(j, "eid");
  e.ts = require_int(require(j, "ts"), "ts");
  e.etype = parse_edge_type(require_string(j, "etype"), "etype");
  e.src = NodeRef::parse(require_string(j, "src"), "src");
  e.dst = NodeRef::parse(require_string(j, "dst"), "dst");
  e.session_id = require_string(j, "session_id");
  e.provider = require_string(j, "provider");
  e.status = parse_status(require_string(j, "status"), "status");
  e.tool_name = optional_string(j, "tool_name");
  e.scope = optional_string(j, "scope");
  e.bytes = optional_int(j, "bytes");
  e.dest_host = optional_string(j, "dest_host");
  e.dest_port = optional_int(j, "dest_port");
  e.prompt_text = optional_string(j, "prompt_text");

  if (auto violations = validate_event(e); !violations.empty()) {
    throw Error(Errc::schema_violation, violations.front().field, violations.front().message);
  }
  return e;
}

Event parse_event_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& ex) {
    throw Error(Errc::malformed_record, "line", ex.what());
  }
  return event_from_json(j);
}

nlohmann::ordered_json event_to_json(const Event& e) {
  nlohmann::ordered_json j;
  j["eid"] = e.eid;
  j["ts"] = e.ts;
  j["etype"] = to_string(e.etype);
  j["src"] = e.src.canonical();
  j["dst"] = e.dst.canonical();
  j["session_id"] = e.session_id;
  j["provider"] = e.provider;
  if (e.tool_name) j["tool_name"] = *e.tool_name;
  if (e.scope) j["scope"] = *e.scope;
  j["status"] = to_string(e.status);
  if (e.bytes) j["bytes"] = *e.bytes;
  if (e.dest_host) j["dest_host"] = *e.dest_host;
  if (e.dest_port) j["dest_port"] = *e.dest_port;
  if (e.prompt_text) j["prompt_text"] = *e.prompt_text;
  return j;
}

std::string serialize_event(const Event& e) { return event_to_json(e).dump(); }

Event normalize_event(Event e) {
  e.src.key = strip_type_prefix(trim(e.src.key), e.src.type);
  e.dst.key = strip_type_prefix(trim(e.dst.key), e.dst.type);
  e.provider = trim(e.provider);

  // "provider/tool" keys fold the provider into the attribute so a tool from
  // any server is still just a tool node.
  auto split_tool = [&](std::string& key) {
    if (auto slash = key.find('/'); slash != std::string::npos && slash > 0 && slash + 1 < key.size()) {
      if (e.provider.empty()) e.provider = key.substr(0, slash);
      key.erase(0, slash + 1);
    }
  };
  if (e.src.type == NodeType::tool) split_tool(e.src.key);
  if (e.dst.type == NodeType::tool) split_tool(e.dst.key);
  if (e.tool_name) {
    *e.tool_name = strip_type_prefix(trim(*e.tool_name), NodeType::tool);
    split_tool(*e.tool_name);
  } else if (e.etype == EdgeType::invoke && e.dst.type == NodeType::tool) {
    e.tool_name = e.dst.key;
  }

  if (e.src.type == NodeType::remote) e.src.key = to_lower(e.src.key);
  if (e.dst.type == NodeType::remote) e.dst.key = to_lower(e.dst.key);
  if (e.dest_host) {
    std::string host = to_lower(trim(*e.dest_host));
    while (!host.empty() && host.back() == '.') host.pop_back();
    e.dest_host = host;
  }
  return e;
}

std::string type_triple_key(NodeType src, EdgeType etype, NodeType dst) {
  std::string s(to_string(src));
  s += '|';
  s += to_string(etype);
  s += '|';
  s += to_string(dst);
  return s;
}

}  // namespace nebula
