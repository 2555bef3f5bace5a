#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

// NEBULA event vocabulary: the closed node/edge type sets and the normalized
// event record every other module consumes.
namespace nebula {

enum class NodeType : std::uint8_t {
  agent = 0,
  mcp_server = 1,
  tool = 2,
  device = 3,
  remote = 4,
  resource = 5,
  host = 6,
  session = 7,
};
inline constexpr std::size_t kNodeTypeCount = 8;

enum class EdgeType : std::uint8_t {
  invoke = 0,
  install = 1,
  net_out = 2,
  action = 3,
  access = 4,
  perm = 5,
};
inline constexpr std::size_t kEdgeTypeCount = 6;

enum class Status : std::uint8_t { ok = 0, error = 1, denied = 2 };

std::string_view to_string(NodeType t) noexcept;
std::string_view to_string(EdgeType t) noexcept;
std::string_view to_string(Status s) noexcept;

// Throw SchemaViolation(field) for labels outside the closed sets.
NodeType parse_node_type(std::string_view label, std::string_view field = "node_type");
EdgeType parse_edge_type(std::string_view label, std::string_view field = "etype");
Status parse_status(std::string_view label, std::string_view field = "status");

// Decoding a raw byte read from a container; throws CorruptContainer.
NodeType node_type_from_u8(std::uint8_t v);
EdgeType edge_type_from_u8(std::uint8_t v);

struct NodeRef {
  NodeType type = NodeType::agent;
  std::string key;

  // "<node_type>:<key>", the wire encoding of src/dst.
  std::string canonical() const;
  static NodeRef parse(std::string_view encoded, std::string_view field);

  friend bool operator==(const NodeRef&, const NodeRef&) = default;
  friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
};

struct Event {
  std::string eid;
  std::int64_t ts = 0;  // ms since epoch
  EdgeType etype = EdgeType::invoke;
  NodeRef src;
  NodeRef dst;
  std::string session_id;
  std::string provider;
  std::optional<std::string> tool_name;
  std::optional<std::string> scope;
  Status status = Status::ok;
  std::optional<std::int64_t> bytes;
  std::optional<std::string> dest_host;
  std::optional<std::int64_t> dest_port;
  std::optional<std::string> prompt_text;

  friend bool operator==(const Event&, const Event&) = default;
};

struct Violation {
  std::string field;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

// Lists every broken Event invariant; empty iff the event is valid.
std::vector<Violation> validate_event(const Event& e);

// Throws MalformedRecord for syntax errors and SchemaViolation(field) for
// missing or invariant-breaking fields. Unknown extra fields are ignored.
Event parse_event_line(std::string_view line);
Event event_from_json(const nlohmann::json& j);

nlohmann::ordered_json event_to_json(const Event& e);
// One line, no trailing newline; parse_event_line(serialize_event(e)) == e.
std::string serialize_event(const Event& e);

// Provider stays an attribute, hosts are case-folded and keys canonicalized.
// Idempotent.
Event normalize_event(Event raw);

// "src_type|etype|dst_type", the portable hashing key for type triples.
std::string type_triple_key(NodeType src, EdgeType etype, NodeType dst);

std::string to_lower(std::string_view s);

}  // namespace nebula
