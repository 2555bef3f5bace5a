#include <gtest/gtest.h>

#include "nebula/error.hpp"
#include "nebula/rng.hpp"
#include "nebula/schema.hpp"

namespace nebula {
namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no nebula::Error thrown";
  return Errc::stage_failed;
}

std::string subject_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.subject();
  }
  return {};
}

Event sample_invoke() {
  Event e;
  e.eid = "e1";
  e.ts = 0;
  e.etype = EdgeType::invoke;
  e.src = {NodeType::agent, "main"};
  e.dst = {NodeType::tool, "log"};
  e.session_id = "s1";
  e.provider = "core";
  return e;
}

TEST(Schema, ParsesMinimalRecord) {
  const Event e = parse_event_line(
      R"({"eid":"e1","ts":0,"etype":"invoke","src":"agent:main","dst":"tool:log","session_id":"s1","provider":"core","status":"ok"})");
  EXPECT_EQ(e, sample_invoke());
}

TEST(Schema, NetOutWithoutPortIsSchemaViolation) {
  const auto line =
      R"({"eid":"e2","ts":5,"etype":"net_out","src":"tool:http_post","dst":"remote:leak.example:443","session_id":"s1","provider":"core","status":"ok","dest_host":"leak.example"})";
  EXPECT_EQ(code_of([&] { parse_event_line(line); }), Errc::schema_violation);
  EXPECT_EQ(subject_of([&] { parse_event_line(line); }), "dest_port");
}

TEST(Schema, UnknownEdgeTypeIsSchemaViolation) {
  const auto line =
      R"({"eid":"e1","ts":0,"etype":"teleport","src":"agent:main","dst":"tool:log","session_id":"s1","provider":"core","status":"ok"})";
  EXPECT_EQ(code_of([&] { parse_event_line(line); }), Errc::schema_violation);
  EXPECT_EQ(subject_of([&] { parse_event_line(line); }), "etype");
}

TEST(Schema, SyntaxErrorIsMalformedRecord) {
  EXPECT_EQ(code_of([] { parse_event_line("{\"eid\": "); }), Errc::malformed_record);
  EXPECT_EQ(code_of([] { parse_event_line("[1,2]"); }), Errc::malformed_record);
}

TEST(Schema, UnknownFieldsIgnored) {
  const Event e = parse_event_line(
      R"({"eid":"e1","ts":0,"etype":"invoke","src":"agent:main","dst":"tool:log","session_id":"s1","provider":"core","status":"ok","color":"blue"})");
  EXPECT_EQ(e, sample_invoke());
}

TEST(Schema, NormalizeKeepsToolTypeAndFoldsHost) {
  Event e = sample_invoke();
  e.provider = "evilmcp";
  e.dst = {NodeType::tool, "exfil_helper"};
  const Event n = normalize_event(e);
  EXPECT_EQ(n.dst.type, NodeType::tool);
  EXPECT_EQ(n.provider, "evilmcp");

  Event net;
  net.eid = "e1:net";
  net.etype = EdgeType::net_out;
  net.src = {NodeType::tool, "http_post"};
  net.dst = {NodeType::remote, "Evil.Example:443"};
  net.session_id = "s1";
  net.provider = "core";
  net.dest_host = "Evil.Example";
  net.dest_port = 443;
  const Event m = normalize_event(net);
  EXPECT_EQ(*m.dest_host, "evil.example");
  EXPECT_EQ(m.dst.key, "evil.example:443");
  EXPECT_EQ(normalize_event(m), m);
}

TEST(Schema, ValidateReportsEachInvariant) {
  EXPECT_TRUE(validate_event(sample_invoke()).empty());

  Event bad_dst = sample_invoke();
  bad_dst.etype = EdgeType::net_out;
  bad_dst.src = {NodeType::tool, "http_post"};
  bad_dst.dst = {NodeType::tool, "x"};
  bad_dst.dest_port = 443;
  const auto v1 = validate_event(bad_dst);
  ASSERT_EQ(v1.size(), 1u);
  EXPECT_EQ(v1[0].field, "dst");

  Event bad_bytes = sample_invoke();
  bad_bytes.bytes = -5;
  const auto v2 = validate_event(bad_bytes);
  ASSERT_EQ(v2.size(), 1u);
  EXPECT_EQ(v2[0].field, "bytes");
}

Event random_event(Rng& rng, int i) {
  static const char* kHosts[] = {"Api.Weather.Example", "leak.example", "NAS.home.example", "x-1.drop-zone.example"};
  Event e;
  e.eid = "r" + std::to_string(i);
  e.ts = static_cast<std::int64_t>(rng.below(1'000'000'000));
  e.session_id = "s" + std::to_string(rng.below(50));
  e.provider = rng.uniform() < 0.5 ? "core" : "attacker-" + std::to_string(rng.below(9));
  e.status = static_cast<Status>(rng.below(3));
  switch (rng.below(4)) {
    case 0:
      e.etype = EdgeType::invoke;
      e.src = {NodeType::agent, "main"};
      e.dst = {NodeType::tool, "tool_" + std::to_string(rng.below(12))};
      e.tool_name = e.dst.key;
      if (rng.uniform() < 0.3) e.prompt_text = "turn on the lights";
      break;
    case 1:
      e.etype = EdgeType::install;
      e.src = {NodeType::agent, "main"};
      e.dst = {NodeType::mcp_server, e.provider};
      break;
    case 2: {
      e.etype = EdgeType::net_out;
      const std::string host = kHosts[rng.below(4)];
      const std::int64_t port = 1 + static_cast<std::int64_t>(rng.below(65535));
      e.src = {NodeType::tool, "http_post"};
      e.dst = {NodeType::remote, host + ":" + std::to_string(port)};
      e.dest_host = host;
      e.dest_port = port;
      e.bytes = static_cast<std::int64_t>(rng.below(100000));
      break;
    }
    default:
      e.etype = EdgeType::action;
      e.src = {NodeType::tool, "lock_control"};
      e.dst = {NodeType::device, "front_door"};
      e.scope = "lock:open";
      break;
  }
  return e;
}

TEST(Schema, RoundTripAndIdempotenceOnRandomCorpus) {
  Rng rng(2024);
  for (int i = 0; i < 10000; ++i) {
    const Event raw = random_event(rng, i);
    const Event n = normalize_event(raw);
    ASSERT_EQ(normalize_event(n), n) << serialize_event(raw);
    ASSERT_TRUE(validate_event(n).empty()) << serialize_event(n);
    ASSERT_EQ(parse_event_line(serialize_event(n)), n);
  }
}

TEST(Schema, NodeRefCanonicalForm) {
  const NodeRef r = NodeRef::parse("remote:evil.example:8081", "dst");
  EXPECT_EQ(r.type, NodeType::remote);
  EXPECT_EQ(r.key, "evil.example:8081");
  EXPECT_EQ(r.canonical(), "remote:evil.example:8081");
  EXPECT_EQ(code_of([] { NodeRef::parse("blob:x", "dst"); }), Errc::schema_violation);
}

TEST(Schema, TypeTripleKey) {
  EXPECT_EQ(type_triple_key(NodeType::tool, EdgeType::net_out, NodeType::remote), "tool|net_out|remote");
}

}  // namespace
}  // namespace nebula
