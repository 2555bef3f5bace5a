#pragma once

#include <gtest/gtest.h>

#include <functional>
#include <string>

#include "nebula/error.hpp"
#include "nebula/schema.hpp"

namespace nebula::testing {

inline Event invoke(std::string eid, std::int64_t ts, std::string tool, std::string session = "s1",
                    std::string provider = "core") {
  Event e;
  e.eid = std::move(eid);
  e.ts = ts;
  e.etype = EdgeType::invoke;
  e.src = {NodeType::agent, "main"};
  e.dst = {NodeType::tool, tool};
  e.tool_name = std::move(tool);
  e.session_id = std::move(session);
  e.provider = std::move(provider);
  return e;
}

inline Event net_out(std::string eid, std::int64_t ts, std::string tool, std::string host, std::int64_t port,
                     std::string session = "s1", std::int64_t bytes = 2048) {
  Event e;
  e.eid = std::move(eid);
  e.ts = ts;
  e.etype = EdgeType::net_out;
  e.src = {NodeType::tool, tool};
  e.dst = {NodeType::remote, host + ":" + std::to_string(port)};
  e.tool_name = std::move(tool);
  e.session_id = std::move(session);
  e.provider = "core";
  e.dest_host = std::move(host);
  e.dest_port = port;
  e.bytes = bytes;
  return e;
}

inline Event install(std::string eid, std::int64_t ts, std::string provider, std::string session = "s1") {
  Event e;
  e.eid = std::move(eid);
  e.ts = ts;
  e.etype = EdgeType::install;
  e.src = {NodeType::agent, "main"};
  e.dst = {NodeType::mcp_server, provider};
  e.session_id = std::move(session);
  e.provider = std::move(provider);
  return e;
}

inline Event action(std::string eid, std::int64_t ts, std::string tool, std::string device, std::string scope,
                    std::string session = "s1") {
  Event e;
  e.eid = std::move(eid);
  e.ts = ts;
  e.etype = EdgeType::action;
  e.src = {NodeType::tool, tool};
  e.dst = {NodeType::device, std::move(device)};
  e.tool_name = std::move(tool);
  e.scope = std::move(scope);
  e.session_id = std::move(session);
  e.provider = "core";
  return e;
}

// read_config -> summarize -> log -> http_post plus its egress.
inline std::vector<Event> exfil_chain(std::int64_t t0 = 1000, std::string session = "s1",
                                      std::string host = "leak.example") {
  return {invoke(session + ":1", t0, "read_config", session), invoke(session + ":2", t0 + 100, "summarize", session),
          invoke(session + ":3", t0 + 200, "log", session), invoke(session + ":4", t0 + 300, "http_post", session),
          net_out(session + ":4:net", t0 + 300, "http_post", host, 443, session)};
}

inline Errc error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no nebula::Error thrown";
  return Errc::stage_failed;
}

}  // namespace nebula::testing
