#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nebula/schema.hpp"

namespace nebula {

enum class Direction : std::uint8_t { to_server, from_server };

// What the collector keeps from a JSON-RPC params object. Free text (the
// prompt) is truncated to the digest cap; nothing else of the payload is kept.
struct ParamsDigest {
  std::optional<std::string> tool_name;
  std::optional<std::string> provider;
  std::optional<std::string> url;
  std::optional<std::string> host;
  std::optional<std::int64_t> port;
  std::optional<std::int64_t> bytes;
  std::optional<std::string> scope;
  std::optional<std::string> prompt;
  std::int64_t param_bytes = 0;
};

struct RpcFrame {
  Direction direction = Direction::to_server;
  std::string method;               // empty for responses
  std::optional<std::string> id;    // JSON scalar rendered as text
  ParamsDigest digest;
  std::int64_t ts = 0;
  std::optional<Status> outcome;    // responses only
};

inline constexpr std::size_t kDefaultDigestCap = 256;

// JSON-RPC error codes mapped to Status::denied; every other error is
// Status::error.
inline constexpr std::int64_t kDeniedErrorCodes[] = {-32003, 403};

// Parses one newline-delimited JSON-RPC 2.0 frame. Throws MalformedRecord
// when the line is not a JSON object.
RpcFrame digest_frame(std::string_view line, Direction direction, std::int64_t ts,
                      std::size_t digest_cap = kDefaultDigestCap);

struct NetRule {
  enum class Source : std::uint8_t { url, host, port, bytes, param_bytes };
  Source host_from = Source::url;
  Source port_from = Source::url;
  std::optional<Source> bytes_from = Source::bytes;
};

class NetPrimitiveTable {
 public:
  static NetPrimitiveTable defaults();

  void add(std::string tool_name, NetRule rule);
  // Unlisted tools return nullptr.
  const NetRule* find(std::string_view tool_name) const;
  const std::map<std::string, NetRule, std::less<>>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, NetRule, std::less<>> entries_;
};

struct ParsedUrl {
  std::string scheme;
  std::string host;
  std::optional<std::int64_t> port;  // explicit or scheme default
};
std::optional<ParsedUrl> parse_url(std::string_view url);

// Returns the net_out event paired with an invoke of an explicit network
// primitive, or nullopt for other tools. eid is "<invoke eid>:net". Throws
// IncompleteRule when a listed tool's digest lacks the destination.
std::optional<Event> synthesize_net_out(const Event& invoke, const ParamsDigest& digest,
                                        const NetPrimitiveTable& table);

struct InterceptorConfig {
  std::set<std::string, std::less<>> install_methods{"servers/install", "registry/add"};
  std::set<std::string, std::less<>> call_methods{"tools/call"};
  std::size_t pending_cap = 1024;
  // Unmatched responses tolerated before the stream is declared desynced.
  std::size_t desync_limit = 64;
  std::string agent_key = "main";
  std::string default_provider = "core";
  NetPrimitiveTable net_table = NetPrimitiveTable::defaults();
};

// One instance per session/transport. Pairs requests with responses by id and
// emits install/invoke (+ synthesized net_out) events in transport order.
class Interceptor {
 public:
  explicit Interceptor(std::string session_id, InterceptorConfig cfg = {});

  std::vector<Event> on_frame(const RpcFrame& frame);

  std::size_t unmatched_responses() const noexcept { return unmatched_; }
  std::size_t evicted_requests() const noexcept { return evicted_; }
  std::size_t pending() const noexcept { return pending_.size(); }
  std::size_t incomplete_rules() const noexcept { return incomplete_rules_; }

 private:
  std::vector<Event> complete(const RpcFrame& request, Status status);

  std::string session_id_;
  InterceptorConfig cfg_;
  std::unordered_map<std::string, RpcFrame> pending_;
  std::vector<std::string> pending_order_;
  std::uint64_t seq_ = 0;
  std::size_t unmatched_ = 0;
  std::size_t evicted_ = 0;
  std::size_t incomplete_rules_ = 0;
};

std::vector<Event> intercept(std::span<const RpcFrame> frames, const std::string& session_id,
                             InterceptorConfig cfg = {});

struct ReplayResult {
  std::vector<Event> events;
  std::size_t skipped = 0;
};

// Reads a .nebula.jsonl capture in file order; invalid lines are skipped and
// counted. Throws FileUnreadable.
ReplayResult replay_capture(const std::filesystem::path& path);

void write_events(const std::filesystem::path& path, std::span<const Event> events);

// Splits a byte stream into newline-terminated lines without altering bytes.
class LineSplitter {
 public:
  template <typename F>
  void feed(std::string_view chunk, F&& on_line) {
    buffer_.append(chunk);
    std::size_t start = 0;
    for (std::size_t nl; (nl = buffer_.find('\n', start)) != std::string::npos; start = nl + 1) {
      std::string_view line(buffer_.data() + start, nl - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) on_line(line);
    }
    buffer_.erase(0, start);
  }
  std::size_t buffered() const noexcept { return buffer_.size(); }

 private:
  std::string buffer_;
};

struct RelayStats {
  std::uint64_t bytes_to_server = 0;
  std::uint64_t bytes_from_server = 0;
  std::uint64_t frames = 0;
  std::uint64_t undecodable_frames = 0;
};

// Pass-through proxy loop: forwards bytes between the client side and the
// upstream side unchanged while tapping complete lines into the interceptor.
// The client side may be split into separate read/write descriptors (stdio).
// Client EOF half-closes the upstream write side so pending responses still
// drain; returns on upstream EOF.
RelayStats relay(int client_in, int client_out, int upstream_fd, Interceptor& interceptor,
                 const std::function<void(const Event&)>& sink,
                 const std::function<std::int64_t()>& clock_ms);

int listen_tcp(const std::string& addr);   // "host:port"; returns listening fd
int accept_one(int listen_fd);
int connect_tcp(const std::string& addr);

}  // namespace nebula
