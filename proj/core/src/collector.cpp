#include "nebula/collector.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "nebula/binio.hpp"
#include "nebula/error.hpp"

namespace nebula {

namespace {

std::optional<std::string> string_at(const nlohmann::json& obj, const char* key) {
  if (!obj.is_object()) return std::nullopt;
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

std::optional<std::int64_t> int_at(const nlohmann::json& obj, const char* key) {
  if (!obj.is_object()) return std::nullopt;
  auto it = obj.find(key);
  if (it == obj.end()) return std::nullopt;
  if (it->is_number_integer()) return it->get<std::int64_t>();
  if (it->is_string()) {
    std::int64_t v = 0;
    const auto& s = it->get_ref<const std::string&>();
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && p == s.data() + s.size()) return v;
  }
  return std::nullopt;
}

std::string truncate(std::string s, std::size_t cap) {
  if (s.size() > cap) s.resize(cap);
  return s;
}

std::string id_text(const nlohmann::json& id) {
  if (id.is_string()) return "s:" + id.get<std::string>();
  return "n:" + id.dump();
}

std::optional<std::int64_t> default_port(std::string_view scheme) {
  if (scheme == "http") return 80;
  if (scheme == "https") return 443;
  if (scheme == "sftp" || scheme == "ssh" || scheme == "scp") return 22;
  if (scheme == "ftp") return 21;
  if (scheme == "mqtt") return 1883;
  if (scheme == "mqtts") return 8883;
  return std::nullopt;
}

}  // namespace

RpcFrame digest_frame(std::string_view line, Direction direction, std::int64_t ts, std::size_t digest_cap) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& ex) {
    throw Error(Errc::malformed_record, "frame", ex.what());
  }
  if (!j.is_object()) throw Error(Errc::malformed_record, "frame", "expected a JSON-RPC object");

  RpcFrame f;
  f.direction = direction;
  f.ts = ts;
  if (auto it = j.find("id"); it != j.end() && !it->is_null()) f.id = id_text(*it);
  if (auto m = string_at(j, "method")) f.method = *m;

  if (auto it = j.find("params"); it != j.end()) {
    const auto& params = *it;
    auto& d = f.digest;
    d.param_bytes = static_cast<std::int64_t>(params.dump().size());
    const nlohmann::json empty = nlohmann::json::object();
    const auto& args = params.is_object() && params.contains("arguments") ? params["arguments"] : empty;
    const auto& meta = params.is_object() && params.contains("_meta") ? params["_meta"] : empty;

    auto first = [&](const char* key) -> std::optional<std::string> {
      if (auto v = string_at(args, key)) return v;
      if (auto v = string_at(params, key)) return v;
      return string_at(meta, key);
    };
    auto first_int = [&](const char* key) -> std::optional<std::int64_t> {
      if (auto v = int_at(args, key)) return v;
      if (auto v = int_at(params, key)) return v;
      return int_at(meta, key);
    };

    if (auto v = string_at(params, "name")) d.tool_name = truncate(*v, digest_cap);
    if (auto v = string_at(params, "provider")) d.provider = truncate(*v, digest_cap);
    else if (auto mv = string_at(meta, "provider")) d.provider = truncate(*mv, digest_cap);
    if (auto v = first("url")) d.url = truncate(*v, digest_cap);
    if (auto v = first("host")) d.host = truncate(*v, digest_cap);
    d.port = first_int("port");
    d.bytes = first_int("bytes");
    if (!d.bytes) {
      for (const char* body_key : {"body", "data", "content"}) {
        if (auto body = first(body_key)) {
          d.bytes = static_cast<std::int64_t>(body->size());
          break;
        }
      }
    }
    if (auto v = first("scope")) d.scope = truncate(*v, digest_cap);
    if (auto v = first("prompt")) d.prompt = truncate(*v, digest_cap);
  }

  if (j.contains("result")) {
    f.outcome = Status::ok;
  } else if (auto it = j.find("error"); it != j.end()) {
    f.outcome = Status::error;
    if (auto code = int_at(*it, "code")) {
      for (auto denied : kDeniedErrorCodes) {
        if (*code == denied) f.outcome = Status::denied;
      }
    }
  }
  return f;
}

NetPrimitiveTable NetPrimitiveTable::defaults() {
  using S = NetRule::Source;
  NetPrimitiveTable t;
  t.add("http_post", {S::url, S::url, S::bytes});
  t.add("http_put", {S::url, S::url, S::bytes});
  t.add("http_get", {S::url, S::url, S::param_bytes});
  t.add("webhook_send", {S::url, S::url, S::bytes});
  t.add("sftp_upload", {S::url, S::url, S::bytes});
  t.add("ftp_put", {S::url, S::url, S::bytes});
  t.add("mqtt_publish", {S::host, S::port, S::bytes});
  t.add("socket_send", {S::host, S::port, S::bytes});
  return t;
}

void NetPrimitiveTable::add(std::string tool_name, NetRule rule) { entries_[std::move(tool_name)] = rule; }

const NetRule* NetPrimitiveTable::find(std::string_view tool_name) const {
  auto it = entries_.find(tool_name);
  return it == entries_.end() ? nullptr : &it->second;
}

std::optional<ParsedUrl> parse_url(std::string_view url) {
  const auto sep = url.find("://");
  if (sep == std::string_view::npos || sep == 0) return std::nullopt;
  ParsedUrl out;
  out.scheme = to_lower(url.substr(0, sep));
  std::string_view rest = url.substr(sep + 3);
  rest = rest.substr(0, rest.find_first_of("/?#"));
  if (auto at = rest.rfind('@'); at != std::string_view::npos) rest = rest.substr(at + 1);
  if (rest.empty()) return std::nullopt;

  std::string_view host = rest;
  if (auto colon = rest.rfind(':'); colon != std::string_view::npos) {
    std::int64_t port = 0;
    auto digits = rest.substr(colon + 1);
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
    if (ec != std::errc() || p != digits.data() + digits.size()) return std::nullopt;
    out.port = port;
    host = rest.substr(0, colon);
  } else {
    out.port = default_port(out.scheme);
  }
  if (host.empty()) return std::nullopt;
  out.host = to_lower(host);
  return out;
}

std::optional<Event> synthesize_net_out(const Event& invoke, const ParamsDigest& digest,
                                        const NetPrimitiveTable& table) {
  if (invoke.etype != EdgeType::invoke || !invoke.tool_name) return std::nullopt;
  const NetRule* rule = table.find(*invoke.tool_name);
  if (!rule) return std::nullopt;

  std::optional<ParsedUrl> url;
  if (digest.url) url = parse_url(*digest.url);

  auto pick_string = [&](NetRule::Source s) -> std::optional<std::string> {
    if (s == NetRule::Source::url) return url ? std::optional(url->host) : std::nullopt;
    if (s == NetRule::Source::host && digest.host) return to_lower(*digest.host);
    return std::nullopt;
  };
  auto pick_int = [&](NetRule::Source s) -> std::optional<std::int64_t> {
    switch (s) {
      case NetRule::Source::url: return url ? url->port : std::nullopt;
      case NetRule::Source::port: return digest.port;
      case NetRule::Source::bytes: return digest.bytes;
      case NetRule::Source::param_bytes: return digest.param_bytes;
      default: return std::nullopt;
    }
  };

  auto host = pick_string(rule->host_from);
  if (!host || host->empty()) throw Error(Errc::incomplete_rule, *invoke.tool_name, "digest has no destination host");
  auto port = pick_int(rule->port_from);
  if (!port) throw Error(Errc::incomplete_rule, *invoke.tool_name, "digest has no destination port");

  Event net;
  net.eid = invoke.eid + ":net";
  net.ts = invoke.ts;
  net.etype = EdgeType::net_out;
  net.src = invoke.dst;
  net.dst = NodeRef{NodeType::remote, *host + ":" + std::to_string(*port)};
  net.session_id = invoke.session_id;
  net.provider = invoke.provider;
  net.tool_name = invoke.tool_name;
  net.scope = invoke.scope;
  net.status = invoke.status;
  if (rule->bytes_from) net.bytes = pick_int(*rule->bytes_from);
  net.dest_host = *host;
  net.dest_port = *port;
  return net;
}

Interceptor::Interceptor(std::string session_id, InterceptorConfig cfg)
    : session_id_(std::move(session_id)), cfg_(std::move(cfg)) {}

std::vector<Event> Interceptor::on_frame(const RpcFrame& frame) {
  if (frame.direction == Direction::to_server) {
    const bool tracked = cfg_.call_methods.contains(frame.method) || cfg_.install_methods.contains(frame.method);
    if (!tracked || !frame.id) return {};
    if (!pending_.contains(*frame.id)) pending_order_.push_back(*frame.id);
    pending_[*frame.id] = frame;
    while (pending_.size() > cfg_.pending_cap && !pending_order_.empty()) {
      if (pending_.erase(pending_order_.front()) > 0) ++evicted_;
      pending_order_.erase(pending_order_.begin());
    }
    return {};
  }

  if (!frame.id || !frame.outcome) return {};
  auto it = pending_.find(*frame.id);
  if (it == pending_.end()) {
    ++unmatched_;
    if (unmatched_ > cfg_.desync_limit) {
      throw Error(Errc::transport_desync, session_id_,
                  std::to_string(unmatched_) + " responses without a pending request");
    }
    return {};
  }
  RpcFrame request = std::move(it->second);
  pending_.erase(it);
  std::erase(pending_order_, *frame.id);
  return complete(request, *frame.outcome);
}

std::vector<Event> Interceptor::complete(const RpcFrame& request, Status status) {
  const auto& d = request.digest;
  Event e;
  e.eid = session_id_ + ":" + std::to_string(seq_++);
  e.ts = request.ts;
  e.session_id = session_id_;
  e.status = status;
  e.src = NodeRef{NodeType::agent, cfg_.agent_key};
  e.scope = d.scope;

  std::vector<Event> out;
  if (cfg_.install_methods.contains(request.method)) {
    std::string provider = d.provider.value_or(d.tool_name.value_or(""));
    if (provider.empty()) provider = "unknown";
    e.etype = EdgeType::install;
    e.dst = NodeRef{NodeType::mcp_server, provider};
    e.provider = provider;
    out.push_back(normalize_event(std::move(e)));
    return out;
  }

  e.etype = EdgeType::invoke;
  e.tool_name = d.tool_name.value_or("unknown");
  e.dst = NodeRef{NodeType::tool, *e.tool_name};
  e.provider = d.provider.value_or(cfg_.default_provider);
  e.prompt_text = d.prompt;
  e = normalize_event(std::move(e));
  out.push_back(e);
  try {
    if (auto net = synthesize_net_out(e, d, cfg_.net_table)) out.push_back(normalize_event(std::move(*net)));
  } catch (const Error& err) {
    // A network primitive without a resolvable destination still yields its
    // invoke; the egress is simply not observable from the control plane.
    if (err.code() != Errc::incomplete_rule) throw;
    ++incomplete_rules_;
  }
  return out;
}

std::vector<Event> intercept(std::span<const RpcFrame> frames, const std::string& session_id,
                             InterceptorConfig cfg) {
  Interceptor icp(session_id, std::move(cfg));
  std::vector<Event> out;
  for (const auto& f : frames) {
    auto evs = icp.on_frame(f);
    out.insert(out.end(), std::make_move_iterator(evs.begin()), std::make_move_iterator(evs.end()));
  }
  return out;
}

ReplayResult replay_capture(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::file_unreadable, path.string());
  ReplayResult r;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      r.events.push_back(normalize_event(parse_event_line(line)));
    } catch (const Error&) {
      ++r.skipped;
    }
  }
  return r;
}

void write_events(const std::filesystem::path& path, std::span<const Event> events) {
  std::string text;
  for (const auto& e : events) {
    text += serialize_event(e);
    text += '\n';
  }
  write_file_text(path, text);
}

}  // namespace nebula
