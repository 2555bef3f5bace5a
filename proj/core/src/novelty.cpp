#include "nebula/novelty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "nebula/binio.hpp"
#include "nebula/error.hpp"

namespace nebula {

namespace {

constexpr std::uint32_t kSketchVersion = 1;
constexpr std::uint32_t kTtlVersion = 1;

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix(std::uint64_t h, std::uint64_t seed) noexcept {
  std::uint64_t s = h ^ seed;
  return splitmix64(s);
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

CountMinSketch::CountMinSketch(std::uint32_t depth, std::uint32_t width, std::uint64_t seed)
    : depth_(depth), width_(width) {
  if (depth == 0 || width == 0) throw Error(Errc::invalid_argument, "cms", "depth and width must be >= 1");
  seeds_.reserve(depth);
  std::uint64_t state = seed;
  for (std::uint32_t r = 0; r < depth; ++r) seeds_.push_back(splitmix64(state));
  counters_.assign(static_cast<std::size_t>(depth) * width, 0);
}

double CountMinSketch::epsilon() const noexcept { return std::numbers::e / static_cast<double>(width_); }

std::size_t CountMinSketch::cell(std::uint32_t row, std::uint64_t key_hash) const noexcept {
  return static_cast<std::size_t>(row) * width_ + mix(key_hash, seeds_[row]) % width_;
}

void CountMinSketch::update(std::string_view key, std::uint64_t count) {
  const std::uint64_t h = fnv1a64(key);
  std::uint64_t current = std::numeric_limits<std::uint64_t>::max();
  for (std::uint32_t r = 0; r < depth_; ++r) current = std::min(current, counters_[cell(r, h)]);
  // Conservative update: raise each row only as far as the new lower bound.
  const std::uint64_t target = current + count;
  for (std::uint32_t r = 0; r < depth_; ++r) {
    auto& c = counters_[cell(r, h)];
    c = std::max(c, target);
  }
  total_ += count;
}

std::uint64_t CountMinSketch::estimate(std::string_view key) const {
  const std::uint64_t h = fnv1a64(key);
  std::uint64_t est = std::numeric_limits<std::uint64_t>::max();
  for (std::uint32_t r = 0; r < depth_; ++r) est = std::min(est, counters_[cell(r, h)]);
  return est;
}

std::vector<std::uint8_t> CountMinSketch::to_bytes() const {
  ByteWriter w;
  w.magic("NEBS");
  w.u32(kSketchVersion);
  w.u32(depth_);
  w.u32(width_);
  w.u64(total_);
  for (auto s : seeds_) w.u64(s);
  for (auto c : counters_) w.u64(c);
  return w.finish();
}

CountMinSketch CountMinSketch::from_bytes(std::vector<std::uint8_t> bytes, const std::string& source) {
  ByteReader r(std::move(bytes), source);
  r.expect_magic("NEBS");
  if (auto v = r.u32(); v != kSketchVersion) {
    throw Error(Errc::version_mismatch, source, "sketch version " + std::to_string(v));
  }
  const auto depth = r.u32();
  const auto width = r.u32();
  if (depth == 0 || width == 0) throw Error(Errc::corrupt_container, source, "zero sketch dimension");
  CountMinSketch s(depth, width);
  s.total_ = r.u64();
  for (auto& seed : s.seeds_) seed = r.u64();
  for (auto& c : s.counters_) c = r.u64();
  r.expect_end();
  return s;
}

void CountMinSketch::save(const std::filesystem::path& path) const { write_file_bytes(path, to_bytes()); }

CountMinSketch CountMinSketch::load(const std::filesystem::path& path) {
  return from_bytes(read_file_bytes(path), path.string());
}

double rarity_percentile(const CountMinSketch& s, std::string_view key) {
  const double v = 1.0 - static_cast<double>(s.estimate(key)) / (1.0 + static_cast<double>(s.total()));
  return std::clamp(v, 0.0, 1.0);
}

std::optional<std::int64_t> TtlTable::last_seen(Kind kind, std::string_view key) const {
  const auto& table = tables_[static_cast<std::size_t>(kind)];
  if (auto it = table.find(key); it != table.end()) return it->second;
  return std::nullopt;
}

void TtlTable::touch(Kind kind, std::string_view key, std::int64_t ts) {
  auto& table = tables_[static_cast<std::size_t>(kind)];
  auto it = table.find(key);
  if (it == table.end()) {
    table.emplace(std::string(key), ts);
  } else {
    it->second = std::max(it->second, ts);
  }
}

std::size_t TtlTable::size(Kind kind) const { return tables_[static_cast<std::size_t>(kind)].size(); }

void TtlTable::save(const std::filesystem::path& path) const {
  ByteWriter w;
  w.magic("NEBT");
  w.u32(kTtlVersion);
  w.i64(ttl_ms_);
  for (const auto& table : tables_) {
    w.u32(static_cast<std::uint32_t>(table.size()));
    for (const auto& [key, ts] : table) {
      w.str(key);
      w.i64(ts);
    }
  }
  write_file_bytes(path, w.finish());
}

TtlTable TtlTable::load(const std::filesystem::path& path) {
  ByteReader r(read_file_bytes(path), path.string());
  r.expect_magic("NEBT");
  if (auto v = r.u32(); v != kTtlVersion) {
    throw Error(Errc::version_mismatch, path.string(), "ttl version " + std::to_string(v));
  }
  TtlTable t(r.i64());
  for (auto& table : t.tables_) {
    const auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      auto key = r.str();
      table.emplace(std::move(key), r.i64());
    }
  }
  r.expect_end();
  return t;
}

std::string provider_tool_key(std::string_view provider, std::string_view tool) {
  std::string k(provider);
  k += '|';
  k += tool;
  return k;
}

std::string host_port_key(std::string_view host, std::int64_t port) {
  std::string k(host);
  k += ':';
  k += std::to_string(port);
  return k;
}

int ttl_novelty(const TtlTable& t, TtlTable::Kind kind, std::string_view key, std::int64_t now) {
  const auto seen = t.last_seen(kind, key);
  if (!seen) return 1;
  if (now < *seen) {
    throw Error(Errc::clock_regression, std::string(key),
                "now " + std::to_string(now) + " precedes last_seen " + std::to_string(*seen));
  }
  return now - *seen > t.ttl_ms() ? 1 : 0;
}

int ttl_novelty(const TtlTable& t, std::string_view triple_key, std::int64_t now) {
  return ttl_novelty(t, TtlTable::Kind::triple, triple_key, now);
}

void Allowlist::add(std::string_view pattern) {
  std::string p = to_lower(trim(pattern));
  if (p.empty()) return;
  Rule rule;
  if (auto colon = p.rfind(':'); colon != std::string::npos) {
    const std::string port_text = p.substr(colon + 1);
    try {
      std::size_t used = 0;
      const long long port = std::stoll(port_text, &used);
      if (used != port_text.size() || port < 1 || port > 65535) throw std::invalid_argument("port");
      rule.port = port;
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument, "allowlist", "bad port in pattern '" + p + "'");
    }
    p.erase(colon);
  }
  while (!p.empty() && p.back() == '.') p.pop_back();
  if (p.rfind("*.", 0) == 0) {
    rule.suffix = true;
    p.erase(0, 1);  // keep the leading dot
  }
  if (p.empty() || p == ".") throw Error(Errc::invalid_argument, "allowlist", "empty host pattern");
  rule.host = std::move(p);
  rules_.push_back(std::move(rule));
}

Allowlist Allowlist::parse(std::string_view text) {
  Allowlist a;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    a.add(line);
    start = nl + 1;
  }
  return a;
}

Allowlist Allowlist::load(const std::filesystem::path& path) { return parse(read_file_text(path)); }

bool Allowlist::allows(std::string_view host, std::optional<std::int64_t> port) const {
  std::string h = to_lower(host);
  while (!h.empty() && h.back() == '.') h.pop_back();
  for (const auto& rule : rules_) {
    if (rule.port && (!port || *port != *rule.port)) continue;
    if (rule.suffix) {
      if (h.size() > rule.host.size() && h.compare(h.size() - rule.host.size(), rule.host.size(), rule.host) == 0) {
        return true;
      }
    } else if (h == rule.host) {
      return true;
    }
  }
  return false;
}

std::string Allowlist::to_text() const {
  std::ostringstream out;
  for (const auto& rule : rules_) {
    if (rule.suffix) out << '*';
    out << rule.host;
    if (rule.port) out << ':' << *rule.port;
    out << '\n';
  }
  return out.str();
}

double dst_novelty(std::string_view host_in, std::optional<std::int64_t> port, std::int64_t ts, const Allowlist& a,
                   const TtlTable& t) {
  const std::string host = to_lower(host_in);
  if (a.allows(host, port)) return 0.0;

  auto fresh = [&](TtlTable::Kind kind, const std::string& key) {
    const auto seen = t.last_seen(kind, key);
    return seen && ts - *seen <= t.ttl_ms();
  };
  if (!fresh(TtlTable::Kind::host, host)) return 1.0;
  if (!fresh(TtlTable::Kind::host_port, host_port_key(host, port.value_or(0)))) return 0.5;
  return 0.0;
}

double dst_novelty(const Event& e, const Allowlist& a, const TtlTable& t) {
  const std::string host = e.dest_host ? *e.dest_host : e.dst.key.substr(0, e.dst.key.rfind(':'));
  return dst_novelty(host, e.dest_port, e.ts, a, t);
}

}  // namespace nebula
