#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nebula/schema.hpp"

namespace nebula {

// Count-Min sketch with conservative update. Keys are hashed with FNV-1a 64
// and mixed per row with a splitmix64 seed, so a sketch written on one
// machine gives the same estimates on any other.
class CountMinSketch {
 public:
  CountMinSketch(std::uint32_t depth = 4, std::uint32_t width = 2048, std::uint64_t seed = 0x6e6562756c61ULL);

  void update(std::string_view key, std::uint64_t count = 1);
  std::uint64_t estimate(std::string_view key) const;

  std::uint32_t depth() const noexcept { return depth_; }
  std::uint32_t width() const noexcept { return width_; }
  std::uint64_t total() const noexcept { return total_; }
  double epsilon() const noexcept;  // e / width

  void save(const std::filesystem::path& path) const;
  static CountMinSketch load(const std::filesystem::path& path);
  std::vector<std::uint8_t> to_bytes() const;
  static CountMinSketch from_bytes(std::vector<std::uint8_t> bytes, const std::string& source);

  friend bool operator==(const CountMinSketch&, const CountMinSketch&) = default;

 private:
  std::size_t cell(std::uint32_t row, std::uint64_t key_hash) const noexcept;

  std::uint32_t depth_;
  std::uint32_t width_;
  std::uint64_t total_ = 0;
  std::vector<std::uint64_t> seeds_;
  std::vector<std::uint64_t> counters_;  // row-major depth x width
};

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

// 1 - estimate / (1 + total).
double rarity_percentile(const CountMinSketch& s, std::string_view key);

inline constexpr std::int64_t kDefaultTtlMs = 600000;

// Last-seen tables keyed by type triple, (provider, tool), host, host:port
// bucket and instance triple (global src id, etype, dst id). Values never
// move backwards.
class TtlTable {
 public:
  enum class Kind : std::uint8_t { triple = 0, provider_tool = 1, host = 2, host_port = 3, instance = 4 };

  explicit TtlTable(std::int64_t ttl_ms = kDefaultTtlMs) : ttl_ms_(ttl_ms) {}

  std::int64_t ttl_ms() const noexcept { return ttl_ms_; }
  std::optional<std::int64_t> last_seen(Kind kind, std::string_view key) const;
  // Sets last_seen to max(existing, ts).
  void touch(Kind kind, std::string_view key, std::int64_t ts);

  std::size_t size(Kind kind) const;

  void save(const std::filesystem::path& path) const;
  static TtlTable load(const std::filesystem::path& path);

  friend bool operator==(const TtlTable&, const TtlTable&) = default;

 private:
  std::int64_t ttl_ms_;
  std::map<std::string, std::int64_t, std::less<>> tables_[5];
};

std::string provider_tool_key(std::string_view provider, std::string_view tool);
std::string host_port_key(std::string_view host, std::int64_t port);

// 1 when the key was never seen or was last seen more than ttl ago, else 0.
// Throws ClockRegression when now precedes the stored last_seen.
int ttl_novelty(const TtlTable& t, TtlTable::Kind kind, std::string_view key, std::int64_t now);
int ttl_novelty(const TtlTable& t, std::string_view triple_key, std::int64_t now);

class Allowlist {
 public:
  Allowlist() = default;

  // Accepts "host", "*.suffix", "host:port" or "*.suffix:port". A bare host
  // admits every port.
  void add(std::string_view pattern);
  static Allowlist parse(std::string_view text);
  static Allowlist load(const std::filesystem::path& path);

  bool allows(std::string_view host, std::optional<std::int64_t> port) const;
  bool empty() const noexcept { return rules_.empty(); }
  std::string to_text() const;

 private:
  struct Rule {
    std::string host;  // lower-case; suffix rules store ".suffix"
    bool suffix = false;
    std::optional<std::int64_t> port;
  };
  std::vector<Rule> rules_;
};

// Destination novelty of a net_out: 0 allowlisted, 0.5 known host on a new
// port, 1 for a new or expired host.
double dst_novelty(const Event& e, const Allowlist& a, const TtlTable& t);
double dst_novelty(std::string_view host, std::optional<std::int64_t> port, std::int64_t ts, const Allowlist& a,
                   const TtlTable& t);

}  // namespace nebula
