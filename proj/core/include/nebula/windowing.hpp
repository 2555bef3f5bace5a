#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nebula/graph.hpp"
#include "nebula/novelty.hpp"
#include "nebula/schema.hpp"

namespace nebula {

struct WindowConfig {
  std::int64_t window_len_ms = 10000;
  std::int64_t lateness_ms = 2000;
  std::int64_t origin_ms = 0;

  // Throws InvalidArgument unless W > 0 and 0 <= L < W.
  void validate() const;
  // floor((ts - origin) / W); negative for ts before the origin.
  std::int64_t window_of(std::int64_t ts) const;
  std::int64_t start_of(std::int64_t window) const { return origin_ms + window * window_len_ms; }
  std::int64_t end_of(std::int64_t window) const { return start_of(window + 1); }
};

enum class Placement : std::uint8_t { current, late_merge, roll_forward, too_late };

struct PlacementDecision {
  Placement kind = Placement::current;
  std::int64_t window = 0;

  friend bool operator==(const PlacementDecision&, const PlacementDecision&) = default;
};

// `current_window` is the highest window opened so far (-1 before any) and
// `now` the stream's high-water timestamp. An event for an older window merges
// while now < end(window) + L and is too_late afterwards.
PlacementDecision assign_window(std::int64_t ts, const WindowConfig& cfg, std::int64_t current_window,
                                std::int64_t now);

// Dense, append-only mapping from (node_type, key) to global ids.
class NodeIndex {
 public:
  std::uint64_t globalize(const NodeRef& ref);
  std::optional<std::uint64_t> find(const NodeRef& ref) const;
  const NodeRef& ref_of(std::uint64_t id) const { return refs_.at(id); }
  std::uint64_t next_id() const noexcept { return refs_.size(); }

  // TSV lines "id<TAB>type:key" in id order.
  void save(const std::filesystem::path& path) const;
  static NodeIndex load(const std::filesystem::path& path);

  friend bool operator==(const NodeIndex& a, const NodeIndex& b) { return a.refs_ == b.refs_; }

 private:
  std::map<NodeRef, std::uint64_t> ids_;
  std::vector<NodeRef> refs_;
};

std::uint64_t globalize_node(const NodeRef& ref, NodeIndex& index);

// Seen eids with the timestamp and window that admitted them. An eid already
// admitted by the same window is kept again, so rebuilding a window is
// idempotent; one admitted by another window is a replay and is dropped.
class SeenState {
 public:
  explicit SeenState(std::int64_t horizon_ms = 10 * (10000 + 2000)) : horizon_ms_(horizon_ms) {}

  struct Entry {
    std::int64_t ts = 0;
    std::int64_t window = 0;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  bool contains(std::string_view eid) const;
  std::optional<Entry> lookup(std::string_view eid) const;
  void insert(std::string_view eid, std::int64_t ts, std::int64_t window);
  // Drops entries older than now - horizon.
  std::size_t evict(std::int64_t now);
  std::size_t size() const noexcept { return entries_.size(); }
  std::int64_t horizon_ms() const noexcept { return horizon_ms_; }

  void save(const std::filesystem::path& path) const;
  static SeenState load(const std::filesystem::path& path);

  friend bool operator==(const SeenState&, const SeenState&) = default;

 private:
  std::int64_t horizon_ms_;
  std::map<std::string, Entry, std::less<>> entries_;
};

struct BuiltWindow {
  WindowGraph graph;
  std::vector<SessionDagSummary> summaries;  // ordered by session_id
  std::size_t duplicates = 0;                // eids dropped by dedup
};

// Builds window `window_id` from the events placed in it. Mutates the index
// (append-only) and the seen state; reads the bigram sketch for rare-path
// scores without updating it.
BuiltWindow build_window(std::span<const Event> events, std::int64_t window_id, NodeIndex& index, SeenState& seen,
                         const WindowConfig& cfg, const CountMinSketch& bigrams);

// Adds the invoke-tool bigrams of every session in the window to the sketch.
void record_window_bigrams(const WindowGraph& g, const NodeIndex& index, CountMinSketch& bigrams);

struct WindowStats {
  std::uint64_t events = 0;
  std::uint64_t too_late = 0;
  std::uint64_t late_merged = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t windows = 0;
};

// Streaming assembler: single owner of the node index, seen state and bigram
// sketch. Windows are released once the watermark passes end + L.
class WindowBuilder {
 public:
  explicit WindowBuilder(WindowConfig cfg, NodeIndex index = {}, SeenState seen = SeenState(),
                         CountMinSketch bigrams = CountMinSketch());

  std::vector<BuiltWindow> push(const Event& e);
  std::vector<BuiltWindow> flush();

  const WindowStats& stats() const noexcept { return stats_; }
  const NodeIndex& index() const noexcept { return index_; }
  const SeenState& seen() const noexcept { return seen_; }
  const CountMinSketch& bigrams() const noexcept { return bigrams_; }

 private:
  std::vector<BuiltWindow> release(bool all);

  WindowConfig cfg_;
  NodeIndex index_;
  SeenState seen_;
  CountMinSketch bigrams_;
  WindowStats stats_;
  std::int64_t current_ = -1;
  std::optional<std::int64_t> now_;
  std::map<std::int64_t, std::vector<Event>> pending_;
};

std::vector<BuiltWindow> build_all_windows(std::span<const Event> events, const WindowConfig& cfg,
                                           WindowStats* stats = nullptr);

std::vector<std::uint8_t> window_to_bytes(const WindowGraph& g);
WindowGraph window_from_bytes(std::vector<std::uint8_t> bytes, const std::string& source);
void serialize_window(const WindowGraph& g, const std::filesystem::path& path);
WindowGraph deserialize_window(const std::filesystem::path& path);

void write_summaries(const std::filesystem::path& path, std::span<const SessionDagSummary> summaries);
std::vector<SessionDagSummary> read_summaries(const std::filesystem::path& path);

// "<dir>/w00000042.nebwin" and its ".nebdag.jsonl" sidecar.
std::filesystem::path window_path(const std::filesystem::path& dir, std::uint64_t window_id);
std::filesystem::path summary_path(const std::filesystem::path& dir, std::uint64_t window_id);
// Window files in a directory, ascending by id.
std::vector<std::filesystem::path> list_windows(const std::filesystem::path& dir);

}  // namespace nebula
