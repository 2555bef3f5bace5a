#include "nebula/windowing.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "nebula/binio.hpp"
#include "nebula/dagfeat.hpp"
#include "nebula/error.hpp"

namespace nebula {

namespace {

constexpr std::uint32_t kWindowVersion = 1;

std::int64_t parse_i64(std::string_view text, const std::string& source) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(Errc::corrupt_container, source, "bad integer '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

template <typename F>
void for_each_line(const std::string& text, F&& f) {
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) f(line);
    start = nl + 1;
  }
}

}  // namespace

void WindowConfig::validate() const {
  if (window_len_ms <= 0) throw Error(Errc::invalid_argument, "window_len_ms", "must be > 0");
  if (lateness_ms < 0 || lateness_ms >= window_len_ms) {
    throw Error(Errc::invalid_argument, "lateness_ms", "must satisfy 0 <= L < W");
  }
}

std::int64_t WindowConfig::window_of(std::int64_t ts) const {
  const std::int64_t d = ts - origin_ms;
  std::int64_t w = d / window_len_ms;
  if (d % window_len_ms != 0 && d < 0) --w;
  return w;
}

PlacementDecision assign_window(std::int64_t ts, const WindowConfig& cfg, std::int64_t current_window,
                                std::int64_t now) {
  const std::int64_t w = cfg.window_of(ts);
  if (w < 0) return {Placement::too_late, w};
  if (w == current_window || current_window < 0) return {Placement::current, w};
  if (w > current_window) return {Placement::roll_forward, w};
  if (now < cfg.end_of(w) + cfg.lateness_ms) return {Placement::late_merge, w};
  return {Placement::too_late, w};
}

std::uint64_t NodeIndex::globalize(const NodeRef& ref) {
  auto [it, inserted] = ids_.try_emplace(ref, refs_.size());
  if (inserted) refs_.push_back(ref);
  return it->second;
}

std::optional<std::uint64_t> NodeIndex::find(const NodeRef& ref) const {
  if (auto it = ids_.find(ref); it != ids_.end()) return it->second;
  return std::nullopt;
}

void NodeIndex::save(const std::filesystem::path& path) const {
  std::string out;
  for (std::size_t id = 0; id < refs_.size(); ++id) {
    out += std::to_string(id);
    out += '\t';
    out += refs_[id].canonical();
    out += '\n';
  }
  write_file_text(path, out);
}

NodeIndex NodeIndex::load(const std::filesystem::path& path) {
  NodeIndex index;
  const std::string source = path.string();
  for_each_line(read_file_text(path), [&](std::string_view line) {
    const auto cols = split_tabs(line);
    if (cols.size() != 2) throw Error(Errc::corrupt_container, source, "expected 'id<TAB>type:key'");
    const auto id = parse_i64(cols[0], source);
    if (id != static_cast<std::int64_t>(index.next_id())) {
      throw Error(Errc::corrupt_container, source, "node ids must be dense and ascending");
    }
    NodeRef ref;
    try {
      ref = NodeRef::parse(cols[1], "node");
    } catch (const Error& ex) {
      throw Error(Errc::corrupt_container, source, ex.what());
    }
    if (index.find(ref)) throw Error(Errc::corrupt_container, source, "duplicate node " + ref.canonical());
    index.globalize(ref);
  });
  return index;
}

std::uint64_t globalize_node(const NodeRef& ref, NodeIndex& index) { return index.globalize(ref); }

bool SeenState::contains(std::string_view eid) const { return entries_.find(eid) != entries_.end(); }

std::optional<SeenState::Entry> SeenState::lookup(std::string_view eid) const {
  if (auto it = entries_.find(eid); it != entries_.end()) return it->second;
  return std::nullopt;
}

void SeenState::insert(std::string_view eid, std::int64_t ts, std::int64_t window) {
  entries_.insert_or_assign(std::string(eid), Entry{ts, window});
}

std::size_t SeenState::evict(std::int64_t now) {
  std::size_t n = 0;
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (it->second.ts < now - horizon_ms_) {
      it = entries_.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

void SeenState::save(const std::filesystem::path& path) const {
  std::string out = "#horizon_ms\t" + std::to_string(horizon_ms_) + "\n";
  for (const auto& [eid, entry] : entries_) {
    out += eid;
    out += '\t';
    out += std::to_string(entry.ts);
    out += '\t';
    out += std::to_string(entry.window);
    out += '\n';
  }
  write_file_text(path, out);
}

SeenState SeenState::load(const std::filesystem::path& path) {
  const std::string source = path.string();
  SeenState seen;
  for_each_line(read_file_text(path), [&](std::string_view line) {
    const auto cols = split_tabs(line);
    if (cols.size() == 2 && cols[0] == "#horizon_ms") {
      seen.horizon_ms_ = parse_i64(cols[1], source);
      return;
    }
    if (cols.size() != 3) throw Error(Errc::corrupt_container, source, "expected 'eid<TAB>ts<TAB>window'");
    seen.insert(cols[0], parse_i64(cols[1], source), parse_i64(cols[2], source));
  });
  return seen;
}

BuiltWindow build_window(std::span<const Event> events, std::int64_t window_id, NodeIndex& index, SeenState& seen,
                         const WindowConfig& cfg, const CountMinSketch& bigrams) {
  BuiltWindow out;
  WindowGraph& g = out.graph;
  g.window_id = static_cast<std::uint64_t>(window_id);
  g.t_start = cfg.start_of(window_id);
  g.t_end = cfg.end_of(window_id);

  // Canonical order first, so which copy of a duplicated eid survives does
  // not depend on arrival order.
  std::vector<const Event*> order;
  order.reserve(events.size());
  for (const auto& e : events) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const Event* a, const Event* b) {
    if (a->ts != b->ts) return a->ts < b->ts;
    if (a->eid != b->eid) return a->eid < b->eid;
    return serialize_event(*a) < serialize_event(*b);
  });

  std::vector<Event> kept;
  std::set<std::string_view> batch_eids;
  for (const Event* e : order) {
    if (!batch_eids.insert(e->eid).second) {
      ++out.duplicates;
      continue;
    }
    if (auto prior = seen.lookup(e->eid); prior && prior->window != window_id) {
      ++out.duplicates;
      continue;
    }
    kept.push_back(*e);
  }
  for (const auto& e : kept) seen.insert(e.eid, e.ts, window_id);

  std::map<std::uint64_t, NodeType> types;
  for (const auto& e : kept) {
    const auto s = index.globalize(e.src);
    const auto d = index.globalize(e.dst);
    types.emplace(s, e.src.type);
    types.emplace(d, e.dst.type);
    g.edge_src.push_back(s);
    g.edge_dst.push_back(d);
    g.edge_types.push_back(e.etype);
    g.edge_ts.push_back(e.ts);
    g.edge_eids.push_back(e.eid);
    g.edge_attrs.push_back(attrs_of(e));
  }
  for (const auto& [id, type] : types) {
    g.node_ids.push_back(id);
    g.node_types.push_back(type);
  }

  std::map<std::string_view, std::vector<Event>> sessions;
  for (const auto& e : kept) sessions[e.session_id].push_back(e);
  for (const auto& [sid, session_events] : sessions) {
    out.summaries.push_back(summarize_session(session_events, bigrams));
  }
  return out;
}

void record_window_bigrams(const WindowGraph& g, const NodeIndex& index, CountMinSketch& bigrams) {
  // Edges are already in (ts, eid) order.
  std::map<std::string_view, std::vector<std::string>> sessions;
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    if (g.edge_types[i] != EdgeType::invoke) continue;
    const auto& a = g.edge_attrs[i];
    sessions[a.session_id].push_back(a.tool_name ? *a.tool_name : index.ref_of(g.edge_dst[i]).key);
  }
  for (const auto& [sid, tools] : sessions) record_bigrams(tools, bigrams);
}

WindowBuilder::WindowBuilder(WindowConfig cfg, NodeIndex index, SeenState seen, CountMinSketch bigrams)
    : cfg_(cfg), index_(std::move(index)), seen_(std::move(seen)), bigrams_(std::move(bigrams)) {
  cfg_.validate();
}

std::vector<BuiltWindow> WindowBuilder::push(const Event& e) {
  ++stats_.events;
  now_ = now_ ? std::max(*now_, e.ts) : e.ts;
  const auto d = assign_window(e.ts, cfg_, current_, *now_);
  switch (d.kind) {
    case Placement::too_late:
      ++stats_.too_late;
      break;
    case Placement::late_merge:
      ++stats_.late_merged;
      [[fallthrough]];
    case Placement::current:
    case Placement::roll_forward:
      pending_[d.window].push_back(e);
      current_ = std::max(current_, d.window);
      break;
  }
  return release(false);
}

std::vector<BuiltWindow> WindowBuilder::flush() { return release(true); }

std::vector<BuiltWindow> WindowBuilder::release(bool all) {
  std::vector<BuiltWindow> out;
  while (!pending_.empty()) {
    auto it = pending_.begin();
    if (!all && (!now_ || *now_ < cfg_.end_of(it->first) + cfg_.lateness_ms)) break;
    BuiltWindow w = build_window(it->second, it->first, index_, seen_, cfg_, bigrams_);
    stats_.duplicates += w.duplicates;
    record_window_bigrams(w.graph, index_, bigrams_);
    seen_.evict(cfg_.end_of(it->first));
    pending_.erase(it);
    if (w.graph.num_edges() > 0) {
      ++stats_.windows;
      out.push_back(std::move(w));
    }
  }
  return out;
}

std::vector<BuiltWindow> build_all_windows(std::span<const Event> events, const WindowConfig& cfg,
                                           WindowStats* stats) {
  WindowBuilder builder(cfg);
  std::vector<BuiltWindow> out;
  for (const auto& e : events) {
    for (auto& w : builder.push(e)) out.push_back(std::move(w));
  }
  for (auto& w : builder.flush()) out.push_back(std::move(w));
  if (stats) *stats = builder.stats();
  return out;
}

std::vector<std::uint8_t> window_to_bytes(const WindowGraph& g) {
  check_window(g);
  ByteWriter w;
  w.magic("NEBW");
  w.u32(kWindowVersion);
  w.u64(g.window_id);
  w.u64(static_cast<std::uint64_t>(g.t_start));
  w.u64(static_cast<std::uint64_t>(g.t_end));
  const auto n = static_cast<std::uint32_t>(g.num_nodes());
  const auto e = static_cast<std::uint32_t>(g.num_edges());
  w.u32(n);
  w.u32(e);
  w.u32(n);
  for (auto id : g.node_ids) w.u64(id);
  w.u32(n);
  for (auto t : g.node_types) w.u8(static_cast<std::uint8_t>(t));
  w.u32(e);
  for (auto id : g.edge_src) w.u64(id);
  w.u32(e);
  for (auto id : g.edge_dst) w.u64(id);
  w.u32(e);
  for (auto t : g.edge_types) w.u8(static_cast<std::uint8_t>(t));
  w.u32(e);
  for (auto ts : g.edge_ts) w.u64(static_cast<std::uint64_t>(ts));
  w.u32(e);
  for (const auto& eid : g.edge_eids) w.str(eid);
  w.u32(e);
  for (const auto& a : g.edge_attrs) w.str(attrs_to_json(a).dump());
  return w.finish();
}

WindowGraph window_from_bytes(std::vector<std::uint8_t> bytes, const std::string& source) {
  ByteReader r(std::move(bytes), source);
  r.expect_magic("NEBW");
  if (auto v = r.u32(); v != kWindowVersion) {
    throw Error(Errc::version_mismatch, source, "window version " + std::to_string(v));
  }
  WindowGraph g;
  g.window_id = r.u64();
  g.t_start = static_cast<std::int64_t>(r.u64());
  g.t_end = static_cast<std::int64_t>(r.u64());
  const auto n = r.u32();
  const auto e = r.u32();
  auto count = [&](std::uint32_t expected, const char* what) {
    if (r.u32() != expected) throw Error(Errc::corrupt_container, source, std::string(what) + " length mismatch");
    return expected;
  };
  for (auto i = count(n, "node_ids"); i > 0; --i) g.node_ids.push_back(r.u64());
  for (auto i = count(n, "node_types"); i > 0; --i) g.node_types.push_back(node_type_from_u8(r.u8()));
  for (auto i = count(e, "edge_src"); i > 0; --i) g.edge_src.push_back(r.u64());
  for (auto i = count(e, "edge_dst"); i > 0; --i) g.edge_dst.push_back(r.u64());
  for (auto i = count(e, "edge_types"); i > 0; --i) g.edge_types.push_back(edge_type_from_u8(r.u8()));
  for (auto i = count(e, "edge_ts"); i > 0; --i) g.edge_ts.push_back(static_cast<std::int64_t>(r.u64()));
  for (auto i = count(e, "edge_eids"); i > 0; --i) g.edge_eids.push_back(r.str());
  for (auto i = count(e, "edge_attrs"); i > 0; --i) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(r.str());
    } catch (const nlohmann::json::parse_error& ex) {
      throw Error(Errc::corrupt_container, source, ex.what());
    }
    g.edge_attrs.push_back(attrs_from_json(j));
  }
  r.expect_end();
  try {
    check_window(g);
  } catch (const Error& ex) {
    throw Error(Errc::corrupt_container, source, ex.what());
  }
  return g;
}

void serialize_window(const WindowGraph& g, const std::filesystem::path& path) {
  write_file_bytes(path, window_to_bytes(g));
}

WindowGraph deserialize_window(const std::filesystem::path& path) {
  return window_from_bytes(read_file_bytes(path), path.string());
}

void write_summaries(const std::filesystem::path& path, std::span<const SessionDagSummary> summaries) {
  std::string out;
  for (const auto& s : summaries) {
    out += summary_to_json(s).dump();
    out += '\n';
  }
  write_file_text(path, out);
}

std::vector<SessionDagSummary> read_summaries(const std::filesystem::path& path) {
  std::vector<SessionDagSummary> out;
  for_each_line(read_file_text(path), [&](std::string_view line) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      throw Error(Errc::malformed_record, path.string(), ex.what());
    }
    out.push_back(summary_from_json(j));
  });
  return out;
}

std::filesystem::path window_path(const std::filesystem::path& dir, std::uint64_t window_id) {
  char name[32];
  std::snprintf(name, sizeof(name), "w%08llu.nebwin", static_cast<unsigned long long>(window_id));
  return dir / name;
}

std::filesystem::path summary_path(const std::filesystem::path& dir, std::uint64_t window_id) {
  char name[40];
  std::snprintf(name, sizeof(name), "w%08llu.nebdag.jsonl", static_cast<unsigned long long>(window_id));
  return dir / name;
}

std::vector<std::filesystem::path> list_windows(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::file_unreadable, dir.string(), "not a directory");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".nebwin") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace nebula
