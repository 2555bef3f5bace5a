#include "nebula/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "nebula/binio.hpp"
#include "nebula/collector.hpp"
#include "nebula/dagfeat.hpp"
#include "nebula/error.hpp"

namespace nebula {

namespace {

template <typename F>
auto in_stage(std::string_view stage, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(stage) + ": " + e.subject(), e.detail());
  }
}

void remove_window_files(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir)) return;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    const bool window = name.size() > 7 && name.compare(name.size() - 7, 7, ".nebwin") == 0;
    const bool dag = name.find(".nebdag.jsonl") != std::string::npos;
    if (window || dag) std::filesystem::remove(entry.path());
  }
}

std::set<std::string, std::less<>> sessions_in(const std::map<std::string, Split, std::less<>>& splits, Split which) {
  std::set<std::string, std::less<>> out;
  for (const auto& [sid, s] : splits) {
    if (s == which) out.insert(sid);
  }
  return out;
}

Scorer make_scorer(const PipelineConfig& cfg, ModelWeights& weights, LiteModel& lite) {
  Scorer s;
  s.profile = cfg.profile;
  if (cfg.profile == Profile::standard) {
    if (!std::filesystem::exists(cfg.weights_path())) {
      throw Error(Errc::missing_weights, cfg.weights_path().string(), "run the train stage or supply weights");
    }
    weights = load_weights(cfg.weights_path(), cfg.dim);
    s.weights = &weights;
  } else {
    if (!std::filesystem::exists(cfg.lite_path())) {
      throw Error(Errc::missing_weights, cfg.lite_path().string(), "run the train stage or supply a Lite model");
    }
    lite = load_lite(cfg.lite_path());
    s.lite = &lite;
  }
  return s;
}

ScoringConfig scoring_config(const PipelineConfig& cfg) {
  ScoringConfig sc = cfg.scoring;
  sc.features.window_len_ms = cfg.window.window_len_ms;
  return sc;
}

}  // namespace

std::vector<StreamWindow> load_windows(const std::filesystem::path& dir) {
  std::vector<StreamWindow> out;
  for (const auto& path : list_windows(dir)) {
    StreamWindow w;
    w.graph = deserialize_window(path);
    w.summaries = read_summaries(summary_path(dir, w.graph.window_id));
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<Alert> score_stream(std::span<const StreamWindow> windows, const Allowlist& allow, const Scorer& scorer,
                                const ScoringConfig& cfg, std::int64_t ttl_ms, ScoringState* final_state) {
  ScoringState state(ttl_ms);
  std::vector<Alert> out;
  for (const auto& w : windows) {
    auto alerts = score_window(w.graph, w.summaries, state, allow, scorer, cfg);
    out.insert(out.end(), std::make_move_iterator(alerts.begin()), std::make_move_iterator(alerts.end()));
  }
  if (final_state) *final_state = std::move(state);
  return out;
}

TrainingSet build_training_set(std::span<const StreamWindow> windows, const Allowlist& allow,
                               const ScoringConfig& cfg, std::int64_t ttl_ms,
                               const std::set<std::string, std::less<>>& train_sessions,
                               const std::set<std::string, std::less<>>& red_edges) {
  TrainingSet out;
  ScoringState state(ttl_ms);
  for (const auto& w : windows) {
    const WindowGraph& g = w.graph;
    const FeatureMatrix fm = build_features(g, w.summaries, state.triples, state.ttl, allow, cfg.features);
    std::unordered_map<std::size_t, std::size_t> row_of;
    for (std::size_t r = 0; r < fm.edges.size(); ++r) row_of.emplace(fm.edges[r], r);

    auto sample_for = [&](Profile p, std::vector<TrainSample>& into, bool count) {
      TrainSample s;
      s.graph = &g;
      for (auto i : new_edges(g, state.ttl, p, cfg.sensitive_tools)) {
        if (!train_sessions.count(g.edge_attrs[i].session_id)) continue;
        s.edges.push_back(i);
        s.features.push_back(fm.rows[row_of.at(i)]);
        const bool red = red_edges.count(g.edge_eids[i]) > 0;
        s.labels.push_back(red ? 1.0 : 0.0);
        if (count) {
          ++out.edges;
          out.positives += red ? 1 : 0;
        }
      }
      if (!s.edges.empty()) into.push_back(std::move(s));
    };
    sample_for(Profile::standard, out.standard, true);
    sample_for(Profile::lite, out.lite, false);
    absorb_window(g, state);
  }
  return out;
}

Thresholds calibrate_thresholds(std::span<const Alert> alerts, const GroundTruth& truth,
                                const std::map<std::string, Split, std::less<>>& splits, const FusionWeights& w,
                                double obs_cap, double high_cap) {
  const auto sessions = scored_sessions(truth, splits, session_scores(alerts, w));
  const auto val = select(sessions, Split::val);
  constexpr double kCeiling = 1.0 + 1e-6;
  auto clamp = [&](double t) { return std::clamp(t, 0.0, kCeiling); };
  Thresholds t;
  t.t_high = clamp(select_threshold(val, high_cap).threshold);
  t.t_obs = clamp(select_threshold(val, obs_cap).threshold);
  if (t.t_obs >= t.t_high) t.t_obs = std::max(0.0, t.t_high - 1e-6);
  if (t.t_obs >= t.t_high) t.t_high = t.t_obs + 1e-6;
  return t;
}

void stage_generate(const PipelineConfig& cfg) {
  in_stage("generate", [&] {
    ScenarioConfig sc = cfg.scenario;
    sc.duration_ms = std::llround(cfg.hours * 3600000.0);
    const Scenario s = generate(sc);
    for (const auto& p : {cfg.events_path(), cfg.truth_path(), cfg.splits_path(), cfg.allowlist_path()}) {
      std::filesystem::create_directories(p.parent_path());
    }
    write_events(cfg.events_path(), s.events);
    write_truth(cfg.truth_path(), s.truth);
    write_splits(cfg.splits_path(), assign_splits(s.truth, cfg.split_seed));
    write_file_text(cfg.allowlist_path(), generator_allowlist().to_text());
    return 0;
  });
}

WindowStats stage_build_windows(const PipelineConfig& cfg) {
  return in_stage("build-windows", [&] {
    const auto replay = replay_capture(cfg.events_path());
    WindowStats stats;
    const auto windows = build_all_windows(replay.events, cfg.window, &stats);
    const auto dir = cfg.windows_dir();
    std::filesystem::create_directories(dir);
    remove_window_files(dir);
    for (const auto& w : windows) {
      serialize_window(w.graph, window_path(dir, w.graph.window_id));
      write_summaries(summary_path(dir, w.graph.window_id), w.summaries);
    }
    nlohmann::ordered_json j;
    j["events"] = stats.events;
    j["skipped_records"] = replay.skipped;
    j["windows"] = stats.windows;
    j["duplicates"] = stats.duplicates;
    j["late_merged"] = stats.late_merged;
    j["too_late"] = stats.too_late;
    write_file_text(dir / "stats.json", j.dump(2) + "\n");
    return stats;
  });
}

TrainReport stage_train(const PipelineConfig& cfg) {
  return in_stage("train", [&] {
    const auto windows = load_windows(cfg.windows_dir());
    const auto allow = Allowlist::load(cfg.allowlist_path());
    const auto truth = read_truth(cfg.truth_path());
    const auto splits = read_splits(cfg.splits_path());
    const auto set = build_training_set(windows, allow, scoring_config(cfg), cfg.ttl_ms,
                                        sessions_in(splits, Split::train), truth.red_edges());

    TrainReport report;
    const auto init = ModelWeights::init(cfg.dim, cfg.hidden, cfg.train.seed, cfg.use_features ? kFeatureDim : 0);
    const auto weights = train_head(set.standard, init, cfg.train, &report);
    const auto lite = train_lite(set.lite, cfg.train);

    std::filesystem::create_directories(cfg.weights_path().parent_path());
    std::filesystem::create_directories(cfg.lite_path().parent_path());
    save_weights(weights, cfg.weights_path());
    save_lite(lite, cfg.lite_path());
    nlohmann::ordered_json j;
    j["samples"] = set.standard.size();
    j["edges"] = set.edges;
    j["positives"] = set.positives;
    j["initial_loss"] = report.initial_loss;
    j["final_loss"] = report.final_loss;
    j["epoch_loss"] = report.epoch_loss;
    write_file_text(cfg.train_report_path(), j.dump(2) + "\n");
    return report;
  });
}

void stage_score(const PipelineConfig& cfg) {
  in_stage("score", [&] {
    ModelWeights weights;
    LiteModel lite;
    const Scorer scorer = make_scorer(cfg, weights, lite);
    const auto windows = load_windows(cfg.windows_dir());
    const auto allow = Allowlist::load(cfg.allowlist_path());
    ScoringConfig sc = scoring_config(cfg);

    // A validation split without both classes keeps the configured thresholds.
    bool calibrated = false;
    std::string calibration_note;
    if (cfg.calibrate) {
      const auto dry = score_stream(windows, allow, scorer, sc, cfg.ttl_ms);
      try {
        const auto th = calibrate_thresholds(dry, read_truth(cfg.truth_path()), read_splits(cfg.splits_path()),
                                             sc.weights, cfg.obs_fpr_cap, cfg.high_fpr_cap);
        sc.severity.t_obs = th.t_obs;
        sc.severity.t_high = th.t_high;
        calibrated = true;
      } catch (const Error& e) {
        if (e.code() != Errc::degenerate_labels) throw;
        calibration_note = e.what();
      }
    }
    sc.severity.validate();

    ScoringState state;
    const auto alerts = score_stream(windows, allow, scorer, sc, cfg.ttl_ms, &state);
    std::filesystem::create_directories(cfg.alerts_path().parent_path());
    write_alerts(cfg.alerts_path(), alerts);
    nlohmann::ordered_json j;
    j["calibrated"] = calibrated;
    if (!calibration_note.empty()) j["note"] = calibration_note;
    j["t_obs"] = sc.severity.t_obs;
    j["t_high"] = sc.severity.t_high;
    j["obs_fpr_cap"] = cfg.obs_fpr_cap;
    j["high_fpr_cap"] = cfg.high_fpr_cap;
    write_file_text(cfg.thresholds_path(), j.dump(2) + "\n");
    state.save(cfg.state_dir());
    return 0;
  });
}

bool stage_report(const PipelineConfig& cfg) {
  return in_stage("report", [&] {
    const auto alerts = read_alerts(cfg.alerts_path());
    EvalOptions opt;
    opt.fpr_cap = cfg.fpr_cap;
    opt.stream_hours = cfg.hours;
    opt.weights = cfg.scoring.weights;
    const auto r = evaluate(alerts, read_truth(cfg.truth_path()), read_splits(cfg.splits_path()), opt);
    write_report(cfg.reports_dir(), r, cfg.to_text());
    return !r.degenerate;
  });
}

std::vector<std::filesystem::path> stage_outputs(const PipelineConfig& cfg, std::string_view stage) {
  if (stage == "generate") {
    return {cfg.events_path(), cfg.truth_path(), cfg.splits_path(), cfg.allowlist_path()};
  }
  if (stage == "build-windows") return {cfg.windows_dir() / "stats.json"};
  if (stage == "train") return {cfg.weights_path(), cfg.lite_path(), cfg.train_report_path()};
  if (stage == "score") return {cfg.alerts_path(), cfg.thresholds_path(), cfg.state_dir() / "sessions.jsonl"};
  if (stage == "report") {
    return {cfg.reports_dir() / "metrics.csv", cfg.reports_dir() / "sessions.csv", cfg.reports_dir() / "summary.txt"};
  }
  throw Error(Errc::invalid_argument, std::string(stage), "unknown stage");
}

int run_all(const PipelineConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  for (const auto& s : opt.stages) stage_outputs(cfg, s);  // rejects unknown names
  auto log = [&](const std::string& msg) {
    if (opt.log) opt.log(msg);
  };
  std::filesystem::create_directories(cfg.work_dir);
  bool ok = true;
  for (const auto& stage : pipeline_stages()) {
    if (!opt.stages.empty() && !opt.stages.count(stage)) continue;
    if (opt.resume) {
      const auto outs = stage_outputs(cfg, stage);
      if (std::all_of(outs.begin(), outs.end(), [](const auto& p) { return std::filesystem::exists(p); })) {
        log(stage + ": up to date");
        continue;
      }
    }
    log(stage + ": running");
    if (stage == "generate") stage_generate(cfg);
    else if (stage == "build-windows") stage_build_windows(cfg);
    else if (stage == "train") stage_train(cfg);
    else if (stage == "score") stage_score(cfg);
    else if (stage == "report") ok = stage_report(cfg);
  }
  write_manifest(cfg);
  return ok ? 0 : 2;
}

void write_manifest(const PipelineConfig& cfg) {
  const auto root = cfg.work_dir;
  const auto manifest = cfg.manifest_path();
  std::vector<std::pair<std::string, std::filesystem::path>> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    if (std::filesystem::equivalent(entry.path(), manifest)) continue;
    files.emplace_back(std::filesystem::relative(entry.path(), root).generic_string(), entry.path());
  }
  std::sort(files.begin(), files.end());
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& [rel, path] : files) {
    nlohmann::ordered_json f;
    f["path"] = rel;
    f["bytes"] = std::filesystem::file_size(path);
    f["sha256"] = file_checksum(path);
    list.push_back(std::move(f));
  }
  nlohmann::ordered_json j;
  j["files"] = std::move(list);
  write_file_text(manifest, j.dump(2) + "\n");
}

}  // namespace nebula
