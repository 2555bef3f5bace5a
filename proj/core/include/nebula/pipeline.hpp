#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nebula/config.hpp"
#include "nebula/encoder.hpp"
#include "nebula/eval.hpp"
#include "nebula/fusion.hpp"
#include "nebula/graph.hpp"
#include "nebula/scenarios.hpp"
#include "nebula/windowing.hpp"

namespace nebula {

// run-all order.
inline const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages{"generate", "build-windows", "train", "score", "report"};
  return stages;
}

struct StreamWindow {
  WindowGraph graph;
  std::vector<SessionDagSummary> summaries;
};

// Window files of a directory with their summaries, ascending by id.
std::vector<StreamWindow> load_windows(const std::filesystem::path& dir);

// Replays the stream with a fresh scoring state and returns every alert in
// window order.
std::vector<Alert> score_stream(std::span<const StreamWindow> windows, const Allowlist& allow, const Scorer& scorer,
                                const ScoringConfig& cfg, std::int64_t ttl_ms, ScoringState* final_state = nullptr);

struct TrainingSet {
  std::vector<TrainSample> standard;  // new-edge filter, standard profile
  std::vector<TrainSample> lite;      // new-edge filter, Lite profile
  std::size_t edges = 0;
  std::size_t positives = 0;
};

// Samples from the edges the scorer would see, restricted to sessions in
// `train_sessions`; an edge is positive when the weak rules marked it red.
// Graph pointers refer into `windows`.
TrainingSet build_training_set(std::span<const StreamWindow> windows, const Allowlist& allow,
                               const ScoringConfig& cfg, std::int64_t ttl_ms,
                               const std::set<std::string, std::less<>>& train_sessions,
                               const std::set<std::string, std::less<>>& red_edges);

struct Thresholds {
  double t_obs = 0.5;
  double t_high = 0.8;
};

// T_obs / T_high from validation session scores at the two FPR caps, kept
// inside [0, 1 + 1e-6] with T_obs < T_high.
Thresholds calibrate_thresholds(std::span<const Alert> alerts, const GroundTruth& truth,
                                const std::map<std::string, Split, std::less<>>& splits, const FusionWeights& w,
                                double obs_cap, double high_cap);

// Stages. Errors keep their code and gain the stage name in the subject.
void stage_generate(const PipelineConfig& cfg);
WindowStats stage_build_windows(const PipelineConfig& cfg);
TrainReport stage_train(const PipelineConfig& cfg);
void stage_score(const PipelineConfig& cfg);  // MissingWeights when the profile's model is absent
bool stage_report(const PipelineConfig& cfg);  // false for a degenerate evaluation

// Files a stage leaves behind; a resumed run skips stages whose outputs all
// exist.
std::vector<std::filesystem::path> stage_outputs(const PipelineConfig& cfg, std::string_view stage);

struct RunOptions {
  bool resume = false;
  std::set<std::string, std::less<>> stages;  // empty: all
  std::function<void(std::string_view)> log;
};

// Runs the stages in order and writes the manifest. Returns 0, or 2 when the
// report is degenerate; stage errors propagate.
int run_all(const PipelineConfig& cfg, const RunOptions& opt = {});

// manifest.json: every file under work_dir (except the manifest) with size
// and CRC32, sorted by relative path.
void write_manifest(const PipelineConfig& cfg);

}  // namespace nebula
