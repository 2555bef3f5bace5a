#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "nebula/fusion.hpp"
#include "nebula/scenarios.hpp"
#include "nebula/windowing.hpp"

namespace nebula {

// Everything a pipeline run depends on. Paths are relative to work_dir unless
// absolute.
struct PipelineConfig {
  std::filesystem::path work_dir = "run";

  // generate
  ScenarioConfig scenario;
  double hours = 2.0;
  std::uint64_t split_seed = 11;

  // build-windows / score
  WindowConfig window;
  std::int64_t ttl_ms = kDefaultTtlMs;
  std::filesystem::path allowlist = "data/allowlist.txt";

  // train
  Profile profile = Profile::standard;
  std::uint32_t dim = 32;
  std::uint32_t hidden = 32;
  bool use_features = true;
  TrainConfig train;

  // score
  ScoringConfig scoring;
  bool calibrate = true;  // pick T_obs / T_high on val before the final pass
  double obs_fpr_cap = 0.05;
  double high_fpr_cap = 0.02;

  // evaluate
  double fpr_cap = 0.02;

  // Run layout.
  std::filesystem::path events = "data/events.nebula.jsonl";
  std::filesystem::path truth = "data/truth.jsonl";
  std::filesystem::path splits = "data/splits.csv";
  std::filesystem::path windows = "windows";
  std::filesystem::path weights = "model/encoder.nebwt";
  std::filesystem::path lite_weights = "model/lite.nebl";
  std::filesystem::path state = "state";
  std::filesystem::path alerts = "alerts/run.alerts.jsonl";
  std::filesystem::path reports = "reports";

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path events_path() const { return resolve(events); }
  std::filesystem::path truth_path() const { return resolve(truth); }
  std::filesystem::path splits_path() const { return resolve(splits); }
  std::filesystem::path allowlist_path() const { return resolve(allowlist); }
  std::filesystem::path windows_dir() const { return resolve(windows); }
  std::filesystem::path weights_path() const { return resolve(weights); }
  std::filesystem::path lite_path() const { return resolve(lite_weights); }
  std::filesystem::path train_report_path() const { return weights_path().parent_path() / "train.json"; }
  std::filesystem::path state_dir() const { return resolve(state); }
  std::filesystem::path alerts_path() const { return resolve(alerts); }
  std::filesystem::path thresholds_path() const { return alerts_path().parent_path() / "thresholds.json"; }
  std::filesystem::path reports_dir() const { return resolve(reports); }
  std::filesystem::path manifest_path() const { return resolve("manifest.json"); }

  // Throws InvalidArgument.
  void validate() const;

  // Sets one key. Throws InvalidArgument for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);

  // "key = value" lines sorted by key; work_dir is omitted so the echo is
  // independent of where the run lives.
  std::string to_text() const;
};

// Known configuration keys, sorted.
const std::vector<std::string>& config_keys();

// "key = value" lines; '#' starts a comment. Throws MalformedRecord.
std::map<std::string, std::string> parse_config_text(std::string_view text);

// NEBULA_<KEY> with the key upper-cased, e.g. NEBULA_T_HIGH.
std::string env_name(std::string_view key);

// Applies `file` (when non-empty) and then every NEBULA_ environment override.
void load_config(PipelineConfig& cfg, const std::filesystem::path& file);
void apply_env_overrides(PipelineConfig& cfg);

}  // namespace nebula
