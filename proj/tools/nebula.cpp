// nebula: command-line driver for the detection pipeline.
//
// Settings resolve as: built-in defaults, then --config file, then NEBULA_*
// environment variables, then --set key=value, then subcommand flags.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nebula/binio.hpp"
#include "nebula/collector.hpp"
#include "nebula/config.hpp"
#include "nebula/error.hpp"
#include "nebula/pipeline.hpp"

namespace fs = std::filesystem;
using nebula::PipelineConfig;

namespace {

struct Overrides {
  std::vector<std::pair<std::string, std::string>> kv;

  void add(const std::string& key, const std::string& value) { kv.emplace_back(key, value); }
  template <typename T>
  void add(const std::string& key, const std::optional<T>& v) {
    if (!v) return;
    if constexpr (std::is_same_v<T, std::string>) add(key, *v);
    else add(key, std::to_string(*v));
  }
};

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

int run_collect(const std::string& listen, const std::string& upstream, const std::string& session,
                const std::string& replay, const fs::path& out) {
  if (!replay.empty()) {
    const auto r = nebula::replay_capture(replay);
    nebula::write_events(out, r.events);
    std::fprintf(stderr, "collect: %zu events, %zu skipped\n", r.events.size(), r.skipped);
    return 0;
  }
  if (listen.empty() || upstream.empty()) {
    throw nebula::Error(nebula::Errc::invalid_argument, "collect", "need --listen and --upstream, or --replay");
  }
  std::ofstream sink_file(out, std::ios::app);
  if (!sink_file) throw nebula::Error(nebula::Errc::file_unreadable, out.string(), "cannot open for append");

  int client_in = STDIN_FILENO;
  int client_out = STDOUT_FILENO;
  if (listen != "stdio") {
    const int lfd = nebula::listen_tcp(listen);
    client_in = client_out = nebula::accept_one(lfd);
    ::close(lfd);
  }
  const int up = nebula::connect_tcp(upstream);
  nebula::Interceptor interceptor(session);
  const auto stats = nebula::relay(
      client_in, client_out, up, interceptor,
      [&](const nebula::Event& e) { sink_file << nebula::serialize_event(e) << '\n' << std::flush; }, now_ms);
  std::fprintf(stderr, "collect: %llu frames, %llu undecodable, %zu unmatched responses\n",
               static_cast<unsigned long long>(stats.frames), static_cast<unsigned long long>(stats.undecodable_frames),
               interceptor.unmatched_responses());
  ::close(up);
  if (client_in != STDIN_FILENO) ::close(client_in);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nebula: graph-based intrusion detection for MCP agent traffic"};
  app.require_subcommand(1);

  std::string config_file;
  std::optional<std::string> work_dir;
  std::vector<std::string> sets;
  app.add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--work-dir", work_dir, "run directory (default: run)");
  app.add_option("--set", sets, "key=value override, repeatable");

  Overrides ov;

  // generate
  auto* gen = app.add_subcommand("generate", "synthesize a labeled event stream");
  std::optional<std::int64_t> seed;
  std::optional<double> hours, prevalence, rate;
  std::optional<std::string> evasion, gen_out;
  bool device_impact = false;
  gen->add_option("--seed", seed, "scenario seed");
  gen->add_option("--hours", hours, "stream length in hours");
  gen->add_option("--prevalence", prevalence, "attack session share");
  gen->add_option("--sessions-per-hour", rate, "mean session rate");
  gen->add_option("--evasion", evasion, "none | filler=A-B,jitter=A-B,churn=0|1,paraphrase=0|1");
  gen->add_flag("--device-impact", device_impact, "include device-impact attacks");
  gen->add_option("--out", gen_out, "output directory");

  // collect
  auto* col = app.add_subcommand("collect", "JSON-RPC pass-through proxy, or capture replay");
  std::string listen, upstream, session = "s1", replay;
  fs::path col_out = "capture.nebula.jsonl";
  col->add_option("--listen", listen, "host:port, or 'stdio'");
  col->add_option("--upstream", upstream, "host:port of the MCP server");
  col->add_option("--session", session, "session id stamped on captured events");
  col->add_option("--replay", replay, "normalize an existing capture instead of proxying");
  col->add_option("--out", col_out, "events file (.nebula.jsonl)");

  // build-windows
  auto* bw = app.add_subcommand("build-windows", "assemble window graphs from events");
  std::optional<std::string> bw_events, bw_out;
  std::optional<std::int64_t> window_ms, lateness_ms;
  bw->add_option("--events", bw_events, "events file");
  bw->add_option("--out", bw_out, "window directory");
  bw->add_option("--window-ms", window_ms, "window length");
  bw->add_option("--lateness-ms", lateness_ms, "watermark lateness");

  // train
  auto* tr = app.add_subcommand("train", "fit the encoder head and the Lite model");
  std::optional<std::string> tr_windows, tr_truth, tr_splits, tr_out;
  std::optional<std::int64_t> epochs, dim, workers;
  tr->add_option("--windows", tr_windows, "window directory");
  tr->add_option("--truth", tr_truth, "truth file");
  tr->add_option("--splits", tr_splits, "splits file");
  tr->add_option("--out", tr_out, "weights file");
  tr->add_option("--epochs", epochs, "training epochs");
  tr->add_option("--dim", dim, "embedding width");
  tr->add_option("--workers", workers, "gradient worker threads");

  // score
  auto* sc = app.add_subcommand("score", "score windows and write alerts");
  std::optional<std::string> sc_windows, sc_weights, sc_profile, sc_out;
  sc->add_option("--windows", sc_windows, "window directory");
  sc->add_option("--weights", sc_weights, "weights file");
  sc->add_option("--profile", sc_profile, "standard | lite");
  sc->add_option("--out", sc_out, "alerts file");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "session metrics from an alert file");
  std::optional<std::string> ev_alerts, ev_truth, ev_splits, ev_out;
  std::optional<double> fpr_cap;
  ev->add_option("--alerts", ev_alerts, "alerts file");
  ev->add_option("--truth", ev_truth, "truth file");
  ev->add_option("--splits", ev_splits, "splits file");
  ev->add_option("--fpr-cap", fpr_cap, "FPR cap for the operating threshold");
  ev->add_option("--out", ev_out, "report directory");

  // report
  auto* rp = app.add_subcommand("report", "evaluate the run in --work-dir");

  // run-all
  auto* ra = app.add_subcommand("run-all", "every stage in order, then the manifest");
  bool resume = false;
  std::vector<std::string> stages;
  std::optional<std::int64_t> ra_seed;
  std::optional<double> ra_hours;
  ra->add_flag("--resume", resume, "skip stages whose outputs exist");
  ra->add_option("--stages", stages, "subset of generate,build-windows,train,score,report")->delimiter(',');
  ra->add_option("--seed", ra_seed, "scenario seed");
  ra->add_option("--hours", ra_hours, "stream length in hours");

  CLI11_PARSE(app, argc, argv);

  try {
    PipelineConfig cfg;
    nebula::load_config(cfg, config_file);
    if (work_dir) cfg.work_dir = *work_dir;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw nebula::Error(nebula::Errc::invalid_argument, s, "expected key=value");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }

    if (*gen) {
      ov.add("seed", seed);
      ov.add("hours", hours);
      ov.add("prevalence", prevalence);
      ov.add("sessions_per_hour", rate);
      ov.add("evasion", evasion);
      if (device_impact) ov.add("device_impact", "true");
      if (gen_out) {
        const fs::path d = fs::absolute(*gen_out);
        ov.add("events", (d / "events.nebula.jsonl").string());
        ov.add("truth", (d / "truth.jsonl").string());
        ov.add("splits", (d / "splits.csv").string());
        ov.add("allowlist", (d / "allowlist.txt").string());
      }
    }
    if (*bw) {
      ov.add("events", bw_events);
      ov.add("windows", bw_out);
      ov.add("window_ms", window_ms);
      ov.add("lateness_ms", lateness_ms);
    }
    if (*tr) {
      ov.add("windows", tr_windows);
      ov.add("truth", tr_truth);
      ov.add("splits", tr_splits);
      ov.add("weights", tr_out);
      ov.add("epochs", epochs);
      ov.add("dim", dim);
      ov.add("workers", workers);
    }
    if (*sc) {
      ov.add("windows", sc_windows);
      ov.add("profile", sc_profile);
      if (sc_weights) ov.add(cfg.profile == nebula::Profile::lite || sc_profile == "lite" ? "lite_weights" : "weights",
                             *sc_weights);
      ov.add("alerts", sc_out);
    }
    if (*ev) {
      ov.add("alerts", ev_alerts);
      ov.add("truth", ev_truth);
      ov.add("splits", ev_splits);
      ov.add("fpr_cap", fpr_cap);
      ov.add("reports", ev_out);
    }
    if (*ra) {
      ov.add("seed", ra_seed);
      ov.add("hours", ra_hours);
    }
    for (const auto& [k, v] : ov.kv) cfg.set(k, v);
    cfg.validate();

    if (*gen) {
      nebula::stage_generate(cfg);
      std::printf("wrote %s\n", cfg.events_path().string().c_str());
    } else if (*col) {
      return run_collect(listen, upstream, session, replay, col_out);
    } else if (*bw) {
      const auto st = nebula::stage_build_windows(cfg);
      std::printf("%llu events -> %llu windows (%llu duplicates, %llu late-merged, %llu too late)\n",
                  static_cast<unsigned long long>(st.events), static_cast<unsigned long long>(st.windows),
                  static_cast<unsigned long long>(st.duplicates), static_cast<unsigned long long>(st.late_merged),
                  static_cast<unsigned long long>(st.too_late));
    } else if (*tr) {
      const auto r = nebula::stage_train(cfg);
      std::printf("loss %.6f -> %.6f over %zu epochs\n", r.initial_loss, r.final_loss, r.epoch_loss.size());
    } else if (*sc) {
      nebula::stage_score(cfg);
      std::printf("wrote %s\n", cfg.alerts_path().string().c_str());
    } else if (*ev || *rp) {
      const bool ok = nebula::stage_report(cfg);
      std::cout << nebula::read_file_text(cfg.reports_dir() / "summary.txt");
      return ok ? 0 : 2;
    } else if (*ra) {
      nebula::RunOptions opt;
      opt.resume = resume;
      opt.stages.insert(stages.begin(), stages.end());
      opt.log = [](std::string_view m) { std::fprintf(stderr, "%.*s\n", static_cast<int>(m.size()), m.data()); };
      const int status = nebula::run_all(cfg, opt);
      if (fs::exists(cfg.reports_dir() / "summary.txt")) {
        std::cout << nebula::read_file_text(cfg.reports_dir() / "summary.txt");
      }
      return status;
    }
  } catch (const nebula::Error& e) {
    std::fprintf(stderr, "nebula: %s\n", e.what());
    return 1;
  }
  return 0;
}
