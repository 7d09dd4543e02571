// Apache License, Version 2.0, refer to LICENSE.txt
//
// biaslens: serve live sessions, replay logged sessions, simulate biased
// sessions with a known ground truth.
//
// Exit codes: 0 success, 1 usage, 2 ingestion error, 3 runtime error.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biaslens/error.hpp"
#include "biaslens/evaluation.hpp"
#include "biaslens/inference.hpp"
#include "biaslens/ingestion.hpp"
#include "biaslens/service.hpp"
#include "biaslens/synthetic.hpp"

namespace fs = std::filesystem;
using namespace biaslens;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIngestion = 2;
constexpr int kExitRuntime = 3;

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::size_t> parse_k_grid(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--k-grid expects positive integers separated by commas, got '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError("--k-grid is empty");
  return out;
}

EngineConfig engine_from(const std::string& prior, const std::string& scoring) {
  EngineConfig c;
  const auto p = parse_prior_policy(prior);
  if (!p) throw UsageError("--prior must be uniform or size-penalized");
  const auto r = parse_scoring_rule(scoring);
  if (!r) throw UsageError("--scoring must be inclusive or sequential");
  c.prior = *p;
  c.scoring = *r;
  return c;
}

void print_final_state(const std::shared_ptr<const Dataset>& ds, const SessionLog& log,
                       const EngineConfig& engine) {
  Session session(ds, engine);
  for (const auto& ev : to_interactions(log)) session.observe(ev);
  const std::vector<double> post = session.posterior();
  std::printf("  posterior after %lld events:\n", static_cast<long long>(session.event_count()));
  for (std::size_t i = 0; i < post.size(); ++i) {
    const auto names = model_group_names(session.models()[i], ds->schema());
    std::string label = "{";
    for (std::size_t j = 0; j < names.size(); ++j) label += (j ? "," : "") + names[j];
    label += "}";
    std::printf("    M%-3zu %-32s %.4f\n", i + 1, label.c_str(), post[i]);
  }
  std::printf("  bias:\n");
  for (const auto& g : bias_report(session).groups) {
    std::printf("    %-20s %.4f\n", g.name.c_str(), g.probability);
  }
}

void write_report(const EvalReport& report, const fs::path& out, const std::string& stem) {
  fs::create_directories(out);
  std::ofstream js(out / (stem + ".json"));
  js << report.to_json().dump(2) << '\n';
  std::ofstream tsv(out / (stem + ".tsv"));
  report.write_tsv(tsv);
  if (!js || !tsv) throw Error(ErrorCode::kLoad, "cannot write report files", out.string());
}

std::vector<fs::path> expand_logs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      out.insert(out.end(), files.begin(), files.end());
    } else {
      out.emplace_back(in);
    }
  }
  return out;
}

struct ReplayArgs {
  std::string dataset;
  std::vector<std::string> logs;
  std::string prior = "uniform";
  std::string scoring = "inclusive";
  std::string k_grid = "1,5,10,20,50";
  std::size_t warmup = 3;
  double min_dwell_ms = 1000.0;
  std::size_t min_events = 4;
  std::size_t threads = 0;
  std::string out;
};

int cmd_replay(const ReplayArgs& a) {
  EvalConfig config;
  config.engine = engine_from(a.prior, a.scoring);
  config.k_grid = parse_k_grid(a.k_grid);
  config.warmup = a.warmup;
  config.threads = a.threads;
  const auto ds = std::make_shared<const Dataset>(load_dataset(a.dataset));
  for (const auto& w : ds->warnings()) std::fprintf(stderr, "warning: %s\n", w.c_str());

  std::vector<SessionLog> kept;
  for (const fs::path& path : expand_logs(a.logs)) {
    const SessionLog raw = load_session_log(path);
    const auto filtered = filter_hovers(raw, {a.min_dwell_ms, a.min_events});
    std::size_t hovers = 0;
    for (const auto& ev : raw.events) hovers += ev.kind == InteractionKind::kHover;
    if (!filtered || filtered->events.empty()) {
      std::printf("session %s: dropped (%zu events, %zu hovers; %zu left after filtering)\n",
                  raw.session_id.c_str(), raw.events.size(), hovers,
                  filtered ? filtered->events.size() : std::size_t{0});
      continue;
    }
    std::printf("session %s: %zu events read, %zu kept (%zu hovers, %zu removed)\n", raw.session_id.c_str(),
                raw.events.size(), filtered->events.size(), hovers,
                raw.events.size() - filtered->events.size());
    kept.push_back(*filtered);
  }
  if (kept.empty()) {
    std::printf("no sessions left to replay\n");
    return 0;
  }

  const EvalReport report = replay_and_score(ds, kept, config);
  for (const SessionLog& log : kept) {
    std::printf("session %s\n", log.session_id.c_str());
    print_final_state(ds, log, config.engine);
  }
  std::printf("hit rate (excluding visited / including visited), warmup %zu:\n", config.warmup);
  for (std::size_t k = 0; k < config.k_grid.size(); ++k) {
    std::printf("  k=%-4zu %.4f / %.4f  (sessions with predictions: %zu)\n", config.k_grid[k],
                report.hit_rate_excluding[k].mean, report.hit_rate_including[k].mean,
                report.hit_rate_excluding[k].n);
  }
  if (!a.out.empty()) {
    write_report(report, a.out, "replay");
    std::printf("wrote %s/replay.json and %s/replay.tsv\n", a.out.c_str(), a.out.c_str());
  }
  return 0;
}

struct SimulateArgs {
  std::string dataset;
  std::string strategy;
  std::size_t clicks = 20;
  std::size_t sessions = 100;
  std::uint64_t seed = 0;
  std::string prior = "uniform";
  std::string scoring = "inclusive";
  double threshold = 0.9;
  std::size_t threads = 0;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  SyntheticStrategy strategy;
  try {
    strategy = parse_strategy(a.strategy);
  } catch (const Error& e) {
    throw UsageError(std::string("--strategy: ") + e.what() + (e.detail().empty() ? "" : ": " + e.detail()));
  }
  strategy.click_count = a.clicks;
  const EngineConfig engine = engine_from(a.prior, a.scoring);
  const auto ds = std::make_shared<const Dataset>(load_dataset(a.dataset));
  try {
    validate_strategy(*ds, strategy);
  } catch (const Error& e) {
    throw UsageError(std::string("--strategy: ") + e.what() + (e.detail().empty() ? "" : ": " + e.detail()));
  }

  const std::size_t pool = eligible_points(*ds, strategy).size();
  if (pool == 0) throw Error(ErrorCode::kInvalidArgument, "no point satisfies the strategy", a.strategy);
  std::printf("strategy matches %zu of %zu points\n", pool, ds->size());

  std::vector<SessionLog> logs;
  for (std::size_t i = 0; i < a.sessions; ++i) {
    strategy.seed = a.seed + i;
    SessionLog log = generate_session(*ds, strategy);
    log.session_id = "session-" + std::to_string(i + 1);
    logs.push_back(std::move(log));
  }
  const std::uint32_t truth = strategy_mask(*ds, strategy);
  const RecoveryReport rec = score_recovery(ds, logs, truth, engine, a.threshold, a.threads);

  EvalConfig eval;
  eval.engine = engine;
  eval.threads = a.threads;
  eval.k_grid = {1, 5, 10, 20, 50};
  const EvalReport report = replay_and_score(ds, logs, eval);

  std::string truth_label = truth == 0 ? "{} (unbiased)" : "{";
  if (truth != 0) {
    for (std::size_t j = 0; j < strategy.biased_groups.size(); ++j) {
      truth_label += (j ? "," : "") + strategy.biased_groups[j];
    }
    truth_label += "}";
  }
  std::printf("ground truth %s, %zu sessions x %zu clicks\n", truth_label.c_str(), a.sessions, a.clicks);
  std::printf("MAP-recovery rate at click %zu: %.3f\n", a.clicks, rec.map_recovery_rate(a.clicks));
  std::printf("mean truth bias at click %zu: %.4f\n", a.clicks, rec.mean_truth_bias(a.clicks));
  std::printf("mean clicks to %.2f bias: %.2f (sessions never reaching it count as %zu)\n", a.threshold,
              rec.mean_clicks_to_threshold(), a.clicks + 1);
  if (!report.bias_curve.empty()) {
    std::printf("mean bias at click %zu (ours / attribute-distribution baseline):\n", a.clicks);
    const auto& ours = report.bias_curve.back();
    const auto& base = report.baseline_curve.back();
    for (std::size_t g = 0; g < report.groups.size(); ++g) {
      std::printf("  %-20s %.4f / %.4f\n", report.groups[g].c_str(), ours[g].mean, base[g].mean);
    }
  }

  if (!a.out.empty()) {
    const fs::path out(a.out);
    fs::create_directories(out / "logs");
    for (const auto& log : logs) {
      std::ofstream f(out / "logs" / (log.session_id + ".jsonl"));
      write_session_log(f, log);
    }
    nlohmann::json doc = {{"strategy", a.strategy},
                          {"truth", strategy.biased_groups},
                          {"sessions", a.sessions},
                          {"clicks", a.clicks},
                          {"seed", a.seed},
                          {"threshold", a.threshold},
                          {"map_recovery_rate", rec.map_recovery_rate(a.clicks)},
                          {"mean_clicks_to_threshold", rec.mean_clicks_to_threshold()}};
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : rec.sessions) {
      per.push_back({{"truth_bias", s.truth_bias}, {"clicks_to_threshold", s.clicks_to_threshold}});
    }
    doc["per_session"] = std::move(per);
    std::ofstream(out / "recovery.json") << doc.dump(2) << '\n';
    write_report(report, out, "report");
    std::printf("wrote %zu logs, recovery.json and report.{json,tsv} to %s\n", logs.size(), a.out.c_str());
  }
  return 0;
}

int cmd_serve(const std::string& host, int port, const std::string& spool) {
  SessionService service(spool.empty() ? std::nullopt : std::optional<fs::path>(spool));
  HttpServer server(service);
  const int bound = server.bind(host, port);
  std::printf("listening on %s:%d\n", host.c_str(), bound);
  std::fflush(stdout);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.serve();
  g_server = nullptr;
  return 0;
}

int cmd_make_dataset(const std::string& kind, std::uint64_t seed, std::size_t n, const std::string& out) {
  Dataset ds = [&] {
    if (kind == "crime") return make_crime_like_dataset(seed, n);
    if (kind == "wide") return make_wide_dataset(seed, n);
    if (kind == "restaurants") return make_restaurant_dataset();
    throw UsageError("--kind must be crime, wide or restaurants");
  }();
  std::ofstream f(out);
  f << dataset_to_json(ds).dump(1) << '\n';
  if (!f) throw Error(ErrorCode::kLoad, "cannot write dataset", out);
  std::printf("wrote %zu points, %zu groups to %s\n", ds.size(), ds.group_count(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exploration-bias inference: serve, replay, simulate"};
  app.require_subcommand(1);

  std::string host = "127.0.0.1";
  int port = 0;
  std::string spool;
  auto* serve = app.add_subcommand("serve", "Run the session service");
  serve->add_option("--port", port, "Port (0 = ephemeral, printed on start)")->required();
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--spool-dir", spool, "Persist datasets and events here and recover from it");

  ReplayArgs ra;
  auto* replay = app.add_subcommand("replay", "Replay interaction logs and score them");
  replay->add_option("--dataset", ra.dataset, "Dataset file")->required();
  replay->add_option("--log", ra.logs, "Interaction log file(s) or directories of .jsonl")->required();
  replay->add_option("--prior", ra.prior, "uniform | size-penalized");
  replay->add_option("--scoring", ra.scoring, "inclusive | sequential");
  replay->add_option("--k-grid", ra.k_grid, "Comma-separated k values");
  replay->add_option("--warmup", ra.warmup, "Events before predictions are scored");
  replay->add_option("--min-dwell-ms", ra.min_dwell_ms, "Shortest hover kept");
  replay->add_option("--min-events", ra.min_events, "Fewest events for a hover session to be kept");
  replay->add_option("--threads", ra.threads, "Worker threads (0 = all cores)");
  replay->add_option("--out", ra.out, "Report directory");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Generate synthetic sessions and score recovery");
  simulate->add_option("--dataset", sa.dataset, "Dataset file")->required();
  simulate->add_option("--strategy", sa.strategy, "e.g. groups=location;focus:location=0.5,0.5,r0.2")
      ->required();
  simulate->add_option("--clicks", sa.clicks, "Clicks per session");
  simulate->add_option("--sessions", sa.sessions, "Number of sessions");
  simulate->add_option("--seed", sa.seed, "Seed of the first session; session i uses seed + i");
  simulate->add_option("--prior", sa.prior, "uniform | size-penalized");
  simulate->add_option("--scoring", sa.scoring, "inclusive | sequential");
  simulate->add_option("--threshold", sa.threshold, "Bias level for clicks-to-threshold");
  simulate->add_option("--threads", sa.threads, "Worker threads (0 = all cores)");
  simulate->add_option("--out", sa.out, "Output directory for logs and reports");

  std::string kind = "crime";
  std::uint64_t mseed = 2024;
  std::size_t mn = 1951;
  std::string mout;
  auto* make = app.add_subcommand("make-dataset", "Write a generated dataset file");
  make->add_option("--kind", kind, "crime | wide | restaurants");
  make->add_option("--seed", mseed, "Generator seed");
  make->add_option("--points", mn, "Number of points");
  make->add_option("--out", mout, "Output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*serve) return cmd_serve(host, port, spool);
    if (*replay) return cmd_replay(ra);
    if (*simulate) return cmd_simulate(sa);
    if (*make) return cmd_make_dataset(kind, mseed, mn, mout);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s%s%s\n", std::string(to_string(e.code())).c_str(), e.what(),
                 e.detail().empty() ? "" : ": ", e.detail().c_str());
    return e.code() == ErrorCode::kLoad ? kExitIngestion : kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
