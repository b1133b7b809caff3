// agentguard: command-line front end of the monitoring engine.

#include "agentguard/checker.hpp"
#include "agentguard/config.hpp"
#include "agentguard/engine.hpp"
#include "agentguard/mdp_json.hpp"
#include "agentguard/prism.hpp"
#include "agentguard/server.hpp"
#include "agentguard/simulator.hpp"
#include "agentguard/trace.hpp"
#include "agentguard/wire.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace ag = agentguard;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3, kViolation = 4 };

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("agentguard");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("AGENTGUARD_LOG"); level && *level) {
    auto parsed = spdlog::level::from_str(level);
    if (parsed == spdlog::level::off && std::string_view(level) != "off") {
      spdlog::warn("ignoring unknown AGENTGUARD_LOG level '{}'", level);
    } else {
      spdlog::set_level(parsed);
    }
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ag::Error(ag::ErrorCode::ConfigError, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void print_results(const ag::Guard& guard) {
  for (const auto& entry : guard.results()) {
    auto doc = ag::result_to_json(entry.result);
    doc["cycle"] = entry.cycle;
    std::cout << doc.dump() << '\n';
  }
}

int exit_for(const ag::Error& e) {
  switch (e.code()) {
    case ag::ErrorCode::ConfigError:
    case ag::ErrorCode::InvalidScenario: return kConfig;
    default: return kRuntime;
  }
}

// --- run -------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::string listen;
  std::string trace_log;
};

int cmd_run(const RunArgs& args) {
  auto cfg = ag::load_config_file(args.config);
  std::string listen = args.listen.empty() ? cfg.api.listen : args.listen;
  if (const char* env = std::getenv("AGENTGUARD_LISTEN"); env && *env) listen = env;
  auto [host, port] = ag::parse_listen(listen);

  ag::Guard guard(cfg);
  std::ofstream trace;
  if (!args.trace_log.empty()) {
    trace.open(args.trace_log, std::ios::binary | std::ios::app);
    if (!trace) throw ag::Error(ag::ErrorCode::ConfigError, "cannot write " + args.trace_log);
    guard.set_trace_log(&trace);
  }
  ag::ApiServer server(guard, {cfg.api.max_clients, cfg.api.heartbeat_ms});
  server.bind(host, port);
  guard.start(ag::RunMode::Background);
  server.start();

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted && guard.agent_state() != ag::AgentState::Terminated) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  spdlog::info("shutting down");
  server.stop();
  guard.stop();
  trace.flush();
  print_results(guard);
  return guard.violation_present() ? kViolation : kOk;
}

// --- replay ----------------------------------------------------------------

struct ReplayArgs {
  std::string config;
  std::string trace;
  std::string emit_prism;
  bool lenient = false;
  double speed = 0.0;
};

int cmd_replay(const ReplayArgs& args) {
  auto cfg = ag::load_config_file(args.config);
  auto trace = ag::read_trace_file(args.trace, {args.lenient});
  if (trace.skipped > 0) spdlog::warn("skipped {} malformed trace lines", trace.skipped);
  ag::Guard guard(cfg);
  ag::ReplayOptions options;
  if (args.speed > 0.0) options.speed = args.speed;
  auto fed = ag::replay_trace(guard, trace.records, options);
  auto counters = guard.counters();
  spdlog::info("replayed {} events: {} applied, {} failed, {} cycles", fed, counters.applied, counters.failed,
               counters.cycles);
  if (!args.emit_prism.empty()) {
    auto snap = guard.latest_snapshot();
    if (!snap) snap = std::make_shared<const ag::ModelSnapshot>(cfg.make_model().snapshot());
    std::ofstream out(args.emit_prism, std::ios::binary);
    if (!out) throw ag::Error(ag::ErrorCode::ConfigError, "cannot write " + args.emit_prism);
    out << ag::export_prism(*snap);
  }
  print_results(guard);
  for (const auto& a : guard.alerts()) std::cout << ag::alert_to_json(a).dump() << '\n';
  return guard.violation_present() ? kViolation : kOk;
}

// --- check -----------------------------------------------------------------

struct CheckArgs {
  std::string model;
  std::string property;
  double epsilon = ag::CheckSettings{}.epsilon;
  std::uint64_t max_iterations = ag::CheckSettings{}.max_iterations;
};

int cmd_check(const CheckArgs& args) {
  const std::string text = read_file(args.model);
  const bool prism = args.model.ends_with(".prism") || args.model.ends_with(".pm") || text.starts_with("mdp") ||
                     text.starts_with("//");
  ag::ModelSnapshot snap;
  if (prism) {
    snap = ag::import_prism(text);
  } else {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ag::Error(ag::ErrorCode::InvalidModel, std::string("model is neither PRISM nor JSON: ") + e.what());
    }
    if (doc.contains("ok") && doc.contains("data")) doc = doc["data"];  // saved API envelope
    snap = ag::snapshot_from_json(doc);
  }
  ag::pctl::Property property;
  try {
    property = ag::pctl::parse_property(args.property);
  } catch (const ag::Error& e) {
    std::cerr << "invalid property: " << e.what() << '\n';
    return kUsage;
  }
  ag::CheckSettings settings;
  settings.epsilon = args.epsilon;
  settings.max_iterations = args.max_iterations;
  auto result = ag::check(snap, property, settings);
  std::cout << ag::result_to_json(result).dump() << '\n';
  return result.satisfied == false ? kViolation : kOk;
}

// --- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::uint64_t events = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_simulate(const SimulateArgs& args) {
  auto sc = ag::sim::load_scenario_file(args.scenario);
  if (args.seed) sc.seed = *args.seed;
  auto trace = ag::sim::generate_trace(sc, args.events);
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!args.out.empty()) {
    file.open(args.out, std::ios::binary);
    if (!file) throw ag::Error(ag::ErrorCode::ConfigError, "cannot write " + args.out);
    out = &file;
  }
  std::string buffer;
  for (const auto& rec : trace) buffer += ag::format_trace_line(rec);
  *out << buffer;
  out->flush();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Runtime verification of agent workflows against learned MDPs", "agentguard"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Serve the HTTP API and monitor live transitions");
  run_cmd->add_option("--config", run.config, "YAML configuration")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--listen", run.listen, "host:port (AGENTGUARD_LISTEN overrides)");
  run_cmd->add_option("--trace-log", run.trace_log, "append applied events as JSONL");

  ReplayArgs replay;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run a recorded JSONL trace");
  replay_cmd->add_option("--config", replay.config, "YAML configuration")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--trace", replay.trace, "JSONL trace")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--emit-prism", replay.emit_prism, "write the final model as PRISM text");
  replay_cmd->add_flag("--lenient", replay.lenient, "skip malformed lines instead of failing");
  replay_cmd->add_option("--speed", replay.speed, "playback speed multiplier (default: as fast as possible)")
      ->check(CLI::PositiveNumber);

  CheckArgs check;
  auto* check_cmd = app.add_subcommand("check", "Check one property against a saved model");
  check_cmd->add_option("--model", check.model, "snapshot JSON or PRISM file")->required()->check(CLI::ExistingFile);
  check_cmd->add_option("--property", check.property, "property, e.g. 'Pmax=? [ F \"goal\" ]'")->required();
  check_cmd->add_option("--epsilon", check.epsilon, "value-iteration tolerance")->check(CLI::PositiveNumber);
  check_cmd->add_option("--max-iterations", check.max_iterations, "value-iteration cap")->check(CLI::PositiveNumber);

  SimulateArgs simulate;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic trace from a scenario");
  sim_cmd->add_option("--scenario", simulate.scenario, "scenario YAML")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--events", simulate.events, "number of events")->required();
  sim_cmd->add_option("--seed", simulate.seed, "override the scenario seed");
  sim_cmd->add_option("--out", simulate.out, "write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*replay_cmd) return cmd_replay(replay);
    if (*check_cmd) return cmd_check(check);
    if (*sim_cmd) return cmd_simulate(simulate);
  } catch (const ag::Error& e) {
    spdlog::error("{}: {}", ag::to_string(e.code()), e.what());
    return exit_for(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntime;
  }
  return kUsage;
}
