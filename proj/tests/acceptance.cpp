// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 when
// any criterion fails.

#include "agentguard/checker.hpp"
#include "agentguard/config.hpp"
#include "agentguard/engine.hpp"
#include "agentguard/prism.hpp"
#include "agentguard/simulator.hpp"
#include "agentguard/trace.hpp"
#include "support/generators.hpp"
#include "support/oracle.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

namespace ag = agentguard;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kConfigs = AG_CONFIG_DIR;
const fs::path kFixtures = AG_FIXTURE_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

fs::path scratch_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("agentguard_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs the CLI with stdout captured; returns the exit status.
int run_cli(const std::string& args, std::string* out = nullptr) {
  const auto capture = scratch_dir() / "stdout.txt";
  const std::string cmd = quote(AG_CLI) + " " + args + " > " + quote(capture.string()) + " 2> " +
                          quote((scratch_dir() / "stderr.txt").string());
  const int raw = std::system(cmd.c_str());
  if (out) {
    std::ifstream in(capture);
    std::stringstream buf;
    buf << in.rdbuf();
    *out = buf.str();
  }
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool same(double a, double b, double tol) {
  if (std::isinf(a) || std::isinf(b)) return a == b;
  return std::abs(a - b) <= tol;
}

double value_or_inf(const ag::VerificationResult& r) {
  return r.value.is_infinite() ? std::numeric_limits<double>::infinity() : r.value.number;
}

// 1 ------------------------------------------------------------------------

Outcome learner_convergence() {
  const auto start = Clock::now();
  const auto trace_path = scratch_dir() / "c1.jsonl";
  const int code = run_cli("simulate --scenario " + quote((kConfigs / "repairagent_sim.yaml").string()) +
                           " --events 20000 --out " + quote(trace_path.string()));
  if (code != 0) return {false, "simulate exited with " + std::to_string(code)};
  auto trace = ag::read_trace_file(trace_path.string());

  ag::Guard guard(ag::load_config_file(kConfigs / "repairagent.yaml"));
  guard.start(ag::RunMode::Inline);
  std::size_t hypothesis = 0;
  for (const auto& rec : trace.records) {
    if (hypothesis == 1000) break;
    guard.log_transition(rec.event, rec.session);
    if (rec.event.state == "hypothesis") ++hypothesis;
  }
  guard.stop();
  if (hypothesis < 1000) return {false, "only " + std::to_string(hypothesis) + " hypothesis events generated"};
  auto snap = guard.latest_snapshot();
  auto policy = snap->empirical_policy(*snap->find_state("hypothesis"));
  double share = 0.0;
  for (const auto& [a, p] : policy) {
    if (snap->action_name(a) == "search_code_base") share = p;
  }
  const double took = seconds_since(start);
  Outcome o;
  o.pass = share >= 0.70 && share <= 0.80 && took < 5.0;
  o.detail = "pi(search_code_base|hypothesis) = " + fmt(share) + " after 1000 events, " + fmt(took) + " s";
  return o;
}

// 2 ------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240601);
  const ag::CheckSettings settings;
  double worst = 0.0;
  std::size_t mismatches = 0;
  std::size_t infinities = 0;
  std::string first;
  auto note = [&](int model, const std::string& what, double got, double want) {
    if (std::isinf(got) || std::isinf(want)) {
      if (got != want) {
        ++mismatches;
        if (first.empty()) first = "model " + std::to_string(model) + " " + what + ": " + fmt(got) + " vs " + fmt(want);
      } else {
        ++infinities;
      }
      return;
    }
    const double d = std::abs(got - want);
    worst = std::max(worst, d);
    if (d > 1e-6) {
      ++mismatches;
      if (first.empty()) first = "model " + std::to_string(model) + " " + what + ": " + fmt(got) + " vs " + fmt(want);
    }
  };

  for (int i = 0; i < 500; ++i) {
    gen::ModelShape shape;
    shape.decay = i % 4 == 3;
    auto snap = gen::random_model(rng, shape);
    ag::SparseMdp mdp(snap);
    auto dense = oracle::from_snapshot(snap, "steps");
    auto goal = oracle::label_set(snap, "goal");
    const ag::StateSet all(snap.state_count(), true);
    const auto steps = mdp.choice_rewards(*snap.reward_index("steps"));

    auto compare = [&](const std::string& what, const std::vector<double>& got, const std::vector<double>& want) {
      for (std::size_t s = 0; s < got.size(); ++s) note(i, what + "@s" + std::to_string(s), got[s], want[s]);
    };
    compare("Pmax[F]", ag::solve_until(mdp, all, goal, ag::Direction::Max, std::nullopt, settings).values,
            oracle::reach(dense, goal, true));
    compare("Pmin[F]", ag::solve_until(mdp, all, goal, ag::Direction::Min, std::nullopt, settings).values,
            oracle::reach(dense, goal, false));
    compare("Pmax[F<=3]", ag::solve_until(mdp, all, goal, ag::Direction::Max, 3, settings).values,
            oracle::reach_bounded(dense, goal, true, 3));
    compare("Rmin[F]", ag::solve_reward(mdp, steps, goal, ag::Direction::Min, settings).values,
            oracle::reward(dense, goal, false));

    // The same quantities through the property front end, at the initial state.
    const char* texts[] = {R"(Pmax=? [ F "goal" ])", R"(Pmin=? [ F "goal" ])", R"(Pmax=? [ F<=3 "goal" ])",
                           R"(Rmin=? [ F "goal" ])"};
    const double wants[] = {oracle::reach(dense, goal, true)[0], oracle::reach(dense, goal, false)[0],
                            oracle::reach_bounded(dense, goal, true, 3)[0], oracle::reward(dense, goal, false)[0]};
    for (int q = 0; q < 4; ++q) {
      note(i, texts[q], value_or_inf(ag::check(snap, ag::pctl::parse_property(texts[q]), settings)), wants[q]);
    }
  }
  const double took = seconds_since(start);
  Outcome o;
  o.pass = mismatches == 0 && took < 60.0;
  o.detail = "500 models, max |dev| = " + fmt(worst) + ", " + std::to_string(infinities) + " matching infinities, " +
             std::to_string(mismatches) + " mismatches, " + fmt(took) + " s";
  if (!first.empty()) o.detail += "; first: " + first;
  return o;
}

// 3 ------------------------------------------------------------------------

Outcome toy3_golden() {
  auto cfg = ag::load_config_file(kFixtures / "toy3.yaml");
  auto trace = ag::read_trace_file((kFixtures / "toy3.jsonl").string());
  ag::Guard guard(cfg);
  ag::replay_trace(guard, trace.records);
  const double inf = std::numeric_limits<double>::infinity();
  const std::map<std::string, double> golden = {{"pmax_goal", 1.0},  {"pmin_goal", 0.5}, {"pmax_goal_2", 0.55},
                                                {"rmin_steps", 10.0}, {"rmax_steps", inf}, {"never_fail", 1.0}};
  Outcome o;
  for (const auto& entry : guard.results()) {
    const auto& r = entry.result;
    auto it = golden.find(r.property);
    if (it == golden.end()) continue;
    const double got = value_or_inf(r);
    const bool ok = !r.error && same(got, it->second, 1e-6);
    o.pass = o.pass && ok;
    o.detail += r.property + "=" + fmt(got) + (ok ? "" : "(want " + fmt(it->second) + ")") + " ";
  }
  if (guard.results().size() != golden.size()) o.pass = false;
  return o;
}

// 4 ------------------------------------------------------------------------

Outcome duality() {
  std::mt19937_64 rng(4242);
  const ag::CheckSettings settings;
  double worst_dual = 0.0;
  double worst_oracle = 0.0;
  double worst_gap = 0.0;
  double worst_overshoot = 0.0;
  std::size_t monotone_breaks = 0;
  for (int i = 0; i < 200; ++i) {
    gen::ModelShape shape;
    shape.decay = i % 3 == 2;
    auto base = gen::random_model(rng, shape);
    auto data = base.data();
    std::vector<ag::StateId> phi;
    std::bernoulli_distribution member(0.6);
    for (std::size_t s = 0; s < data.states.size(); ++s) {
      if (member(rng)) phi.push_back(ag::state_at(s));
    }
    data.labels["phi"] = phi;
    ag::ModelSnapshot snap(std::move(data));

    auto q = [&](const std::string& text) {
      return ag::check(snap, ag::pctl::parse_property(text), settings).value.number;
    };
    const double g = q(R"(Pmax=? [ G "phi" ])");
    const double f = q(R"(Pmin=? [ F !"phi" ])");
    worst_dual = std::max(worst_dual, std::abs(g - (1.0 - f)));
    auto dense = oracle::from_snapshot(snap);
    worst_oracle = std::max(worst_oracle, std::abs(g - oracle::globally(dense, oracle::label_set(snap, "phi"), true)[0]));

    const double unbounded = q(R"(Pmax=? [ F "phi" ])");
    double previous = -1.0;
    for (int k = 1; k <= 10; ++k) {
      const double v = q("Pmax=? [ F<=" + std::to_string(k) + " \"phi\" ]");
      if (v < previous) ++monotone_breaks;
      worst_overshoot = std::max(worst_overshoot, v - unbounded);
      previous = v;
    }
    const double far = q(R"(Pmax=? [ F<=10000 "phi" ])");
    worst_gap = std::max(worst_gap, std::abs(unbounded - far));
  }
  Outcome o;
  const double eps = settings.epsilon;
  o.pass = worst_dual <= 1e-9 && monotone_breaks == 0 && worst_overshoot <= eps && worst_gap <= eps &&
           worst_oracle <= 1e-6;
  o.detail = "200 models, max duality gap " + fmt(worst_dual) + ", vs direct oracle " + fmt(worst_oracle) +
             ", monotonicity breaks " + std::to_string(monotone_breaks) + ", max F<=k overshoot " +
             fmt(worst_overshoot) + ", |F - F<=10000| " + fmt(worst_gap) + " (epsilon " + fmt(eps) + ")";
  return o;
}

// 5 ------------------------------------------------------------------------

bool matrix_equal(const ag::ModelSnapshot& a, const ag::ModelSnapshot& b) {
  if (a.state_names() != b.state_names() || a.action_names() != b.action_names() || a.initial() != b.initial()) {
    return false;
  }
  for (std::size_t s = 0; s < a.state_count(); ++s) {
    if (a.is_terminal(ag::state_at(s)) != b.is_terminal(ag::state_at(s))) return false;
    auto ca = a.choices(ag::state_at(s));
    auto cb = b.choices(ag::state_at(s));
    if (ca.size() != cb.size()) return false;
    for (std::size_t c = 0; c < ca.size(); ++c) {
      if (ca[c].action != cb[c].action || ca[c].successors.size() != cb[c].successors.size()) return false;
      for (std::size_t k = 0; k < ca[c].successors.size(); ++k) {
        if (ca[c].successors[k].state != cb[c].successors[k].state) return false;
        if (ca[c].successors[k].probability != cb[c].successors[k].probability) return false;
      }
    }
  }
  return a.labels() == b.labels();
}

Outcome round_trips() {
  Outcome o;
  // (a) live run, then replay of what it recorded
  auto sc = ag::sim::load_scenario_file(kConfigs / "repairagent_sim.yaml");
  auto generated = ag::sim::generate_trace(sc, 5000);
  const auto cfg_path = kConfigs / "repairagent.yaml";
  const auto recorded = scratch_dir() / "c5_recorded.jsonl";
  std::string live_prism;
  std::map<std::string, double> live_values;
  {
    ag::Guard guard(ag::load_config_file(cfg_path));
    std::ofstream log(recorded, std::ios::binary);
    guard.set_trace_log(&log);
    guard.start(ag::RunMode::Background);
    for (const auto& rec : generated) guard.log_transition(rec.event, rec.session);
    guard.stop();
    log.close();
    live_prism = ag::export_prism(*guard.latest_snapshot());
    for (const auto& e : guard.results()) live_values[e.result.property] = value_or_inf(e.result);
  }
  const auto replay_prism = scratch_dir() / "c5_replay.prism";
  std::string out;
  const int code = run_cli("replay --config " + quote(cfg_path.string()) + " --trace " + quote(recorded.string()) +
                           " --emit-prism " + quote(replay_prism.string()), &out);
  std::map<std::string, double> replay_values;
  std::istringstream lines(out);
  for (std::string line; std::getline(lines, line);) {
    auto doc = nlohmann::json::parse(line);
    if (!doc.contains("property") || doc.contains("severity")) continue;
    replay_values[doc["property"]] =
        doc["value"].is_number() ? doc["value"].get<double>() : std::numeric_limits<double>::infinity();
  }
  const bool prism_same = slurp(replay_prism) == live_prism;
  const bool values_same = !live_values.empty() && replay_values == live_values;
  o.pass = (code == 0 || code == 4) && prism_same && values_same;
  o.detail = std::string("(a) PRISM ") + (prism_same ? "byte-identical" : "DIFFERS") + ", " +
             std::to_string(live_values.size()) + " values " + (values_same ? "identical" : "DIFFER");

  // (b) PRISM import of export
  std::mt19937_64 rng(555);
  int equal = 0;
  for (int i = 0; i < 100; ++i) {
    gen::ModelShape shape;
    shape.decay = i % 2 == 1;
    auto snap = gen::random_model(rng, shape);
    if (matrix_equal(snap, ag::import_prism(ag::export_prism(snap)))) ++equal;
  }
  o.pass = o.pass && equal == 100;
  o.detail += "; (b) " + std::to_string(equal) + "/100 matrix-equal";

  // (c) property text round trip
  int identical = 0;
  const int cases = 2000;
  for (int i = 0; i < cases; ++i) {
    auto p = gen::random_property(rng);
    try {
      if (ag::pctl::parse_property(ag::pctl::format_property(p)) == p) ++identical;
    } catch (const ag::Error&) {
    }
  }
  o.pass = o.pass && identical == cases;
  o.detail += "; (c) " + std::to_string(identical) + "/" + std::to_string(cases) + " ASTs identical";
  return o;
}

// 6 ------------------------------------------------------------------------

Outcome alerting() {
  const auto trace_path = scratch_dir() / "c6.jsonl";
  const auto scenario = kConfigs / "drift_sim.yaml";
  int code = run_cli("simulate --scenario " + quote(scenario.string()) + " --events 4000 --out " +
                     quote(trace_path.string()));
  if (code != 0) return {false, "simulate exited with " + std::to_string(code)};
  const auto drift_at = ag::sim::load_scenario_file(scenario).drift.at(0).after_events;

  auto cfg = ag::load_config_file(kConfigs / "drift.yaml");
  const auto every = cfg.analysis.every_events;
  ag::Guard guard(cfg);
  int callbacks = 0;
  std::uint64_t callback_alert = 0;
  guard.register_actuator("pause", [&](const ag::ActuatorInvocation& inv) {
    ++callbacks;
    if (inv.alert) callback_alert = inv.alert->id;
  });
  std::uint64_t violated_before_drift = 0;
  guard.add_listener([&](const ag::CycleReport& r) {
    for (const auto& res : r.results) {
      if (res.satisfied == false && r.cycle * every <= drift_at) ++violated_before_drift;
    }
  });
  auto trace = ag::read_trace_file(trace_path.string());
  ag::replay_trace(guard, trace.records);
  auto alerts = guard.alerts();

  // The first cycle that sees post-drift events.
  const std::uint64_t first_after = drift_at / every + 1;
  std::string replay_out;
  code = run_cli("replay --config " + quote((kConfigs / "drift.yaml").string()) + " --trace " +
                 quote(trace_path.string()), &replay_out);
  Outcome o;
  const bool one = alerts.size() == 1;
  const bool timely = one && alerts[0].cycle >= first_after && alerts[0].cycle <= first_after + 1;
  o.pass = one && timely && callbacks == 1 && callback_alert == alerts[0].id && violated_before_drift == 0 &&
           code == 4;
  o.detail = std::to_string(alerts.size()) + " alert(s)";
  if (one) {
    o.detail += " at cycle " + std::to_string(alerts[0].cycle) + " (drift lands in cycle " +
                std::to_string(first_after) + "), value " + fmt(alerts[0].observed.number);
  }
  o.detail += ", callback ran " + std::to_string(callbacks) + "x, replay exit code " + std::to_string(code);
  return o;
}

// 7 ------------------------------------------------------------------------

std::string large_config(std::size_t live_states) {
  std::ostringstream y;
  y << "states:\n";
  for (std::size_t i = 0; i < live_states; ++i) y << "  - q" << i << "\n";
  y << "  - {name: fix_success, labels: [done]}\n  - {name: fix_failed, labels: [done]}\n";
  y << "actions: [read_range, search_code_base, express_hypothesis, write_fix, run_tests]\n";
  y << "initial: q0\nterminal: [fix_success, fix_failed]\naction_labels: {write_fix: write_fix}\n";
  y << "analysis: {every_events: 100000000}\nlearner: {queue_capacity: 100000}\n";
  y << "properties:\n";
  y << "  - {name: p_fix_success, formula: 'Pmax=? [ F \"fix_success\" ]', threshold: {op: '>=', value: 0.2}}\n";
  y << "  - {name: e_cycles_to_done, formula: 'Rmin=? [ F \"done\" ]', threshold: {op: '<=', value: 40}}\n";
  y << "  - {name: p_no_fix, formula: 'Pmax=? [ G !\"write_fix\" ]'}\n";
  return y.str();
}

Outcome performance() {
  Outcome o;
  const std::size_t live = 998;
  auto cfg = ag::load_config(large_config(live));
  const std::vector<std::string> actions = {"read_range", "search_code_base", "express_hypothesis", "write_fix",
                                            "run_tests"};
  ag::Guard guard(cfg);
  guard.start(ag::RunMode::Manual);
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> pick_state(0, live - 1);
  std::uniform_int_distribution<int> fan(1, 8);
  std::uniform_int_distribution<int> times(1, 3);
  std::bernoulli_distribution terminal(0.02);
  std::size_t events = 0;
  for (std::size_t s = 0; s < live; ++s) {
    for (const auto& a : actions) {
      const int n = fan(rng);
      for (int k = 0; k < n; ++k) {
        std::string next = terminal(rng) ? (k % 2 ? "fix_failed" : "fix_success") : "q" + std::to_string(pick_state(rng));
        for (int t = times(rng); t > 0; --t) {
          guard.log_transition("q" + std::to_string(s), a, next);
          ++events;
        }
      }
    }
  }
  guard.pump();
  const auto start = Clock::now();
  auto report = guard.run_analysis_cycle();
  const double cycle_s = seconds_since(start);
  bool clean = report.results.size() == 3;
  std::string values;
  for (const auto& r : report.results) {
    clean = clean && !r.error && r.converged;
    values += r.property + "=" + (r.error ? *r.error : fmt(value_or_inf(r))) + " ";
  }
  guard.stop();

  // Ingestion: replay a long simulator run through the in-process logger.
  auto sc = ag::sim::load_scenario_file(kConfigs / "repairagent_sim.yaml");
  auto trace = ag::sim::generate_trace(sc, 200000);
  ag::Guard replay(ag::load_config_file(kConfigs / "repairagent.yaml"));
  const auto t0 = Clock::now();
  ag::replay_trace(replay, trace);
  const double ingest_s = seconds_since(t0);
  const double rate = static_cast<double>(trace.size()) / ingest_s;

  o.pass = clean && cycle_s < 1.0 && rate >= 50000.0;
  o.detail = "cycle on 1000x5 model (" + std::to_string(events) + " events) took " + fmt(cycle_s) + " s [" + values +
             "]; ingestion " + fmt(rate) + " events/s over " + std::to_string(trace.size()) + " events with " +
             std::to_string(replay.counters().cycles) + " cycles";
  return o;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"learner convergence to the 75/25 split", learner_convergence},
      {"checker agrees with the brute-force oracle", oracle_equivalence},
      {"toy3 golden values", toy3_golden},
      {"duality and bounded monotonicity", duality},
      {"determinism and round trips", round_trips},
      {"end-to-end drift alerting", alerting},
      {"desk-scale performance", performance},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  std::error_code ec;
  fs::remove_all(scratch_dir(), ec);
  return failed == 0 ? 0 : 1;
}
