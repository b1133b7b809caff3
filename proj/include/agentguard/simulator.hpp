#pragma once

#include "agentguard/config.hpp"
#include "agentguard/mdp.hpp"
#include "agentguard/trace.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace agentguard::sim {

struct Outcome {
  std::string next_state;
  double probability = 0.0;
  std::optional<double> reward;
};

using Distribution = std::vector<std::pair<std::string, double>>;  // action -> probability

struct DriftPatch {
  std::uint64_t after_events = 0;
  std::map<std::string, Distribution> policy;                                  // replaces whole rows
  std::map<std::pair<std::string, std::string>, std::vector<Outcome>> dynamics;  // replaces whole rows
};

struct Episode {
  std::string initial;
  std::vector<std::string> terminals;
  std::uint64_t max_steps = 100;
};

/// Ground-truth MDP plus behaviour policy, with optional step drift.
struct Scenario {
  std::vector<StateDecl> states;
  std::vector<std::string> actions;
  std::map<std::string, Distribution> policy;
  std::map<std::pair<std::string, std::string>, std::vector<Outcome>> dynamics;
  std::vector<DriftPatch> drift;
  std::uint64_t seed = 0;
  std::string session = "sim";
  Episode episode;

  bool is_terminal(std::string_view state) const;
  /// Throws InvalidScenario when a distribution does not sum to 1 within
  /// 1e-12, names are unknown, a live state has no policy, or drift points
  /// are not strictly increasing.
  void validate() const;
  /// Copy with `patch` applied.
  Scenario patched(const DriftPatch& patch) const;
};

Scenario load_scenario(std::string_view yaml_text);
Scenario load_scenario_file(const std::filesystem::path& path);

/// Episode `e` draws from an mt19937_64 seeded with the (e+1)-th output of
/// SplitMix64 started at the scenario seed.
std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t episode) noexcept;
/// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform01(std::mt19937_64& rng);

/// Samples one transition from `current`. Throws TerminalState at a
/// terminal state and advances `rng` deterministically.
TransitionEvent step(const Scenario& sc, std::mt19937_64& rng, std::string_view current);

/// `n_events` records, seq from 1 and ts equal to the event index.
/// Episodes restart at the initial state after a terminal or max_steps.
std::vector<TraceRecord> generate_trace(const Scenario& sc, std::uint64_t n_events);

}  // namespace agentguard::sim
