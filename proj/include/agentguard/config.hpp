#pragma once

#include "agentguard/checker.hpp"
#include "agentguard/mdp.hpp"
#include "agentguard/pctl.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace agentguard {

enum class Severity { Info, Warn, Critical };
enum class QueuePolicy { Block, DropOldest, Reject };

std::string_view to_string(Severity s) noexcept;

struct StateDecl {
  std::string name;
  std::vector<std::string> labels;
};

struct PropertyDecl {
  std::string name;
  std::string formula;     // as written
  pctl::Property property;  // parsed, validated, threshold folded in
  std::optional<std::string> on_violation;
  Severity severity = Severity::Warn;
};

struct DecaySettings {
  double lambda = 1.0;
  std::uint64_t every = 0;  // 0 disables forgetting
};

struct LearnerConfig {
  RegistrationMode mode = RegistrationMode::Open;
  double smoothing_alpha = 0.0;
  double prune_epsilon = 1e-9;
  DecaySettings decay;
  std::size_t queue_capacity = 10'000;
  QueuePolicy queue_policy = QueuePolicy::Block;
};

struct CheckerConfig {
  CheckSettings settings;
  pctl::ModelMode mode = pctl::ModelMode::Both;
};

struct AnalysisConfig {
  std::uint64_t every_events = 25;
  std::optional<std::uint64_t> also_every_ms;
};

struct ApiConfig {
  std::string listen = "127.0.0.1:8080";
  std::size_t max_clients = 16;
  std::uint64_t heartbeat_ms = 15'000;
  std::size_t history = 10'000;  // alert / audit ring buffer size
};

struct GuardConfig {
  std::vector<StateDecl> states;
  std::vector<std::string> actions;
  std::optional<std::string> initial;
  std::vector<std::string> terminal;
  std::map<std::string, std::string, std::less<>> action_labels;  // action -> label
  std::map<std::string, std::string, std::less<>> outcomes;       // tool outcome -> state
  std::vector<RewardStructure> rewards;
  std::vector<PropertyDecl> properties;
  LearnerConfig learner;
  CheckerConfig checker;
  AnalysisConfig analysis;
  ApiConfig api;

  bool declares_states() const noexcept { return !states.empty(); }
  bool has_state(std::string_view name) const;
  bool has_action(std::string_view name) const;
  /// Labels, states and reward structures properties may mention.
  pctl::Vocabulary vocabulary() const;
  /// Fresh learner seeded with the declared states, actions, labels,
  /// terminals, action labels and reward structures.
  LearnedMdp make_model() const;
};

/// Parses and validates a YAML configuration, filling defaults.
/// Throws ConfigError carrying the YAML path of the problem.
GuardConfig load_config(std::string_view yaml_text);
GuardConfig load_config_file(const std::filesystem::path& path);

/// Resolves the property against the configuration (labels, reward
/// structures, checker mode).
pctl::Property validate_against_config(const pctl::Property& p, const GuardConfig& cfg);

/// Per-state labels from the configuration plus labels reified from
/// `action_labels` over the transitions observed in `snap`.
std::map<std::string, std::vector<StateId>> label_states(const GuardConfig& cfg, const ModelSnapshot& snap);

// ---------------------------------------------------------------------------
// Raw instrumentation events

enum class RawKind { ToolCall, ToolResult, StateDecl };

struct RawEvent {
  RawKind kind = RawKind::ToolCall;
  std::optional<std::string> tool;
  std::optional<std::string> outcome;
  std::optional<std::string> declared_state;
  std::string payload;
  std::int64_t timestamp_ms = 0;
};

/// Reads one line of the raw-event JSONL schema
/// `{kind, tool?, outcome?, declared_state?, payload?, ts}`.
RawEvent parse_raw_event(std::string_view json_line);

/// Pairs tool calls with their results for one session and turns them into
/// transitions. Single owner; use one per session.
class EventAbstractor {
 public:
  EventAbstractor(const GuardConfig& cfg, std::string current_state);

  /// A transition when `raw` completes one, otherwise nothing. Results
  /// without a pending call and names unknown in strict mode are dropped.
  std::optional<TransitionEvent> abstract_event(const RawEvent& raw);

  const std::string& current_state() const noexcept { return current_; }
  std::uint64_t dropped() const noexcept { return dropped_; }
  std::uint64_t orphan_results() const noexcept { return orphans_; }

 private:
  std::optional<std::string> resolve_outcome(const std::string& outcome) const;
  bool strict() const noexcept { return cfg_->learner.mode == RegistrationMode::Strict; }

  const GuardConfig* cfg_;
  std::string current_;
  std::optional<RawEvent> pending_;
  std::uint64_t dropped_ = 0;
  std::uint64_t orphans_ = 0;
};

}  // namespace agentguard
