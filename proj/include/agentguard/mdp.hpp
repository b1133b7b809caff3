#pragma once

#include "agentguard/error.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace agentguard {

enum class StateId : std::uint32_t {};
enum class ActionId : std::uint32_t {};

constexpr std::size_t index_of(StateId s) noexcept { return static_cast<std::size_t>(s); }
constexpr std::size_t index_of(ActionId a) noexcept { return static_cast<std::size_t>(a); }
constexpr StateId state_at(std::size_t i) noexcept { return static_cast<StateId>(i); }
constexpr ActionId action_at(std::size_t i) noexcept { return static_cast<ActionId>(i); }

// Reserved names. Reserved actions never count towards the empirical policy.
inline constexpr std::string_view kSelfLoopAction = "__self__";
inline constexpr std::string_view kGotoAction = "__goto__";
inline constexpr std::string_view kPolicyAction = "__policy__";
inline constexpr std::string_view kOtherState = "__other__";

// Built-in reward structures.
inline constexpr std::string_view kStepsReward = "steps";
inline constexpr std::string_view kObservedReward = "observed";

bool is_reserved_action(std::string_view name) noexcept;
bool is_identifier(std::string_view name) noexcept;

/// One abstracted observation `state --action--> next_state`.
struct TransitionEvent {
  std::string state;
  std::string action;
  std::string next_state;
  std::optional<double> reward;
  std::optional<std::int64_t> timestamp_ms;
};

/// Pattern-based override of a reward structure. Unset fields are wildcards;
/// the override with most fields set wins, ties go to the first declared.
struct RewardOverride {
  std::optional<std::string> state;
  std::optional<std::string> action;
  std::optional<std::string> next_state;
  double value = 0.0;

  int specificity() const noexcept {
    return int(state.has_value()) + int(action.has_value()) + int(next_state.has_value());
  }
};

struct RewardStructure {
  std::string name;
  double per_step = 0.0;
  std::vector<RewardOverride> overrides;
};

enum class RegistrationMode { Strict, Open };

struct LearnerSettings {
  RegistrationMode mode = RegistrationMode::Open;
  double smoothing_alpha = 0.0;
  double prune_epsilon = 1e-9;
};

struct SnapshotSuccessor {
  StateId state{};
  double weight = 0.0;
  double probability = 0.0;
  /// Resolved reward per structure, parallel to ModelSnapshot::reward_names().
  std::vector<double> rewards;
};

struct SnapshotChoice {
  ActionId action{};
  double weight = 0.0;  // == sum of successor weights
  std::vector<SnapshotSuccessor> successors;  // sorted by state index
};

/// Raw contents of a snapshot. Produced by the learner, the JSON and PRISM
/// readers, and the induced-chain construction.
struct SnapshotData {
  std::vector<std::string> states;
  std::vector<std::string> actions;
  std::vector<std::vector<SnapshotChoice>> choices;  // per state, sorted by action index
  std::map<std::string, std::vector<StateId>> labels;
  std::vector<StateId> terminal;
  std::optional<StateId> initial;
  std::vector<std::string> reward_names;
  std::uint64_t revision = 0;
  /// True when every weight is an integer observation count.
  bool exact = true;
};

/// Immutable view of the learned model at one revision.
class ModelSnapshot {
 public:
  ModelSnapshot() = default;
  /// Validates indices, names and row-stochasticity; throws InvalidModel.
  explicit ModelSnapshot(SnapshotData data);

  std::size_t state_count() const noexcept { return data_.states.size(); }
  std::size_t action_count() const noexcept { return data_.actions.size(); }
  const std::string& state_name(StateId s) const { return data_.states.at(index_of(s)); }
  const std::string& action_name(ActionId a) const { return data_.actions.at(index_of(a)); }
  const std::vector<std::string>& state_names() const noexcept { return data_.states; }
  const std::vector<std::string>& action_names() const noexcept { return data_.actions; }
  std::optional<StateId> find_state(std::string_view name) const;
  std::optional<ActionId> find_action(std::string_view name) const;

  std::span<const SnapshotChoice> choices(StateId s) const { return data_.choices.at(index_of(s)); }
  const SnapshotChoice* find_choice(StateId s, ActionId a) const;

  /// P(s2 | s, a). Throws NeverObserved when (s, a) has no observations.
  double transition_probability(StateId s, ActionId a, StateId s2) const;
  /// Actions observed in `s`. Empty marks a dead end.
  std::vector<ActionId> enabled_actions(StateId s) const;
  /// Observed choice frequencies in `s`, reserved actions excluded.
  /// Throws NeverObserved when no such action was observed.
  std::vector<std::pair<ActionId, double>> empirical_policy(StateId s) const;
  /// Markov chain under the observed behaviour: one `__policy__` choice per
  /// state mixing every observed action by its frequency.
  ModelSnapshot induced_chain() const;

  const std::map<std::string, std::vector<StateId>>& labels() const noexcept { return data_.labels; }
  bool is_terminal(StateId s) const;
  /// Whether `s` occurs in any recorded transition.
  bool visited(StateId s) const { return visited_.at(index_of(s)); }

  std::optional<StateId> initial() const noexcept { return data_.initial; }
  const std::vector<std::string>& reward_names() const noexcept { return data_.reward_names; }
  std::optional<std::size_t> reward_index(std::string_view name) const;

  std::uint64_t revision() const noexcept { return data_.revision; }
  bool exact() const noexcept { return data_.exact; }
  bool empty() const noexcept { return data_.states.empty(); }
  const SnapshotData& data() const noexcept { return data_; }

 private:
  SnapshotData data_;
  std::vector<bool> visited_;
};

/// Online frequency learner. Single writer; hand `snapshot()` to readers.
class LearnedMdp {
 public:
  explicit LearnedMdp(LearnerSettings settings = {});

  const LearnerSettings& settings() const noexcept { return settings_; }

  StateId add_state(std::string_view name);
  ActionId add_action(std::string_view name);
  std::optional<StateId> find_state(std::string_view name) const;
  std::optional<ActionId> find_action(std::string_view name) const;
  std::size_t state_count() const noexcept { return states_.size(); }
  std::size_t action_count() const noexcept { return actions_.size(); }

  void set_initial(StateId s);
  std::optional<StateId> initial() const noexcept { return initial_; }
  void set_terminal(StateId s);
  void add_label(const std::string& label, StateId s);
  /// Every state entered through `action` carries `label`.
  void set_action_label(std::string action, std::string label);
  /// Replaces a structure of the same name. `steps` and `observed` exist
  /// implicitly unless declared.
  void add_reward_structure(RewardStructure structure);

  /// Counts one observation. Strict mode throws UnknownState/UnknownAction;
  /// open mode registers unseen names.
  std::uint64_t record_transition(const TransitionEvent& ev);
  /// Checks the names of `ev` without recording it.
  void check_names(const TransitionEvent& ev) const;

  /// Multiplies every weight by `lambda` and prunes weights below
  /// prune_epsilon. Throws InvalidDecay for lambda outside (0, 1].
  void apply_forgetting(double lambda);

  /// Weight of (s, a, s2); 0 when never seen.
  double count(StateId s, ActionId a, StateId s2) const;
  /// Sum over successors of count(s, a, .).
  double action_count(StateId s, ActionId a) const;

  std::uint64_t revision() const noexcept { return revision_; }
  ModelSnapshot snapshot() const;

 private:
  struct Successor {
    std::uint32_t state;
    double weight;
    double reward_sum;
    double reward_weight;
  };
  struct Choice {
    std::uint32_t action;
    double total;
    std::vector<Successor> successors;  // sorted by state
  };

  const Choice* find_choice(std::uint32_t s, std::uint32_t a) const;
  StateId resolve_state(const std::string& name);
  ActionId resolve_action(const std::string& name);

  LearnerSettings settings_;
  std::vector<std::string> states_;
  std::vector<std::string> actions_;
  std::map<std::string, std::uint32_t, std::less<>> state_index_;
  std::map<std::string, std::uint32_t, std::less<>> action_index_;
  std::vector<std::vector<Choice>> choices_;  // per state, sorted by action
  std::map<std::string, std::vector<StateId>> labels_;
  std::map<std::string, std::string, std::less<>> action_labels_;
  std::vector<bool> terminal_;
  std::optional<StateId> initial_;
  std::vector<RewardStructure> rewards_;
  std::uint64_t revision_ = 0;
  bool decayed_ = false;
};

/// Labels of a snapshot: the given per-state labels plus, for every observed
/// (s, a, s') with `a` in `action_labels`, the state s'.
std::map<std::string, std::vector<StateId>> derive_labels(
    const std::map<std::string, std::vector<StateId>>& state_labels,
    const std::map<std::string, std::string, std::less<>>& action_labels,
    const std::vector<std::string>& action_names,
    const std::vector<std::vector<SnapshotChoice>>& choices);

}  // namespace agentguard
