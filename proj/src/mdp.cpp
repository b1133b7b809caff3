#include "agentguard/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace agentguard {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownState: return "UnknownState";
    case ErrorCode::UnknownAction: return "UnknownAction";
    case ErrorCode::NeverObserved: return "NeverObserved";
    case ErrorCode::InvalidDecay: return "InvalidDecay";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::BoundError: return "BoundError";
    case ErrorCode::ThresholdError: return "ThresholdError";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::UnknownRewardStructure: return "UnknownRewardStructure";
    case ErrorCode::ModeMismatch: return "ModeMismatch";
    case ErrorCode::EmptyModel: return "EmptyModel";
    case ErrorCode::NegativeReward: return "NegativeReward";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::OrphanResult: return "OrphanResult";
    case ErrorCode::EngineNotRunning: return "EngineNotRunning";
    case ErrorCode::RejectedEvent: return "RejectedEvent";
    case ErrorCode::UnsupportedConstruct: return "UnsupportedConstruct";
    case ErrorCode::UnknownCommand: return "UnknownCommand";
    case ErrorCode::UnknownAlert: return "UnknownAlert";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::TerminalState: return "TerminalState";
    case ErrorCode::TraceFormat: return "TraceFormat";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::MalformedRequest: return "MalformedRequest";
  }
  return "Unknown";
}

bool is_reserved_action(std::string_view name) noexcept {
  return name == kSelfLoopAction || name == kGotoAction || name == kPolicyAction;
}

bool is_identifier(std::string_view name) noexcept {
  if (name.empty()) return false;
  auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  if (!alpha(name.front())) return false;
  return std::all_of(name.begin() + 1, name.end(), [&](char c) { return alpha(c) || digit(c); });
}

namespace {

[[noreturn]] void invalid(const std::string& message) { throw Error(ErrorCode::InvalidModel, message); }

template <typename Map>
std::optional<std::uint32_t> lookup(const Map& map, std::string_view name) {
  auto it = map.find(name);
  if (it == map.end()) return std::nullopt;
  return it->second;
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelSnapshot

ModelSnapshot::ModelSnapshot(SnapshotData data) : data_(std::move(data)) {
  const std::size_t n = data_.states.size();
  std::set<std::string_view> seen;
  for (const auto& name : data_.states) {
    if (!is_identifier(name)) invalid("invalid state name '" + name + "'");
    if (!seen.insert(name).second) invalid("duplicate state name '" + name + "'");
  }
  seen.clear();
  for (const auto& name : data_.actions) {
    if (!is_identifier(name)) invalid("invalid action name '" + name + "'");
    if (!seen.insert(name).second) invalid("duplicate action name '" + name + "'");
  }
  if (data_.choices.size() != n) invalid("choice table does not match state count");
  if (data_.initial && index_of(*data_.initial) >= n) invalid("initial state out of range");

  visited_.assign(n, false);
  for (std::size_t s = 0; s < n; ++s) {
    const auto& row = data_.choices[s];
    for (std::size_t c = 0; c < row.size(); ++c) {
      const auto& choice = row[c];
      if (index_of(choice.action) >= data_.actions.size()) invalid("action index out of range");
      if (c > 0 && index_of(row[c - 1].action) >= index_of(choice.action)) {
        invalid("choices of state '" + data_.states[s] + "' not sorted by action");
      }
      if (choice.successors.empty()) invalid("choice without successors");
      double sum = 0.0;
      for (std::size_t k = 0; k < choice.successors.size(); ++k) {
        const auto& succ = choice.successors[k];
        if (index_of(succ.state) >= n) invalid("successor index out of range");
        if (k > 0 && index_of(choice.successors[k - 1].state) >= index_of(succ.state)) {
          invalid("successors not sorted by state");
        }
        if (!(succ.probability >= 0.0 && succ.probability <= 1.0)) invalid("probability outside [0,1]");
        if (succ.rewards.size() != data_.reward_names.size()) invalid("reward vector size mismatch");
        for (double r : succ.rewards) {
          if (!std::isfinite(r)) invalid("non-finite reward");
        }
        sum += succ.probability;
        visited_[index_of(succ.state)] = true;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        invalid("row (" + data_.states[s] + ", " + data_.actions[index_of(choice.action)] +
                ") is not stochastic");
      }
    }
    if (!row.empty()) visited_[s] = true;
  }
  for (auto& [label, states] : data_.labels) {
    for (StateId s : states) {
      if (index_of(s) >= n) invalid("label '" + label + "' references unknown state");
    }
    std::sort(states.begin(), states.end());
    states.erase(std::unique(states.begin(), states.end()), states.end());
  }
  for (StateId s : data_.terminal) {
    if (index_of(s) >= n) invalid("terminal state out of range");
  }
  std::sort(data_.terminal.begin(), data_.terminal.end());
}

std::optional<StateId> ModelSnapshot::find_state(std::string_view name) const {
  auto it = std::find(data_.states.begin(), data_.states.end(), name);
  if (it == data_.states.end()) return std::nullopt;
  return state_at(static_cast<std::size_t>(it - data_.states.begin()));
}

std::optional<ActionId> ModelSnapshot::find_action(std::string_view name) const {
  auto it = std::find(data_.actions.begin(), data_.actions.end(), name);
  if (it == data_.actions.end()) return std::nullopt;
  return action_at(static_cast<std::size_t>(it - data_.actions.begin()));
}

const SnapshotChoice* ModelSnapshot::find_choice(StateId s, ActionId a) const {
  for (const auto& choice : choices(s)) {
    if (choice.action == a) return &choice;
  }
  return nullptr;
}

double ModelSnapshot::transition_probability(StateId s, ActionId a, StateId s2) const {
  const auto* choice = find_choice(s, a);
  if (choice == nullptr) {
    throw Error(ErrorCode::NeverObserved,
                "(" + state_name(s) + ", " + action_name(a) + ") was never observed");
  }
  for (const auto& succ : choice->successors) {
    if (succ.state == s2) return succ.probability;
  }
  return 0.0;
}

std::vector<ActionId> ModelSnapshot::enabled_actions(StateId s) const {
  std::vector<ActionId> out;
  for (const auto& choice : choices(s)) out.push_back(choice.action);
  return out;
}

std::vector<std::pair<ActionId, double>> ModelSnapshot::empirical_policy(StateId s) const {
  double total = 0.0;
  for (const auto& choice : choices(s)) {
    if (!is_reserved_action(action_name(choice.action))) total += choice.weight;
  }
  if (total <= 0.0) throw Error(ErrorCode::NeverObserved, "no action observed in state " + state_name(s));
  std::vector<std::pair<ActionId, double>> out;
  for (const auto& choice : choices(s)) {
    if (!is_reserved_action(action_name(choice.action))) out.emplace_back(choice.action, choice.weight / total);
  }
  return out;
}

ModelSnapshot ModelSnapshot::induced_chain() const {
  SnapshotData chain;
  chain.states = data_.states;
  chain.actions = {std::string(kPolicyAction)};
  chain.labels = data_.labels;
  chain.terminal = data_.terminal;
  chain.initial = data_.initial;
  chain.reward_names = data_.reward_names;
  chain.revision = data_.revision;
  chain.exact = data_.exact;
  chain.choices.resize(data_.states.size());
  const std::size_t reward_count = data_.reward_names.size();

  for (std::size_t s = 0; s < data_.states.size(); ++s) {
    const auto& row = data_.choices[s];
    if (row.empty()) continue;
    // Mixing by frequency: P(s'|s) = sum_a w(s,a,s') / sum_a w(s,a).
    std::map<std::size_t, SnapshotSuccessor> merged;
    double total = 0.0;
    for (const auto& choice : row) {
      total += choice.weight;
      for (const auto& succ : choice.successors) {
        auto& m = merged[index_of(succ.state)];
        m.state = succ.state;
        if (m.rewards.empty()) m.rewards.assign(reward_count, 0.0);
        m.weight += succ.weight;
        for (std::size_t r = 0; r < reward_count; ++r) m.rewards[r] += succ.weight * succ.rewards[r];
      }
    }
    SnapshotChoice out;
    out.action = action_at(0);
    out.weight = total;
    for (auto& [_, succ] : merged) {
      for (auto& r : succ.rewards) r /= succ.weight;
      succ.probability = succ.weight / total;
      out.successors.push_back(std::move(succ));
    }
    chain.choices[s].push_back(std::move(out));
  }
  return ModelSnapshot(std::move(chain));
}

bool ModelSnapshot::is_terminal(StateId s) const {
  return std::binary_search(data_.terminal.begin(), data_.terminal.end(), s);
}

std::optional<std::size_t> ModelSnapshot::reward_index(std::string_view name) const {
  auto it = std::find(data_.reward_names.begin(), data_.reward_names.end(), name);
  if (it == data_.reward_names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - data_.reward_names.begin());
}

std::map<std::string, std::vector<StateId>> derive_labels(
    const std::map<std::string, std::vector<StateId>>& state_labels,
    const std::map<std::string, std::string, std::less<>>& action_labels,
    const std::vector<std::string>& action_names,
    const std::vector<std::vector<SnapshotChoice>>& choices) {
  auto labels = state_labels;
  if (action_labels.empty()) return labels;
  for (const auto& row : choices) {
    for (const auto& choice : row) {
      auto it = action_labels.find(action_names.at(index_of(choice.action)));
      if (it == action_labels.end()) continue;
      auto& target = labels[it->second];
      for (const auto& succ : choice.successors) target.push_back(succ.state);
    }
  }
  for (auto& [_, states] : labels) {
    std::sort(states.begin(), states.end());
    states.erase(std::unique(states.begin(), states.end()), states.end());
  }
  return labels;
}

// ---------------------------------------------------------------------------
// LearnedMdp

LearnedMdp::LearnedMdp(LearnerSettings settings) : settings_(settings) {
  if (!(settings_.smoothing_alpha >= 0.0) || !std::isfinite(settings_.smoothing_alpha)) {
    throw Error(ErrorCode::InvalidModel, "smoothing alpha must be a finite nonnegative number");
  }
  if (!(settings_.prune_epsilon >= 0.0)) {
    throw Error(ErrorCode::InvalidModel, "prune epsilon must be nonnegative");
  }
}

StateId LearnedMdp::add_state(std::string_view name) {
  if (auto found = lookup(state_index_, name)) return state_at(*found);
  if (!is_identifier(name)) {
    throw Error(ErrorCode::UnknownState, "invalid state name '" + std::string(name) + "'");
  }
  auto idx = static_cast<std::uint32_t>(states_.size());
  states_.emplace_back(name);
  state_index_.emplace(std::string(name), idx);
  choices_.emplace_back();
  terminal_.push_back(false);
  ++revision_;
  return state_at(idx);
}

ActionId LearnedMdp::add_action(std::string_view name) {
  if (auto found = lookup(action_index_, name)) return action_at(*found);
  if (!is_identifier(name)) {
    throw Error(ErrorCode::UnknownAction, "invalid action name '" + std::string(name) + "'");
  }
  auto idx = static_cast<std::uint32_t>(actions_.size());
  actions_.emplace_back(name);
  action_index_.emplace(std::string(name), idx);
  ++revision_;
  return action_at(idx);
}

std::optional<StateId> LearnedMdp::find_state(std::string_view name) const {
  if (auto found = lookup(state_index_, name)) return state_at(*found);
  return std::nullopt;
}

std::optional<ActionId> LearnedMdp::find_action(std::string_view name) const {
  if (auto found = lookup(action_index_, name)) return action_at(*found);
  return std::nullopt;
}

void LearnedMdp::set_initial(StateId s) {
  if (index_of(s) >= states_.size()) throw Error(ErrorCode::UnknownState, "initial state out of range");
  initial_ = s;
  ++revision_;
}

void LearnedMdp::set_terminal(StateId s) {
  terminal_.at(index_of(s)) = true;
  ++revision_;
}

void LearnedMdp::add_label(const std::string& label, StateId s) {
  if (index_of(s) >= states_.size()) throw Error(ErrorCode::UnknownState, "label on unknown state");
  labels_[label].push_back(s);
  ++revision_;
}

void LearnedMdp::set_action_label(std::string action, std::string label) {
  action_labels_[std::move(action)] = std::move(label);
  ++revision_;
}

void LearnedMdp::add_reward_structure(RewardStructure structure) {
  if (!std::isfinite(structure.per_step)) throw Error(ErrorCode::InvalidModel, "non-finite reward");
  for (const auto& o : structure.overrides) {
    if (!std::isfinite(o.value)) throw Error(ErrorCode::InvalidModel, "non-finite reward");
  }
  auto it = std::find_if(rewards_.begin(), rewards_.end(),
                         [&](const RewardStructure& r) { return r.name == structure.name; });
  if (it != rewards_.end()) {
    *it = std::move(structure);
  } else {
    rewards_.push_back(std::move(structure));
  }
  ++revision_;
}

StateId LearnedMdp::resolve_state(const std::string& name) {
  if (auto found = lookup(state_index_, name)) return state_at(*found);
  if (settings_.mode == RegistrationMode::Strict) {
    throw Error(ErrorCode::UnknownState, "unknown state '" + name + "'");
  }
  return add_state(name);
}

ActionId LearnedMdp::resolve_action(const std::string& name) {
  if (auto found = lookup(action_index_, name)) return action_at(*found);
  if (settings_.mode == RegistrationMode::Strict && !is_reserved_action(name)) {
    throw Error(ErrorCode::UnknownAction, "unknown action '" + name + "'");
  }
  return add_action(name);
}

void LearnedMdp::check_names(const TransitionEvent& ev) const {
  if (ev.reward && !std::isfinite(*ev.reward)) throw Error(ErrorCode::InvalidModel, "non-finite reward");
  if (settings_.mode != RegistrationMode::Strict) {
    for (const auto* name : {&ev.state, &ev.next_state}) {
      if (!lookup(state_index_, *name) && !is_identifier(*name)) {
        throw Error(ErrorCode::UnknownState, "invalid state name '" + *name + "'");
      }
    }
    if (!lookup(action_index_, ev.action) && !is_identifier(ev.action)) {
      throw Error(ErrorCode::UnknownAction, "invalid action name '" + ev.action + "'");
    }
    return;
  }
  for (const auto* name : {&ev.state, &ev.next_state}) {
    if (!lookup(state_index_, *name)) throw Error(ErrorCode::UnknownState, "unknown state '" + *name + "'");
  }
  if (!lookup(action_index_, ev.action) && !is_reserved_action(ev.action)) {
    throw Error(ErrorCode::UnknownAction, "unknown action '" + ev.action + "'");
  }
}

std::uint64_t LearnedMdp::record_transition(const TransitionEvent& ev) {
  check_names(ev);
  const auto s = static_cast<std::uint32_t>(index_of(resolve_state(ev.state)));
  const auto a = static_cast<std::uint32_t>(index_of(resolve_action(ev.action)));
  const auto s2 = static_cast<std::uint32_t>(index_of(resolve_state(ev.next_state)));
  if (!initial_) initial_ = state_at(s);

  auto& row = choices_[s];
  auto cit = std::lower_bound(row.begin(), row.end(), a,
                              [](const Choice& c, std::uint32_t act) { return c.action < act; });
  if (cit == row.end() || cit->action != a) cit = row.insert(cit, Choice{a, 0.0, {}});
  auto& succs = cit->successors;
  auto sit = std::lower_bound(succs.begin(), succs.end(), s2,
                              [](const Successor& x, std::uint32_t st) { return x.state < st; });
  if (sit == succs.end() || sit->state != s2) sit = succs.insert(sit, Successor{s2, 0.0, 0.0, 0.0});
  sit->weight += 1.0;
  cit->total += 1.0;
  if (ev.reward) {
    sit->reward_sum += *ev.reward;
    sit->reward_weight += 1.0;
  }
  return ++revision_;
}

void LearnedMdp::apply_forgetting(double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::InvalidDecay, "decay factor must lie in (0, 1], got " + std::to_string(lambda));
  }
  if (lambda == 1.0) return;
  for (auto& row : choices_) {
    for (auto& choice : row) {
      std::erase_if(choice.successors, [&](Successor& succ) {
        succ.weight *= lambda;
        succ.reward_sum *= lambda;
        succ.reward_weight *= lambda;
        return succ.weight < settings_.prune_epsilon;
      });
      choice.total = 0.0;
      for (const auto& succ : choice.successors) choice.total += succ.weight;
    }
    std::erase_if(row, [](const Choice& c) { return c.successors.empty(); });
  }
  decayed_ = true;
  ++revision_;
}

const LearnedMdp::Choice* LearnedMdp::find_choice(std::uint32_t s, std::uint32_t a) const {
  for (const auto& c : choices_.at(s)) {
    if (c.action == a) return &c;
  }
  return nullptr;
}

double LearnedMdp::count(StateId s, ActionId a, StateId s2) const {
  const auto* c = find_choice(static_cast<std::uint32_t>(index_of(s)), static_cast<std::uint32_t>(index_of(a)));
  if (c == nullptr) return 0.0;
  for (const auto& succ : c->successors) {
    if (succ.state == index_of(s2)) return succ.weight;
  }
  return 0.0;
}

double LearnedMdp::action_count(StateId s, ActionId a) const {
  const auto* c = find_choice(static_cast<std::uint32_t>(index_of(s)), static_cast<std::uint32_t>(index_of(a)));
  return c == nullptr ? 0.0 : c->total;
}

namespace {

// Reward structure with override names resolved to indices. An override
// naming something the model does not know can never match.
struct ResolvedStructure {
  struct Pattern {
    std::optional<std::int64_t> state, action, next_state;
    int specificity;
    double value;
  };
  bool observed = false;
  double per_step = 0.0;
  std::vector<Pattern> patterns;  // most specific first, stable

  double value(std::size_t s, std::size_t a, std::size_t s2, double observed_mean) const {
    if (observed) return observed_mean;
    for (const auto& p : patterns) {
      if (p.state && *p.state != std::int64_t(s)) continue;
      if (p.action && *p.action != std::int64_t(a)) continue;
      if (p.next_state && *p.next_state != std::int64_t(s2)) continue;
      return p.value;
    }
    return per_step;
  }
};

}  // namespace

ModelSnapshot LearnedMdp::snapshot() const {
  SnapshotData data;
  data.states = states_;
  data.actions = actions_;
  data.initial = initial_;
  data.revision = revision_;
  const double alpha = settings_.smoothing_alpha;
  data.exact = !decayed_ && alpha == std::floor(alpha);
  for (std::size_t s = 0; s < terminal_.size(); ++s) {
    if (terminal_[s]) data.terminal.push_back(state_at(s));
  }

  std::vector<ResolvedStructure> resolved;
  auto resolve_name = [](const auto& index, const std::optional<std::string>& name,
                         bool& matchable) -> std::optional<std::int64_t> {
    if (!name) return std::nullopt;
    auto found = lookup(index, *name);
    if (!found) {
      matchable = false;
      return std::int64_t{-1};
    }
    return std::int64_t(*found);
  };
  for (const auto& rs : rewards_) {
    ResolvedStructure r;
    r.per_step = rs.per_step;
    for (const auto& o : rs.overrides) {
      bool matchable = true;
      ResolvedStructure::Pattern p{resolve_name(state_index_, o.state, matchable),
                                   resolve_name(action_index_, o.action, matchable),
                                   resolve_name(state_index_, o.next_state, matchable), o.specificity(), o.value};
      if (matchable) r.patterns.push_back(p);
    }
    std::stable_sort(r.patterns.begin(), r.patterns.end(),
                     [](const auto& x, const auto& y) { return x.specificity > y.specificity; });
    data.reward_names.push_back(rs.name);
    resolved.push_back(std::move(r));
  }
  auto declared = [&](std::string_view name) {
    return std::find(data.reward_names.begin(), data.reward_names.end(), name) != data.reward_names.end();
  };
  if (!declared(kStepsReward)) {
    ResolvedStructure steps;
    steps.per_step = 1.0;
    data.reward_names.emplace_back(kStepsReward);
    resolved.push_back(std::move(steps));
  }
  if (!declared(kObservedReward)) {
    ResolvedStructure observed;
    observed.observed = true;
    data.reward_names.emplace_back(kObservedReward);
    resolved.push_back(std::move(observed));
  }

  auto make_successor = [&](std::size_t s, std::size_t a, std::size_t s2, double weight, double observed_mean) {
    SnapshotSuccessor out;
    out.state = state_at(s2);
    out.weight = weight;
    out.rewards.reserve(resolved.size());
    for (const auto& r : resolved) out.rewards.push_back(r.value(s, a, s2, observed_mean));
    return out;
  };

  data.choices.resize(states_.size());
  for (std::size_t s = 0; s < states_.size(); ++s) {
    for (const auto& choice : choices_[s]) {
      SnapshotChoice out;
      out.action = action_at(choice.action);
      if (alpha > 0.0) {
        // Laplace smoothing over every declared successor.
        auto it = choice.successors.begin();
        for (std::size_t s2 = 0; s2 < states_.size(); ++s2) {
          double w = alpha;
          double mean = 0.0;
          if (it != choice.successors.end() && it->state == s2) {
            w += it->weight;
            if (it->reward_weight > 0.0) mean = it->reward_sum / it->reward_weight;
            ++it;
          }
          out.successors.push_back(make_successor(s, choice.action, s2, w, mean));
          out.weight += w;
        }
      } else {
        for (const auto& succ : choice.successors) {
          double mean = succ.reward_weight > 0.0 ? succ.reward_sum / succ.reward_weight : 0.0;
          out.successors.push_back(make_successor(s, choice.action, succ.state, succ.weight, mean));
        }
        out.weight = choice.total;
      }
      for (auto& succ : out.successors) succ.probability = succ.weight / out.weight;
      data.choices[s].push_back(std::move(out));
    }
  }

  // Action-occurrence labels come from what was actually observed, before
  // smoothing adds unobserved successors.
  if (alpha > 0.0 && !action_labels_.empty()) {
    std::vector<std::vector<SnapshotChoice>> raw(states_.size());
    for (std::size_t s = 0; s < states_.size(); ++s) {
      for (const auto& choice : choices_[s]) {
        SnapshotChoice c;
        c.action = action_at(choice.action);
        for (const auto& succ : choice.successors) c.successors.push_back({state_at(succ.state), 0.0, 0.0, {}});
        raw[s].push_back(std::move(c));
      }
    }
    data.labels = derive_labels(labels_, action_labels_, actions_, raw);
  } else {
    data.labels = derive_labels(labels_, action_labels_, actions_, data.choices);
  }
  return ModelSnapshot(std::move(data));
}

}  // namespace agentguard
