#include "agentguard/simulator.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace agentguard::sim {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidScenario, what); }

constexpr double kSumTolerance = 1e-12;

void check_sum(double sum, const std::string& where) {
  if (std::abs(sum - 1.0) > kSumTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << where << ": probabilities sum to " << sum;
    invalid(msg.str());
  }
}

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <typename Item, typename Prob>
std::size_t sample(std::mt19937_64& rng, const std::vector<Item>& items, Prob prob) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  std::size_t last = items.size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double p = prob(items[i]);
    if (p <= 0.0) continue;
    cumulative += p;
    last = i;
    if (u < cumulative) return i;
  }
  return last;
}

}  // namespace

std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t episode) noexcept {
  std::uint64_t state = seed + episode * 0x9E3779B97F4A7C15ULL;
  return splitmix64(state);
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

bool Scenario::is_terminal(std::string_view state) const {
  return std::find(episode.terminals.begin(), episode.terminals.end(), state) != episode.terminals.end();
}

void Scenario::validate() const {
  std::set<std::string, std::less<>> state_names;
  for (const auto& s : states) {
    if (!is_identifier(s.name)) invalid("invalid state name '" + s.name + "'");
    if (!state_names.insert(s.name).second) invalid("duplicate state '" + s.name + "'");
  }
  std::set<std::string, std::less<>> action_names(actions.begin(), actions.end());
  if (action_names.size() != actions.size()) invalid("duplicate action");
  for (const auto& a : actions) {
    if (!is_identifier(a)) invalid("invalid action name '" + a + "'");
  }
  if (!state_names.contains(episode.initial)) invalid("episode.initial '" + episode.initial + "' is not a state");
  for (const auto& t : episode.terminals) {
    if (!state_names.contains(t)) invalid("terminal '" + t + "' is not a state");
  }
  if (is_terminal(episode.initial)) invalid("the initial state is terminal");
  if (episode.max_steps == 0) invalid("episode.max_steps must be >= 1");

  for (const auto& [state, dist] : policy) {
    if (!state_names.contains(state)) invalid("policy for unknown state '" + state + "'");
    double sum = 0.0;
    for (const auto& [action, p] : dist) {
      if (!action_names.contains(action)) invalid("policy of '" + state + "' uses unknown action '" + action + "'");
      if (!(p >= 0.0)) invalid("negative probability in policy of '" + state + "'");
      sum += p;
      if (p > 0.0 && !dynamics.contains({state, action})) {
        invalid("no dynamics for (" + state + ", " + action + ")");
      }
    }
    check_sum(sum, "policy of '" + state + "'");
  }
  for (const auto& [key, outcomes] : dynamics) {
    if (!state_names.contains(key.first)) invalid("dynamics for unknown state '" + key.first + "'");
    if (!action_names.contains(key.second)) invalid("dynamics for unknown action '" + key.second + "'");
    double sum = 0.0;
    for (const auto& o : outcomes) {
      if (!state_names.contains(o.next_state)) invalid("dynamics lead to unknown state '" + o.next_state + "'");
      if (!(o.probability >= 0.0)) invalid("negative probability in dynamics");
      sum += o.probability;
    }
    check_sum(sum, "dynamics of (" + key.first + ", " + key.second + ")");
  }
  auto needs_policy = [&](const std::string& state) {
    if (!is_terminal(state) && !policy.contains(state)) invalid("live state '" + state + "' has no policy");
  };
  needs_policy(episode.initial);
  for (const auto& [key, outcomes] : dynamics) {
    for (const auto& o : outcomes) needs_policy(o.next_state);
  }
  for (std::size_t i = 1; i < drift.size(); ++i) {
    if (drift[i].after_events <= drift[i - 1].after_events) invalid("drift points must be strictly increasing");
  }
}

Scenario Scenario::patched(const DriftPatch& patch) const {
  Scenario out = *this;
  for (const auto& [state, dist] : patch.policy) out.policy[state] = dist;
  for (const auto& [key, outcomes] : patch.dynamics) out.dynamics[key] = outcomes;
  out.drift.clear();
  return out;
}

TransitionEvent step(const Scenario& sc, std::mt19937_64& rng, std::string_view current) {
  if (sc.is_terminal(current)) throw Error(ErrorCode::TerminalState, "'" + std::string(current) + "' is terminal");
  auto pit = sc.policy.find(std::string(current));
  if (pit == sc.policy.end() || pit->second.empty()) {
    invalid("no policy for state '" + std::string(current) + "'");
  }
  const auto& dist = pit->second;
  const auto& action = dist[sample(rng, dist, [](const auto& e) { return e.second; })].first;
  auto dit = sc.dynamics.find({std::string(current), action});
  if (dit == sc.dynamics.end() || dit->second.empty()) {
    invalid("no dynamics for (" + std::string(current) + ", " + action + ")");
  }
  const auto& outcome = dit->second[sample(rng, dit->second, [](const Outcome& o) { return o.probability; })];
  return TransitionEvent{std::string(current), action, outcome.next_state, outcome.reward, std::nullopt};
}

std::vector<TraceRecord> generate_trace(const Scenario& sc, std::uint64_t n_events) {
  sc.validate();
  std::vector<TraceRecord> out;
  out.reserve(n_events);
  Scenario active = sc;
  active.drift.clear();
  std::size_t next_drift = 0;
  std::uint64_t episode = 0;
  std::mt19937_64 rng(episode_seed(sc.seed, episode));
  std::string current = sc.episode.initial;
  std::uint64_t steps = 0;
  for (std::uint64_t i = 0; i < n_events; ++i) {
    while (next_drift < sc.drift.size() && sc.drift[next_drift].after_events == i) {
      active = active.patched(sc.drift[next_drift++]);
      active.validate();
    }
    if (sc.is_terminal(current) || steps >= sc.episode.max_steps) {
      ++episode;
      rng.seed(episode_seed(sc.seed, episode));
      current = sc.episode.initial;
      steps = 0;
    }
    TraceRecord rec;
    rec.seq = i + 1;
    rec.session = sc.session;
    rec.ts = static_cast<std::int64_t>(i);
    rec.event = step(active, rng, current);
    rec.event.timestamp_ms = rec.ts;
    current = rec.event.next_state;
    ++steps;
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// YAML

namespace {

std::string path_join(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

double probability(const YAML::Node& n, const std::string& path) {
  try {
    return n.as<double>();
  } catch (const YAML::Exception&) {
    invalid(path + ": expected a probability");
  }
}

Distribution read_policy_row(const YAML::Node& n, const std::string& path) {
  if (!n.IsMap()) invalid(path + ": expected action: probability pairs");
  Distribution dist;
  for (const auto& kv : n) {
    auto action = kv.first.as<std::string>();
    dist.emplace_back(action, probability(kv.second, path_join(path, action)));
  }
  return dist;
}

std::vector<Outcome> read_outcomes(const YAML::Node& n, const std::string& path) {
  std::vector<Outcome> out;
  if (n.IsMap()) {
    for (const auto& kv : n) {
      auto next = kv.first.as<std::string>();
      out.push_back({next, probability(kv.second, path_join(path, next)), std::nullopt});
    }
    return out;
  }
  if (!n.IsSequence()) invalid(path + ": expected outcomes");
  for (std::size_t i = 0; i < n.size(); ++i) {
    auto item = n[i];
    auto ip = path + "[" + std::to_string(i) + "]";
    if (!item.IsMap() || !item["to"] || !item["p"]) invalid(ip + ": expected {to, p, reward?}");
    for (const auto& kv : item) {
      auto key = kv.first.as<std::string>();
      if (key != "to" && key != "p" && key != "reward") invalid(path_join(ip, key) + ": unknown key");
    }
    Outcome o{item["to"].as<std::string>(), probability(item["p"], ip + ".p"), std::nullopt};
    if (item["reward"]) o.reward = probability(item["reward"], ip + ".reward");
    out.push_back(std::move(o));
  }
  return out;
}

void read_dynamics(const YAML::Node& n, const std::string& path,
                   std::map<std::pair<std::string, std::string>, std::vector<Outcome>>& out) {
  if (!n.IsMap()) invalid(path + ": expected state: {action: outcomes}");
  for (const auto& row : n) {
    auto state = row.first.as<std::string>();
    if (!row.second.IsMap()) invalid(path_join(path, state) + ": expected action: outcomes");
    for (const auto& cell : row.second) {
      auto action = cell.first.as<std::string>();
      out[{state, action}] = read_outcomes(cell.second, path_join(path_join(path, state), action));
    }
  }
}

void read_policy(const YAML::Node& n, const std::string& path, std::map<std::string, Distribution>& out) {
  if (!n.IsMap()) invalid(path + ": expected state: {action: probability}");
  for (const auto& row : n) {
    auto state = row.first.as<std::string>();
    out[state] = read_policy_row(row.second, path_join(path, state));
  }
}

}  // namespace

Scenario load_scenario(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    invalid(std::string("YAML syntax: ") + e.what());
  }
  if (!root.IsMap()) invalid("scenario must be a mapping");
  static const std::set<std::string> known = {"seed", "session", "states", "actions", "policy",
                                              "dynamics", "drift", "episode"};
  for (const auto& kv : root) {
    if (!known.contains(kv.first.as<std::string>())) invalid(kv.first.as<std::string>() + ": unknown key");
  }
  Scenario sc;
  try {
    if (root["seed"]) sc.seed = root["seed"].as<std::uint64_t>();
    if (root["session"]) sc.session = root["session"].as<std::string>();
    if (root["states"]) {
      for (const auto& s : root["states"]) {
        StateDecl decl;
        if (s.IsScalar()) {
          decl.name = s.as<std::string>();
        } else {
          decl.name = s["name"].as<std::string>();
          if (s["labels"]) decl.labels = s["labels"].as<std::vector<std::string>>();
        }
        sc.states.push_back(std::move(decl));
      }
    }
    if (root["actions"]) sc.actions = root["actions"].as<std::vector<std::string>>();
    auto ep = root["episode"];
    if (!ep || !ep.IsMap()) invalid("episode: missing");
    if (!ep["initial"]) invalid("episode.initial: missing");
    sc.episode.initial = ep["initial"].as<std::string>();
    if (ep["terminals"]) sc.episode.terminals = ep["terminals"].as<std::vector<std::string>>();
    if (ep["max_steps"]) sc.episode.max_steps = ep["max_steps"].as<std::uint64_t>();
    if (root["policy"]) read_policy(root["policy"], "policy", sc.policy);
    if (root["dynamics"]) read_dynamics(root["dynamics"], "dynamics", sc.dynamics);
    if (auto drift = root["drift"]) {
      for (std::size_t i = 0; i < drift.size(); ++i) {
        auto path = "drift[" + std::to_string(i) + "]";
        DriftPatch patch;
        if (!drift[i]["after_events"]) invalid(path + ".after_events: missing");
        patch.after_events = drift[i]["after_events"].as<std::uint64_t>();
        if (drift[i]["policy"]) read_policy(drift[i]["policy"], path + ".policy", patch.policy);
        if (drift[i]["dynamics"]) read_dynamics(drift[i]["dynamics"], path + ".dynamics", patch.dynamics);
        sc.drift.push_back(std::move(patch));
      }
    }
  } catch (const YAML::Exception& e) {
    invalid(std::string("malformed scenario: ") + e.what());
  }
  sc.validate();
  Scenario cumulative = sc;
  for (const auto& patch : sc.drift) {
    cumulative = cumulative.patched(patch);
    cumulative.validate();
  }
  return sc;
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) invalid("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_scenario(buf.str());
}

}  // namespace agentguard::sim
