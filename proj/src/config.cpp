#include "agentguard/config.hpp"

#include <spdlog/spdlog.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace agentguard {

std::string_view to_string(Severity s) noexcept {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Warn: return "warn";
    case Severity::Critical: return "critical";
  }
  return "warn";
}

bool GuardConfig::has_state(std::string_view name) const {
  return std::any_of(states.begin(), states.end(), [&](const StateDecl& s) { return s.name == name; });
}

bool GuardConfig::has_action(std::string_view name) const {
  return std::find(actions.begin(), actions.end(), name) != actions.end();
}

pctl::Vocabulary GuardConfig::vocabulary() const {
  pctl::Vocabulary v;
  for (const auto& s : states) {
    v.states.insert(s.name);
    v.labels.insert(s.labels.begin(), s.labels.end());
  }
  for (const auto& [_, label] : action_labels) v.labels.insert(label);
  for (const auto& r : rewards) v.reward_structures.insert(r.name);
  v.reward_structures.insert(std::string(kStepsReward));
  v.reward_structures.insert(std::string(kObservedReward));
  v.mode = checker.mode;
  v.open = learner.mode == RegistrationMode::Open;
  return v;
}

LearnedMdp GuardConfig::make_model() const {
  LearnedMdp model({learner.mode, learner.smoothing_alpha, learner.prune_epsilon});
  for (const auto& s : states) {
    auto id = model.add_state(s.name);
    for (const auto& label : s.labels) model.add_label(label, id);
  }
  for (const auto& a : actions) model.add_action(a);
  if (initial) model.set_initial(model.add_state(*initial));
  for (const auto& t : terminal) model.set_terminal(model.add_state(t));
  for (const auto& [action, label] : action_labels) model.set_action_label(action, label);
  for (const auto& r : rewards) model.add_reward_structure(r);
  return model;
}

pctl::Property validate_against_config(const pctl::Property& p, const GuardConfig& cfg) {
  pctl::validate(p, cfg.vocabulary());
  return p;
}

std::map<std::string, std::vector<StateId>> label_states(const GuardConfig& cfg, const ModelSnapshot& snap) {
  auto out = snap.labels();
  for (const auto& s : cfg.states) {
    auto id = snap.find_state(s.name);
    if (!id) continue;
    for (const auto& label : s.labels) {
      auto& ids = out[label];
      if (std::find(ids.begin(), ids.end(), *id) == ids.end()) ids.insert(std::upper_bound(ids.begin(), ids.end(), *id), *id);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// YAML loading

namespace {

class Loader {
 public:
  GuardConfig load(const YAML::Node& root) {
    if (!root.IsMap()) {
      if (root.IsNull()) throw ConfigError("", "empty configuration");
      throw ConfigError("", "top level must be a mapping");
    }
    static const std::set<std::string> known = {"states",  "actions",    "initial",  "terminal", "action_labels",
                                                "outcomes", "rewards",   "properties", "learner", "checker",
                                                "analysis", "api"};
    for (const auto& kv : root) {
      auto key = kv.first.as<std::string>();
      if (!known.contains(key)) throw ConfigError(key, "unknown key");
    }
    GuardConfig cfg;
    states(root["states"], cfg);
    actions(root["actions"], cfg);
    learner(root["learner"], cfg);
    if (auto n = root["initial"]) {
      cfg.initial = scalar(n, "initial");
      if (cfg.declares_states() && !cfg.has_state(*cfg.initial)) {
        throw ConfigError("initial", "unknown state '" + *cfg.initial + "'");
      }
      if (!is_identifier(*cfg.initial)) throw ConfigError("initial", "invalid state name");
    }
    if (auto n = root["terminal"]) {
      auto list = sequence(n, "terminal");
      for (std::size_t i = 0; i < list.size(); ++i) {
        auto path = "terminal[" + std::to_string(i) + "]";
        auto name = scalar(list[i], path);
        if (!known_state(cfg, name)) throw ConfigError(path, "unknown state '" + name + "'");
        cfg.terminal.push_back(name);
      }
    }
    name_map(root["action_labels"], "action_labels", cfg.action_labels, [&](const std::string& path, const std::string& k,
                                                                            const std::string& v) {
      if (!known_action(cfg, k)) throw ConfigError(path, "unknown action '" + k + "'");
      if (!is_identifier(v)) throw ConfigError(path, "invalid label name '" + v + "'");
    });
    name_map(root["outcomes"], "outcomes", cfg.outcomes, [&](const std::string& path, const std::string&,
                                                             const std::string& v) {
      if (!known_state(cfg, v)) throw ConfigError(path, "unknown state '" + v + "'");
    });
    rewards(root["rewards"], cfg);
    checker(root["checker"], cfg);
    analysis(root["analysis"], cfg);
    api(root["api"], cfg);
    properties(root["properties"], cfg);
    return cfg;
  }

 private:
  static std::string scalar(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) throw ConfigError(path, "expected a scalar");
    return n.Scalar();
  }

  template <typename T>
  static T number(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) throw ConfigError(path, "expected a number");
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(path, "expected a number, got '" + n.Scalar() + "'");
    }
  }

  static std::vector<YAML::Node> sequence(const YAML::Node& n, const std::string& path) {
    if (n.IsNull()) return {};
    if (!n.IsSequence()) throw ConfigError(path, "expected a list");
    return {n.begin(), n.end()};
  }

  static void only_keys(const YAML::Node& n, const std::string& path, std::initializer_list<std::string_view> keys) {
    if (!n.IsMap()) throw ConfigError(path, "expected a mapping");
    for (const auto& kv : n) {
      auto key = kv.first.as<std::string>();
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        throw ConfigError(path.empty() ? key : path + "." + key, "unknown key");
      }
    }
  }

  static bool known_state(const GuardConfig& cfg, const std::string& name) {
    return cfg.declares_states() ? cfg.has_state(name) : is_identifier(name);
  }
  static bool known_action(const GuardConfig& cfg, const std::string& name) {
    return cfg.actions.empty() ? is_identifier(name) : (cfg.has_action(name) || is_reserved_action(name));
  }

  template <typename Check>
  static void name_map(const YAML::Node& n, const std::string& path, std::map<std::string, std::string, std::less<>>& out,
                       Check check) {
    if (!n || n.IsNull()) return;
    if (!n.IsMap()) throw ConfigError(path, "expected a mapping");
    for (const auto& kv : n) {
      auto key = kv.first.as<std::string>();
      auto sub = path + "." + key;
      auto value = scalar(kv.second, sub);
      check(sub, key, value);
      out[key] = value;
    }
  }

  void states(const YAML::Node& n, GuardConfig& cfg) {
    if (!n) return;
    auto list = sequence(n, "states");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < list.size(); ++i) {
      auto path = "states[" + std::to_string(i) + "]";
      StateDecl decl;
      if (list[i].IsScalar()) {
        decl.name = list[i].Scalar();
      } else {
        only_keys(list[i], path, {"name", "labels"});
        if (!list[i]["name"]) throw ConfigError(path + ".name", "missing");
        decl.name = scalar(list[i]["name"], path + ".name");
        if (auto labels = list[i]["labels"]) {
          auto ls = sequence(labels, path + ".labels");
          for (std::size_t j = 0; j < ls.size(); ++j) {
            auto lp = path + ".labels[" + std::to_string(j) + "]";
            auto label = scalar(ls[j], lp);
            if (!is_identifier(label)) throw ConfigError(lp, "invalid label name '" + label + "'");
            decl.labels.push_back(label);
          }
        }
      }
      if (!is_identifier(decl.name)) throw ConfigError(path, "invalid state name '" + decl.name + "'");
      if (!seen.insert(decl.name).second) throw ConfigError(path, "duplicate state '" + decl.name + "'");
      cfg.states.push_back(std::move(decl));
    }
  }

  void actions(const YAML::Node& n, GuardConfig& cfg) {
    if (!n) return;
    auto list = sequence(n, "actions");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < list.size(); ++i) {
      auto path = "actions[" + std::to_string(i) + "]";
      auto name = scalar(list[i], path);
      if (!is_identifier(name)) throw ConfigError(path, "invalid action name '" + name + "'");
      if (is_reserved_action(name)) throw ConfigError(path, "'" + name + "' is reserved");
      if (!seen.insert(name).second) throw ConfigError(path, "duplicate action '" + name + "'");
      cfg.actions.push_back(name);
    }
  }

  void learner(const YAML::Node& n, GuardConfig& cfg) {
    auto& l = cfg.learner;
    l.mode = cfg.declares_states() ? RegistrationMode::Strict : RegistrationMode::Open;
    if (!n) return;
    only_keys(n, "learner", {"mode", "smoothing_alpha", "prune_epsilon", "decay", "queue_capacity", "queue_policy"});
    if (auto m = n["mode"]) {
      auto mode = scalar(m, "learner.mode");
      if (mode == "strict") {
        l.mode = RegistrationMode::Strict;
      } else if (mode == "open") {
        l.mode = RegistrationMode::Open;
      } else {
        throw ConfigError("learner.mode", "expected strict or open");
      }
      if (l.mode == RegistrationMode::Strict && !cfg.declares_states()) {
        throw ConfigError("learner.mode", "strict mode needs declared states");
      }
    }
    if (auto a = n["smoothing_alpha"]) {
      l.smoothing_alpha = number<double>(a, "learner.smoothing_alpha");
      if (!(l.smoothing_alpha >= 0.0) || !std::isfinite(l.smoothing_alpha)) {
        throw ConfigError("learner.smoothing_alpha", "must be >= 0");
      }
    }
    if (auto e = n["prune_epsilon"]) {
      l.prune_epsilon = number<double>(e, "learner.prune_epsilon");
      if (!(l.prune_epsilon >= 0.0)) throw ConfigError("learner.prune_epsilon", "must be >= 0");
    }
    if (auto d = n["decay"]) {
      only_keys(d, "learner.decay", {"lambda", "every"});
      if (auto lam = d["lambda"]) l.decay.lambda = number<double>(lam, "learner.decay.lambda");
      if (!(l.decay.lambda > 0.0 && l.decay.lambda <= 1.0)) throw ConfigError("learner.decay.lambda", "must lie in (0, 1]");
      if (auto every = d["every"]) l.decay.every = number<std::uint64_t>(every, "learner.decay.every");
    }
    if (auto q = n["queue_capacity"]) {
      l.queue_capacity = number<std::size_t>(q, "learner.queue_capacity");
      if (l.queue_capacity == 0) throw ConfigError("learner.queue_capacity", "must be >= 1");
    }
    if (auto p = n["queue_policy"]) {
      auto policy = scalar(p, "learner.queue_policy");
      if (policy == "block") {
        l.queue_policy = QueuePolicy::Block;
      } else if (policy == "drop-oldest" || policy == "drop_oldest") {
        l.queue_policy = QueuePolicy::DropOldest;
      } else if (policy == "reject") {
        l.queue_policy = QueuePolicy::Reject;
      } else {
        throw ConfigError("learner.queue_policy", "expected block, drop-oldest or reject");
      }
    }
  }

  void rewards(const YAML::Node& n, GuardConfig& cfg) {
    if (!n) return;
    auto list = sequence(n, "rewards");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < list.size(); ++i) {
      auto path = "rewards[" + std::to_string(i) + "]";
      only_keys(list[i], path, {"name", "per_step", "overrides"});
      RewardStructure rs;
      if (!list[i]["name"]) throw ConfigError(path + ".name", "missing");
      rs.name = scalar(list[i]["name"], path + ".name");
      if (!is_identifier(rs.name)) throw ConfigError(path + ".name", "invalid reward structure name");
      if (!seen.insert(rs.name).second) throw ConfigError(path + ".name", "duplicate reward structure '" + rs.name + "'");
      if (auto ps = list[i]["per_step"]) rs.per_step = finite(ps, path + ".per_step");
      auto overrides = list[i]["overrides"] ? sequence(list[i]["overrides"], path + ".overrides") : std::vector<YAML::Node>{};
      std::set<std::tuple<std::string, std::string, std::string>> exact;
      for (std::size_t j = 0; j < overrides.size(); ++j) {
        auto op = path + ".overrides[" + std::to_string(j) + "]";
        only_keys(overrides[j], op, {"state", "action", "next_state", "value"});
        RewardOverride o;
        if (auto s = overrides[j]["state"]) o.state = checked_state(cfg, s, op + ".state");
        if (auto a = overrides[j]["action"]) {
          o.action = scalar(a, op + ".action");
          if (!known_action(cfg, *o.action)) throw ConfigError(op + ".action", "unknown action '" + *o.action + "'");
        }
        if (auto s = overrides[j]["next_state"]) o.next_state = checked_state(cfg, s, op + ".next_state");
        if (!overrides[j]["value"]) throw ConfigError(op + ".value", "missing");
        o.value = finite(overrides[j]["value"], op + ".value");
        if (o.specificity() == 3 && !exact.emplace(*o.state, *o.action, *o.next_state).second) {
          throw ConfigError(op, "second override for the same transition");
        }
        rs.overrides.push_back(std::move(o));
      }
      cfg.rewards.push_back(std::move(rs));
    }
  }

  static double finite(const YAML::Node& n, const std::string& path) {
    double v = number<double>(n, path);
    if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
    return v;
  }

  static std::string checked_state(const GuardConfig& cfg, const YAML::Node& n, const std::string& path) {
    auto name = scalar(n, path);
    if (!known_state(cfg, name)) throw ConfigError(path, "unknown state '" + name + "'");
    return name;
  }

  void checker(const YAML::Node& n, GuardConfig& cfg) {
    if (!n) return;
    only_keys(n, "checker", {"epsilon", "max_iterations", "gamma", "mode"});
    auto& s = cfg.checker.settings;
    if (auto e = n["epsilon"]) s.epsilon = number<double>(e, "checker.epsilon");
    if (!(s.epsilon > 0.0)) throw ConfigError("checker.epsilon", "must be > 0");
    if (auto m = n["max_iterations"]) s.max_iterations = number<std::uint64_t>(m, "checker.max_iterations");
    if (s.max_iterations < 1) throw ConfigError("checker.max_iterations", "must be >= 1");
    if (auto g = n["gamma"]) s.gamma = number<double>(g, "checker.gamma");
    if (!(s.gamma > 0.0 && s.gamma <= 1.0)) throw ConfigError("checker.gamma", "must lie in (0, 1]");
    if (auto m = n["mode"]) {
      auto mode = scalar(m, "checker.mode");
      if (mode == "mdp") {
        cfg.checker.mode = pctl::ModelMode::Mdp;
      } else if (mode == "dtmc") {
        cfg.checker.mode = pctl::ModelMode::Dtmc;
      } else if (mode == "both") {
        cfg.checker.mode = pctl::ModelMode::Both;
      } else {
        throw ConfigError("checker.mode", "expected mdp, dtmc or both");
      }
    }
  }

  void analysis(const YAML::Node& n, GuardConfig& cfg) {
    if (!n) return;
    only_keys(n, "analysis", {"every_events", "also_every_ms"});
    if (auto e = n["every_events"]) cfg.analysis.every_events = number<std::uint64_t>(e, "analysis.every_events");
    if (cfg.analysis.every_events < 1) throw ConfigError("analysis.every_events", "must be >= 1");
    if (auto ms = n["also_every_ms"]; ms && !ms.IsNull()) {
      cfg.analysis.also_every_ms = number<std::uint64_t>(ms, "analysis.also_every_ms");
      if (*cfg.analysis.also_every_ms < 1) throw ConfigError("analysis.also_every_ms", "must be >= 1");
    }
  }

  void api(const YAML::Node& n, GuardConfig& cfg) {
    if (!n) return;
    only_keys(n, "api", {"listen", "max_clients", "heartbeat_ms", "history"});
    if (auto l = n["listen"]) cfg.api.listen = scalar(l, "api.listen");
    if (auto m = n["max_clients"]) cfg.api.max_clients = number<std::size_t>(m, "api.max_clients");
    if (auto h = n["heartbeat_ms"]) cfg.api.heartbeat_ms = number<std::uint64_t>(h, "api.heartbeat_ms");
    if (auto h = n["history"]) cfg.api.history = number<std::size_t>(h, "api.history");
    if (cfg.api.history < 1) throw ConfigError("api.history", "must be >= 1");
  }

  void properties(const YAML::Node& n, GuardConfig& cfg) {
    if (!n) return;
    auto list = sequence(n, "properties");
    const auto vocabulary = cfg.vocabulary();
    std::set<std::string> seen;
    for (std::size_t i = 0; i < list.size(); ++i) {
      auto path = "properties[" + std::to_string(i) + "]";
      PropertyDecl decl;
      YAML::Node formula;
      if (list[i].IsScalar()) {
        formula = list[i];
      } else {
        only_keys(list[i], path, {"name", "formula", "threshold", "on_violation", "severity"});
        formula = list[i]["formula"];
        if (!formula) throw ConfigError(path + ".formula", "missing");
      }
      decl.formula = scalar(formula, path + ".formula");
      try {
        decl.property = pctl::parse_property(decl.formula);
      } catch (const Error& e) {
        throw ConfigError(path + ".formula", e.what());
      }
      if (list[i].IsMap()) {
        if (auto t = list[i]["threshold"]) threshold(t, path + ".threshold", decl.property);
        if (auto cb = list[i]["on_violation"]) decl.on_violation = scalar(cb, path + ".on_violation");
        if (auto sev = list[i]["severity"]) {
          auto s = scalar(sev, path + ".severity");
          if (s == "info") {
            decl.severity = Severity::Info;
          } else if (s == "warn") {
            decl.severity = Severity::Warn;
          } else if (s == "critical") {
            decl.severity = Severity::Critical;
          } else {
            throw ConfigError(path + ".severity", "expected info, warn or critical");
          }
        }
        if (auto name = list[i]["name"]) decl.name = scalar(name, path + ".name");
      }
      if (decl.name.empty()) decl.name = pctl::format_property(decl.property);
      if (!seen.insert(decl.name).second) throw ConfigError(path + ".name", "duplicate property '" + decl.name + "'");
      decl.property.name = decl.name;
      try {
        pctl::validate(decl.property, vocabulary);
      } catch (const Error& e) {
        throw ConfigError(path + ".formula", std::string(to_string(e.code())) + ": " + e.what());
      }
      cfg.properties.push_back(std::move(decl));
    }
  }

  static void threshold(const YAML::Node& n, const std::string& path, pctl::Property& p) {
    only_keys(n, path, {"op", "value"});
    if (p.threshold) throw ConfigError(path, "the formula already carries a bound");
    if (!n["op"] || !n["value"]) throw ConfigError(path, "needs op and value");
    auto op = scalar(n["op"], path + ".op");
    pctl::Threshold t;
    if (op == ">=") {
      t.op = pctl::Comparison::GreaterEqual;
    } else if (op == ">") {
      t.op = pctl::Comparison::Greater;
    } else if (op == "<=") {
      t.op = pctl::Comparison::LessEqual;
    } else if (op == "<") {
      t.op = pctl::Comparison::Less;
    } else {
      throw ConfigError(path + ".op", "expected one of >=, >, <=, <");
    }
    t.value = number<double>(n["value"], path + ".value");
    if (p.measure == pctl::Measure::Probability && !(t.value >= 0.0 && t.value <= 1.0)) {
      throw ConfigError(path + ".value", "probability threshold outside [0, 1]");
    }
    if (p.measure == pctl::Measure::Reward && !(t.value >= 0.0 && std::isfinite(t.value))) {
      throw ConfigError(path + ".value", "reward threshold must be finite and >= 0");
    }
    p.threshold = t;
  }
};

}  // namespace

GuardConfig load_config(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ConfigError("", std::string("YAML syntax: ") + e.what());
  }
  try {
    return Loader().load(root);
  } catch (const YAML::Exception& e) {
    throw ConfigError("", e.what());
  }
}

GuardConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_config(buf.str());
}

// ---------------------------------------------------------------------------
// Raw events

RawEvent parse_raw_event(std::string_view json_line) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::TraceFormat, std::string("raw event is not JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::TraceFormat, "raw event must be an object");
  auto text = [&](const char* key) -> std::optional<std::string> {
    if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
    if (!doc[key].is_string()) throw Error(ErrorCode::TraceFormat, std::string(key) + " must be a string");
    return doc[key].get<std::string>();
  };
  RawEvent ev;
  auto kind = text("kind");
  if (!kind) throw Error(ErrorCode::TraceFormat, "raw event without kind");
  if (*kind == "tool_call") {
    ev.kind = RawKind::ToolCall;
  } else if (*kind == "tool_result") {
    ev.kind = RawKind::ToolResult;
  } else if (*kind == "state_decl") {
    ev.kind = RawKind::StateDecl;
  } else {
    throw Error(ErrorCode::TraceFormat, "unknown raw event kind '" + *kind + "'");
  }
  ev.tool = text("tool");
  ev.outcome = text("outcome");
  ev.declared_state = text("declared_state");
  ev.payload = text("payload").value_or("");
  if (doc.contains("ts")) {
    if (!doc["ts"].is_number_integer()) throw Error(ErrorCode::TraceFormat, "ts must be an integer");
    ev.timestamp_ms = doc["ts"].get<std::int64_t>();
  }
  if (ev.kind == RawKind::ToolCall && !ev.tool) throw Error(ErrorCode::TraceFormat, "tool_call without tool");
  if (ev.kind == RawKind::ToolResult && !ev.outcome) throw Error(ErrorCode::TraceFormat, "tool_result without outcome");
  if (ev.kind == RawKind::StateDecl && !ev.declared_state) {
    throw Error(ErrorCode::TraceFormat, "state_decl without declared_state");
  }
  return ev;
}

EventAbstractor::EventAbstractor(const GuardConfig& cfg, std::string current_state)
    : cfg_(&cfg), current_(std::move(current_state)) {}

std::optional<std::string> EventAbstractor::resolve_outcome(const std::string& outcome) const {
  if (auto it = cfg_->outcomes.find(outcome); it != cfg_->outcomes.end()) return it->second;
  if (cfg_->has_state(outcome)) return outcome;
  if (strict()) return std::nullopt;
  return std::string(kOtherState);
}

std::optional<TransitionEvent> EventAbstractor::abstract_event(const RawEvent& raw) {
  switch (raw.kind) {
    case RawKind::ToolCall:
      if (pending_) {
        spdlog::warn("tool call '{}' replaced pending call '{}' without a result", raw.tool.value_or(""),
                     pending_->tool.value_or(""));
        ++dropped_;
      }
      pending_ = raw;
      return std::nullopt;

    case RawKind::ToolResult: {
      if (!pending_) {
        spdlog::warn("{}: tool result '{}' without a pending call", to_string(ErrorCode::OrphanResult),
                     raw.outcome.value_or(""));
        ++orphans_;
        ++dropped_;
        return std::nullopt;
      }
      RawEvent call = std::move(*pending_);
      pending_.reset();
      const std::string tool = call.tool.value_or("");
      if (strict() && !cfg_->has_action(tool)) {
        spdlog::warn("dropping call of undeclared tool '{}'", tool);
        ++dropped_;
        return std::nullopt;
      }
      auto next = resolve_outcome(raw.outcome.value_or(""));
      if (!next) {
        spdlog::warn("dropping unmapped outcome '{}' of tool '{}'", raw.outcome.value_or(""), tool);
        ++dropped_;
        return std::nullopt;
      }
      TransitionEvent ev{current_, tool, *next, std::nullopt, raw.timestamp_ms};
      current_ = *next;
      return ev;
    }

    case RawKind::StateDecl: {
      const std::string target = raw.declared_state.value_or("");
      if (strict() && !cfg_->has_state(target)) {
        spdlog::warn("dropping declaration of undeclared state '{}'", target);
        ++dropped_;
        return std::nullopt;
      }
      TransitionEvent ev{current_, std::string(kGotoAction), target, std::nullopt, raw.timestamp_ms};
      current_ = target;
      return ev;
    }
  }
  return std::nullopt;
}

}  // namespace agentguard
