#include "agentguard/wire.hpp"

namespace agentguard {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::MalformedRequest, what); }

}  // namespace

json value_to_json(const Value& v) {
  switch (v.kind) {
    case Value::Kind::Finite: return v.number;
    case Value::Kind::Infinite: return "inf";
    case Value::Kind::Undefined: return "undefined";
  }
  return "undefined";
}

Value value_from_json(const json& j) {
  if (j.is_number()) return Value::finite(j.get<double>());
  if (j == "inf") return Value::infinity();
  return Value::undefined();
}

json result_to_json(const VerificationResult& r) {
  json doc = {{"property", r.property},
              {"value", value_to_json(r.value)},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"residual", r.residual},
              {"revision", r.revision},
              {"micros", r.micros}};
  if (r.satisfied) doc["satisfied"] = *r.satisfied;
  if (r.error) doc["error"] = *r.error;
  return doc;
}

json alert_to_json(const Alert& a) {
  json doc = {{"id", a.id},
              {"property", a.property},
              {"severity", std::string(to_string(a.severity))},
              {"value", value_to_json(a.observed)},
              {"threshold", {{"op", std::string(pctl::to_string(a.threshold.op))}, {"value", a.threshold.value}}},
              {"revision", a.revision},
              {"cycle", a.cycle},
              {"timestamp", a.timestamp_ms},
              {"acknowledged", a.acknowledged}};
  if (a.callback) doc["callback"] = *a.callback;
  if (a.callback_error) doc["callback_error"] = *a.callback_error;
  return doc;
}

json audit_to_json(const AuditEntry& e) {
  json doc = {{"seq", e.seq},
              {"command", e.command.label()},
              {"source", std::string(to_string(e.command.source))},
              {"timestamp", e.timestamp_ms}};
  if (e.command.alert_id) doc["alert_id"] = *e.command.alert_id;
  if (e.error) doc["error"] = *e.error;
  return doc;
}

json counters_to_json(const EngineCounters& c) {
  return {{"accepted", c.accepted}, {"rejected", c.rejected}, {"dropped", c.dropped},
          {"applied", c.applied},   {"failed", c.failed},     {"queued", c.queued},
          {"cycles", c.cycles},     {"raw_dropped", c.raw_dropped}};
}

ActuatorCommand command_from_json(const json& j, CommandSource source) {
  if (!j.is_object()) malformed("command must be an object");
  auto it = j.find("command");
  if (it == j.end() || !it->is_string()) malformed("missing string field 'command'");
  std::optional<std::uint64_t> alert_id;
  if (auto a = j.find("alert_id"); a != j.end() && !a->is_null()) {
    if (!a->is_number_unsigned()) malformed("alert_id must be a nonnegative integer");
    alert_id = a->get<std::uint64_t>();
  }
  const auto name = it->get<std::string>();
  if (name == "custom") {
    auto n = j.find("name");
    if (n == j.end() || !n->is_string() || n->get<std::string>().empty()) malformed("custom command needs a name");
    auto cmd = ActuatorCommand::named(n->get<std::string>(), source, alert_id);
    if (cmd.kind != CommandKind::Custom) malformed("'" + n->get<std::string>() + "' is a built-in command");
    return cmd;
  }
  if (name != "pause" && name != "resume" && name != "terminate" && name != "acknowledge") {
    malformed("unknown command kind '" + name + "'");
  }
  return ActuatorCommand::named(name, source, alert_id);
}

TransitionEvent transition_from_json(const json& j) {
  if (!j.is_object()) malformed("transition must be an object");
  auto text = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) malformed(std::string("missing string field '") + key + "'");
    return it->get<std::string>();
  };
  for (const auto& [key, _] : j.items()) {
    if (key != "state" && key != "action" && key != "next_state" && key != "reward" && key != "ts") {
      malformed("unknown field '" + key + "'");
    }
  }
  TransitionEvent ev{text("state"), text("action"), text("next_state"), std::nullopt, std::nullopt};
  if (auto r = j.find("reward"); r != j.end() && !r->is_null()) {
    if (!r->is_number()) malformed("reward must be a number");
    ev.reward = r->get<double>();
  }
  if (auto t = j.find("ts"); t != j.end() && !t->is_null()) {
    if (!t->is_number_integer()) malformed("ts must be an integer");
    ev.timestamp_ms = t->get<std::int64_t>();
  }
  return ev;
}

}  // namespace agentguard
