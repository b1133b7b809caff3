#pragma once

#include "agentguard/checker.hpp"
#include "agentguard/engine.hpp"

#include <json.hpp>

namespace agentguard {

/// A number, "inf", or "undefined".
nlohmann::json value_to_json(const Value& v);
Value value_from_json(const nlohmann::json& j);

nlohmann::json result_to_json(const VerificationResult& r);
nlohmann::json alert_to_json(const Alert& a);
nlohmann::json audit_to_json(const AuditEntry& e);
nlohmann::json counters_to_json(const EngineCounters& c);

/// `{command, name?, alert_id?}`; throws MalformedRequest.
ActuatorCommand command_from_json(const nlohmann::json& j, CommandSource source);
/// `{state, action, next_state, reward?, ts?}`; throws MalformedRequest.
TransitionEvent transition_from_json(const nlohmann::json& j);

}  // namespace agentguard
