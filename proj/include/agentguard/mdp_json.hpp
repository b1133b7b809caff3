#pragma once

#include "agentguard/mdp.hpp"

#include <json.hpp>

namespace agentguard {

/// Canonical JSON form of a snapshot: name arrays, `[s, a, s', weight]`
/// quadruples in lexicographic index order, labels, initial state, resolved
/// reward structures and the revision.
nlohmann::json snapshot_to_json(const ModelSnapshot& snap);

/// Inverse of snapshot_to_json. Throws InvalidModel on malformed input.
ModelSnapshot snapshot_from_json(const nlohmann::json& doc);

}  // namespace agentguard
