#pragma once

#include "agentguard/mdp.hpp"

#include <string>
#include <string_view>

namespace agentguard {

/// PRISM-language text of `snap`. Deterministic: one `agent` module over
/// `s : [0..N-1]`, commands per (state, action) with successors in index
/// order, labels sorted by name, one rewards block per structure. Terminal
/// and dead-end states export as a `[__self__]` loop. Weights print as exact
/// fractions when the snapshot is exact, otherwise with 17 significant
/// digits. Throws EmptyModel for a snapshot without states.
std::string export_prism(const ModelSnapshot& snap);

/// Reads the subset written by export_prism. Anything else throws
/// UnsupportedConstruct carrying the line number.
ModelSnapshot import_prism(std::string_view text);

}  // namespace agentguard
