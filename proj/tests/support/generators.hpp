#pragma once

// Seeded generators shared by the unit tests and the acceptance suite.

#include "agentguard/mdp.hpp"
#include "agentguard/pctl.hpp"

#include <random>

namespace gen {

struct ModelShape {
  std::size_t max_states = 6;
  std::size_t max_actions = 3;
  std::size_t max_successors = 4;
  bool terminals = true;
  bool dead_ends = true;
  /// Applies one forgetting step so weights stop being integers.
  bool decay = false;
};

/// States s0..s{n-1} with s0 initial and always live, labels "goal" and
/// "safe", and a reward structure "cost" with positive per-choice values.
agentguard::LearnedMdp random_learner(std::mt19937_64& rng, const ModelShape& shape = {});
agentguard::ModelSnapshot random_model(std::mt19937_64& rng, const ModelShape& shape = {});

/// Random property whose text parses back to the same AST.
agentguard::pctl::Property random_property(std::mt19937_64& rng);
agentguard::pctl::StateFormula random_state_formula(std::mt19937_64& rng, int depth);

}  // namespace gen
