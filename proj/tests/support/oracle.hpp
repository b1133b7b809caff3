#pragma once

// Reference model checker for small models: enumerates every memoryless
// deterministic policy and solves each induced chain with dense Gaussian
// elimination. Exponential, so only for a handful of states.

#include "agentguard/mdp.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace oracle {

struct DenseChoice {
  std::vector<double> p;  // indexed by successor state
  double reward = 0.0;    // expected one-step reward
};

struct DenseMdp {
  std::size_t n = 0;
  std::vector<std::vector<DenseChoice>> choices;  // never empty per state
};

/// Terminal and dead-end states become absorbing with reward 0.
DenseMdp from_snapshot(const agentguard::ModelSnapshot& snap, const std::optional<std::string>& reward = {});

std::vector<bool> label_set(const agentguard::ModelSnapshot& snap, const std::string& label);

std::vector<double> reach(const DenseMdp& m, const std::vector<bool>& goal, bool maximize);
std::vector<double> reach_bounded(const DenseMdp& m, const std::vector<bool>& goal, bool maximize, unsigned k);
std::vector<double> globally(const DenseMdp& m, const std::vector<bool>& safe, bool maximize);
std::vector<double> globally_bounded(const DenseMdp& m, const std::vector<bool>& safe, bool maximize, unsigned k);
/// +inf where the goal is not reached almost surely.
std::vector<double> reward(const DenseMdp& m, const std::vector<bool>& goal, bool maximize);

/// Solves A x = b in place; A is row-major n x n.
std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b);

}  // namespace oracle
