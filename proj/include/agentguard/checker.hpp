#pragma once

#include "agentguard/mdp.hpp"
#include "agentguard/pctl.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace agentguard {

struct CheckSettings {
  double epsilon = 1e-8;  // probabilities: bracket half-width; rewards: change between iterates
  std::uint64_t max_iterations = 100'000;
  double gamma = 1.0;  // discount, expected rewards only
};

/// A verdict value: a real, +infinity, or undefined (error / no model).
struct Value {
  enum class Kind { Finite, Infinite, Undefined };
  Kind kind = Kind::Undefined;
  double number = std::numeric_limits<double>::quiet_NaN();

  static Value finite(double x) { return {Kind::Finite, x}; }
  static Value infinity() { return {Kind::Infinite, std::numeric_limits<double>::infinity()}; }
  static Value undefined() { return {}; }
  static Value from_double(double x) { return std::isinf(x) ? infinity() : finite(x); }

  bool is_finite() const noexcept { return kind == Kind::Finite; }
  bool is_infinite() const noexcept { return kind == Kind::Infinite; }
  bool is_defined() const noexcept { return kind != Kind::Undefined; }
};

struct VerificationResult {
  std::string property;
  Value value;
  std::optional<bool> satisfied;  // bound forms only
  std::uint64_t iterations = 0;
  bool converged = true;
  double residual = 0.0;
  std::uint64_t revision = 0;
  std::uint64_t micros = 0;
  std::optional<std::string> error;  // set when the live loop recorded a failure
};

using StateSet = std::vector<bool>;

/// Row-compressed view of a snapshot for the Bellman operators. Terminal and
/// dead-end states get a synthetic absorbing self-loop.
class SparseMdp {
 public:
  explicit SparseMdp(const ModelSnapshot& snap);

  std::size_t state_count() const noexcept { return row_start_.size() - 1; }
  std::size_t choice_count() const noexcept { return choice_start_.size() - 1; }
  std::size_t choice_begin(std::size_t s) const { return row_start_[s]; }
  std::size_t choice_end(std::size_t s) const { return row_start_[s + 1]; }
  std::size_t entry_begin(std::size_t c) const { return choice_start_[c]; }
  std::size_t entry_end(std::size_t c) const { return choice_start_[c + 1]; }
  std::size_t target(std::size_t e) const { return target_[e]; }
  double probability(std::size_t e) const { return probability_[e]; }
  std::size_t owner(std::size_t c) const { return owner_[c]; }
  /// Action of choice `c`; empty for the synthetic self-loop.
  std::optional<ActionId> action(std::size_t c) const { return action_[c]; }

  /// Expected one-step reward Σ P(s'|s,a)·r(s,a,s') per choice for the
  /// structure at `structure` in the snapshot's reward list.
  std::vector<double> choice_rewards(std::size_t structure) const;

  /// Choices (by index) that have an edge into state `t`.
  std::span<const std::size_t> predecessors(std::size_t t) const {
    return {pred_.data() + pred_start_[t], pred_.data() + pred_start_[t + 1]};
  }

 private:
  std::vector<std::size_t> row_start_;
  std::vector<std::size_t> choice_start_;
  std::vector<std::size_t> owner_;
  std::vector<std::optional<ActionId>> action_;
  std::vector<std::size_t> target_;
  std::vector<double> probability_;
  std::vector<double> rewards_;  // entries × structures
  std::size_t reward_count_ = 0;
  std::vector<std::size_t> pred_start_;
  std::vector<std::size_t> pred_;
};

enum class Direction { Max, Min };

struct QualitativeSets {
  StateSet prob0;  // optimal probability exactly 0
  StateSet prob1;  // optimal probability exactly 1
};

/// Graph-only classification for P_opt[ phi1 U phi2 ].
QualitativeSets qualitative_precompute(const SparseMdp& mdp, const StateSet& phi1, const StateSet& phi2,
                                       Direction dir);
QualitativeSets qualitative_precompute(const ModelSnapshot& snap, const StateSet& goal, Direction dir);

/// Per-state values of a numeric solve, with convergence metadata.
struct Solution {
  std::vector<double> values;
  std::uint64_t iterations = 0;
  bool converged = true;
  double residual = 0.0;
};

/// Called with each iterate of an unbounded solve.
using IterationObserver = std::function<void(std::uint64_t iteration, std::span<const double> values)>;

/// P_opt[ phi1 U phi2 ], or the step-bounded variant when `bound` is set.
Solution solve_until(const SparseMdp& mdp, const StateSet& phi1, const StateSet& phi2, Direction dir,
                     std::optional<std::uint64_t> bound, const CheckSettings& settings,
                     const IterationObserver& observer = {});

/// R_opt[ F goal ] with per-choice rewards. +inf where the goal is not
/// reached almost surely under the optimising regime.
Solution solve_reward(const SparseMdp& mdp, std::span<const double> choice_rewards, const StateSet& goal,
                      Direction dir, const CheckSettings& settings);

/// States satisfying `f`. A label resolves to the snapshot's label set, then
/// to a state of that name; anything else is empty.
StateSet evaluate(const ModelSnapshot& snap, const pctl::StateFormula& f);

VerificationResult reachability_probability(const ModelSnapshot& snap, const pctl::PathFormula& path,
                                            pctl::Optimization opt, const CheckSettings& settings);
/// Through P_max[G phi] = 1 - P_min[F !phi] and its min/bounded analogues.
VerificationResult globally_probability(const ModelSnapshot& snap, const pctl::StateFormula& safe,
                                        pctl::Optimization opt, std::optional<std::uint64_t> bound,
                                        const CheckSettings& settings);
VerificationResult expected_reward(const ModelSnapshot& snap, std::string_view structure,
                                   const pctl::StateFormula& goal, pctl::Optimization opt,
                                   const CheckSettings& settings);

/// Dispatches on the property kind and evaluates the bound for bound forms.
/// Throws EmptyModel when the initial state is unknown or unvisited.
VerificationResult check(const ModelSnapshot& snap, const pctl::Property& p, const CheckSettings& settings);

}  // namespace agentguard
