#pragma once

#include "agentguard/error.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace agentguard::pctl {

/// Propositional state formula over quoted labels.
struct StateFormula {
  enum class Kind { True, False, Label, Not, And, Or };

  Kind kind = Kind::True;
  std::string label;                  // Kind::Label only
  std::vector<StateFormula> operands;  // one for Not, two for And/Or

  static StateFormula truth() { return {Kind::True, {}, {}}; }
  static StateFormula falsity() { return {Kind::False, {}, {}}; }
  static StateFormula atom(std::string name) { return {Kind::Label, std::move(name), {}}; }
  static StateFormula negation(StateFormula f) { return {Kind::Not, {}, {std::move(f)}}; }
  static StateFormula conjunction(StateFormula l, StateFormula r) { return {Kind::And, {}, {std::move(l), std::move(r)}}; }
  static StateFormula disjunction(StateFormula l, StateFormula r) { return {Kind::Or, {}, {std::move(l), std::move(r)}}; }

  bool operator==(const StateFormula&) const = default;
};

struct PathFormula {
  enum class Kind { Eventually, Globally, Until };

  Kind kind = Kind::Eventually;
  std::optional<std::uint64_t> bound;  // step bound k >= 1
  StateFormula left;   // Until only; `true` otherwise
  StateFormula right;  // the operand of F / G, right side of U

  static PathFormula eventually(StateFormula f, std::optional<std::uint64_t> k = std::nullopt) {
    return {Kind::Eventually, k, StateFormula::truth(), std::move(f)};
  }
  static PathFormula globally(StateFormula f, std::optional<std::uint64_t> k = std::nullopt) {
    return {Kind::Globally, k, StateFormula::truth(), std::move(f)};
  }
  static PathFormula until(StateFormula l, StateFormula r, std::optional<std::uint64_t> k = std::nullopt) {
    return {Kind::Until, k, std::move(l), std::move(r)};
  }

  bool operator==(const PathFormula&) const = default;
};

/// `max`/`min` quantify over schedulers; `policy` evaluates the chain
/// induced by the observed behaviour.
enum class Optimization { Max, Min, Policy };
enum class Comparison { GreaterEqual, Greater, LessEqual, Less };
enum class Measure { Probability, Reward };
enum class ModelMode { Mdp, Dtmc, Both };

struct Threshold {
  Comparison op = Comparison::GreaterEqual;
  double value = 0.0;

  bool holds(double x) const noexcept;
  bool operator==(const Threshold&) const = default;
};

struct Property {
  std::string name;
  Measure measure = Measure::Probability;
  Optimization opt = Optimization::Max;
  std::optional<Threshold> threshold;  // bound form when set
  PathFormula path;                       // Measure::Probability
  std::optional<std::string> reward_structure;  // Measure::Reward; unset means `steps`
  StateFormula target;                    // Measure::Reward

  bool is_bound() const noexcept { return threshold.has_value(); }
  ModelMode mode_hint() const noexcept { return opt == Optimization::Policy ? ModelMode::Dtmc : ModelMode::Mdp; }
  bool operator==(const Property&) const = default;
};

/// Parses one property:
///
///   Pmax=? [ path ]  Pmin=? [ path ]  P=? [ path ]  P[max|min]<op><t> [ path ]
///   R[{"name"}][max|min]=? [ F sf ]   R[{"name"}][max|min]<op><t> [ F sf ]
///   path := F sf | F<=k sf | G sf | G<=k sf | sf U sf | sf U<=k sf
///   sf   := true | false | "label" | !sf | sf & sf | sf | sf | ( sf )
///
/// A bound without max/min optimises `max` for P and `min` for R.
/// Throws SyntaxError, BoundError (k <= 0) or ThresholdError.
Property parse_property(std::string_view text);
StateFormula parse_state_formula(std::string_view text);

/// Canonical text with minimal parentheses; parse_property inverts it.
std::string format_property(const Property& p);
std::string format_state_formula(const StateFormula& f);
std::string format_path_formula(const PathFormula& f);
std::string format_number(double value);

std::string_view to_string(Comparison op) noexcept;
std::string_view to_string(Optimization opt) noexcept;

/// What a property may refer to.
struct Vocabulary {
  std::set<std::string, std::less<>> labels;
  std::set<std::string, std::less<>> states;
  std::set<std::string, std::less<>> reward_structures;
  ModelMode mode = ModelMode::Both;
  /// Open registration: names may appear later, so unknown labels pass.
  bool open = false;
};

/// Throws UnknownLabel, UnknownRewardStructure or ModeMismatch.
void validate(const Property& p, const Vocabulary& vocabulary);

/// Every label name mentioned by the formula, in order of appearance.
void collect_labels(const StateFormula& f, std::vector<std::string>& out);

}  // namespace agentguard::pctl
