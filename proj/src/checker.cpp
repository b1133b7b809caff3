#include "agentguard/checker.hpp"

#include <algorithm>
#include <chrono>
#include <deque>

namespace agentguard {

using pctl::Optimization;
using pctl::PathFormula;
using pctl::StateFormula;

// ---------------------------------------------------------------------------
// SparseMdp

SparseMdp::SparseMdp(const ModelSnapshot& snap) {
  const std::size_t n = snap.state_count();
  reward_count_ = snap.reward_names().size();
  row_start_.reserve(n + 1);
  choice_start_.push_back(0);
  for (std::size_t s = 0; s < n; ++s) {
    row_start_.push_back(owner_.size());
    const auto id = state_at(s);
    const auto choices = snap.choices(id);
    if (snap.is_terminal(id) || choices.empty()) {
      // Absorbing at check time; the learned model itself stays untouched.
      owner_.push_back(s);
      action_.push_back(std::nullopt);
      target_.push_back(s);
      probability_.push_back(1.0);
      rewards_.insert(rewards_.end(), reward_count_, 0.0);
      choice_start_.push_back(target_.size());
      continue;
    }
    for (const auto& choice : choices) {
      owner_.push_back(s);
      action_.push_back(choice.action);
      for (const auto& succ : choice.successors) {
        if (succ.probability <= 0.0) continue;
        target_.push_back(index_of(succ.state));
        probability_.push_back(succ.probability);
        rewards_.insert(rewards_.end(), succ.rewards.begin(), succ.rewards.end());
      }
      choice_start_.push_back(target_.size());
    }
  }
  row_start_.push_back(owner_.size());

  pred_start_.assign(n + 1, 0);
  for (std::size_t e = 0; e < target_.size(); ++e) ++pred_start_[target_[e] + 1];
  for (std::size_t s = 0; s < n; ++s) pred_start_[s + 1] += pred_start_[s];
  pred_.resize(target_.size());
  auto fill = pred_start_;
  for (std::size_t c = 0; c + 1 < choice_start_.size(); ++c) {
    for (std::size_t e = choice_start_[c]; e < choice_start_[c + 1]; ++e) pred_[fill[target_[e]]++] = c;
  }
}

std::vector<double> SparseMdp::choice_rewards(std::size_t structure) const {
  std::vector<double> out(choice_count(), 0.0);
  for (std::size_t c = 0; c < choice_count(); ++c) {
    double r = 0.0;
    for (std::size_t e = entry_begin(c); e < entry_end(c); ++e) {
      r += probability_[e] * rewards_[e * reward_count_ + structure];
    }
    out[c] = r;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Qualitative precomputation

namespace {

// States that can reach `target` with positive probability under some
// scheduler, moving only through `through` states.
StateSet exists_reach(const SparseMdp& mdp, const StateSet& through, const StateSet& target) {
  StateSet reached = target;
  std::deque<std::size_t> work;
  for (std::size_t s = 0; s < reached.size(); ++s) {
    if (reached[s]) work.push_back(s);
  }
  while (!work.empty()) {
    std::size_t t = work.front();
    work.pop_front();
    for (std::size_t c : mdp.predecessors(t)) {
      std::size_t s = mdp.owner(c);
      if (!reached[s] && through[s]) {
        reached[s] = true;
        work.push_back(s);
      }
    }
  }
  return reached;
}

// States from which every scheduler reaches `target` with positive
// probability, moving through `through` states.
StateSet forall_reach(const SparseMdp& mdp, const StateSet& through, const StateSet& target) {
  const std::size_t n = mdp.state_count();
  StateSet reached = target;
  std::vector<bool> choice_hits(mdp.choice_count(), false);
  std::vector<std::size_t> pending(n);
  for (std::size_t s = 0; s < n; ++s) pending[s] = mdp.choice_end(s) - mdp.choice_begin(s);
  std::deque<std::size_t> work;
  for (std::size_t s = 0; s < n; ++s) {
    if (reached[s]) work.push_back(s);
  }
  while (!work.empty()) {
    std::size_t t = work.front();
    work.pop_front();
    for (std::size_t c : mdp.predecessors(t)) {
      if (choice_hits[c]) continue;
      choice_hits[c] = true;
      std::size_t s = mdp.owner(c);
      if (reached[s] || !through[s]) continue;
      if (--pending[s] == 0) {
        reached[s] = true;
        work.push_back(s);
      }
    }
  }
  return reached;
}

StateSet complement(StateSet set) {
  set.flip();
  return set;
}

StateSet minus(StateSet a, const StateSet& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = a[i] && !b[i];
  return a;
}

// Pmax = 1: greatest fixpoint over U of the states that can reach phi2
// through phi1 using only choices that stay inside U.
StateSet prob1_max(const SparseMdp& mdp, const StateSet& phi1, const StateSet& phi2) {
  const std::size_t n = mdp.state_count();
  StateSet inside(n, true);
  while (true) {
    std::vector<bool> valid(mdp.choice_count());
    for (std::size_t c = 0; c < mdp.choice_count(); ++c) {
      bool ok = true;
      for (std::size_t e = mdp.entry_begin(c); e < mdp.entry_end(c) && ok; ++e) ok = inside[mdp.target(e)];
      valid[c] = ok;
    }
    StateSet reached = phi2;
    std::deque<std::size_t> work;
    for (std::size_t s = 0; s < n; ++s) {
      if (reached[s]) work.push_back(s);
    }
    while (!work.empty()) {
      std::size_t t = work.front();
      work.pop_front();
      for (std::size_t c : mdp.predecessors(t)) {
        std::size_t s = mdp.owner(c);
        if (!reached[s] && phi1[s] && valid[c]) {
          reached[s] = true;
          work.push_back(s);
        }
      }
    }
    if (reached == inside) return reached;
    inside = std::move(reached);
  }
}

}  // namespace

QualitativeSets qualitative_precompute(const SparseMdp& mdp, const StateSet& phi1, const StateSet& phi2,
                                       Direction dir) {
  QualitativeSets out;
  const StateSet constrained = minus(phi1, phi2);
  if (dir == Direction::Max) {
    out.prob0 = complement(exists_reach(mdp, constrained, phi2));
    out.prob1 = prob1_max(mdp, phi1, phi2);
  } else {
    out.prob0 = complement(forall_reach(mdp, constrained, phi2));
    // Pmin < 1 exactly where some scheduler can reach a Pmin = 0 state.
    out.prob1 = complement(exists_reach(mdp, constrained, out.prob0));
  }
  return out;
}

QualitativeSets qualitative_precompute(const ModelSnapshot& snap, const StateSet& goal, Direction dir) {
  SparseMdp mdp(snap);
  return qualitative_precompute(mdp, StateSet(mdp.state_count(), true), goal, dir);
}

// ---------------------------------------------------------------------------
// Numeric solves

namespace {

double best_over_choices(const SparseMdp& mdp, std::size_t s, Direction dir, const std::vector<double>& x) {
  double best = dir == Direction::Max ? -std::numeric_limits<double>::infinity()
                                      : std::numeric_limits<double>::infinity();
  for (std::size_t c = mdp.choice_begin(s); c < mdp.choice_end(s); ++c) {
    double sum = 0.0;
    for (std::size_t e = mdp.entry_begin(c); e < mdp.entry_end(c); ++e) sum += mdp.probability(e) * x[mdp.target(e)];
    best = dir == Direction::Max ? std::max(best, sum) : std::min(best, sum);
  }
  return best;
}

// Maximal end components inside `within`: block id per state, -1 outside any.
std::vector<long> end_components(const SparseMdp& mdp, const StateSet& within) {
  const std::size_t n = mdp.state_count();
  std::vector<long> block(n, -1);
  for (std::size_t s = 0; s < n; ++s) {
    if (within[s]) block[s] = 0;
  }
  auto stays = [&](std::size_t c) {
    const long b = block[mdp.owner(c)];
    for (std::size_t e = mdp.entry_begin(c); e < mdp.entry_end(c); ++e) {
      if (block[mdp.target(e)] != b) return false;
    }
    return true;
  };
  std::size_t blocks = 1;
  while (true) {
    for (std::size_t s = 0; s < n; ++s) {
      if (block[s] < 0) continue;
      bool any = false;
      for (std::size_t c = mdp.choice_begin(s); c < mdp.choice_end(s) && !any; ++c) any = stays(c);
      if (!any) block[s] = -1;
    }
    // Iterative Tarjan over the edges of choices that stay in their block.
    std::vector<long> index(n, -1), low(n, 0), next_block(n, -1);
    std::vector<bool> on_stack(n, false);
    std::vector<std::size_t> stack;
    std::vector<std::pair<std::size_t, std::size_t>> frames;  // state, flat edge cursor
    std::vector<std::size_t> edges;
    std::vector<std::size_t> edge_start(n + 1, 0);
    for (std::size_t s = 0; s < n; ++s) {
      edge_start[s] = edges.size();
      if (block[s] < 0) continue;
      for (std::size_t c = mdp.choice_begin(s); c < mdp.choice_end(s); ++c) {
        if (!stays(c)) continue;
        for (std::size_t e = mdp.entry_begin(c); e < mdp.entry_end(c); ++e) edges.push_back(mdp.target(e));
      }
    }
    edge_start[n] = edges.size();
    long counter = 0, found = 0;
    for (std::size_t root = 0; root < n; ++root) {
      if (block[root] < 0 || index[root] >= 0) continue;
      frames.emplace_back(root, edge_start[root]);
      index[root] = low[root] = counter++;
      stack.push_back(root);
      on_stack[root] = true;
      while (!frames.empty()) {
        auto& [v, cursor] = frames.back();
        if (cursor < edge_start[v + 1]) {
          std::size_t w = edges[cursor++];
          if (index[w] < 0) {
            index[w] = low[w] = counter++;
            stack.push_back(w);
            on_stack[w] = true;
            frames.emplace_back(w, edge_start[w]);
          } else if (on_stack[w]) {
            low[v] = std::min(low[v], index[w]);
          }
          continue;
        }
        const std::size_t done = v;
        frames.pop_back();
        if (!frames.empty()) low[frames.back().first] = std::min(low[frames.back().first], low[done]);
        if (low[done] == index[done]) {
          std::size_t w;
          do {
            w = stack.back();
            stack.pop_back();
            on_stack[w] = false;
            next_block[w] = found;
          } while (w != done);
          ++found;
        }
      }
    }
    bool shrunk = false;
    for (std::size_t s = 0; s < n && !shrunk; ++s) shrunk = (block[s] < 0) != (next_block[s] < 0);
    block = std::move(next_block);
    if (static_cast<std::size_t>(found) == blocks && !shrunk) return block;
    blocks = static_cast<std::size_t>(found);
  }
}

}  // namespace

Solution solve_until(const SparseMdp& mdp, const StateSet& phi1, const StateSet& phi2, Direction dir,
                     std::optional<std::uint64_t> bound, const CheckSettings& settings,
                     const IterationObserver& observer) {
  const std::size_t n = mdp.state_count();
  Solution sol;
  std::vector<double> x(n, 0.0);

  if (bound) {
    for (std::size_t s = 0; s < n; ++s) x[s] = phi2[s] ? 1.0 : 0.0;
    std::vector<double> next = x;
    for (std::uint64_t k = 0; k < *bound; ++k) {
      for (std::size_t s = 0; s < n; ++s) {
        if (phi2[s] || !phi1[s]) continue;
        next[s] = best_over_choices(mdp, s, dir, x);
      }
      x.swap(next);
    }
    sol.iterations = *bound;
    sol.values = std::move(x);
    return sol;
  }

  // Interval iteration: a lower sequence from 0 and an upper one from 1
  // bracket the fixpoint; under Max the upper one is deflated on end
  // components so it cannot stall above the least fixpoint.
  const auto qs = qualitative_precompute(mdp, phi1, phi2, dir);
  std::vector<double> hi(n, 0.0);
  std::vector<std::size_t> maybe;
  StateSet in_maybe(n, false);
  for (std::size_t s = 0; s < n; ++s) {
    if (qs.prob1[s]) {
      x[s] = hi[s] = 1.0;
    } else if (!qs.prob0[s]) {
      hi[s] = 1.0;
      maybe.push_back(s);
      in_maybe[s] = true;
    }
  }
  std::vector<std::vector<std::size_t>> components;
  std::vector<long> block;
  if (dir == Direction::Max && !maybe.empty()) {
    block = end_components(mdp, in_maybe);
    for (std::size_t s : maybe) {
      if (block[s] < 0) continue;
      if (static_cast<std::size_t>(block[s]) >= components.size()) components.resize(block[s] + 1);
      components[block[s]].push_back(s);
    }
  }

  std::vector<double> next = x;
  std::vector<double> next_hi = hi;
  while (!maybe.empty()) {
    double gap = 0.0;
    for (std::size_t s : maybe) gap = std::max(gap, hi[s] - x[s]);
    sol.residual = gap;
    if (gap <= 2.0 * settings.epsilon) break;
    if (sol.iterations >= settings.max_iterations) {
      sol.converged = false;
      break;
    }
    for (std::size_t s : maybe) {
      next[s] = best_over_choices(mdp, s, dir, x);
      next_hi[s] = best_over_choices(mdp, s, dir, hi);
    }
    for (const auto& comp : components) {
      double exit = 0.0;
      for (std::size_t s : comp) {
        for (std::size_t c = mdp.choice_begin(s); c < mdp.choice_end(s); ++c) {
          bool leaves = false;
          double sum = 0.0;
          for (std::size_t e = mdp.entry_begin(c); e < mdp.entry_end(c); ++e) {
            leaves = leaves || block[mdp.target(e)] != block[s];
            sum += mdp.probability(e) * hi[mdp.target(e)];
          }
          if (leaves) exit = std::max(exit, sum);
        }
      }
      for (std::size_t s : comp) next_hi[s] = std::min(next_hi[s], exit);
    }
    for (std::size_t s : maybe) next_hi[s] = std::max(next_hi[s], next[s]);
    x.swap(next);
    hi.swap(next_hi);
    ++sol.iterations;
    if (observer) observer(sol.iterations, x);
  }
  for (std::size_t s : maybe) x[s] = 0.5 * (x[s] + hi[s]);
  sol.values = std::move(x);
  return sol;
}

Solution solve_reward(const SparseMdp& mdp, std::span<const double> choice_rewards, const StateSet& goal,
                      Direction dir, const CheckSettings& settings) {
  const std::size_t n = mdp.state_count();
  const double inf = std::numeric_limits<double>::infinity();
  const StateSet all(n, true);
  // Rmin ranges over schedulers reaching the goal almost surely (Pmax = 1);
  // Rmax needs every scheduler to do so (Pmin = 1).
  const StateSet region = dir == Direction::Min ? prob1_max(mdp, all, goal)
                                                : qualitative_precompute(mdp, all, goal, Direction::Min).prob1;

  Solution sol;
  std::vector<double> y(n, 0.0);
  std::vector<std::size_t> active;
  std::vector<std::vector<std::size_t>> usable(n);
  for (std::size_t s = 0; s < n; ++s) {
    if (goal[s]) continue;
    if (!region[s]) {
      y[s] = inf;
      continue;
    }
    for (std::size_t c = mdp.choice_begin(s); c < mdp.choice_end(s); ++c) {
      bool stays = true;
      for (std::size_t e = mdp.entry_begin(c); e < mdp.entry_end(c) && stays; ++e) stays = region[mdp.target(e)];
      if (!stays) continue;
      if (choice_rewards[c] < 0.0) {
        throw Error(ErrorCode::NegativeReward, "expected-reward queries need nonnegative rewards");
      }
      usable[s].push_back(c);
    }
    active.push_back(s);
  }

  std::vector<double> next = y;
  while (!active.empty()) {
    if (sol.iterations >= settings.max_iterations) {
      sol.converged = false;
      break;
    }
    double change = 0.0;
    for (std::size_t s : active) {
      double best = dir == Direction::Max ? -inf : inf;
      for (std::size_t c : usable[s]) {
        double sum = 0.0;
        for (std::size_t e = mdp.entry_begin(c); e < mdp.entry_end(c); ++e) sum += mdp.probability(e) * y[mdp.target(e)];
        double v = choice_rewards[c] + settings.gamma * sum;
        best = dir == Direction::Max ? std::max(best, v) : std::min(best, v);
      }
      next[s] = best;
      change = std::max(change, std::abs(best - y[s]));
    }
    y.swap(next);
    ++sol.iterations;
    sol.residual = change;
    if (change <= settings.epsilon) break;
  }
  sol.values = std::move(y);
  return sol;
}

// ---------------------------------------------------------------------------
// Property-level entry points

StateSet evaluate(const ModelSnapshot& snap, const StateFormula& f) {
  const std::size_t n = snap.state_count();
  switch (f.kind) {
    case StateFormula::Kind::True: return StateSet(n, true);
    case StateFormula::Kind::False: return StateSet(n, false);
    case StateFormula::Kind::Label: {
      StateSet out(n, false);
      auto it = snap.labels().find(f.label);
      if (it != snap.labels().end()) {
        for (StateId s : it->second) out[index_of(s)] = true;
      } else if (auto s = snap.find_state(f.label)) {
        out[index_of(*s)] = true;
      }
      return out;
    }
    case StateFormula::Kind::Not: return complement(evaluate(snap, f.operands.at(0)));
    case StateFormula::Kind::And:
    case StateFormula::Kind::Or: {
      auto l = evaluate(snap, f.operands.at(0));
      auto r = evaluate(snap, f.operands.at(1));
      for (std::size_t i = 0; i < n; ++i) l[i] = f.kind == StateFormula::Kind::And ? (l[i] && r[i]) : (l[i] || r[i]);
      return l;
    }
  }
  return StateSet(n, false);
}

namespace {

std::size_t require_initial(const ModelSnapshot& snap) {
  auto init = snap.initial();
  if (!init || snap.empty() || !snap.visited(*init)) {
    throw Error(ErrorCode::EmptyModel, "the initial state has not been observed yet");
  }
  return index_of(*init);
}

Direction direction_of(Optimization opt) { return opt == Optimization::Min ? Direction::Min : Direction::Max; }

Optimization dual(Optimization opt) {
  switch (opt) {
    case Optimization::Max: return Optimization::Min;
    case Optimization::Min: return Optimization::Max;
    case Optimization::Policy: return Optimization::Policy;
  }
  return opt;
}

VerificationResult from_solution(const Solution& sol, std::size_t init, const ModelSnapshot& snap) {
  VerificationResult r;
  r.value = Value::from_double(sol.values.at(init));
  r.iterations = sol.iterations;
  r.converged = sol.converged;
  r.residual = sol.residual;
  r.revision = snap.revision();
  return r;
}

}  // namespace

VerificationResult reachability_probability(const ModelSnapshot& snap, const PathFormula& path, Optimization opt,
                                            const CheckSettings& settings) {
  if (path.kind == PathFormula::Kind::Globally) return globally_probability(snap, path.right, opt, path.bound, settings);
  const std::size_t init = require_initial(snap);
  const ModelSnapshot* model = &snap;
  ModelSnapshot chain;
  if (opt == Optimization::Policy) {
    chain = snap.induced_chain();
    model = &chain;
  }
  SparseMdp mdp(*model);
  const StateSet phi1 = evaluate(*model, path.left);
  const StateSet phi2 = evaluate(*model, path.right);
  auto sol = solve_until(mdp, phi1, phi2, direction_of(opt), path.bound, settings);
  return from_solution(sol, init, snap);
}

VerificationResult globally_probability(const ModelSnapshot& snap, const StateFormula& safe, Optimization opt,
                                        std::optional<std::uint64_t> bound, const CheckSettings& settings) {
  auto reach = PathFormula::eventually(StateFormula::negation(safe), bound);
  auto r = reachability_probability(snap, reach, dual(opt), settings);
  if (r.value.is_finite()) r.value = Value::finite(1.0 - r.value.number);
  return r;
}

VerificationResult expected_reward(const ModelSnapshot& snap, std::string_view structure, const StateFormula& goal,
                                   Optimization opt, const CheckSettings& settings) {
  auto ri = snap.reward_index(structure);
  if (!ri) throw Error(ErrorCode::UnknownRewardStructure, "unknown reward structure \"" + std::string(structure) + "\"");
  const std::size_t init = require_initial(snap);
  const ModelSnapshot* model = &snap;
  ModelSnapshot chain;
  if (opt == Optimization::Policy) {
    chain = snap.induced_chain();
    model = &chain;
  }
  SparseMdp mdp(*model);
  auto rewards = mdp.choice_rewards(*ri);
  auto sol = solve_reward(mdp, rewards, evaluate(*model, goal), direction_of(opt), settings);
  return from_solution(sol, init, snap);
}

VerificationResult check(const ModelSnapshot& snap, const pctl::Property& p, const CheckSettings& settings) {
  const auto start = std::chrono::steady_clock::now();
  VerificationResult r = p.measure == pctl::Measure::Probability
                             ? reachability_probability(snap, p.path, p.opt, settings)
                             : expected_reward(snap, p.reward_structure.value_or(std::string(kStepsReward)),
                                               p.target, p.opt, settings);
  r.property = p.name.empty() ? pctl::format_property(p) : p.name;
  if (p.threshold) {
    r.satisfied = r.value.is_defined() && p.threshold->holds(r.value.number);
  }
  r.micros = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start).count());
  return r;
}

}  // namespace agentguard
