#include "oracle.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace oracle {

namespace ag = agentguard;

namespace {

using Matrix = std::vector<std::vector<double>>;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Calls fn(P, rewards) for every memoryless deterministic policy.
void for_each_policy(const DenseMdp& m, const std::function<void(const Matrix&, const std::vector<double>&)>& fn) {
  std::vector<std::size_t> pick(m.n, 0);
  Matrix p(m.n);
  std::vector<double> r(m.n);
  while (true) {
    for (std::size_t s = 0; s < m.n; ++s) {
      p[s] = m.choices[s][pick[s]].p;
      r[s] = m.choices[s][pick[s]].reward;
    }
    fn(p, r);
    std::size_t s = 0;
    while (s < m.n && ++pick[s] == m.choices[s].size()) pick[s++] = 0;
    if (s == m.n) return;
  }
}

// closure[s][t]: t reachable from s in zero or more steps, never leaving
// through states in `stop`.
std::vector<std::vector<bool>> closure(const Matrix& p, const std::vector<bool>& stop) {
  const std::size_t n = p.size();
  std::vector<std::vector<bool>> c(n, std::vector<bool>(n, false));
  for (std::size_t s = 0; s < n; ++s) {
    c[s][s] = true;
    if (stop[s]) continue;
    for (std::size_t t = 0; t < n; ++t) {
      if (p[s][t] > 0) c[s][t] = true;
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (stop[k]) continue;
    for (std::size_t i = 0; i < n; ++i) {
      if (!c[i][k]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (c[k][j]) c[i][j] = true;
      }
    }
  }
  return c;
}

// P(avoid U target) for a fixed chain.
std::vector<double> chain_until(const Matrix& p, const std::vector<bool>& allowed, const std::vector<bool>& target) {
  const std::size_t n = p.size();
  std::vector<bool> stop(n);
  for (std::size_t s = 0; s < n; ++s) stop[s] = target[s] || !allowed[s];
  auto c = closure(p, stop);
  std::vector<int> unknown(n, -1);
  std::vector<std::size_t> order;
  for (std::size_t s = 0; s < n; ++s) {
    if (stop[s]) continue;
    bool hits = false;
    for (std::size_t t = 0; t < n; ++t) hits = hits || (c[s][t] && target[t]);
    if (hits) {
      unknown[s] = static_cast<int>(order.size());
      order.push_back(s);
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) x[s] = target[s] ? 1.0 : 0.0;
  if (order.empty()) return x;
  Matrix a(order.size(), std::vector<double>(order.size(), 0.0));
  std::vector<double> b(order.size(), 0.0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t s = order[i];
    a[i][i] = 1.0;
    for (std::size_t t = 0; t < n; ++t) {
      if (target[t]) {
        b[i] += p[s][t];
      } else if (unknown[t] >= 0) {
        a[i][unknown[t]] -= p[s][t];
      }
    }
  }
  auto sol = solve_dense(std::move(a), std::move(b));
  for (std::size_t i = 0; i < order.size(); ++i) x[order[i]] = sol[i];
  return x;
}

void keep_best(std::vector<double>& best, const std::vector<double>& x, bool maximize) {
  for (std::size_t s = 0; s < best.size(); ++s) {
    if (maximize ? x[s] > best[s] : x[s] < best[s]) best[s] = x[s];
  }
}

std::vector<double> start_value(std::size_t n, bool maximize) { return std::vector<double>(n, maximize ? -kInf : kInf); }

}  // namespace

std::vector<double> solve_dense(Matrix a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (std::abs(a[pivot][col]) < 1e-300) throw std::runtime_error("singular system");
    std::swap(a[pivot], a[col]);
    std::swap(b[pivot], b[col]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col || a[r][col] == 0.0) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t k = col; k < n; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return x;
}

DenseMdp from_snapshot(const ag::ModelSnapshot& snap, const std::optional<std::string>& reward) {
  DenseMdp m;
  m.n = snap.state_count();
  m.choices.resize(m.n);
  std::optional<std::size_t> ridx;
  if (reward) {
    const auto& names = snap.reward_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == *reward) ridx = i;
    }
    if (!ridx) throw std::runtime_error("no reward structure " + *reward);
  }
  for (std::size_t s = 0; s < m.n; ++s) {
    const auto sid = ag::state_at(s);
    auto choices = snap.choices(sid);
    if (snap.is_terminal(sid) || choices.empty()) {
      DenseChoice loop;
      loop.p.assign(m.n, 0.0);
      loop.p[s] = 1.0;
      m.choices[s].push_back(loop);
      continue;
    }
    for (const auto& c : choices) {
      DenseChoice d;
      d.p.assign(m.n, 0.0);
      double total = 0.0;
      for (const auto& succ : c.successors) total += succ.weight;
      for (const auto& succ : c.successors) {
        const double pr = succ.weight / total;
        d.p[ag::index_of(succ.state)] += pr;
        if (ridx) d.reward += pr * succ.rewards.at(*ridx);
      }
      m.choices[s].push_back(std::move(d));
    }
  }
  return m;
}

std::vector<bool> label_set(const ag::ModelSnapshot& snap, const std::string& label) {
  std::vector<bool> out(snap.state_count(), false);
  auto it = snap.labels().find(label);
  if (it != snap.labels().end()) {
    for (auto s : it->second) out[ag::index_of(s)] = true;
  }
  return out;
}

std::vector<double> reach(const DenseMdp& m, const std::vector<bool>& goal, bool maximize) {
  auto best = start_value(m.n, maximize);
  const std::vector<bool> all(m.n, true);
  for_each_policy(m, [&](const Matrix& p, const std::vector<double>&) { keep_best(best, chain_until(p, all, goal), maximize); });
  return best;
}

std::vector<double> reach_bounded(const DenseMdp& m, const std::vector<bool>& goal, bool maximize, unsigned k) {
  std::vector<std::vector<std::optional<double>>> memo(m.n, std::vector<std::optional<double>>(k + 1));
  std::function<double(std::size_t, unsigned)> value = [&](std::size_t s, unsigned steps) -> double {
    if (goal[s]) return 1.0;
    if (steps == 0) return 0.0;
    if (memo[s][steps]) return *memo[s][steps];
    double best = maximize ? -kInf : kInf;
    for (const auto& c : m.choices[s]) {
      double v = 0.0;
      for (std::size_t t = 0; t < m.n; ++t) {
        if (c.p[t] > 0) v += c.p[t] * value(t, steps - 1);
      }
      best = maximize ? std::max(best, v) : std::min(best, v);
    }
    memo[s][steps] = best;
    return best;
  };
  std::vector<double> out(m.n);
  for (std::size_t s = 0; s < m.n; ++s) out[s] = value(s, k);
  return out;
}

std::vector<double> globally(const DenseMdp& m, const std::vector<bool>& safe, bool maximize) {
  auto best = start_value(m.n, maximize);
  const std::vector<bool> none(m.n, false);
  for_each_policy(m, [&](const Matrix& p, const std::vector<double>&) {
    // Staying safe forever means entering a bottom component that is safe
    // throughout, without leaving the safe states on the way.
    auto c = closure(p, none);
    std::vector<bool> target(m.n, false);
    for (std::size_t s = 0; s < m.n; ++s) {
      bool bottom = true;
      bool all_safe = true;
      for (std::size_t t = 0; t < m.n; ++t) {
        if (!c[s][t]) continue;
        bottom = bottom && c[t][s];
        all_safe = all_safe && safe[t];
      }
      target[s] = bottom && all_safe;
    }
    keep_best(best, chain_until(p, safe, target), maximize);
  });
  return best;
}

std::vector<double> globally_bounded(const DenseMdp& m, const std::vector<bool>& safe, bool maximize, unsigned k) {
  std::vector<std::vector<std::optional<double>>> memo(m.n, std::vector<std::optional<double>>(k + 1));
  std::function<double(std::size_t, unsigned)> value = [&](std::size_t s, unsigned steps) -> double {
    if (!safe[s]) return 0.0;
    if (steps == 0) return 1.0;
    if (memo[s][steps]) return *memo[s][steps];
    double best = maximize ? -kInf : kInf;
    for (const auto& c : m.choices[s]) {
      double v = 0.0;
      for (std::size_t t = 0; t < m.n; ++t) {
        if (c.p[t] > 0) v += c.p[t] * value(t, steps - 1);
      }
      best = maximize ? std::max(best, v) : std::min(best, v);
    }
    memo[s][steps] = best;
    return best;
  };
  std::vector<double> out(m.n);
  for (std::size_t s = 0; s < m.n; ++s) out[s] = value(s, k);
  return out;
}

std::vector<double> reward(const DenseMdp& m, const std::vector<bool>& goal, bool maximize) {
  auto best = start_value(m.n, maximize);
  for_each_policy(m, [&](const Matrix& p, const std::vector<double>& r) {
    // Almost-sure states: nothing reachable (before the goal) is cut off
    // from the goal.
    auto c = closure(p, goal);
    std::vector<bool> sure(m.n, false);
    for (std::size_t s = 0; s < m.n; ++s) {
      bool ok = true;
      for (std::size_t t = 0; t < m.n && ok; ++t) {
        if (!c[s][t]) continue;
        bool hits = false;
        for (std::size_t g = 0; g < m.n; ++g) hits = hits || (c[t][g] && goal[g]);
        ok = hits;
      }
      sure[s] = ok;
    }
    std::vector<int> unknown(m.n, -1);
    std::vector<std::size_t> order;
    for (std::size_t s = 0; s < m.n; ++s) {
      if (sure[s] && !goal[s]) {
        unknown[s] = static_cast<int>(order.size());
        order.push_back(s);
      }
    }
    std::vector<double> x(m.n, kInf);
    for (std::size_t s = 0; s < m.n; ++s) {
      if (goal[s]) x[s] = 0.0;
    }
    if (!order.empty()) {
      Matrix a(order.size(), std::vector<double>(order.size(), 0.0));
      std::vector<double> b(order.size(), 0.0);
      for (std::size_t i = 0; i < order.size(); ++i) {
        const std::size_t s = order[i];
        a[i][i] = 1.0;
        b[i] = r[s];
        for (std::size_t t = 0; t < m.n; ++t) {
          if (unknown[t] >= 0) a[i][unknown[t]] -= p[s][t];
        }
      }
      auto sol = solve_dense(std::move(a), std::move(b));
      for (std::size_t i = 0; i < order.size(); ++i) x[order[i]] = sol[i];
    }
    keep_best(best, x, maximize);
  });
  return best;
}

}  // namespace oracle
