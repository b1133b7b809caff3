#include "agentguard/checker.hpp"
#include "support/generators.hpp"
#include "support/oracle.hpp"
#include "support/toy3.hpp"

#include <doctest.h>

#include <cmath>

using namespace agentguard;

namespace {

const CheckSettings kSettings{};

double value_of(const ModelSnapshot& snap, std::string_view text) {
  auto r = check(snap, pctl::parse_property(text), kSettings);
  REQUIRE(r.value.is_defined());
  return r.value.number;
}

bool close(double a, double b, double tol) {
  if (std::isinf(a) || std::isinf(b)) return a == b;
  return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

}  // namespace

TEST_CASE("toy3 reference values") {
  auto snap = make_toy3().snapshot();
  CHECK(value_of(snap, R"(Pmax=? [ F "goal" ])") == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(value_of(snap, R"(Pmin=? [ F "goal" ])") == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(value_of(snap, R"(Pmax=? [ F<=2 "goal" ])") == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(value_of(snap, R"(Pmax=? [ G !"fail" ])") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(value_of(snap, R"(Rmin=? [ F "goal" ])") == doctest::Approx(10.0).epsilon(1e-6));
  auto rmax = check(snap, pctl::parse_property(R"(Rmax=? [ F "goal" ])"), kSettings);
  CHECK(rmax.value.is_infinite());
}

TEST_CASE("toy3 bound forms") {
  auto snap = make_toy3().snapshot();
  auto ge = check(snap, pctl::parse_property(R"(Pmin>=0.5 [ F "goal" ])"), kSettings);
  CHECK(ge.value.number == doctest::Approx(0.5));
  CHECK(ge.satisfied == true);
  auto gt = check(snap, pctl::parse_property(R"(Pmin>0.5 [ F "goal" ])"), kSettings);
  CHECK(gt.satisfied == false);
  auto inf = check(snap, pctl::parse_property(R"(Rmax<=100 [ F "goal" ])"), kSettings);
  CHECK(inf.satisfied == false);
}

TEST_CASE("policy mode uses the induced chain") {
  auto snap = make_toy3().snapshot();
  // Observed behaviour: a 2/12, b 10/12 at s0.
  // x = (2/12)(1/2) + (10/12)(1/10 + 9/10 x)  =>  x = (1/12 + 1/12) / (1 - 9/12) = 2/3
  CHECK(value_of(snap, R"(P=? [ F "goal" ])") == doctest::Approx(2.0 / 3.0).epsilon(1e-7));
}

TEST_CASE("trivial quantities") {
  auto snap = make_toy3().snapshot();
  CHECK(value_of(snap, R"(Pmin=? [ G true ])") == 1.0);
  CHECK(value_of(snap, R"(Pmax=? [ G false ])") == 0.0);
  CHECK(value_of(snap, R"(Pmax=? [ F "s0" ])") == 1.0);
  CHECK(value_of(snap, R"(Pmin=? [ F "s0" ])") == 1.0);
  CHECK(value_of(snap, R"(Rmin=? [ F "s0" ])") == 0.0);
  CHECK(value_of(snap, R"(Pmax=? [ F "never_seen" ])") == 0.0);
}

TEST_CASE("unvisited initial state") {
  LearnedMdp m;
  m.add_state("start");
  m.set_initial(*m.find_state("start"));
  m.record_transition({"x", "a", "y", std::nullopt, std::nullopt});
  try {
    check(m.snapshot(), pctl::parse_property(R"(Pmax=? [ F "y" ])"), kSettings);
    FAIL("expected EmptyModel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyModel);
  }
}

TEST_CASE("negative rewards are refused") {
  LearnedMdp m;
  m.record_transition({"s", "a", "g", -1.0, std::nullopt});
  m.set_initial(*m.find_state("s"));
  try {
    check(m.snapshot(), pctl::parse_property(R"(R{"observed"}min=? [ F "g" ])"), kSettings);
    FAIL("expected NegativeReward");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NegativeReward);
  }
}

TEST_CASE("qualitative precomputation") {
  LearnedMdp m;
  auto ev = [](const char* s, const char* a, const char* t) { return TransitionEvent{s, a, t, {}, {}}; };
  m.record_transition(ev("s", "a", "goal"));
  m.record_transition(ev("s", "a", "s"));
  m.record_transition(ev("s", "b", "trap"));
  m.record_transition(ev("trap", "a", "trap"));
  auto snap = m.snapshot();
  StateSet goal(snap.state_count(), false);
  goal[index_of(*snap.find_state("goal"))] = true;
  auto s = index_of(*snap.find_state("s"));
  auto g = index_of(*snap.find_state("goal"));
  auto t = index_of(*snap.find_state("trap"));
  auto max = qualitative_precompute(snap, goal, Direction::Max);
  CHECK(max.prob1[g]);
  CHECK(max.prob1[s]);
  CHECK(max.prob0[t]);
  auto min = qualitative_precompute(snap, goal, Direction::Min);
  CHECK(min.prob1[g]);
  CHECK(min.prob0[s]);
  CHECK(min.prob0[t]);
}

TEST_CASE("random models agree with the brute-force oracle") {
  std::mt19937_64 rng(1234);
  for (int i = 0; i < 60; ++i) {
    gen::ModelShape shape;
    shape.decay = i % 3 == 0;
    auto snap = gen::random_model(rng, shape);
    SparseMdp mdp(snap);
    auto dense = oracle::from_snapshot(snap, "cost");
    auto goal = oracle::label_set(snap, "goal");
    auto safe = oracle::label_set(snap, "safe");
    const StateSet all(snap.state_count(), true);
    for (auto dir : {Direction::Max, Direction::Min}) {
      const bool maximize = dir == Direction::Max;
      auto got = solve_until(mdp, all, goal, dir, std::nullopt, kSettings).values;
      auto want = oracle::reach(dense, goal, maximize);
      for (std::size_t s = 0; s < got.size(); ++s) CHECK(close(got[s], want[s], 1e-6));

      auto bounded = solve_until(mdp, all, goal, dir, 4, kSettings).values;
      auto bounded_want = oracle::reach_bounded(dense, goal, maximize, 4);
      for (std::size_t s = 0; s < got.size(); ++s) CHECK(close(bounded[s], bounded_want[s], 1e-12));

      auto reward = solve_reward(mdp, mdp.choice_rewards(*snap.reward_index("cost")), goal, dir, kSettings).values;
      auto reward_want = oracle::reward(dense, goal, maximize);
      for (std::size_t s = 0; s < got.size(); ++s) CHECK_MESSAGE(close(reward[s], reward_want[s], 1e-6), "model " << i);

      const auto opt = maximize ? pctl::Optimization::Max : pctl::Optimization::Min;
      auto g = globally_probability(snap, pctl::StateFormula::atom("safe"), opt, std::nullopt, kSettings);
      auto g_want = oracle::globally(dense, safe, maximize);
      CHECK(close(g.value.number, g_want[0], 1e-6));
      auto gk = globally_probability(snap, pctl::StateFormula::atom("safe"), opt, 3, kSettings);
      CHECK(close(gk.value.number, oracle::globally_bounded(dense, safe, maximize, 3)[0], 1e-12));
    }
  }
}

TEST_CASE("until with a restricting left operand") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 30; ++i) {
    auto snap = gen::random_model(rng);
    auto dense = oracle::from_snapshot(snap);
    auto goal = oracle::label_set(snap, "goal");
    auto safe = oracle::label_set(snap, "safe");
    // Until: make unsafe, non-goal states absorbing failures in the oracle.
    for (std::size_t s = 0; s < dense.n; ++s) {
      if (safe[s] || goal[s]) continue;
      oracle::DenseChoice loop;
      loop.p.assign(dense.n, 0.0);
      loop.p[s] = 1.0;
      dense.choices[s] = {loop};
    }
    auto r = check(snap, pctl::parse_property(R"(Pmax=? [ "safe" U "goal" ])"), kSettings);
    CHECK(close(r.value.number, oracle::reach(dense, goal, true)[0], 1e-6));
  }
}

TEST_CASE("iteration cap reports non-convergence") {
  auto snap = make_toy3().snapshot();
  CheckSettings tight;
  tight.max_iterations = 3;
  auto r = check(snap, pctl::parse_property(R"(Rmin=? [ F "goal" ])"), tight);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 3);
  CHECK(r.residual > 0.0);
}

TEST_CASE("end components do not hold the upper bound up") {
  // s <-> t loop freely; each can also gamble on the goal.
  LearnedMdp m;
  auto ev = [](const char* s, const char* a, const char* t) { return TransitionEvent{s, a, t, {}, {}}; };
  m.record_transition(ev("s", "loop", "t"));
  m.record_transition(ev("t", "loop", "s"));
  for (int i = 0; i < 3; ++i) m.record_transition(ev("s", "try", "goal"));
  m.record_transition(ev("s", "try", "fail"));
  m.record_transition(ev("t", "try", "goal"));
  m.record_transition(ev("t", "try", "fail"));
  auto snap = m.snapshot();
  StateSet goal(snap.state_count(), false);
  goal[index_of(*snap.find_state("goal"))] = true;
  SparseMdp mdp(snap);
  auto sol = solve_until(mdp, StateSet(snap.state_count(), true), goal, Direction::Max, std::nullopt, kSettings);
  CHECK(sol.converged);
  CHECK(sol.residual <= 2 * kSettings.epsilon);
  CHECK(sol.values[index_of(*snap.find_state("s"))] == doctest::Approx(0.75).epsilon(1e-8));
  CHECK(sol.values[index_of(*snap.find_state("t"))] == doctest::Approx(0.75).epsilon(1e-8));
}

TEST_CASE("unbounded values bracket the step-bounded ones") {
  std::mt19937_64 rng(4321);
  for (int i = 0; i < 40; ++i) {
    auto snap = gen::random_model(rng);
    SparseMdp mdp(snap);
    auto goal = oracle::label_set(snap, "goal");
    const StateSet all(snap.state_count(), true);
    for (auto dir : {Direction::Max, Direction::Min}) {
      auto full = solve_until(mdp, all, goal, dir, std::nullopt, kSettings).values;
      auto far = solve_until(mdp, all, goal, dir, 20000, kSettings).values;
      for (std::size_t s = 0; s < full.size(); ++s) CHECK(std::abs(full[s] - far[s]) <= kSettings.epsilon);
    }
  }
}
