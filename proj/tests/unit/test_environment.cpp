#include <cmath>
#include <cstdlib>
#include <set>

#include <nlohmann/json.hpp>

#include "decac/environment.hpp"
#include "doctest.h"

using namespace decac;
using env::Cell;

namespace {

env::GridSpread two_agent_grid() {
  env::GridSpreadConfig c;
  c.landmarks = {{2, 1}, {10, 3}};
  return env::GridSpread(c);
}

// Independent distance routine for the reward oracle.
double l1_reward(const std::vector<Cell>& agents, const std::vector<Cell>& landmarks) {
  double total = 0.0;
  for (const auto& l : landmarks) {
    int best = 1 << 30;
    for (const auto& a : agents) best = std::min(best, std::abs(a.x - l.x) + std::abs(a.y - l.y));
    total += best;
  }
  return -total;
}

}  // namespace

TEST_CASE("agents on the landmarks earn the maximal raw reward") {
  const auto g = two_agent_grid();
  const env::JointAction stay{4, 4};
  const auto [next, raw] = g.grid_step({{{2, 1}, {10, 3}}}, stay);
  CHECK(raw == 0.0);
  CHECK(g.shape_reward(raw) == g.max_l1_sum());
}

TEST_CASE("single agent l1 arithmetic") {
  env::GridSpreadConfig c;
  c.n_agents = 1;
  c.landmarks = {{3, 1}};
  const env::GridSpread g(c);
  CHECK(g.raw_reward({{{0, 0}}}) == -4.0);
}

TEST_CASE("Stay keeps positions; moves clip at the edges") {
  const auto g = two_agent_grid();
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = g.reset(rng);
    const auto st = g.decode(s);
    const auto [next, raw] = g.grid_step(st, {4, 4});
    CHECK(next.agents == st.agents);
    CHECK(raw == l1_reward(st.agents, g.landmarks()));
  }
  const auto [corner, raw] = g.grid_step({{{0, 0}, {12, 4}}}, {2, 0});
  CHECK(corner.agents[0] == Cell{0, 0});
  CHECK(corner.agents[1] == Cell{12, 4});
  const auto [moved, raw2] = g.grid_step({{{5, 2}, {5, 2}}}, {0, 3});
  CHECK(moved.agents[0] == Cell{5, 3});
  CHECK(moved.agents[1] == Cell{6, 2});
  CHECK_THROWS_AS(g.grid_step({{{0, 0}, {0, 0}}}, {5, 0}), DomainError);
}

TEST_CASE("shaped rewards stay in [0, r_max]") {
  const auto g = two_agent_grid();
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = g.reset(rng);
    const env::JointAction a{static_cast<int>(rng.below(5)), static_cast<int>(rng.below(5))};
    const auto r = g.step(s, a, rng);
    for (double x : r.rewards) {
      CHECK(x >= 0.0);
      CHECK(x <= g.reward_max());
    }
    CHECK(r.rewards[0] == r.rewards[1]);
  }
}

TEST_CASE("seeded landmarks are distinct and reproducible") {
  env::GridSpreadConfig c;
  c.n_agents = 4;
  c.landmark_seed = 99;
  const env::GridSpread a(c), b(c);
  CHECK(a.landmarks() == b.landmarks());
  std::set<int> cells;
  for (const auto& l : a.landmarks()) cells.insert(a.cell_index(l));
  CHECK(cells.size() == 4);
}

TEST_CASE("grid encodings are unit norm and one-to-one") {
  const auto g = two_agent_grid();
  Rng rng(3);
  std::set<std::vector<std::uint32_t>> seen;
  for (int s0 = 0; s0 < 65; s0 += 7) {
    for (int s1 = 0; s1 < 65; s1 += 11) {
      for (int a = 0; a < 5; ++a) {
        const auto x = g.state_action_features({s0, s1}, {a, 4 - a});
        CHECK(x.norm() == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(seen.insert(x.index).second);
      }
      CHECK(g.state_features({s0, s1}).norm() == doctest::Approx(1.0).epsilon(1e-15));
    }
  }
}

TEST_CASE("restart kernel jumps to the anchor with probability 1 - gamma") {
  env::TabularMDP mdp(2, 1, 1, 0.7, 0);
  mdp.P(0, 0, 1) = 1.0;
  mdp.P(1, 0, 1) = 1.0;
  Rng rng(4);
  int restarts = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const auto r = env::restart_step(mdp, 0.7, {0}, {1}, {0}, rng);
    if (r.next[0] == 0) ++restarts;
  }
  CHECK(static_cast<double>(restarts) / n == doctest::Approx(0.3).epsilon(0.02));
}

TEST_CASE("tabular json round trip and validation") {
  Rng rng(5);
  const auto mdp = env::random_tabular(4, 2, 2, 0.8, rng);
  mdp.validate();
  const auto back = env::tabular_from_json(env::tabular_to_json(mdp));
  CHECK(back.n_states() == 4);
  CHECK(back.P(2, 3, 1) == mdp.P(2, 3, 1));
  CHECK(back.reward(1, 3, 2) == mdp.reward(1, 3, 2));
  auto bad = mdp;
  bad.P(0, 0, 0) += 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  auto neg = mdp;
  neg.reward(0, 0, 0) = -1.0;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
}

TEST_CASE("joint index uses agent 0 as the lowest digit") {
  env::TabularMDP mdp(1, 3, 2, 0.5, 0);
  CHECK(mdp.joint_index({1, 0, 0}) == 1);
  CHECK(mdp.joint_index({0, 1, 0}) == 2);
  CHECK(mdp.joint_index({1, 1, 1}) == 7);
  for (std::size_t j = 0; j < 8; ++j) CHECK(mdp.joint_index(mdp.decode_joint(j)) == j);
}

TEST_CASE("irreducibility and aperiodicity detection") {
  env::TabularMDP cycle(2, 1, 1, 0.9, 0);
  cycle.P(0, 0, 1) = 1.0;
  cycle.P(1, 0, 0) = 1.0;
  CHECK_FALSE(env::irreducible_aperiodic(cycle));
  cycle.P(1, 0, 0) = 0.5;
  cycle.P(1, 0, 1) = 0.5;
  CHECK(env::irreducible_aperiodic(cycle));
}

TEST_CASE("episodes reset every episode_len game steps") {
  const auto g = two_agent_grid();
  const auto policy = env::TabularPolicy::uniform(2, 1, 5);
  env::MarkovChain chain(g, 0.99, 10, 8);
  Rng rng(6);
  double raw = 0.0;
  for (int k = 0; k < 25; ++k) {
    const auto r = chain.advance({static_cast<int>(rng.below(5)), 4}, true);
    if (k < 10) raw += r.raw_reward;
  }
  REQUIRE(chain.finished_episodes().size() == 2);
  CHECK(chain.finished_episodes()[0] == raw);
  // Critic steps do not count.
  chain.advance({4, 4}, false);
  CHECK(chain.game_steps() == 25);
}

TEST_CASE("product policy table") {
  env::TabularMDP mdp(1, 2, 2, 0.5, 0);
  env::TabularPolicy pol({{{0.25, 0.75}}, {{0.5, 0.5}}});
  const auto t = env::joint_policy_table(mdp, pol);
  CHECK(t(0, mdp.joint_index({1, 0})) == doctest::Approx(0.375));
  CHECK(t(0, 0) + t(0, 1) + t(0, 2) + t(0, 3) == doctest::Approx(1.0));
}
