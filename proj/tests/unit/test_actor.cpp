#include <cmath>

#include "decac/actor.hpp"
#include "decac/consensus.hpp"
#include "decac/oracle.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace decac;

namespace {

env::GridSpread small_grid(std::size_t n) {
  env::GridSpreadConfig c;
  c.length = 5;
  c.width = 3;
  c.n_agents = n;
  c.landmark_seed = 2;
  return env::GridSpread(c);
}

actor::NetworkPolicy make_policy(const env::Mamdp& env, std::size_t m, std::uint64_t seed) {
  std::vector<nn::FCNet> actors;
  for (std::size_t i = 0; i < env.num_agents(); ++i) {
    actors.push_back(nn::init_net(m, 2, env.state_dim(), env.num_local_actions(), seed + i));
  }
  return actor::NetworkPolicy(env, std::move(actors));
}

Matrix stacked(const nn::FCNet& proto, std::size_t n) {
  Matrix w(n, proto.initial.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(proto.initial.values().begin(), proto.initial.values().end(), w.row(i).begin());
  }
  return w;
}

}  // namespace

TEST_CASE("step schedule") {
  actor::ActorConfig c;
  c.alpha = 0.2;
  CHECK(c.step_size(1) == 0.2);
  CHECK(c.step_size(2) == 0.1);
  CHECK(c.step_size(4) == 0.05);
  c.schedule = actor::Schedule::Constant;
  CHECK(c.step_size(7) == 0.2);
  c.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("single-step batch reproduces td_error") {
  const auto g = small_grid(2);
  const auto pol = make_policy(g, 6, 1);
  const auto proto = nn::init_net(6, 2, g.state_action_dim(), 1, 50);
  Matrix w = stacked(proto, 2);
  w(1, 0) += 0.3;
  env::MarkovChain chain(g, 0.9, 10, 3), replay(g, 0.9, 10, 3);
  const auto b = actor::collect_batch(pol, proto, w, chain, 1);
  REQUIRE(b.td.rows() == 1);

  const auto s = replay.state();
  const auto a = replay.sample_action(pol);
  const auto step = replay.advance(a, true);
  const auto a2 = replay.sample_action(pol);
  const nn::HiddenStack w1(6, 2, w.row(1));
  CHECK(b.td(0, 1) == critic::td_error(proto, w1, g.state_action_features(s, a), step.rewards[1], 0.9,
                                       g.state_action_features(step.next, a2)));
  CHECK(b.end_state == replay.state());
}

TEST_CASE("identical critics and rewards give identical TD columns") {
  const auto g = small_grid(3);
  const auto pol = make_policy(g, 5, 7);
  const auto proto = nn::init_net(5, 2, g.state_action_dim(), 1, 51);
  env::MarkovChain chain(g, 0.9, 10, 4);
  const auto b = actor::collect_batch(pol, proto, stacked(proto, 3), chain, 20);
  for (std::size_t l = 0; l < 20; ++l) {
    CHECK(b.td(l, 1) == b.td(l, 0));
    CHECK(b.td(l, 2) == b.td(l, 0));
  }
}

TEST_CASE("chain continuity across a batch") {
  const auto g = small_grid(2);
  const auto pol = make_policy(g, 5, 9);
  const auto proto = nn::init_net(5, 2, g.state_action_dim(), 1, 52);
  env::MarkovChain chain(g, 0.9, 4, 5), replay(g, 0.9, 4, 5);
  const auto b = actor::collect_batch(pol, proto, stacked(proto, 2), chain, 13);
  auto a = replay.sample_action(pol);
  for (int l = 0; l < 13; ++l) {
    replay.advance(a, true);
    a = replay.sample_action(pol);
  }
  CHECK(b.end_state == replay.state());
  CHECK(chain.finished_episodes() == replay.finished_episodes());
}

TEST_CASE("TD gossip") {
  Rng rng(1);
  Matrix td(7, 4);
  for (double& v : td.values()) v = rng.normal(0.0, 1.0);
  const auto ring = consensus::build_metropolis(consensus::CommGraph::ring(4)).weights;
  const auto none = actor::gossip_td(ring, td, 0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t l = 0; l < 7; ++l) CHECK(none(i, l) == td(l, i));
  }
  const auto many = actor::gossip_td(ring, td, 50);
  for (std::size_t l = 0; l < 7; ++l) {
    const double mean = (td(l, 0) + td(l, 1) + td(l, 2) + td(l, 3)) / 4.0;
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(many(i, l) - mean) < 1e-8);
  }
  Matrix two(3, 2);
  for (double& v : two.values()) v = rng.normal(0.0, 1.0);
  const auto complete = consensus::build_metropolis(consensus::CommGraph::complete(2)).weights;
  const auto once = actor::gossip_td(complete, two, 1);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(once(0, l) == doctest::Approx((two(l, 0) + two(l, 1)) / 2).epsilon(1e-15));
    CHECK(once(1, l) == once(0, l));
  }
}

TEST_CASE("direction arithmetic and sign modes") {
  const std::vector<std::vector<double>> psi{{1.0, 2.0}, {-1.0, 0.5}};
  const std::vector<double> zero{0.0, 0.0};
  CHECK(actor::direction(zero, psi, -1.0) == std::vector<double>{0.0, 0.0});
  const std::vector<double> one{3.0};
  const std::vector<std::vector<double>> psi1{{1.0, -2.0}};
  CHECK(actor::direction(one, psi1, -1.0) == std::vector<double>{-3.0, 6.0});
  const std::vector<double> w{0.5, -1.5};
  const auto conv = actor::direction(w, psi, -1.0);
  const auto verb = actor::direction(w, psi, 1.0);
  for (std::size_t k = 0; k < 2; ++k) CHECK(conv[k] == -verb[k]);
  CHECK(verb[0] == doctest::Approx((0.5 * 1.0 + -1.5 * -1.0) / 2));
}

TEST_CASE("normalized update has norm alpha_t; zero direction is skipped") {
  auto net = nn::init_net(5, 2, 4, 3, 3);
  const auto before = nn::trainable_params(net, false);
  Rng rng(2);
  auto d = testing::gaussian(before.size(), rng, 10.0);
  CHECK(actor::update_policy(net, d, 0.01, false));
  const auto after = nn::trainable_params(net, false);
  double dist = 0.0;
  for (std::size_t k = 0; k < after.size(); ++k) dist += (after[k] - before[k]) * (after[k] - before[k]);
  CHECK(std::abs(std::sqrt(dist) - 0.01) < 1e-12);
  std::vector<double> z(before.size(), 0.0);
  CHECK_FALSE(actor::update_policy(net, z, 0.01, false));
  CHECK(nn::trainable_params(net, false) == after);
  d[0] = std::nan("");
  CHECK_THROWS_AS(actor::update_policy(net, d, 0.01, false), DomainError);
}

TEST_CASE("signal swap changes only the per-sample weights") {
  const auto g = small_grid(2);
  const auto pol = make_policy(g, 5, 11);
  const auto proto = nn::init_net(5, 2, g.state_action_dim(), 1, 53);
  env::MarkovChain chain(g, 0.9, 10, 6);
  const auto b = actor::collect_batch(pol, proto, stacked(proto, 2), chain, 5);
  std::vector<double> q(5), td(5);
  for (std::size_t l = 0; l < 5; ++l) {
    q[l] = b.q_values(l, 0);
    td[l] = b.td(l, 0);
  }
  const auto dq = actor::direction(q, b.scores[0], 1.0);
  const auto dt = actor::direction(td, b.scores[0], -1.0);
  std::vector<double> rq(dq.size(), 0.0), rt(dq.size(), 0.0);
  for (std::size_t l = 0; l < 5; ++l) {
    for (std::size_t k = 0; k < rq.size(); ++k) {
      rq[k] += q[l] * b.scores[0][l][k] / 5.0;
      rt[k] += -td[l] * b.scores[0][l][k] / 5.0;
    }
  }
  CHECK(testing::max_abs_diff(dq, rq) < 1e-12);
  CHECK(testing::max_abs_diff(dt, rt) < 1e-12);
}

TEST_CASE("training is deterministic and obeys the step-norm law") {
  const auto g = small_grid(2);
  actor::TrainConfig cfg;
  cfg.actor.rounds = 60;
  cfg.actor.batch = 2;
  cfg.actor.alpha = 0.1;
  cfg.width = 6;
  cfg.depth = 2;
  cfg.critic.iterations = 2;
  cfg.episode_len = 5;
  cfg.seed = 4;
  const auto a = consensus::build_metropolis(consensus::CommGraph::complete(2)).weights;
  const auto r1 = actor::train(cfg, g, a);
  const auto r2 = actor::train(cfg, g, a);
  REQUIRE(r1.log.episodes.size() == 24);
  for (std::size_t e = 0; e < r1.log.episodes.size(); ++e) {
    CHECK(r1.log.episodes[e].raw_reward == r2.log.episodes[e].raw_reward);
    CHECK(r1.log.episodes[e].td_loss == r2.log.episodes[e].td_loss);
  }
  for (const auto& s : r1.log.steps) {
    CHECK(s.alpha_t == 0.1 / static_cast<double>(s.round));
    if (!s.skipped) CHECK(std::abs(s.norm - s.alpha_t) < 1e-12);
  }
}

TEST_CASE("Q-weighted directions align with the exact policy gradient") {
  // Two states, one agent, two actions; exact Q plays the critic.
  Rng rng(21);
  const double gamma = 0.8;
  int q_hits = 0, td_hits = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    const auto mdp = env::random_tabular(2, 1, 2, gamma, rng);
    auto pol = make_policy(mdp, 4, 1000 + trial);
    const auto table = [&](std::span<const double> th) {
      auto probe = pol.actor(0);
      nn::set_trainable_params(probe, th, false);
      std::vector<nn::FCNet> one{probe};
      return env::joint_policy_table(mdp, actor::NetworkPolicy(mdp, one));
    };
    const auto theta = nn::trainable_params(pol.actor(0), false);
    const auto fd = oracle::exact_objective_and_fd_gradient(mdp, table, theta, gamma);
    const auto q = oracle::exact_q(mdp, table(theta), gamma);

    env::MarkovChain chain(mdp, gamma, 0, rng.engine()());
    const std::size_t m = 10000;
    std::vector<double> wq(m), wtd(m);
    std::vector<std::vector<double>> scores(m);
    auto s = chain.state();
    auto a = chain.sample_action(pol);
    for (std::size_t l = 0; l < m; ++l) {
      const auto step = chain.advance(a, true);
      const auto a2 = chain.sample_action(pol);
      const auto si = static_cast<std::size_t>(s[0]);
      const auto ai = static_cast<std::size_t>(a[0]);
      wq[l] = q(si, ai);
      wtd[l] = critic::td_error(q(si, ai), step.rewards[0], gamma,
                                q(static_cast<std::size_t>(step.next[0]), static_cast<std::size_t>(a2[0])));
      scores[l] = nn::score(pol.actor(0), mdp.state_features(s), ai);
      s = step.next;
      a = a2;
    }
    const auto dq = actor::direction(wq, scores, 1.0);
    const auto dt = actor::direction(wtd, scores, -1.0);
    double iq = 0.0, it = 0.0;
    for (std::size_t k = 0; k < dq.size(); ++k) {
      iq += dq[k] * fd.gradient[k];
      it += dt[k] * fd.gradient[k];
    }
    q_hits += iq > 0.0;
    td_hits += it > 0.0;
  }
  MESSAGE("positive inner product with the exact gradient: Q-weighted " << q_hits
          << "/100, conventional TD-weighted " << td_hits << "/100");
  CHECK(q_hits >= 95);
}
