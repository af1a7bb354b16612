#include <cmath>

#include "decac/oracle.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace decac;

namespace {

Matrix random_policy_table(const env::TabularMDP& mdp, Rng& rng) {
  const oracle::TabularSoftmax sm{mdp.n_states(), mdp.num_agents(), mdp.num_local_actions()};
  const auto theta = testing::gaussian(sm.num_params(), rng);
  return sm.joint_table(mdp, theta);
}

}  // namespace

TEST_CASE("exact Q agrees with Monte Carlo rollouts") {
  Rng rng(1);
  const double gamma = 0.6;
  const auto mdp = env::random_tabular(3, 2, 2, gamma, rng);
  const auto pi = random_policy_table(mdp, rng);
  const auto q = oracle::exact_q(mdp, pi, gamma);
  const int rollouts = 20000;
  const int horizon = 40;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t a = 0; a < 4; ++a) {
      double total = 0.0;
      for (int k = 0; k < rollouts; ++k) {
        std::size_t st = s, ac = a;
        double disc = 1.0, ret = 0.0;
        for (int h = 0; h < horizon; ++h) {
          ret += disc * mdp.mean_reward(st, ac);
          disc *= gamma;
          std::vector<double> row(3);
          for (std::size_t s2 = 0; s2 < 3; ++s2) row[s2] = mdp.P(st, ac, s2);
          st = rng.categorical(row);
          ac = rng.categorical(pi.row(st));
        }
        total += ret;
      }
      CHECK(total / rollouts == doctest::Approx(q(s, a)).epsilon(0.02));
    }
  }
}

TEST_CASE("exact Q is a Bellman fixed point") {
  Rng rng(2);
  const auto mdp = env::random_tabular(5, 1, 3, 0.9, rng);
  const auto pi = random_policy_table(mdp, rng);
  const auto q = oracle::exact_q(mdp, pi, 0.9);
  const auto tq = oracle::bellman_image(mdp, pi, 0.9, q);
  CHECK(testing::max_abs_diff(q.values(), tq.values()) < 1e-10);
  CHECK(oracle::msbe(mdp, pi, 0.9, q) < 1e-10);
  Matrix zero(5, 3);
  CHECK(oracle::msbe(mdp, pi, 0.9, zero) > 0.0);
  const auto adv = oracle::advantage(q, pi);
  for (std::size_t s = 0; s < 5; ++s) {
    double m = 0.0;
    for (std::size_t a = 0; a < 3; ++a) m += pi(s, a) * adv(s, a);
    CHECK(std::abs(m) < 1e-10);
  }
}

TEST_CASE("stationary distribution: power iteration, null space and sampling agree") {
  Rng rng(3);
  const double gamma = 0.8;
  const auto mdp = env::random_tabular(4, 1, 2, gamma, rng);
  const auto pi = random_policy_table(mdp, rng);
  const auto nu = oracle::stationary_restart(mdp, pi, gamma);
  const auto nu2 = oracle::stationary_nullspace(mdp, pi, gamma);
  CHECK(testing::max_abs_diff(nu, nu2) < 1e-9);

  std::vector<double> counts(4, 0.0);
  std::size_t s = 0;
  const int steps = 400000;
  for (int k = 0; k < steps; ++k) {
    const std::size_t a = rng.categorical(pi.row(s));
    std::vector<double> row(4);
    for (std::size_t s2 = 0; s2 < 4; ++s2) row[s2] = mdp.P(s, a, s2);
    s = rng.categorical(row);
    if (rng.uniform() >= gamma) s = 0;
    counts[s] += 1.0;
  }
  for (std::size_t i = 0; i < 4; ++i) CHECK(counts[i] / steps == doctest::Approx(nu[i]).epsilon(0.02));
}

TEST_CASE("stationary distribution is (1 - gamma) times the visitation measure") {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const double gamma = 0.3 + 0.6 * rng.uniform();
    const auto mdp = env::random_tabular(2 + trial, 2, 2, gamma, rng);
    const auto sol = oracle::solve(mdp, random_policy_table(mdp, rng), gamma);
    for (std::size_t s = 0; s < sol.nu.size(); ++s) {
      CHECK(std::abs(sol.nu[s] - (1 - gamma) * sol.eta[s]) < 1e-8);
    }
    CHECK(sol.objective == doctest::Approx(sol.v[static_cast<std::size_t>(mdp.s0())]));
  }
}

TEST_CASE("finite-difference gradient of J and the policy gradient theorem") {
  Rng rng(5);
  const double gamma = 0.7;
  const auto mdp = env::random_tabular(3, 1, 2, gamma, rng);
  const oracle::TabularSoftmax sm{3, 1, 2};
  const auto theta = testing::gaussian(sm.num_params(), rng);
  const auto table = [&](std::span<const double> th) { return sm.joint_table(mdp, th); };
  const auto fd = oracle::exact_objective_and_fd_gradient(mdp, table, theta, gamma);
  const auto rhs = oracle::policy_gradient_expectation(
      mdp, sm.joint_table(mdp, theta), gamma,
      [&](std::size_t s, std::size_t a) { return sm.score(mdp, theta, s, a); });
  for (std::size_t k = 0; k < rhs.size(); ++k) {
    CHECK(fd.gradient[k] == doctest::Approx(rhs[k] / (1 - gamma)).epsilon(1e-5));
  }
  CHECK_THROWS_AS(oracle::exact_objective_and_fd_gradient(mdp, table, theta, gamma, 0.0),
                  ConfigError);
}

TEST_CASE("projected Bellman error is at most the Bellman error") {
  Rng rng(6);
  const auto mdp = env::random_tabular(3, 1, 2, 0.8, rng);
  const auto pi = random_policy_table(mdp, rng);
  // Q̂ inside the linearized class, so projecting can only shrink the error.
  Matrix qhat(3, 2), q0(3, 2), feats(6, 2);
  for (double& v : q0.values()) v = rng.normal(0.0, 1.0);
  for (double& v : feats.values()) v = rng.normal(0.0, 1.0);
  const double c0 = rng.normal(0.0, 1.0), c1 = rng.normal(0.0, 1.0);
  for (std::size_t i = 0; i < 6; ++i) qhat.values()[i] = q0.values()[i] + c0 * feats(i, 0) + c1 * feats(i, 1);
  const double msbe = oracle::msbe(mdp, pi, 0.8, qhat);
  const double mspbe = oracle::mspbe_linearized(mdp, pi, 0.8, qhat, q0, feats);
  CHECK(mspbe >= 0.0);
  CHECK(mspbe <= msbe + 1e-12);
}

TEST_CASE("oracle size limits") {
  Rng rng(7);
  const auto big = env::random_tabular(17, 1, 2, 0.5, rng);
  CHECK_THROWS_AS(oracle::check_oracle_size(big), ConfigError);
}
