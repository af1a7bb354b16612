#include <algorithm>
#include <cmath>
#include <cstdio>

#include "decac/consensus.hpp"
#include "decac/critic.hpp"
#include "decac/harness.hpp"
#include "decac/oracle.hpp"

namespace decac::harness {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

SparseVec random_unit(std::size_t d, Rng& rng) {
  std::vector<double> x(d);
  for (double& v : x) v = rng.normal(0.0, 1.0);
  const double n = norm2(x);
  for (double& v : x) v /= n;
  return SparseVec::from_dense(x);
}

Check gradient_check(const VerifyOptions& opts) {
  Rng rng(derive_seed(opts.seed, 11));
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 3 + rng.below(4);
    const std::size_t depth = 1 + rng.below(3);
    const std::size_t d = 2 + rng.below(5);
    nn::FCNet net = nn::init_net(m, depth, d, 1, rng.engine()());
    const SparseVec x = random_unit(d, rng);
    nn::NetGradient g = nn::grad_w(net, x, 0);
    if (opts.mutate_gradient) {
      auto& v = g.values();
      auto it = std::max_element(v.begin(), v.end(),
                                 [](double a, double b) { return std::abs(a) < std::abs(b); });
      *it *= 1.5;
    }
    const double h = 1e-6;
    double err = 0.0;
    double scale = 0.0;
    for (std::size_t k = 0; k < net.hidden.size(); ++k) {
      const double orig = net.hidden.values()[k];
      net.hidden.values()[k] = orig + h;
      const double up = nn::forward_value(net, x);
      net.hidden.values()[k] = orig - h;
      const double down = nn::forward_value(net, x);
      net.hidden.values()[k] = orig;
      const double fd = (up - down) / (2 * h);
      err = std::max(err, std::abs(fd - g.values()[k]));
      scale = std::max(scale, std::abs(fd));
    }
    if (scale > 0.0) worst = std::max(worst, err / scale);
  }
  return {"neural gradient vs finite differences", worst < 1e-3,
          "max relative error " + num(worst) + " over 20 nets"};
}

Matrix random_softmax_table(const env::TabularMDP& mdp, Rng& rng) {
  const oracle::TabularSoftmax sm{mdp.n_states(), mdp.num_agents(), mdp.num_local_actions()};
  std::vector<double> theta(sm.num_params());
  for (double& t : theta) t = rng.normal(0.0, 1.0);
  return sm.joint_table(mdp, theta);
}

Check lemma_stationary(const VerifyOptions& opts) {
  Rng rng(derive_seed(opts.seed, 12));
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t ns = 2 + rng.below(7);
    const double gamma = 0.5 + 0.45 * rng.uniform();
    const env::TabularMDP mdp = env::random_tabular(ns, 2, 2, gamma, rng);
    const Matrix pi = random_softmax_table(mdp, rng);
    const auto nu = oracle::stationary_restart(mdp, pi, gamma);
    const auto eta = oracle::visitation(mdp, pi, gamma, static_cast<std::size_t>(mdp.s0()));
    for (std::size_t s = 0; s < ns; ++s) worst = std::max(worst, std::abs(nu[s] - (1 - gamma) * eta[s]));
  }
  return {"restart stationary distribution = (1-gamma) visitation", worst < 1e-8,
          "max deviation " + num(worst) + " over 10 MDPs"};
}

Check lemma_gradient(const VerifyOptions& opts) {
  Rng rng(derive_seed(opts.seed, 13));
  double worst_cos = 1.0;
  double worst_ratio = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const double gamma = 0.5 + 0.4 * rng.uniform();
    const env::TabularMDP mdp = env::random_tabular(3, 1, 2, gamma, rng);
    const oracle::TabularSoftmax sm{3, 1, 2};
    std::vector<double> theta(sm.num_params());
    for (double& t : theta) t = rng.normal(0.0, 1.0);
    const auto fd = oracle::exact_objective_and_fd_gradient(
        mdp, [&](std::span<const double> th) { return sm.joint_table(mdp, th); }, theta, gamma);
    const auto rhs = oracle::policy_gradient_expectation(
        mdp, sm.joint_table(mdp, theta), gamma,
        [&](std::size_t s, std::size_t a) { return sm.score(mdp, theta, s, a); });
    double dot = 0.0, nf = 0.0, nr = 0.0;
    for (std::size_t k = 0; k < rhs.size(); ++k) {
      dot += fd.gradient[k] * rhs[k];
      nf += fd.gradient[k] * fd.gradient[k];
      nr += rhs[k] * rhs[k];
    }
    worst_cos = std::min(worst_cos, dot / std::sqrt(nf * nr));
    const double ratio = (dot / nr) * (1 - gamma);
    worst_ratio = std::max(worst_ratio, std::abs(ratio - 1.0));
  }
  return {"policy gradient proportional to stationary score-advantage sum",
          worst_cos > 0.999 && worst_ratio < 1e-3,
          "min cosine " + num(worst_cos) + ", max ratio error " + num(worst_ratio)};
}

std::vector<Check> consensus_checks(const VerifyOptions& opts) {
  std::vector<Check> out;
  Rng rng(derive_seed(opts.seed, 14));
  for (const std::string topo : {"ring", "star", "complete"}) {
    bool ok = true;
    std::string detail;
    for (std::size_t n : {2, 4, 8}) {
      const auto g = consensus::graph_from_spec(topo, n, rng);
      const auto a = consensus::build_metropolis(g);
      Matrix v(n, 4);
      for (double& x : v.values()) x = rng.normal(0.0, 1.0);
      const auto decay = consensus::measure_decay(a.weights, v, 60);
      const double bound = (1.0 - std::pow(a.eta, static_cast<double>(n - 1))) + 0.05;
      ok = ok && decay.non_increasing && decay.asymptotic_ratio <= bound;
      detail += (detail.empty() ? "" : ", ") + std::string("N=") + std::to_string(n) + " rate " +
                num(decay.asymptotic_ratio);
    }
    out.push_back({"consensus decay on " + topo, ok, detail});
  }
  return out;
}

Check projection_check(const VerifyOptions& opts) {
  Rng rng(derive_seed(opts.seed, 15));
  const double radius = 1.5;
  bool ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    nn::HiddenStack w0(3, 2), a(3, 2), b(3, 2);
    for (double& x : w0.values()) x = rng.normal(0.0, 1.0);
    for (std::size_t k = 0; k < a.size(); ++k) {
      a.values()[k] = w0.values()[k] + rng.normal(0.0, 2.0);
      b.values()[k] = w0.values()[k] + rng.normal(0.0, 2.0);
    }
    const auto pa = nn::project_ball(a, w0, radius);
    const auto pb = nn::project_ball(b, w0, radius);
    ok = ok && nn::project_ball(pa, w0, radius) == pa;
    for (std::size_t h = 0; h < 2; ++h) ok = ok && nn::layer_distance(pa, w0, h) <= radius + 1e-9;
    double dp = 0.0, dab = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      dp += (pa.values()[k] - pb.values()[k]) * (pa.values()[k] - pb.values()[k]);
      dab += (a.values()[k] - b.values()[k]) * (a.values()[k] - b.values()[k]);
    }
    ok = ok && std::sqrt(dp) <= std::sqrt(dab) * (1 + 1e-12);
  }
  return {"projection idempotent, feasible and non-expansive", ok, "1000 sampled pairs"};
}

Check single_agent_check(const VerifyOptions& opts) {
  Rng rng(derive_seed(opts.seed, 16));
  const env::TabularMDP mdp = env::random_tabular(3, 1, 2, 0.9, rng);
  const auto policy = env::TabularPolicy::uniform(1, 3, 2);
  const nn::FCNet proto = nn::init_net(8, 2, mdp.state_action_dim(), 1, rng.engine()());
  critic::CriticConfig cfg;
  cfg.iterations = 200;
  const std::uint64_t chain_seed = rng.engine()();
  env::MarkovChain c1(mdp, 0.9, 10, chain_seed);
  env::MarkovChain c2(mdp, 0.9, 10, chain_seed);
  const auto dec = critic::run_decentralized_critic(policy, c1, proto, {proto.initial}, cfg,
                                                    Matrix(1, 1, 1.0));
  const auto cen = critic::run_centralized_critic(policy, c2, proto, cfg);
  const bool same = std::equal(cen.averaged.values().begin(), cen.averaged.values().end(),
                               dec.averaged.row(0).begin());
  return {"single-agent decentralized critic equals centralized critic", same,
          same ? "bit-identical after 200 steps" : "outputs differ"};
}

}  // namespace

std::vector<Check> verify(const VerifyOptions& opts) {
  std::vector<Check> out;
  auto guarded = [&](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded("neural gradient vs finite differences", [&] { out.push_back(gradient_check(opts)); });
  guarded("restart stationary distribution", [&] { out.push_back(lemma_stationary(opts)); });
  guarded("policy gradient proportionality", [&] { out.push_back(lemma_gradient(opts)); });
  guarded("consensus decay", [&] {
    for (auto& c : consensus_checks(opts)) out.push_back(std::move(c));
  });
  guarded("projection", [&] { out.push_back(projection_check(opts)); });
  guarded("single-agent equivalence", [&] { out.push_back(single_agent_check(opts)); });
  return out;
}

}  // namespace decac::harness
