#include "decac/critic.hpp"

#include <cmath>
#include <ostream>

#include "decac/consensus.hpp"
#include "decac/oracle.hpp"
#include "decac/simd.hpp"

namespace decac::critic {

double td_error(const nn::FCNet& net, const nn::HiddenStack& w, const SparseVec& x, double reward,
                double gamma, const SparseVec& x_next) {
  return td_error(nn::forward_value(net, w, x), reward, gamma, nn::forward_value(net, w, x_next));
}

double CriticConfig::effective_step() const {
  return step > 0.0 ? step : 1.0 / std::sqrt(static_cast<double>(iterations));
}

void CriticConfig::validate() const {
  if (!(radius > 0.0)) throw ConfigError("critic.radius must be positive");
  if (iterations == 0) throw ConfigError("critic.K must be at least 1");
  if (!std::isfinite(step)) throw ConfigError("critic.beta must be finite");
}

std::pair<double, bool> td_step(const nn::FCNet& proto, nn::HiddenStack& w, nn::HiddenStack& avg,
                                const SparseVec& x, double reward, double gamma,
                                const SparseVec& x_next, double beta, double radius,
                                std::size_t k) {
  const auto& kern = simd::kernels();
  auto [q, grad] = nn::value_and_grad(proto, w, x);
  const double q_next = nn::forward_value(proto, w, x_next);
  const double delta = td_error(q, reward, gamma, q_next);
  kern.axpy(-beta * delta, grad.values().data(), w.values().data(), w.size());
  const bool hit = nn::project_ball_inplace(w, proto.initial, radius);
  const double kk = static_cast<double>(k);
  kern.scal((kk + 1.0) / (kk + 2.0), avg.values().data(), avg.size());
  kern.axpy(1.0 / (kk + 2.0), w.values().data(), avg.values().data(), avg.size());
  return {delta, hit};
}

namespace {

Matrix stack_rows(const std::vector<nn::HiddenStack>& stacks) {
  Matrix out(stacks.size(), stacks.empty() ? 0 : stacks[0].size());
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    std::copy(stacks[i].values().begin(), stacks[i].values().end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

CriticResult run_decentralized_critic(const env::JointPolicy& policy, env::MarkovChain& chain,
                                      const nn::FCNet& proto,
                                      const std::vector<nn::HiddenStack>& start,
                                      const CriticConfig& cfg, const Matrix& consensus,
                                      bool record_iterates) {
  cfg.validate();
  const env::Mamdp& env = chain.env();
  const std::size_t n = env.num_agents();
  if (start.size() != n) throw StructuralError("critic: need one start stack per agent");
  if (consensus.rows() != n) throw StructuralError("critic: consensus matrix size != agents");
  for (const auto& w : start) {
    if (!w.same_shape(proto.initial)) throw StructuralError("critic: start stack shape mismatch");
  }
  const double beta = cfg.effective_step();
  const double gamma = chain.gamma();

  std::vector<nn::HiddenStack> current = start;
  std::vector<nn::HiddenStack> average = start;
  CriticResult out;
  if (record_iterates) {
    out.iterates.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.iterates[i].push_back(current[i]);
  }

  env::State s = chain.state();
  env::JointAction a = chain.sample_action(policy);
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    out.last_state = s;
    out.last_action = a;
    const env::StepResult step = chain.advance(a, false);
    const env::JointAction a_next = chain.sample_action(policy);
    const SparseVec x = env.state_action_features(s, a);
    const SparseVec x_next = env.state_action_features(step.next, a_next);

    IterationLog entry;
    entry.k = k;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [delta, hit] = td_step(proto, current[i], average[i], x, step.rewards[i], gamma,
                                        x_next, beta, cfg.radius, k);
      if (!std::isfinite(delta)) throw DomainError("critic: non-finite TD error at k=" + std::to_string(k));
      entry.td_loss.push_back(delta * delta);
      entry.boundary_hit.push_back(hit);
      if (record_iterates) out.iterates[i].push_back(current[i]);
    }
    entry.param_disagreement = n > 1 ? consensus::disagreement(stack_rows(current)) : 0.0;
    out.log.push_back(std::move(entry));
    s = step.next;
    a = a_next;
  }

  out.averaged = stack_rows(average);
  out.gossiped = consensus::gossip(consensus, out.averaged, cfg.gossip_rounds);
  return out;
}

CentralizedResult run_centralized_critic(const env::JointPolicy& policy, env::MarkovChain& chain,
                                         const nn::FCNet& proto, const CriticConfig& cfg) {
  cfg.validate();
  const env::Mamdp& env = chain.env();
  const double beta = cfg.effective_step();
  const double gamma = chain.gamma();
  const std::size_t loops =
      cfg.verbatim_offbyone ? (cfg.iterations > 0 ? cfg.iterations - 1 : 0) : cfg.iterations;

  nn::HiddenStack v = proto.initial;
  nn::HiddenStack avg = proto.initial;
  CentralizedResult out;
  env::State s = chain.state();
  env::JointAction a = chain.sample_action(policy);
  out.last_state = s;
  for (std::size_t k = 0; k < loops; ++k) {
    out.last_state = s;
    const env::StepResult step = chain.advance(a, false);
    const env::JointAction a_next = chain.sample_action(policy);
    double r_bar = 0.0;
    for (double r : step.rewards) r_bar += r;
    r_bar /= static_cast<double>(step.rewards.size());
    const auto [delta, hit] = td_step(proto, v, avg, env.state_action_features(s, a), r_bar, gamma,
                                      env.state_action_features(step.next, a_next), beta,
                                      cfg.radius, k);
    (void)hit;
    out.td_loss.push_back(delta * delta);
    s = step.next;
    a = a_next;
  }
  out.averaged = std::move(avg);
  return out;
}

Matrix q_table(const env::TabularMDP& mdp, const nn::FCNet& net, const nn::HiddenStack& w) {
  Matrix q(mdp.n_states(), mdp.n_joint_actions());
  for (std::size_t s = 0; s < q.rows(); ++s) {
    for (std::size_t a = 0; a < q.cols(); ++a) {
      q(s, a) = nn::forward_value(net, w, mdp.state_action_features(s, a));
    }
  }
  return q;
}

BellmanDiagnostic mspbe_diagnostic(const nn::FCNet& net, const nn::HiddenStack& w,
                                   const env::JointPolicy& policy, const env::TabularMDP& mdp,
                                   double gamma) {
  oracle::check_oracle_size(mdp);
  const Matrix pi = env::joint_policy_table(mdp, policy);
  const Matrix qhat = q_table(mdp, net, w);
  BellmanDiagnostic out;
  out.msbe = oracle::msbe(mdp, pi, gamma, qhat);

  const std::size_t rows = mdp.n_states() * mdp.n_joint_actions();
  Matrix features(rows, net.initial.size());
  Matrix q0(mdp.n_states(), mdp.n_joint_actions());
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    for (std::size_t a = 0; a < mdp.n_joint_actions(); ++a) {
      auto [v0, g0] = nn::value_and_grad(net, net.initial, mdp.state_action_features(s, a));
      q0(s, a) = v0;
      std::copy(g0.values().begin(), g0.values().end(), features.row(s * mdp.n_joint_actions() + a).begin());
    }
  }
  out.mspbe = oracle::mspbe_linearized(mdp, pi, gamma, qhat, q0, features);
  return out;
}

void write_log_csv(std::ostream& os, const std::vector<IterationLog>& log) {
  os << "k,agent,td_loss,boundary_hit,param_disagreement\n";
  for (const auto& e : log) {
    for (std::size_t i = 0; i < e.td_loss.size(); ++i) {
      os << e.k << ',' << i << ',' << e.td_loss[i] << ',' << (e.boundary_hit[i] ? 1 : 0) << ','
         << e.param_disagreement << '\n';
    }
  }
}

}  // namespace decac::critic
