#pragma once

// Decentralized projected neural TD (each agent runs semi-gradient TD on its
// own reward, projects onto the per-layer ball around W(0), keeps a running
// average of its iterates, and the averages are gossiped once at the end),
// plus the pseudo-centralized reference that trains a single parameter on
// the agent-averaged reward.

#include <iosfwd>
#include <vector>

#include "decac/common.hpp"
#include "decac/environment.hpp"
#include "decac/neural_net.hpp"

namespace decac::critic {

/// Estimate minus target: q_sa - reward - gamma * q_next.
inline double td_error(double q_sa, double reward, double gamma, double q_next) {
  return q_sa - reward - gamma * q_next;
}

double td_error(const nn::FCNet& net, const nn::HiddenStack& w, const SparseVec& x, double reward,
                double gamma, const SparseVec& x_next);

struct CriticConfig {
  double radius = 5.0;          // B
  double step = 0.0;            // beta; <= 0 selects 1/sqrt(K)
  std::size_t iterations = 1;   // K
  std::size_t gossip_rounds = 0;
  /// Pseudo-centralized loop runs K-1 iterations (k = 0..K-2) when set.
  bool verbatim_offbyone = false;

  double effective_step() const;
  void validate() const;
};

struct IterationLog {
  std::size_t k = 0;
  std::vector<double> td_loss;        // per agent, delta^2
  std::vector<bool> boundary_hit;     // per agent, projection was active
  double param_disagreement = 0.0;    // across the agents' current iterates
};

struct CriticResult {
  Matrix gossiped;                    // W_K, one flattened stack per row
  Matrix averaged;                    // running averages before gossip
  env::State last_state;              // s_{K-1}
  env::JointAction last_action;       // a_{K-1}
  std::vector<IterationLog> log;
  /// W^i(0..K) per agent, only filled when requested.
  std::vector<std::vector<nn::HiddenStack>> iterates;
};

/// One projected TD step on `w` followed by the running-average update of
/// `avg` at iteration k. Returns (delta, projection active).
std::pair<double, bool> td_step(const nn::FCNet& proto, nn::HiddenStack& w, nn::HiddenStack& avg,
                                const SparseVec& x, double reward, double gamma,
                                const SparseVec& x_next, double beta, double radius,
                                std::size_t k);

/// `start` holds W^i(0) per agent (all equal to proto.initial for a cold
/// start). The chain supplies one shared trajectory; agent i learns from
/// its own reward. The chain's state after return is s_K.
CriticResult run_decentralized_critic(const env::JointPolicy& policy, env::MarkovChain& chain,
                                      const nn::FCNet& proto,
                                      const std::vector<nn::HiddenStack>& start,
                                      const CriticConfig& cfg, const Matrix& consensus,
                                      bool record_iterates = false);

struct CentralizedResult {
  nn::HiddenStack averaged;  // V̄
  env::State last_state;
  std::vector<double> td_loss;
};

/// Same procedure on the averaged reward with a single parameter V started
/// from proto.initial.
CentralizedResult run_centralized_critic(const env::JointPolicy& policy, env::MarkovChain& chain,
                                         const nn::FCNet& proto, const CriticConfig& cfg);

/// Q̂ evaluated on every (s, a) of a tabular MDP, n_states x n_joint.
Matrix q_table(const env::TabularMDP& mdp, const nn::FCNet& net, const nn::HiddenStack& w);

struct BellmanDiagnostic {
  double msbe = 0.0;
  double mspbe = 0.0;
};

/// Exact MSBE of the network under the restart stationary distribution, and
/// the MSPBE with projection onto the network's linearization at W(0).
BellmanDiagnostic mspbe_diagnostic(const nn::FCNet& net, const nn::HiddenStack& w,
                                   const env::JointPolicy& policy, const env::TabularMDP& mdp,
                                   double gamma);

/// CSV: k,agent,td_loss,boundary_hit,param_disagreement
void write_log_csv(std::ostream& os, const std::vector<IterationLog>& log);

}  // namespace decac::critic
