#pragma once

// Brute-force ground truth on small tabular MDPs. All policies are given as
// an n_states x n_joint table of joint probabilities pi(a|s).

#include <functional>
#include <span>
#include <vector>

#include "decac/common.hpp"
#include "decac/environment.hpp"

namespace decac::oracle {

inline constexpr std::size_t kMaxStates = 16;
inline constexpr std::size_t kMaxJointActions = 8;

/// ConfigError when the MDP exceeds the oracle size limits.
void check_oracle_size(const env::TabularMDP& mdp);

struct ExactSolution {
  Matrix q;                 // Q(s, a)
  std::vector<double> v;    // V(s) = sum_a pi(a|s) Q(s, a)
  std::vector<double> nu;   // stationary distribution of the restart kernel
  std::vector<double> eta;  // discounted visitation measure from s0
  double objective = 0.0;   // J = V(s0)
};

/// P_pi(s, s') = sum_a pi(a|s) P(s, a, s').
Matrix state_kernel(const env::TabularMDP& mdp, const Matrix& pi);

/// Solves (I - gamma P_pi) Q = r̄ directly; InternalError if the Bellman
/// residual exceeds 1e-10.
Matrix exact_q(const env::TabularMDP& mdp, const Matrix& pi, double gamma);

/// Bellman image (T Q)(s, a) = r̄(s, a) + gamma E[Q(s', a')].
Matrix bellman_image(const env::TabularMDP& mdp, const Matrix& pi, double gamma, const Matrix& q);

std::vector<double> state_values(const Matrix& q, const Matrix& pi);
/// Adv(s, a) = Q(s, a) - sum_b pi(b|s) Q(s, b).
Matrix advantage(const Matrix& q, const Matrix& pi);

/// Restart-kernel stationary distribution by power iteration (to 1e-12),
/// cross-checked against stationary_nullspace.
std::vector<double> stationary_restart(const env::TabularMDP& mdp, const Matrix& pi, double gamma);
/// Same distribution from a direct linear solve of nu (P̃ - I) = 0, sum nu = 1.
std::vector<double> stationary_nullspace(const env::TabularMDP& mdp, const Matrix& pi, double gamma);

/// eta(s') = 1{s' = s0} + gamma sum_s eta(s) P_pi(s, s'), solved directly.
std::vector<double> visitation(const env::TabularMDP& mdp, const Matrix& pi, double gamma,
                               std::size_t s0);

ExactSolution solve(const env::TabularMDP& mdp, const Matrix& pi, double gamma);

/// J(pi) = V_pi(s0).
double objective(const env::TabularMDP& mdp, const Matrix& pi, double gamma);

using PolicyTableFn = std::function<Matrix(std::span<const double> theta)>;

struct ObjectiveGradient {
  double objective = 0.0;
  std::vector<double> gradient;
  std::size_t richardson_coordinates = 0;  // coordinates that needed the fallback
};

/// Central differences with step fd_step on every coordinate. Where the
/// estimate at fd_step and at 10*fd_step disagree by more than 1e-4
/// (relative), the coordinate falls back to Richardson extrapolation over
/// steps 10*fd_step and 5*fd_step. ConfigError if fd_step <= 0.
ObjectiveGradient exact_objective_and_fd_gradient(const env::TabularMDP& mdp,
                                                  const PolicyTableFn& policy,
                                                  std::span<const double> theta, double gamma,
                                                  double fd_step = 1e-5);

/// Score of the joint action at (s, a) w.r.t. the joint parameter vector.
using ScoreFn = std::function<std::vector<double>(std::size_t s, std::size_t joint_action)>;

/// sum_{s,a} nu(s) pi(a|s) psi(s, a) Adv(s, a): the right-hand side of the
/// restart-kernel policy gradient theorem (equal to (1 - gamma) grad J).
std::vector<double> policy_gradient_expectation(const env::TabularMDP& mdp, const Matrix& pi,
                                                double gamma, const ScoreFn& score);

/// Tabular softmax product policy: agent i owns an n_states x n_local block
/// of logits; theta is the agents' blocks concatenated.
struct TabularSoftmax {
  std::size_t n_states;
  std::size_t n_agents;
  std::size_t n_local;

  std::size_t num_params() const { return n_agents * n_states * n_local; }
  Matrix joint_table(const env::TabularMDP& mdp, std::span<const double> theta) const;
  std::vector<double> score(const env::TabularMDP& mdp, std::span<const double> theta,
                            std::size_t s, std::size_t joint_action) const;
};

/// Stationary (s, a) weights nu(s) pi(a|s).
Matrix state_action_weights(const env::TabularMDP& mdp, const Matrix& pi, double gamma);

/// E_{(s,a) ~ nu}[(Q̂ - T Q̂)^2] by exact enumeration.
double msbe(const env::TabularMDP& mdp, const Matrix& pi, double gamma, const Matrix& qhat);

/// Projected variant: T Q̂ is projected (nu-weighted least squares, minimum
/// norm) onto {q0 + features * delta}, the locally linearized class around
/// the initial network. features has one row per (s, a) in row-major order.
double mspbe_linearized(const env::TabularMDP& mdp, const Matrix& pi, double gamma,
                        const Matrix& qhat, const Matrix& q0, const Matrix& features);

}  // namespace decac::oracle
