#include "decac/oracle.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace decac::oracle {

namespace {

using env::TabularMDP;

void check_policy(const TabularMDP& mdp, const Matrix& pi) {
  if (pi.rows() != mdp.n_states() || pi.cols() != mdp.n_joint_actions()) {
    throw StructuralError("policy table shape does not match the MDP");
  }
}

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("oracle: gamma must lie in [0,1)");
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  }
  return out;
}

}  // namespace

void check_oracle_size(const TabularMDP& mdp) {
  if (mdp.n_states() > kMaxStates || mdp.n_joint_actions() > kMaxJointActions) {
    throw ConfigError("oracle: MDP exceeds " + std::to_string(kMaxStates) + " states x " +
                      std::to_string(kMaxJointActions) + " joint actions");
  }
}

Matrix state_kernel(const TabularMDP& mdp, const Matrix& pi) {
  check_policy(mdp, pi);
  const std::size_t S = mdp.n_states();
  Matrix k(S, S);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < mdp.n_joint_actions(); ++a) {
      for (std::size_t s2 = 0; s2 < S; ++s2) k(s, s2) += pi(s, a) * mdp.P(s, a, s2);
    }
  }
  return k;
}

Matrix bellman_image(const TabularMDP& mdp, const Matrix& pi, double gamma, const Matrix& q) {
  check_policy(mdp, pi);
  const std::size_t S = mdp.n_states();
  const std::size_t A = mdp.n_joint_actions();
  const std::vector<double> v = state_values(q, pi);
  Matrix out(S, A);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      double ev = 0.0;
      for (std::size_t s2 = 0; s2 < S; ++s2) ev += mdp.P(s, a, s2) * v[s2];
      out(s, a) = mdp.mean_reward(s, a) + gamma * ev;
    }
  }
  return out;
}

Matrix exact_q(const TabularMDP& mdp, const Matrix& pi, double gamma) {
  check_oracle_size(mdp);
  check_policy(mdp, pi);
  check_gamma(gamma);
  const std::size_t S = mdp.n_states();
  const std::size_t A = mdp.n_joint_actions();
  const std::size_t n = S * A;
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd rhs(n);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      const std::size_t row = s * A + a;
      rhs(row) = mdp.mean_reward(s, a);
      for (std::size_t s2 = 0; s2 < S; ++s2) {
        const double p = mdp.P(s, a, s2);
        if (p == 0.0) continue;
        for (std::size_t a2 = 0; a2 < A; ++a2) lhs(row, s2 * A + a2) -= gamma * p * pi(s2, a2);
      }
    }
  }
  const Eigen::VectorXd sol = lhs.partialPivLu().solve(rhs);
  Matrix q(S, A);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) q(s, a) = sol(s * A + a);
  }
  const Matrix tq = bellman_image(mdp, pi, gamma, q);
  double residual = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    residual = std::max(residual, std::abs(q.values()[i] - tq.values()[i]));
  }
  if (!(residual < 1e-10)) {
    throw InternalError("exact_q: Bellman residual " + std::to_string(residual));
  }
  return q;
}

std::vector<double> state_values(const Matrix& q, const Matrix& pi) {
  std::vector<double> v(q.rows(), 0.0);
  for (std::size_t s = 0; s < q.rows(); ++s) {
    for (std::size_t a = 0; a < q.cols(); ++a) v[s] += pi(s, a) * q(s, a);
  }
  return v;
}

Matrix advantage(const Matrix& q, const Matrix& pi) {
  const std::vector<double> v = state_values(q, pi);
  Matrix adv = q;
  for (std::size_t s = 0; s < q.rows(); ++s) {
    for (std::size_t a = 0; a < q.cols(); ++a) adv(s, a) -= v[s];
  }
  return adv;
}

namespace {

Matrix restart_state_kernel(const TabularMDP& mdp, const Matrix& pi, double gamma) {
  Matrix k = state_kernel(mdp, pi);
  const auto s0 = static_cast<std::size_t>(mdp.s0());
  for (std::size_t s = 0; s < k.rows(); ++s) {
    for (std::size_t s2 = 0; s2 < k.cols(); ++s2) k(s, s2) *= gamma;
    k(s, s0) += 1.0 - gamma;
  }
  return k;
}

}  // namespace

std::vector<double> stationary_nullspace(const TabularMDP& mdp, const Matrix& pi, double gamma) {
  check_oracle_size(mdp);
  const Matrix k = restart_state_kernel(mdp, pi, gamma);
  const std::size_t S = k.rows();
  // (P̃^T - I) nu = 0 with the last equation replaced by sum nu = 1.
  Eigen::MatrixXd lhs = to_eigen(k).transpose() - Eigen::MatrixXd::Identity(S, S);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(S);
  lhs.row(S - 1).setOnes();
  rhs(S - 1) = 1.0;
  const Eigen::VectorXd nu = lhs.fullPivLu().solve(rhs);
  return {nu.data(), nu.data() + S};
}

std::vector<double> stationary_restart(const TabularMDP& mdp, const Matrix& pi, double gamma) {
  check_oracle_size(mdp);
  check_gamma(gamma);
  const Matrix k = restart_state_kernel(mdp, pi, gamma);
  const std::size_t S = k.rows();
  std::vector<double> nu(S, 1.0 / static_cast<double>(S));
  std::vector<double> next(S);
  constexpr std::size_t kMaxIters = 10'000'000;
  bool converged = false;
  for (std::size_t it = 0; it < kMaxIters; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t s2 = 0; s2 < S; ++s2) next[s2] += nu[s] * k(s, s2);
    }
    double diff = 0.0;
    for (std::size_t s = 0; s < S; ++s) diff += std::abs(next[s] - nu[s]);
    nu.swap(next);
    if (diff < 1e-12) {
      converged = true;
      break;
    }
  }
  if (!converged) throw InternalError("stationary_restart: power iteration did not converge");
  const std::vector<double> direct = stationary_nullspace(mdp, pi, gamma);
  for (std::size_t s = 0; s < S; ++s) {
    if (std::abs(direct[s] - nu[s]) > 1e-9) {
      throw InternalError("stationary_restart: power iteration and null-space solve disagree");
    }
  }
  return nu;
}

std::vector<double> visitation(const TabularMDP& mdp, const Matrix& pi, double gamma,
                               std::size_t s0) {
  check_oracle_size(mdp);
  check_gamma(gamma);
  if (s0 >= mdp.n_states()) throw ConfigError("visitation: s0 out of range");
  const Matrix k = state_kernel(mdp, pi);
  const std::size_t S = k.rows();
  const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(S, S) - gamma * to_eigen(k).transpose();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(S);
  rhs(s0) = 1.0;
  const Eigen::VectorXd eta = lhs.partialPivLu().solve(rhs);
  return {eta.data(), eta.data() + S};
}

double objective(const TabularMDP& mdp, const Matrix& pi, double gamma) {
  const Matrix q = exact_q(mdp, pi, gamma);
  return state_values(q, pi)[static_cast<std::size_t>(mdp.s0())];
}

ExactSolution solve(const TabularMDP& mdp, const Matrix& pi, double gamma) {
  ExactSolution out;
  out.q = exact_q(mdp, pi, gamma);
  out.v = state_values(out.q, pi);
  out.nu = stationary_restart(mdp, pi, gamma);
  out.eta = visitation(mdp, pi, gamma, static_cast<std::size_t>(mdp.s0()));
  out.objective = out.v[static_cast<std::size_t>(mdp.s0())];
  return out;
}

ObjectiveGradient exact_objective_and_fd_gradient(const TabularMDP& mdp,
                                                  const PolicyTableFn& policy,
                                                  std::span<const double> theta, double gamma,
                                                  double fd_step) {
  if (!(fd_step > 0.0)) throw ConfigError("fd_step must be positive");
  ObjectiveGradient out;
  out.objective = objective(mdp, policy(theta), gamma);
  std::vector<double> probe(theta.begin(), theta.end());
  auto central = [&](std::size_t i, double h) {
    const double keep = probe[i];
    probe[i] = keep + h;
    const double up = objective(mdp, policy(probe), gamma);
    probe[i] = keep - h;
    const double down = objective(mdp, policy(probe), gamma);
    probe[i] = keep;
    return (up - down) / (2.0 * h);
  };
  out.gradient.resize(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double fine = central(i, fd_step);
    const double coarse = central(i, 10.0 * fd_step);
    if (std::abs(fine - coarse) <= 1e-4 * std::max(1.0, std::abs(fine))) {
      out.gradient[i] = fine;
    } else {
      const double half = central(i, 5.0 * fd_step);
      out.gradient[i] = (4.0 * half - coarse) / 3.0;
      ++out.richardson_coordinates;
    }
  }
  return out;
}

std::vector<double> policy_gradient_expectation(const TabularMDP& mdp, const Matrix& pi,
                                                double gamma, const ScoreFn& score) {
  const std::vector<double> nu = stationary_restart(mdp, pi, gamma);
  const Matrix adv = advantage(exact_q(mdp, pi, gamma), pi);
  std::vector<double> acc;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    for (std::size_t a = 0; a < mdp.n_joint_actions(); ++a) {
      const double w = nu[s] * pi(s, a) * adv(s, a);
      if (w == 0.0) continue;
      const std::vector<double> psi = score(s, a);
      if (acc.empty()) acc.assign(psi.size(), 0.0);
      for (std::size_t k = 0; k < psi.size(); ++k) acc[k] += w * psi[k];
    }
  }
  return acc;
}

Matrix TabularSoftmax::joint_table(const TabularMDP& mdp, std::span<const double> theta) const {
  if (theta.size() != num_params()) throw StructuralError("tabular softmax: wrong parameter count");
  Matrix pi(n_states, mdp.n_joint_actions());
  std::vector<std::vector<double>> local(n_agents, std::vector<double>(n_local));
  for (std::size_t s = 0; s < n_states; ++s) {
    for (std::size_t i = 0; i < n_agents; ++i) {
      const double* logits = theta.data() + (i * n_states + s) * n_local;
      const double mx = *std::max_element(logits, logits + n_local);
      double sum = 0.0;
      for (std::size_t b = 0; b < n_local; ++b) {
        local[i][b] = std::exp(logits[b] - mx);
        sum += local[i][b];
      }
      for (double& p : local[i]) p /= sum;
    }
    for (std::size_t a = 0; a < mdp.n_joint_actions(); ++a) {
      const env::JointAction ja = mdp.decode_joint(a);
      double p = 1.0;
      for (std::size_t i = 0; i < n_agents; ++i) p *= local[i][static_cast<std::size_t>(ja[i])];
      pi(s, a) = p;
    }
  }
  return pi;
}

std::vector<double> TabularSoftmax::score(const TabularMDP& mdp, std::span<const double> theta,
                                          std::size_t s, std::size_t joint_action) const {
  std::vector<double> psi(num_params(), 0.0);
  const env::JointAction ja = mdp.decode_joint(joint_action);
  for (std::size_t i = 0; i < n_agents; ++i) {
    const std::size_t off = (i * n_states + s) * n_local;
    const double* logits = theta.data() + off;
    const double mx = *std::max_element(logits, logits + n_local);
    double sum = 0.0;
    std::vector<double> p(n_local);
    for (std::size_t b = 0; b < n_local; ++b) {
      p[b] = std::exp(logits[b] - mx);
      sum += p[b];
    }
    for (std::size_t b = 0; b < n_local; ++b) {
      psi[off + b] = (static_cast<std::size_t>(ja[i]) == b ? 1.0 : 0.0) - p[b] / sum;
    }
  }
  return psi;
}

Matrix state_action_weights(const TabularMDP& mdp, const Matrix& pi, double gamma) {
  const std::vector<double> nu = stationary_restart(mdp, pi, gamma);
  Matrix w(mdp.n_states(), mdp.n_joint_actions());
  for (std::size_t s = 0; s < w.rows(); ++s) {
    for (std::size_t a = 0; a < w.cols(); ++a) w(s, a) = nu[s] * pi(s, a);
  }
  return w;
}

double msbe(const TabularMDP& mdp, const Matrix& pi, double gamma, const Matrix& qhat) {
  const Matrix w = state_action_weights(mdp, pi, gamma);
  const Matrix tq = bellman_image(mdp, pi, gamma, qhat);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = qhat.values()[i] - tq.values()[i];
    total += w.values()[i] * d * d;
  }
  return total;
}

double mspbe_linearized(const TabularMDP& mdp, const Matrix& pi, double gamma, const Matrix& qhat,
                        const Matrix& q0, const Matrix& features) {
  const Matrix w = state_action_weights(mdp, pi, gamma);
  const Matrix tq = bellman_image(mdp, pi, gamma, qhat);
  const std::size_t n = w.size();
  if (features.rows() != n || q0.size() != n) throw StructuralError("mspbe: feature rows != |S||A|");
  Eigen::MatrixXd phi = to_eigen(features);
  Eigen::VectorXd target(n);
  Eigen::VectorXd sw(n);
  for (std::size_t i = 0; i < n; ++i) {
    sw(static_cast<Eigen::Index>(i)) = std::sqrt(w.values()[i]);
    target(static_cast<Eigen::Index>(i)) = tq.values()[i] - q0.values()[i];
  }
  const Eigen::MatrixXd wphi = sw.asDiagonal() * phi;
  const Eigen::VectorXd delta =
      wphi.completeOrthogonalDecomposition().solve(sw.asDiagonal() * target);
  const Eigen::VectorXd projected = phi * delta;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = qhat.values()[i] - (q0.values()[i] + projected(static_cast<Eigen::Index>(i)));
    total += w.values()[i] * d * d;
  }
  return total;
}

}  // namespace decac::oracle
