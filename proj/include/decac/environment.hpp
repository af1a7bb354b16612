#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "decac/common.hpp"
#include "decac/rng.hpp"

namespace decac::env {

/// Global state as integer components (tabular: {index}; grid: one cell per agent).
using State = std::vector<std::int32_t>;
/// One local action index per agent.
using JointAction = std::vector<std::int32_t>;

struct StepResult {
  State next;
  std::vector<double> rewards;  // per-agent learning rewards, in [0, reward_max()]
  double raw_reward = 0.0;      // reporting signal (grid: negative l1 sum)
};

/// Multi-agent MDP with a global state, per-agent actions and rewards.
/// Agents observe the full global state and joint action.
class Mamdp {
 public:
  virtual ~Mamdp() = default;

  virtual std::size_t num_agents() const = 0;
  virtual std::size_t num_local_actions() const = 0;
  /// The restart target s0.
  virtual State initial_state() const = 0;
  /// Episode start state; tabular MDPs return s0.
  virtual State reset(Rng& rng) const = 0;
  virtual StepResult step(const State& s, const JointAction& a, Rng& rng) const = 0;
  virtual double reward_max() const = 0;

  /// One-to-one unit-norm encodings fed to the critic (state, joint action)
  /// and to the actors (state only).
  virtual std::size_t state_action_dim() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual SparseVec state_action_features(const State& s, const JointAction& a) const = 0;
  virtual SparseVec state_features(const State& s) const = 0;
};

/// Restart kernel: base transition, then with probability 1 - gamma the next
/// state is replaced by `anchor`. Rewards always come from the base step.
/// Draw order: base transition first, then the restart coin.
StepResult restart_step(const Mamdp& base, double gamma, const State& anchor, const State& s,
                        const JointAction& a, Rng& rng);

// ---------------------------------------------------------------------------
// Tabular MDP

class TabularMDP final : public Mamdp {
 public:
  TabularMDP(std::size_t n_states, std::size_t n_agents, std::size_t n_local_actions,
             double gamma, std::int32_t s0);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_joint_actions() const { return n_joint_; }
  double gamma() const { return gamma_; }
  std::int32_t s0() const { return s0_; }

  double& P(std::size_t s, std::size_t a, std::size_t s2) {
    return transition_[(s * n_joint_ + a) * n_states_ + s2];
  }
  double P(std::size_t s, std::size_t a, std::size_t s2) const {
    return transition_[(s * n_joint_ + a) * n_states_ + s2];
  }
  double& reward(std::size_t agent, std::size_t s, std::size_t a) {
    return rewards_[(agent * n_states_ + s) * n_joint_ + a];
  }
  double reward(std::size_t agent, std::size_t s, std::size_t a) const {
    return rewards_[(agent * n_states_ + s) * n_joint_ + a];
  }
  /// Agent-averaged reward r̄(s, a).
  double mean_reward(std::size_t s, std::size_t a) const;

  /// Joint index with agent 0 as the least significant digit.
  std::size_t joint_index(const JointAction& a) const;
  JointAction decode_joint(std::size_t index) const;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  std::size_t num_agents() const override { return n_agents_; }
  std::size_t num_local_actions() const override { return n_local_; }
  State initial_state() const override { return {s0_}; }
  State reset(Rng&) const override { return {s0_}; }
  StepResult step(const State& s, const JointAction& a, Rng& rng) const override;
  double reward_max() const override;
  std::size_t state_action_dim() const override { return n_states_ + n_joint_; }
  std::size_t state_dim() const override { return n_states_; }
  SparseVec state_action_features(const State& s, const JointAction& a) const override;
  SparseVec state_features(const State& s) const override;
  SparseVec state_action_features(std::size_t s, std::size_t joint) const;

 private:
  std::size_t n_states_;
  std::size_t n_agents_;
  std::size_t n_local_;
  std::size_t n_joint_;
  double gamma_;
  std::int32_t s0_;
  std::vector<double> transition_;
  std::vector<double> rewards_;
};

/// Row-wise restart kernel gamma * P + (1 - gamma) * e_{s0}, same shape as P.
std::vector<double> restart_transition_tensor(const TabularMDP& mdp, double gamma);

/// True if the union-of-actions state graph is strongly connected with period 1.
bool irreducible_aperiodic(const TabularMDP& mdp);

TabularMDP tabular_from_json(const nlohmann::json& j);
nlohmann::json tabular_to_json(const TabularMDP& mdp);
TabularMDP load_tabular(const std::filesystem::path& path);

/// Random MDP with Dirichlet(1) rows and U[0,1) rewards.
TabularMDP random_tabular(std::size_t n_states, std::size_t n_agents, std::size_t n_local,
                          double gamma, Rng& rng);

// ---------------------------------------------------------------------------
// Grid Simple Spread

enum class Move : std::int32_t { Up = 0, Down = 1, Left = 2, Right = 3, Stay = 4 };
inline constexpr std::size_t kNumMoves = 5;

struct Cell {
  std::int32_t x = 0;
  std::int32_t y = 0;
  bool operator==(const Cell&) const = default;
};

struct GridSpreadConfig {
  std::int32_t length = 13;  // x in [0, length)
  std::int32_t width = 5;    // y in [0, width)
  std::size_t n_agents = 2;
  std::uint64_t landmark_seed = 0;
  bool reward_shift = true;
  double reward_scale = 1.0;
  /// Explicit landmarks; seeded distinct cells when empty.
  std::vector<Cell> landmarks;
};

/// State of the grid game: one cell per agent, landmarks held by the env.
struct GridSpreadState {
  std::vector<Cell> agents;
};

class GridSpread final : public Mamdp {
 public:
  explicit GridSpread(const GridSpreadConfig& cfg);

  const GridSpreadConfig& config() const { return cfg_; }
  const std::vector<Cell>& landmarks() const { return landmarks_; }
  std::size_t n_cells() const { return static_cast<std::size_t>(cfg_.length * cfg_.width); }

  std::int32_t cell_index(Cell c) const { return c.x + cfg_.length * c.y; }
  Cell cell_at(std::int32_t index) const { return {index % cfg_.length, index / cfg_.length}; }
  GridSpreadState decode(const State& s) const;
  State encode(const GridSpreadState& g) const;

  /// -sum over landmarks of the l1 distance to the closest agent.
  double raw_reward(const GridSpreadState& g) const;
  /// Maximum l1 sum: (length - 1 + width - 1) * number of landmarks.
  double max_l1_sum() const;
  double shape_reward(double raw) const;

  /// Moves each agent one cell (clipped at edges). DomainError on a bad action.
  std::pair<GridSpreadState, double> grid_step(const GridSpreadState& g,
                                               const JointAction& a) const;

  std::size_t num_agents() const override { return cfg_.n_agents; }
  std::size_t num_local_actions() const override { return kNumMoves; }
  State initial_state() const override;
  /// Uniform independent agent cells; landmarks untouched.
  State reset(Rng& rng) const override;
  StepResult step(const State& s, const JointAction& a, Rng& rng) const override;
  double reward_max() const override;
  std::size_t state_action_dim() const override;
  std::size_t state_dim() const override;
  SparseVec state_action_features(const State& s, const JointAction& a) const override;
  SparseVec state_features(const State& s) const override;

 private:
  GridSpreadConfig cfg_;
  std::vector<Cell> landmarks_;
};

GridSpreadConfig grid_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Sampling

class JointPolicy {
 public:
  virtual ~JointPolicy() = default;
  /// Local action distribution of one agent at a state.
  virtual std::vector<double> local_probs(std::size_t agent, const State& s) const = 0;
  virtual std::size_t num_agents() const = 0;
  /// Draws agents' actions in index order from the shared stream.
  JointAction sample(const State& s, Rng& rng) const;
};

/// Product policy given by an explicit table pi^i(a^i | s) for tabular MDPs.
class TabularPolicy final : public JointPolicy {
 public:
  /// probs[agent][s][local action]
  explicit TabularPolicy(std::vector<std::vector<std::vector<double>>> probs);
  static TabularPolicy uniform(std::size_t n_agents, std::size_t n_states, std::size_t n_local);
  static TabularPolicy random(std::size_t n_agents, std::size_t n_states, std::size_t n_local,
                              Rng& rng);
  std::vector<double> local_probs(std::size_t agent, const State& s) const override;
  std::size_t num_agents() const override { return probs_.size(); }
  const std::vector<std::vector<std::vector<double>>>& table() const { return probs_; }

 private:
  std::vector<std::vector<std::vector<double>>> probs_;
};

/// Joint probability pi(a|s) = prod_i pi^i(a^i|s) as an n_states x n_joint table.
Matrix joint_policy_table(const TabularMDP& mdp, const JointPolicy& policy);

/// One continuous Markov chain under the restart kernel, with optional
/// episode resets every `episode_len` counted ("game") steps.
class MarkovChain {
 public:
  MarkovChain(const Mamdp& env, double gamma, std::size_t episode_len, std::uint64_t seed,
              bool restart = true);

  const Mamdp& env() const { return *env_; }
  double gamma() const { return gamma_; }
  const State& state() const { return state_; }
  const State& anchor() const { return anchor_; }
  void set_state(State s) { state_ = std::move(s); }
  Rng& rng() { return rng_; }

  JointAction sample_action(const JointPolicy& policy) { return policy.sample(state_, rng_); }
  /// Steps from the current state. Game steps count toward episodes; when an
  /// episode completes, the next state is replaced by a fresh reset.
  StepResult advance(const JointAction& a, bool game_step);

  std::size_t game_steps() const { return game_steps_; }
  /// Sum of raw rewards for each finished episode, in order.
  const std::vector<double>& finished_episodes() const { return finished_; }

 private:
  const Mamdp* env_;
  double gamma_;
  std::size_t episode_len_;
  bool restart_;
  Rng rng_;
  State state_;
  State anchor_;
  std::size_t game_steps_ = 0;
  double episode_raw_ = 0.0;
  std::vector<double> finished_;
};

}  // namespace decac::env
