#pragma once

// Actor outer loop: each round runs the decentralized critic, collects a
// batch of M Markov steps under the current product policy, gossips the
// TD-error matrix and takes a normalized step of length alpha_t on every
// agent's policy network.

#include <cstdint>
#include <span>
#include <vector>

#include "decac/common.hpp"
#include "decac/critic.hpp"
#include "decac/environment.hpp"
#include "decac/neural_net.hpp"

namespace decac::actor {

enum class Signal { TdError, QValue };
enum class TdSign { Conventional, Verbatim };
enum class Schedule { InverseT, Constant };

struct ActorConfig {
  std::size_t rounds = 4000;  // T
  std::size_t batch = 1;      // M
  double alpha = 0.005;
  Schedule schedule = Schedule::InverseT;
  Signal signal = Signal::TdError;
  TdSign td_sign = TdSign::Conventional;
  std::size_t gossip_rounds = 10;
  bool train_all = false;
  bool cap_score = false;

  /// alpha_t for the 1-based round index t: alpha / t, or alpha when constant.
  double step_size(std::size_t t) const;
  /// c in d = (1/M) sum c w_l psi_l.
  double sign() const { return td_sign == TdSign::Conventional ? -1.0 : 1.0; }
  void validate() const;
};

/// Product policy over per-agent softmax networks fed the state encoding.
class NetworkPolicy final : public env::JointPolicy {
 public:
  NetworkPolicy(const env::Mamdp& env, std::vector<nn::FCNet> actors);

  std::vector<double> local_probs(std::size_t agent, const env::State& s) const override;
  std::size_t num_agents() const override { return actors_.size(); }
  const nn::FCNet& actor(std::size_t i) const { return actors_[i]; }
  nn::FCNet& actor(std::size_t i) { return actors_[i]; }
  const env::Mamdp& env() const { return *env_; }

 private:
  const env::Mamdp* env_;
  std::vector<nn::FCNet> actors_;
};

struct Batch {
  Matrix td;        // M x N, column i from agent i's critic
  Matrix q_values;  // M x N, Q̂(s_l, a_l; W^i)
  /// scores[i][l] = grad log pi^i(a^i_l | s_l)
  std::vector<std::vector<std::vector<double>>> scores;
  std::vector<double> raw_rewards;  // per step
  env::State end_state;
};

/// Runs M steps of the chain from its current state. Every step counts as a
/// game step. `critic` holds one flattened hidden stack per agent.
Batch collect_batch(const NetworkPolicy& policy, const nn::FCNet& critic_proto,
                    const Matrix& critic, env::MarkovChain& chain, std::size_t m,
                    const nn::ScoreOptions& score_opts = {});

/// Row i of A^rounds * td^T: the M consented TD errors of agent i.
Matrix gossip_td(const Matrix& a, const Matrix& td, std::size_t rounds);

/// d = (1/M) sum_l c * weights[l] * scores[l].
std::vector<double> direction(std::span<const double> weights,
                              const std::vector<std::vector<double>>& scores, double c);

/// theta += alpha_t d/||d||. Returns false (no step) when ||d|| < 1e-12.
/// DomainError on a non-finite direction.
bool update_policy(nn::FCNet& actor, std::span<const double> d, double alpha_t, bool train_all);

inline constexpr double kSkipThreshold = 1e-12;

struct TrainConfig {
  ActorConfig actor;
  critic::CriticConfig critic;
  std::size_t width = 20;  // m, shared by critic and actors
  std::size_t depth = 5;   // D
  double gamma = 0.99;
  std::size_t episode_len = 10;
  /// Start each round's critic from the previous round's consented
  /// parameters instead of W(0).
  bool critic_warm_start = false;
  std::uint64_t seed = 0;
};

struct EpisodeRecord {
  std::size_t episode = 0;
  std::size_t round = 0;  // 1-based round in which the episode finished
  double raw_reward = 0.0;
  double td_loss = 0.0;             // mean critic delta^2 over the episode's rounds
  double param_disagreement = 0.0;  // mean over rounds, consented critic parameters
  double td_disagreement = 0.0;     // mean over rounds, consented TD errors
  std::size_t skips = 0;
};

struct StepRecord {
  std::size_t round = 0;  // 1-based
  std::size_t agent = 0;
  double alpha_t = 0.0;
  double norm = 0.0;  // ||theta_{t+1} - theta_t||, 0 when skipped
  bool skipped = false;
};

struct RunLog {
  std::vector<EpisodeRecord> episodes;
  std::vector<StepRecord> steps;
  std::size_t skips = 0;
};

struct TrainResult {
  RunLog log;
  std::vector<nn::FCNet> actors;
  nn::FCNet critic_proto;
  Matrix critic;  // last consented critic parameters
};

/// Algorithm driver. Reproducible from (cfg, env, consensus).
TrainResult train(const TrainConfig& cfg, const env::Mamdp& env, const Matrix& consensus);

}  // namespace decac::actor
