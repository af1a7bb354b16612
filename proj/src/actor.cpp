#include "decac/actor.hpp"

#include <cmath>
#include <string>

#include "decac/consensus.hpp"
#include "decac/rng.hpp"
#include "decac/simd.hpp"

namespace decac::actor {

double ActorConfig::step_size(std::size_t t) const {
  if (t == 0) throw DomainError("actor: round index is 1-based");
  return schedule == Schedule::Constant ? alpha : alpha / static_cast<double>(t);
}

void ActorConfig::validate() const {
  if (rounds == 0) throw ConfigError("actor.T must be at least 1");
  if (batch == 0) throw ConfigError("actor.M must be at least 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("actor.alpha must be positive");
}

NetworkPolicy::NetworkPolicy(const env::Mamdp& env, std::vector<nn::FCNet> actors)
    : env_(&env), actors_(std::move(actors)) {
  if (actors_.size() != env.num_agents()) throw StructuralError("policy: one actor per agent");
  for (const auto& a : actors_) {
    if (a.head_rows != env.num_local_actions() || a.input_dim != env.state_dim()) {
      throw StructuralError("policy: actor shape does not match the environment");
    }
  }
}

std::vector<double> NetworkPolicy::local_probs(std::size_t agent, const env::State& s) const {
  return nn::policy_probs(actors_[agent], env_->state_features(s));
}

Batch collect_batch(const NetworkPolicy& policy, const nn::FCNet& critic_proto,
                    const Matrix& critic, env::MarkovChain& chain, std::size_t m,
                    const nn::ScoreOptions& score_opts) {
  const env::Mamdp& env = chain.env();
  const std::size_t n = env.num_agents();
  if (critic.rows() != n) throw StructuralError("batch: critic rows != agents");
  std::vector<nn::HiddenStack> w;
  w.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.emplace_back(critic_proto.width, critic_proto.depth, critic.row(i));
  }

  Batch out;
  out.td = Matrix(m, n);
  out.q_values = Matrix(m, n);
  out.scores.assign(n, {});
  const double gamma = chain.gamma();

  env::State s = chain.state();
  env::JointAction a = chain.sample_action(policy);
  for (std::size_t l = 0; l < m; ++l) {
    const env::StepResult step = chain.advance(a, true);
    const env::JointAction a_next = chain.sample_action(policy);
    const SparseVec x = env.state_action_features(s, a);
    const SparseVec x_next = env.state_action_features(step.next, a_next);
    const SparseVec sf = env.state_features(s);
    out.raw_rewards.push_back(step.raw_reward);
    for (std::size_t i = 0; i < n; ++i) {
      const double q = nn::forward_value(critic_proto, w[i], x);
      const double q_next = nn::forward_value(critic_proto, w[i], x_next);
      out.q_values(l, i) = q;
      out.td(l, i) = critic::td_error(q, step.rewards[i], gamma, q_next);
      out.scores[i].push_back(
          nn::score(policy.actor(i), sf, static_cast<std::size_t>(a[i]), score_opts));
    }
    s = step.next;
    a = a_next;
  }
  out.end_state = chain.state();
  return out;
}

Matrix gossip_td(const Matrix& a, const Matrix& td, std::size_t rounds) {
  Matrix t(td.cols(), td.rows());
  for (std::size_t l = 0; l < td.rows(); ++l) {
    for (std::size_t i = 0; i < td.cols(); ++i) t(i, l) = td(l, i);
  }
  return consensus::gossip(a, t, rounds);
}

std::vector<double> direction(std::span<const double> weights,
                              const std::vector<std::vector<double>>& scores, double c) {
  if (weights.size() != scores.size() || scores.empty()) {
    throw StructuralError("direction: weights and scores disagree in length");
  }
  const auto& k = simd::kernels();
  std::vector<double> d(scores[0].size(), 0.0);
  const double inv_m = 1.0 / static_cast<double>(scores.size());
  for (std::size_t l = 0; l < scores.size(); ++l) {
    k.axpy(c * weights[l] * inv_m, scores[l].data(), d.data(), d.size());
  }
  return d;
}

bool update_policy(nn::FCNet& actor, std::span<const double> d, double alpha_t, bool train_all) {
  if (!(alpha_t > 0.0)) throw DomainError("update: alpha_t must be positive");
  const double norm = norm2(d);
  if (!std::isfinite(norm)) throw DomainError("update: non-finite policy direction");
  if (norm < kSkipThreshold) return false;
  nn::add_to_trainable(actor, alpha_t / norm, d, train_all);
  return true;
}

namespace {

struct Accumulator {
  std::size_t rounds = 0;
  double td_loss = 0.0;
  double param = 0.0;
  double td = 0.0;
  std::size_t skips = 0;
};

double mean_td_loss(const std::vector<critic::IterationLog>& log) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& e : log) {
    for (double v : e.td_loss) {
      sum += v;
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const env::Mamdp& env, const Matrix& consensus) {
  cfg.actor.validate();
  critic::CriticConfig ccfg = cfg.critic;
  ccfg.gossip_rounds = cfg.actor.gossip_rounds;
  ccfg.validate();
  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (cfg.episode_len == 0) throw ConfigError("episode_len must be at least 1");
  const std::size_t n = env.num_agents();
  if (consensus.rows() != n || consensus.cols() != n) {
    throw StructuralError("train: consensus matrix does not match the number of agents");
  }

  TrainResult out;
  out.critic_proto = nn::init_net(cfg.width, cfg.depth, env.state_action_dim(), 1,
                                  derive_seed(cfg.seed, stream::kCriticInit));
  std::vector<nn::FCNet> actors;
  for (std::size_t i = 0; i < n; ++i) {
    actors.push_back(nn::init_net(cfg.width, cfg.depth, env.state_dim(), env.num_local_actions(),
                                  derive_seed(cfg.seed, stream::kActorBase + i)));
  }
  NetworkPolicy policy(env, std::move(actors));
  env::MarkovChain chain(env, cfg.gamma, cfg.episode_len, derive_seed(cfg.seed, stream::kChain));
  const nn::ScoreOptions score_opts{cfg.actor.train_all, cfg.actor.cap_score};
  const double c = cfg.actor.signal == Signal::QValue ? 1.0 : cfg.actor.sign();

  std::vector<nn::HiddenStack> start(n, out.critic_proto.initial);
  Accumulator acc;
  std::size_t seen_episodes = 0;

  for (std::size_t t = 1; t <= cfg.actor.rounds; ++t) {
    try {
      critic::CriticResult cr =
          critic::run_decentralized_critic(policy, chain, out.critic_proto, start, ccfg, consensus);
      chain.set_state(cr.last_state);

      const Batch batch = collect_batch(policy, out.critic_proto, cr.gossiped, chain,
                                        cfg.actor.batch, score_opts);
      const Matrix consented = gossip_td(consensus, batch.td, cfg.actor.gossip_rounds);

      const double alpha_t = cfg.actor.step_size(t);
      std::vector<std::vector<double>> dirs(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> w(cfg.actor.batch);
        for (std::size_t l = 0; l < cfg.actor.batch; ++l) {
          w[l] = cfg.actor.signal == Signal::QValue ? batch.q_values(l, i) : consented(i, l);
        }
        dirs[i] = direction(w, batch.scores[i], c);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double> before =
            nn::trainable_params(policy.actor(i), cfg.actor.train_all);
        const bool taken = update_policy(policy.actor(i), dirs[i], alpha_t, cfg.actor.train_all);
        StepRecord rec{t, i, alpha_t, 0.0, !taken};
        if (taken) {
          const std::vector<double> after =
              nn::trainable_params(policy.actor(i), cfg.actor.train_all);
          rec.norm = std::sqrt(simd::kernels().dist_sq(after.data(), before.data(), after.size()));
        } else {
          ++acc.skips;
          ++out.log.skips;
        }
        out.log.steps.push_back(rec);
      }

      acc.rounds += 1;
      acc.td_loss += mean_td_loss(cr.log);
      acc.param += n > 1 ? consensus::disagreement(cr.gossiped) : 0.0;
      acc.td += n > 1 ? consensus::disagreement(consented) : 0.0;

      if (cfg.critic_warm_start) {
        for (std::size_t i = 0; i < n; ++i) {
          start[i] = nn::HiddenStack(cfg.width, cfg.depth, cr.gossiped.row(i));
        }
      }
      out.critic = std::move(cr.gossiped);
    } catch (const std::exception& e) {
      throw DomainError("train: round " + std::to_string(t) + ": " + e.what());
    }

    const auto& finished = chain.finished_episodes();
    while (seen_episodes < finished.size()) {
      const double r = static_cast<double>(acc.rounds);
      EpisodeRecord ep;
      ep.episode = seen_episodes;
      ep.round = t;
      ep.raw_reward = finished[seen_episodes];
      if (acc.rounds > 0) {
        ep.td_loss = acc.td_loss / r;
        ep.param_disagreement = acc.param / r;
        ep.td_disagreement = acc.td / r;
      }
      ep.skips = acc.skips;
      out.log.episodes.push_back(ep);
      acc = Accumulator{};
      ++seen_episodes;
    }
  }
  for (std::size_t i = 0; i < n; ++i) out.actors.push_back(policy.actor(i));
  return out;
}

}  // namespace decac::actor
