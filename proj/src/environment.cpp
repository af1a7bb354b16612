#include "decac/environment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>

#include <nlohmann/json.hpp>

namespace decac::env {

StepResult restart_step(const Mamdp& base, double gamma, const State& anchor, const State& s,
                        const JointAction& a, Rng& rng) {
  StepResult out = base.step(s, a, rng);
  if (rng.uniform() >= gamma) out.next = anchor;
  return out;
}

// ---------------------------------------------------------------------------
// TabularMDP

TabularMDP::TabularMDP(std::size_t n_states, std::size_t n_agents, std::size_t n_local_actions,
                       double gamma, std::int32_t s0)
    : n_states_(n_states),
      n_agents_(n_agents),
      n_local_(n_local_actions),
      n_joint_(1),
      gamma_(gamma),
      s0_(s0) {
  if (n_states == 0 || n_agents == 0 || n_local_actions == 0) {
    throw ConfigError("tabular MDP: sizes must be positive");
  }
  for (std::size_t i = 0; i < n_agents; ++i) n_joint_ *= n_local_actions;
  if (s0 < 0 || static_cast<std::size_t>(s0) >= n_states) throw ConfigError("tabular MDP: s0 out of range");
  transition_.assign(n_states_ * n_joint_ * n_states_, 0.0);
  rewards_.assign(n_agents_ * n_states_ * n_joint_, 0.0);
}

double TabularMDP::mean_reward(std::size_t s, std::size_t a) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < n_agents_; ++i) sum += reward(i, s, a);
  return sum / static_cast<double>(n_agents_);
}

std::size_t TabularMDP::joint_index(const JointAction& a) const {
  if (a.size() != n_agents_) throw DomainError("joint action has wrong number of agents");
  std::size_t idx = 0;
  std::size_t mult = 1;
  for (std::size_t i = 0; i < n_agents_; ++i) {
    if (a[i] < 0 || static_cast<std::size_t>(a[i]) >= n_local_) {
      throw DomainError("local action index out of range");
    }
    idx += static_cast<std::size_t>(a[i]) * mult;
    mult *= n_local_;
  }
  return idx;
}

JointAction TabularMDP::decode_joint(std::size_t index) const {
  JointAction a(n_agents_);
  for (std::size_t i = 0; i < n_agents_; ++i) {
    a[i] = static_cast<std::int32_t>(index % n_local_);
    index /= n_local_;
  }
  return a;
}

void TabularMDP::validate() const {
  if (!(gamma_ > 0.0 && gamma_ < 1.0)) throw ConfigError("tabular MDP: gamma must lie in (0,1)");
  for (std::size_t s = 0; s < n_states_; ++s) {
    for (std::size_t a = 0; a < n_joint_; ++a) {
      double sum = 0.0;
      for (std::size_t s2 = 0; s2 < n_states_; ++s2) {
        const double p = P(s, a, s2);
        if (!(p >= 0.0)) throw ConfigError("tabular MDP: negative transition probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        throw ConfigError("tabular MDP: P(" + std::to_string(s) + "," + std::to_string(a) +
                          ",.) sums to " + std::to_string(sum));
      }
    }
  }
  for (double r : rewards_) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("tabular MDP: rewards must be finite and >= 0");
  }
}

StepResult TabularMDP::step(const State& s, const JointAction& a, Rng& rng) const {
  const auto si = static_cast<std::size_t>(s.at(0));
  const std::size_t ai = joint_index(a);
  std::vector<double> row(n_states_);
  for (std::size_t s2 = 0; s2 < n_states_; ++s2) row[s2] = P(si, ai, s2);
  StepResult out;
  out.next = {static_cast<std::int32_t>(rng.categorical(row))};
  out.rewards.resize(n_agents_);
  for (std::size_t i = 0; i < n_agents_; ++i) out.rewards[i] = reward(i, si, ai);
  out.raw_reward = mean_reward(si, ai);
  return out;
}

double TabularMDP::reward_max() const {
  return rewards_.empty() ? 0.0 : *std::max_element(rewards_.begin(), rewards_.end());
}

SparseVec TabularMDP::state_action_features(std::size_t s, std::size_t joint) const {
  SparseVec x;
  x.dim = state_action_dim();
  const double v = 1.0 / std::sqrt(2.0);
  x.index = {static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(n_states_ + joint)};
  x.value = {v, v};
  return x;
}

SparseVec TabularMDP::state_action_features(const State& s, const JointAction& a) const {
  return state_action_features(static_cast<std::size_t>(s.at(0)), joint_index(a));
}

SparseVec TabularMDP::state_features(const State& s) const {
  SparseVec x;
  x.dim = n_states_;
  x.index = {static_cast<std::uint32_t>(s.at(0))};
  x.value = {1.0};
  return x;
}

std::vector<double> restart_transition_tensor(const TabularMDP& mdp, double gamma) {
  const std::size_t S = mdp.n_states();
  const std::size_t A = mdp.n_joint_actions();
  std::vector<double> out(S * A * S);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t s2 = 0; s2 < S; ++s2) {
        double v = gamma * mdp.P(s, a, s2);
        if (static_cast<std::int32_t>(s2) == mdp.s0()) v += 1.0 - gamma;
        out[(s * A + a) * S + s2] = v;
      }
    }
  }
  return out;
}

bool irreducible_aperiodic(const TabularMDP& mdp) {
  const std::size_t S = mdp.n_states();
  std::vector<std::vector<std::size_t>> adj(S);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t s2 = 0; s2 < S; ++s2) {
      for (std::size_t a = 0; a < mdp.n_joint_actions(); ++a) {
        if (mdp.P(s, a, s2) > 0.0) {
          adj[s].push_back(s2);
          break;
        }
      }
    }
  }
  // Strong connectivity: every state reachable from 0 and 0 reachable from all.
  auto bfs = [&](const std::vector<std::vector<std::size_t>>& g, std::vector<long>& level) {
    level.assign(S, -1);
    std::queue<std::size_t> q;
    level[0] = 0;
    q.push(0);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v : g[u]) {
        if (level[v] < 0) {
          level[v] = level[u] + 1;
          q.push(v);
        }
      }
    }
    return std::all_of(level.begin(), level.end(), [](long l) { return l >= 0; });
  };
  std::vector<std::vector<std::size_t>> rev(S);
  for (std::size_t u = 0; u < S; ++u) {
    for (std::size_t v : adj[u]) rev[v].push_back(u);
  }
  std::vector<long> level;
  std::vector<long> rlevel;
  if (!bfs(rev, rlevel) || !bfs(adj, level)) return false;
  // Period = gcd over edges of level(u) + 1 - level(v).
  long period = 0;
  for (std::size_t u = 0; u < S; ++u) {
    for (std::size_t v : adj[u]) period = std::gcd(period, std::labs(level[u] + 1 - level[v]));
  }
  return period == 1;
}

TabularMDP tabular_from_json(const nlohmann::json& j) {
  try {
    const auto n_states = j.at("n_states").get<std::size_t>();
    const auto n_agents = j.value("n_agents", std::size_t{1});
    const auto n_local = j.at("n_local_actions").get<std::size_t>();
    TabularMDP mdp(n_states, n_agents, n_local, j.at("gamma").get<double>(),
                   j.value("s0", std::int32_t{0}));
    const auto& P = j.at("P");
    const auto& R = j.at("rewards");
    if (P.size() != n_states) throw ConfigError("tabular MDP: P has wrong number of states");
    if (R.size() != n_agents) throw ConfigError("tabular MDP: rewards need one table per agent");
    for (std::size_t s = 0; s < n_states; ++s) {
      if (P[s].size() != mdp.n_joint_actions()) throw ConfigError("tabular MDP: P[s] needs one row per joint action");
      for (std::size_t a = 0; a < mdp.n_joint_actions(); ++a) {
        if (P[s][a].size() != n_states) throw ConfigError("tabular MDP: P[s][a] has wrong length");
        for (std::size_t s2 = 0; s2 < n_states; ++s2) mdp.P(s, a, s2) = P[s][a][s2].get<double>();
      }
    }
    for (std::size_t i = 0; i < n_agents; ++i) {
      if (R[i].size() != n_states) throw ConfigError("tabular MDP: rewards[i] has wrong number of states");
      for (std::size_t s = 0; s < n_states; ++s) {
        if (R[i][s].size() != mdp.n_joint_actions()) throw ConfigError("tabular MDP: rewards[i][s] has wrong length");
        for (std::size_t a = 0; a < mdp.n_joint_actions(); ++a) mdp.reward(i, s, a) = R[i][s][a].get<double>();
      }
    }
    mdp.validate();
    return mdp;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("tabular MDP: ") + e.what());
  }
}

nlohmann::json tabular_to_json(const TabularMDP& mdp) {
  nlohmann::json P = nlohmann::json::array();
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t a = 0; a < mdp.n_joint_actions(); ++a) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t s2 = 0; s2 < mdp.n_states(); ++s2) row.push_back(mdp.P(s, a, s2));
      rows.push_back(row);
    }
    P.push_back(rows);
  }
  nlohmann::json R = nlohmann::json::array();
  for (std::size_t i = 0; i < mdp.num_agents(); ++i) {
    nlohmann::json per_state = nlohmann::json::array();
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t a = 0; a < mdp.n_joint_actions(); ++a) row.push_back(mdp.reward(i, s, a));
      per_state.push_back(row);
    }
    R.push_back(per_state);
  }
  return {{"n_states", mdp.n_states()},     {"n_agents", mdp.num_agents()},
          {"n_local_actions", mdp.num_local_actions()},
          {"gamma", mdp.gamma()},           {"s0", mdp.s0()},
          {"P", P},                         {"rewards", R}};
}

TabularMDP load_tabular(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open tabular MDP file " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("tabular MDP file " + path.string() + ": " + e.what());
  }
  return tabular_from_json(j);
}

TabularMDP random_tabular(std::size_t n_states, std::size_t n_agents, std::size_t n_local,
                          double gamma, Rng& rng) {
  TabularMDP mdp(n_states, n_agents, n_local, gamma, 0);
  for (std::size_t s = 0; s < n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_joint_actions(); ++a) {
      double sum = 0.0;
      for (std::size_t s2 = 0; s2 < n_states; ++s2) {
        const double e = -std::log(1.0 - rng.uniform());
        mdp.P(s, a, s2) = e;
        sum += e;
      }
      for (std::size_t s2 = 0; s2 < n_states; ++s2) mdp.P(s, a, s2) /= sum;
    }
  }
  for (std::size_t i = 0; i < n_agents; ++i) {
    for (std::size_t s = 0; s < n_states; ++s) {
      for (std::size_t a = 0; a < mdp.n_joint_actions(); ++a) mdp.reward(i, s, a) = rng.uniform();
    }
  }
  return mdp;
}

// ---------------------------------------------------------------------------
// GridSpread

GridSpread::GridSpread(const GridSpreadConfig& cfg) : cfg_(cfg) {
  if (cfg.length <= 0 || cfg.width <= 0) throw ConfigError("grid: board dimensions must be positive");
  if (cfg.n_agents == 0) throw ConfigError("grid: need at least one agent");
  if (!(cfg.reward_scale > 0.0)) throw ConfigError("grid: reward_scale must be positive");
  if (!cfg.landmarks.empty()) {
    landmarks_ = cfg.landmarks;
    for (const Cell& c : landmarks_) {
      if (c.x < 0 || c.x >= cfg.length || c.y < 0 || c.y >= cfg.width) {
        throw ConfigError("grid: landmark outside the board");
      }
    }
  } else {
    if (cfg.n_agents > n_cells()) throw ConfigError("grid: more landmarks than cells");
    Rng rng(cfg.landmark_seed);
    std::set<std::int32_t> used;
    while (landmarks_.size() < cfg.n_agents) {
      const auto idx = static_cast<std::int32_t>(rng.below(n_cells()));
      if (used.insert(idx).second) landmarks_.push_back(cell_at(idx));
    }
  }
}

GridSpreadState GridSpread::decode(const State& s) const {
  if (s.size() != cfg_.n_agents) throw DomainError("grid: state has wrong number of agents");
  GridSpreadState g;
  g.agents.reserve(s.size());
  for (std::int32_t idx : s) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= n_cells()) throw DomainError("grid: cell out of range");
    g.agents.push_back(cell_at(idx));
  }
  return g;
}

State GridSpread::encode(const GridSpreadState& g) const {
  State s;
  s.reserve(g.agents.size());
  for (const Cell& c : g.agents) s.push_back(cell_index(c));
  return s;
}

double GridSpread::raw_reward(const GridSpreadState& g) const {
  double total = 0.0;
  for (const Cell& l : landmarks_) {
    std::int32_t best = std::numeric_limits<std::int32_t>::max();
    for (const Cell& a : g.agents) best = std::min(best, std::abs(l.x - a.x) + std::abs(l.y - a.y));
    total += best;
  }
  return -total;
}

double GridSpread::max_l1_sum() const {
  return static_cast<double>((cfg_.length - 1) + (cfg_.width - 1)) *
         static_cast<double>(landmarks_.size());
}

double GridSpread::shape_reward(double raw) const {
  return cfg_.reward_scale * (cfg_.reward_shift ? raw + max_l1_sum() : raw);
}

double GridSpread::reward_max() const {
  return cfg_.reward_shift ? cfg_.reward_scale * max_l1_sum() : 0.0;
}

std::pair<GridSpreadState, double> GridSpread::grid_step(const GridSpreadState& g,
                                                         const JointAction& a) const {
  if (a.size() != g.agents.size()) throw DomainError("grid: joint action has wrong number of agents");
  GridSpreadState next = g;
  for (std::size_t i = 0; i < a.size(); ++i) {
    Cell& c = next.agents[i];
    switch (a[i]) {
      case static_cast<std::int32_t>(Move::Up):
        c.y = std::min(c.y + 1, cfg_.width - 1);
        break;
      case static_cast<std::int32_t>(Move::Down):
        c.y = std::max(c.y - 1, 0);
        break;
      case static_cast<std::int32_t>(Move::Left):
        c.x = std::max(c.x - 1, 0);
        break;
      case static_cast<std::int32_t>(Move::Right):
        c.x = std::min(c.x + 1, cfg_.length - 1);
        break;
      case static_cast<std::int32_t>(Move::Stay):
        break;
      default:
        throw DomainError("grid: invalid action index " + std::to_string(a[i]));
    }
  }
  const double raw = raw_reward(next);
  return {std::move(next), raw};
}

State GridSpread::initial_state() const { return State(cfg_.n_agents, 0); }

State GridSpread::reset(Rng& rng) const {
  State s(cfg_.n_agents);
  for (auto& c : s) c = static_cast<std::int32_t>(rng.below(n_cells()));
  return s;
}

StepResult GridSpread::step(const State& s, const JointAction& a, Rng&) const {
  auto [next, raw] = grid_step(decode(s), a);
  StepResult out;
  out.next = encode(next);
  out.raw_reward = raw;
  out.rewards.assign(cfg_.n_agents, shape_reward(raw));
  return out;
}

std::size_t GridSpread::state_action_dim() const { return cfg_.n_agents * (n_cells() + kNumMoves); }
std::size_t GridSpread::state_dim() const { return cfg_.n_agents * n_cells(); }

// Per-agent one-hot cell blocks, then per-agent one-hot move blocks.
SparseVec GridSpread::state_action_features(const State& s, const JointAction& a) const {
  decode(s);
  if (a.size() != cfg_.n_agents) throw DomainError("grid: joint action has wrong number of agents");
  SparseVec x;
  x.dim = state_action_dim();
  const double v = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg_.n_agents));
  const std::size_t cells = n_cells();
  for (std::size_t i = 0; i < cfg_.n_agents; ++i) {
    x.index.push_back(static_cast<std::uint32_t>(i * cells + static_cast<std::size_t>(s[i])));
    x.value.push_back(v);
  }
  const std::size_t base = cfg_.n_agents * cells;
  for (std::size_t i = 0; i < cfg_.n_agents; ++i) {
    if (a[i] < 0 || static_cast<std::size_t>(a[i]) >= kNumMoves) throw DomainError("grid: invalid action index");
    x.index.push_back(static_cast<std::uint32_t>(base + i * kNumMoves + static_cast<std::size_t>(a[i])));
    x.value.push_back(v);
  }
  return x;
}

SparseVec GridSpread::state_features(const State& s) const {
  decode(s);
  SparseVec x;
  x.dim = state_dim();
  const double v = 1.0 / std::sqrt(static_cast<double>(cfg_.n_agents));
  for (std::size_t i = 0; i < cfg_.n_agents; ++i) {
    x.index.push_back(static_cast<std::uint32_t>(i * n_cells() + static_cast<std::size_t>(s[i])));
    x.value.push_back(v);
  }
  return x;
}

GridSpreadConfig grid_config_from_json(const nlohmann::json& j) {
  GridSpreadConfig c;
  c.length = j.value("length", c.length);
  c.width = j.value("width", c.width);
  c.n_agents = j.value("n_agents", c.n_agents);
  c.landmark_seed = j.value("landmark_seed", c.landmark_seed);
  c.reward_shift = j.value("reward_shift", c.reward_shift);
  c.reward_scale = j.value("reward_scale", c.reward_scale);
  if (j.contains("landmarks")) {
    for (const auto& l : j.at("landmarks")) c.landmarks.push_back({l.at(0).get<std::int32_t>(), l.at(1).get<std::int32_t>()});
  }
  return c;
}

// ---------------------------------------------------------------------------
// Policies and the chain

JointAction JointPolicy::sample(const State& s, Rng& rng) const {
  JointAction a(num_agents());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::vector<double> p = local_probs(i, s);
    a[i] = static_cast<std::int32_t>(rng.categorical(p));
  }
  return a;
}

TabularPolicy::TabularPolicy(std::vector<std::vector<std::vector<double>>> probs)
    : probs_(std::move(probs)) {
  for (const auto& agent : probs_) {
    for (const auto& row : agent) {
      const double sum = std::accumulate(row.begin(), row.end(), 0.0);
      if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("tabular policy rows must sum to 1");
    }
  }
}

TabularPolicy TabularPolicy::uniform(std::size_t n_agents, std::size_t n_states, std::size_t n_local) {
  return TabularPolicy(std::vector(n_agents, std::vector(n_states, std::vector(n_local, 1.0 / static_cast<double>(n_local)))));
}

TabularPolicy TabularPolicy::random(std::size_t n_agents, std::size_t n_states, std::size_t n_local,
                                    Rng& rng) {
  std::vector<std::vector<std::vector<double>>> t(n_agents, std::vector(n_states, std::vector<double>(n_local)));
  for (auto& agent : t) {
    for (auto& row : agent) {
      double sum = 0.0;
      for (double& v : row) {
        v = std::exp(rng.normal(0.0, 1.0));
        sum += v;
      }
      for (double& v : row) v /= sum;
    }
  }
  return TabularPolicy(std::move(t));
}

std::vector<double> TabularPolicy::local_probs(std::size_t agent, const State& s) const {
  return probs_.at(agent).at(static_cast<std::size_t>(s.at(0)));
}

Matrix joint_policy_table(const TabularMDP& mdp, const JointPolicy& policy) {
  Matrix pi(mdp.n_states(), mdp.n_joint_actions());
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    const State st{static_cast<std::int32_t>(s)};
    std::vector<std::vector<double>> local(mdp.num_agents());
    for (std::size_t i = 0; i < mdp.num_agents(); ++i) local[i] = policy.local_probs(i, st);
    for (std::size_t a = 0; a < mdp.n_joint_actions(); ++a) {
      const JointAction ja = mdp.decode_joint(a);
      double p = 1.0;
      for (std::size_t i = 0; i < mdp.num_agents(); ++i) p *= local[i][static_cast<std::size_t>(ja[i])];
      pi(s, a) = p;
    }
  }
  return pi;
}

MarkovChain::MarkovChain(const Mamdp& env, double gamma, std::size_t episode_len,
                         std::uint64_t seed, bool restart)
    : env_(&env), gamma_(gamma), episode_len_(episode_len), restart_(restart), rng_(seed) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
  state_ = env.reset(rng_);
  anchor_ = state_;
}

StepResult MarkovChain::advance(const JointAction& a, bool game_step) {
  StepResult out = restart_ ? restart_step(*env_, gamma_, anchor_, state_, a, rng_)
                            : env_->step(state_, a, rng_);
  state_ = out.next;
  if (game_step) {
    ++game_steps_;
    episode_raw_ += out.raw_reward;
    if (episode_len_ > 0 && game_steps_ % episode_len_ == 0) {
      finished_.push_back(episode_raw_);
      episode_raw_ = 0.0;
      state_ = env_->reset(rng_);
      anchor_ = state_;
      out.next = state_;
    }
  }
  return out;
}

}  // namespace decac::env
