#include "decac/harness.hpp"

#include <glob.h>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "decac/consensus.hpp"
#include "decac/stats.hpp"

namespace decac::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::unique_ptr<env::Mamdp> build_environment(const config::RunConfig& cfg, std::uint64_t seed) {
  if (cfg.environment.kind == "tabular") {
    fs::path p = cfg.environment.tabular_path;
    if (p.is_relative()) p = cfg.base_dir / p;
    auto mdp = std::make_unique<env::TabularMDP>(env::load_tabular(p));
    mdp->validate();
    return mdp;
  }
  env::GridSpreadConfig g = cfg.environment.grid;
  g.landmark_seed = cfg.environment.landmark_seed.value_or(derive_seed(seed, stream::kLandmarks));
  return std::make_unique<env::GridSpread>(g);
}

Matrix build_consensus(const config::RunConfig& cfg, std::size_t n_agents, std::uint64_t seed) {
  Rng rng(derive_seed(seed, stream::kGraph));
  if (n_agents == 1) return Matrix(1, 1, 1.0);
  const consensus::CommGraph graph = consensus::graph_from_spec(cfg.topology, n_agents, rng);
  if (!cfg.matrix_path.empty()) {
    fs::path p = cfg.matrix_path;
    if (p.is_relative()) p = cfg.base_dir / p;
    return consensus::load_matrix_csv(p, graph).weights;
  }
  return consensus::build_metropolis(graph).weights;
}

Replica run_replica(const config::RunConfig& cfg, std::uint64_t seed) {
  const auto env = build_environment(cfg, seed);
  const Matrix a = build_consensus(cfg, env->num_agents(), seed);
  actor::TrainConfig tc;
  tc.actor = cfg.actor;
  tc.critic = cfg.critic;
  tc.width = cfg.width;
  tc.depth = cfg.depth;
  tc.gamma = cfg.gamma;
  tc.episode_len = cfg.environment.episode_len;
  tc.critic_warm_start = cfg.critic_warm_start;
  tc.seed = seed;
  return {seed, actor::train(tc, *env, a)};
}

void write_runlog_jsonl(std::ostream& os, const actor::RunLog& log, const std::string& config_hash,
                        std::uint64_t seed, const std::optional<std::string>& axis_value) {
  for (const auto& e : log.episodes) {
    json j = {{"schema", kRunLogSchema},
              {"config_hash", config_hash},
              {"seed", seed},
              {"episode", e.episode},
              {"round", e.round},
              {"raw_reward", e.raw_reward},
              {"td_loss", e.td_loss},
              {"param_disagreement", e.param_disagreement},
              {"td_disagreement", e.td_disagreement},
              {"skips", e.skips}};
    if (axis_value) j["axis_value"] = *axis_value;
    os << j.dump() << '\n';
  }
}

namespace {
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

void write_runlog_csv(std::ostream& os, const actor::RunLog& log) {
  os << "episode,round,raw_reward,td_loss,param_disagreement,td_disagreement,skips\n";
  for (const auto& e : log.episodes) {
    os << e.episode << ',' << e.round << ',' << fmt(e.raw_reward) << ',' << fmt(e.td_loss) << ','
       << fmt(e.param_disagreement) << ',' << fmt(e.td_disagreement) << ',' << e.skips << '\n';
  }
}

void write_steps_csv(std::ostream& os, const actor::RunLog& log) {
  os << "round,agent,alpha_t,norm,skipped\n";
  for (const auto& s : log.steps) {
    os << s.round << ',' << s.agent << ',' << fmt(s.alpha_t) << ',' << fmt(s.norm) << ','
       << (s.skipped ? 1 : 0) << '\n';
  }
}

std::vector<double> episode_rewards(const actor::RunLog& log) {
  std::vector<double> r;
  r.reserve(log.episodes.size());
  for (const auto& e : log.episodes) r.push_back(e.raw_reward);
  return r;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

fs::path output_dir(const config::RunConfig& cfg, const std::optional<std::string>& cli_out) {
  if (cli_out) return *cli_out;
  if (const char* env = std::getenv("DECAC_OUT"); env && *env) return env;
  return cfg.out;
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << content;
}

std::string read_whole(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TrainSummary train_all(const config::RunConfig& cfg, const fs::path& out, std::size_t jobs) {
  fs::create_directories(out);
  TrainSummary summary;
  summary.config_hash = config::config_hash(cfg);
  summary.seeds = cfg.seeds;
  const std::size_t n = cfg.seeds.size();
  summary.episodes.resize(n);
  summary.first_window.resize(n);
  summary.final_window.resize(n);

  parallel_for(n, jobs, [&](std::size_t k) {
    const std::uint64_t seed = cfg.seeds[k];
    const Replica rep = run_replica(cfg, seed);
    const fs::path dir = out / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    {
      std::ofstream f(dir / "runlog.jsonl", std::ios::binary);
      write_runlog_jsonl(f, rep.result.log, summary.config_hash, seed);
    }
    {
      std::ofstream f(dir / "episodes.csv", std::ios::binary);
      write_runlog_csv(f, rep.result.log);
    }
    {
      std::ofstream f(dir / "steps.csv", std::ios::binary);
      write_steps_csv(f, rep.result.log);
    }
    for (std::size_t i = 0; i < rep.result.actors.size(); ++i) {
      nn::save_checkpoint(dir / ("actor_" + std::to_string(i) + ".ckpt"), rep.result.actors[i],
                          summary.config_hash);
    }
    nn::FCNet critic = rep.result.critic_proto;
    for (std::size_t i = 0; i < rep.result.critic.rows(); ++i) {
      critic.hidden = nn::HiddenStack(critic.width, critic.depth, rep.result.critic.row(i));
      nn::save_checkpoint(dir / ("critic_" + std::to_string(i) + ".ckpt"), critic,
                          summary.config_hash);
    }
    const auto rewards = episode_rewards(rep.result.log);
    summary.episodes[k] = rewards.size();
    summary.first_window[k] = stats::head_mean(rewards, kWindowFraction);
    summary.final_window[k] = stats::tail_mean(rewards, kWindowFraction);
  });

  // Per-replica files are merged once every worker has finished.
  std::string merged;
  for (std::uint64_t seed : cfg.seeds) {
    merged += read_whole(out / ("seed_" + std::to_string(seed)) / "runlog.jsonl");
  }
  write_file(out / "runlog.jsonl.all", merged);
  std::ostringstream csv;
  csv << "seed,episodes,first_window_mean,final_window_mean,config_hash\n";
  for (std::size_t k = 0; k < n; ++k) {
    csv << cfg.seeds[k] << ',' << summary.episodes[k] << ',' << fmt(summary.first_window[k]) << ','
        << fmt(summary.final_window[k]) << ',' << summary.config_hash << '\n';
  }
  write_file(out / "summary.csv", csv.str());
  write_file(out / "config.json", config::to_json(cfg).dump(2) + "\n");
  return summary;
}

SweepSummary run_sweep(const config::SweepSpec& spec, std::uint64_t master_seed,
                       const fs::path& out, std::size_t jobs) {
  const fs::path root = out / spec.name;
  fs::create_directories(root);
  const std::size_t cells = spec.values.size();
  const std::size_t reps = spec.repetitions;

  std::vector<config::RunConfig> cfgs;
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < cells; ++c) {
    cfgs.push_back(config::sweep_cell(spec, c));
    labels.push_back(config::axis_label(spec.values[c]));
    // Sweep isolation: at most the declared axis may differ from the base.
    for (const auto& key : config::config_diff(spec.base, cfgs.back())) {
      const bool allowed =
          (spec.axis == config::Axis::TGossip && key == "consensus.t_gossip") ||
          (spec.axis == config::Axis::Width && key == "network.m") ||
          (spec.axis == config::Axis::Depth && key == "network.D") ||
          (spec.axis == config::Axis::Agents &&
           (key == "environment.agents" || key == "environment.landmarks")) ||
          (spec.axis == config::Axis::KM && (key == "critic.K" || key == "actor.M")) ||
          (spec.axis == config::Axis::Signal && key == "actor.signal");
      if (!allowed) throw InternalError("sweep cell changes undeclared key " + key);
    }
    fs::create_directories(root / labels.back());
  }

  std::vector<std::vector<std::vector<double>>> rewards(cells, std::vector<std::vector<double>>(reps));
  parallel_for(cells * reps, jobs, [&](std::size_t job) {
    const std::size_t c = job / reps;
    const std::size_t r = job % reps;
    const std::uint64_t seed = replica_seed(master_seed, r);
    const Replica rep = run_replica(cfgs[c], seed);
    std::ofstream f(root / labels[c] / ("seed_" + std::to_string(r) + ".jsonl"), std::ios::binary);
    write_runlog_jsonl(f, rep.result.log, config::config_hash(cfgs[c]), seed, labels[c]);
    rewards[c][r] = episode_rewards(rep.result.log);
  });

  SweepSummary summary{spec.name, spec.axis_name, {}};
  std::ostringstream curves;
  std::ostringstream table;
  curves << "axis_value,episode,mean_reward,moving_avg,ci_lo,ci_hi\n";
  table << "axis_value,replicas,first_window_mean,final_window_mean,final_ci_lo,final_ci_hi\n";
  for (std::size_t c = 0; c < cells; ++c) {
    CellSummary cell;
    cell.label = labels[c];
    std::size_t episodes = rewards[c][0].size();
    for (const auto& r : rewards[c]) episodes = std::min(episodes, r.size());
    std::vector<stats::Interval> cis;
    for (std::size_t e = 0; e < episodes; ++e) {
      std::vector<double> column;
      for (const auto& r : rewards[c]) column.push_back(r[e]);
      cell.mean_curve.push_back(stats::mean(column));
      cis.push_back(stats::mean_ci(column));
    }
    cell.moving_avg = stats::moving_average(cell.mean_curve, kMovingAverageWindow);
    for (const auto& r : rewards[c]) {
      cell.first_window.push_back(stats::head_mean(r, kWindowFraction));
      cell.final_window.push_back(stats::tail_mean(r, kWindowFraction));
    }
    for (std::size_t e = 0; e < episodes; ++e) {
      curves << cell.label << ',' << e << ',' << fmt(cell.mean_curve[e]) << ','
             << fmt(cell.moving_avg[e]) << ',' << fmt(cis[e].lo) << ',' << fmt(cis[e].hi) << '\n';
    }
    const auto ci = stats::mean_ci(cell.final_window);
    table << cell.label << ',' << reps << ',' << fmt(stats::mean(cell.first_window)) << ','
          << fmt(stats::mean(cell.final_window)) << ',' << fmt(ci.lo) << ',' << fmt(ci.hi) << '\n';
    summary.cells.push_back(std::move(cell));
  }
  write_file(root / (spec.name + "_curves.csv"), curves.str());
  write_file(root / (spec.name + "_cells.csv"), table.str());
  return summary;
}

std::size_t plotdata(const std::string& pattern, std::ostream& os) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> files;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) files.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  if (files.empty()) throw ConfigError("plotdata: no files match " + pattern);

  // (axis_value, seed) -> rewards in episode order
  std::map<std::pair<std::string, std::uint64_t>, std::map<std::size_t, double>> series;
  for (const auto& path : files) {
    std::ifstream f(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error&) {
        throw ConfigError("plotdata: " + path + ":" + std::to_string(line_no) + " is not JSON");
      }
      const std::string axis = j.value("axis_value", std::string{});
      series[{axis, j.at("seed").get<std::uint64_t>()}][j.at("episode").get<std::size_t>()] =
          j.at("raw_reward").get<double>();
    }
  }

  os << "episode,seed,axis_value,raw_reward,moving_avg\n";
  std::size_t rows = 0;
  for (const auto& [key, eps] : series) {
    std::vector<double> r;
    std::vector<std::size_t> idx;
    for (const auto& [e, v] : eps) {
      idx.push_back(e);
      r.push_back(v);
    }
    const auto ma = stats::moving_average(r, kMovingAverageWindow);
    for (std::size_t i = 0; i < r.size(); ++i) {
      os << idx[i] << ',' << key.second << ',' << key.first << ',' << fmt(r[i]) << ',' << fmt(ma[i])
         << '\n';
      ++rows;
    }
  }
  return rows;
}

}  // namespace decac::harness
