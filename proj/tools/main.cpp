// decac: train, ablate, verify and export plot data.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "decac/config.hpp"
#include "decac/harness.hpp"
#include "decac/simd.hpp"
#include "decac/stats.hpp"

using namespace decac;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  bool paper_scale = false;
  std::optional<std::string> out;
  std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Master seed (overrides the config's seed list)");
  cmd->add_flag("--paper-scale", c.paper_scale, "T = 20000 and 100 repetitions");
  cmd->add_option("--out", c.out, "Output directory (beats DECAC_OUT and the config)");
  cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

int cmd_train(const std::string& path, const Common& c) {
  config::RunConfig cfg = config::load(path);
  config::apply_scale(cfg, c.paper_scale);
  if (c.seed) cfg.seeds = {*c.seed};
  const auto out = harness::output_dir(cfg, c.out);
  const auto s = harness::train_all(cfg, out, c.jobs);
  for (std::size_t k = 0; k < s.seeds.size(); ++k) {
    std::printf("seed %llu: %zu episodes, first-window reward %.3f, final-window reward %.3f\n",
                static_cast<unsigned long long>(s.seeds[k]), s.episodes[k], s.first_window[k],
                s.final_window[k]);
  }
  std::printf("config %s -> %s\n", s.config_hash.c_str(), out.string().c_str());
  return 0;
}

int cmd_ablate(const std::string& path, const Common& c, std::optional<std::size_t> reps) {
  config::SweepSpec spec = config::load_sweep(path);
  config::apply_scale(spec.base, c.paper_scale);
  if (c.paper_scale) spec.repetitions = config::kPaperRepetitions;
  if (reps) spec.repetitions = *reps;
  const std::uint64_t master = c.seed.value_or(spec.base.seeds.front());
  const auto out = harness::output_dir(spec.base, c.out);
  const auto summary = harness::run_sweep(spec, master, out, c.jobs);
  std::printf("%-12s %10s %12s %12s %22s\n", summary.axis.c_str(), "replicas", "first", "final",
              "final 95% CI");
  for (const auto& cell : summary.cells) {
    const auto ci = stats::mean_ci(cell.final_window);
    std::printf("%-12s %10zu %12.3f %12.3f   [%8.3f, %8.3f]\n", cell.label.c_str(),
                cell.final_window.size(), stats::mean(cell.first_window),
                stats::mean(cell.final_window), ci.lo, ci.hi);
  }
  for (std::size_t i = 0; i < summary.cells.size(); ++i) {
    for (std::size_t j = 0; j < summary.cells.size(); ++j) {
      if (i == j) continue;
      const auto w = stats::wilcoxon_greater(summary.cells[i].final_window,
                                             summary.cells[j].final_window);
      std::printf("final window %s > %s: Wilcoxon p = %.4g\n", summary.cells[i].label.c_str(),
                  summary.cells[j].label.c_str(), w.p_value);
    }
  }
  std::printf("curves and cell table -> %s\n", (out / summary.name).string().c_str());
  return 0;
}

int cmd_verify(const Common& c, bool mutate) {
  harness::VerifyOptions opts;
  opts.mutate_gradient = mutate;
  opts.seed = c.seed.value_or(0);
  std::printf("kernels: %s\n", simd::kernels().name);
  bool ok = true;
  for (const auto& check : harness::verify(opts)) {
    std::printf("[%s] %s: %s\n", check.pass ? "PASS" : "FAIL", check.name.c_str(),
                check.detail.c_str());
    ok = ok && check.pass;
  }
  return ok ? 0 : 1;
}

int cmd_plotdata(const std::string& pattern, const Common& c) {
  if (c.out) {
    std::ofstream f(*c.out);
    if (!f) throw ConfigError("cannot write " + *c.out);
    harness::plotdata(pattern, f);
  } else {
    harness::plotdata(pattern, std::cout);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized actor-critic with neural critics and gossip consensus"};
  app.require_subcommand(1);
  std::string simd_choice;
  app.add_option("--simd", simd_choice, "Kernel table: scalar, avx2, neon or auto");

  Common common;
  std::string train_cfg, sweep_cfg, pattern;
  std::optional<std::size_t> reps;
  bool mutate = false;

  auto* train = app.add_subcommand("train", "Train one config over its seeds");
  train->add_option("config", train_cfg, "Run config (TOML-style or JSON)")->required();
  add_common(train, common);

  auto* ablate = app.add_subcommand("ablate", "Run an ablation sweep");
  ablate->add_option("sweep", sweep_cfg, "Sweep file")->required();
  ablate->add_option("--repetitions", reps, "Replicas per cell");
  add_common(ablate, common);

  auto* verify = app.add_subcommand("verify", "Run the oracle and property checklist");
  verify->add_flag("--mutate-gradient", mutate, "Corrupt the network gradient (negative control)");
  add_common(verify, common);

  auto* plot = app.add_subcommand("plotdata", "Export long-format CSV from RunLogs");
  plot->add_option("glob", pattern, "RunLog glob, e.g. 'runs/*/*/seed_*.jsonl'")->required();
  add_common(plot, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!simd_choice.empty() && !simd::select(simd_choice)) {
      throw ConfigError("kernel table '" + simd_choice + "' is not available here");
    }
    if (*train) return cmd_train(train_cfg, common);
    if (*ablate) return cmd_ablate(sweep_cfg, common, reps);
    if (*verify) return cmd_verify(common, mutate);
    if (*plot) return cmd_plotdata(pattern, common);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    // An empty plotdata glob is a missing-input failure, not a bad config.
    return *plot ? 1 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
