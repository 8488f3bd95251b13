#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "smod/bench.hpp"

using namespace smod;

namespace {

struct Common {
  std::string config;
  std::string out;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value config file");
  cmd->add_option("--out", c.out, "output location");
  cmd->add_option("--threads", c.threads, "worker threads");
  cmd->add_option("--seed", c.seed, "base seed");
  cmd->add_option("--set", c.overrides, "override a config key (key=value)");
}

KeyValues gather(const Common& c, const char* seed_key) {
  KeyValues kv;
  if (!c.config.empty()) kv = load_key_values(c.config);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value: " + o);
    kv[o.substr(0, eq)] = o.substr(eq + 1);
  }
  if (!c.out.empty()) kv["out"] = c.out;
  if (c.threads > 0) kv["threads"] = std::to_string(c.threads);
  if (c.seed) kv[seed_key] = std::to_string(*c.seed);
  return kv;
}

// Single-run subcommands use the first cell of the configured grid.
std::pair<ProblemInstance, SolverConfig> single_run(const ExperimentConfig& config) {
  const auto cells = expand_grid(config);
  if (cells.size() != 1) {
    std::cerr << "note: grid has " << cells.size() << " cells; using the first\n";
  }
  ProblemInstance inst = build_instance(config, config.gen.seed);
  SolverConfig sc = solver_config(config, inst, cells.front());
  return {std::move(inst), std::move(sc)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic model-based optimization toolkit"};
  app.require_subcommand(1);

  Common gen_opts, run_opts, st_opts, rec_opts, stab_opts;
  auto* gen = app.add_subcommand("gen", "generate and save a problem instance");
  add_common(gen, gen_opts);

  auto* runc = app.add_subcommand("run", "run an experiment grid into <out>/results.csv");
  add_common(runc, run_opts);

  std::string results_path, speedup_out;
  bool robustness = false;
  auto* speed = app.add_subcommand("speedup", "speedup table from a results file");
  speed->add_option("--results", results_path, "results.csv")->required();
  speed->add_option("--out", speedup_out, "output CSV (default stdout)");
  speed->add_flag("--robustness", robustness, "count threshold hits per alpha0 grid instead");

  double rho = 0.0;
  int stride = 1;
  auto* stat = app.add_subcommand("stationarity", "Moreau-envelope gradient along one run");
  add_common(stat, st_opts);
  stat->add_option("--rho", rho, "envelope parameter (default: the run's rho)");
  stat->add_option("--stride", stride, "iterate stride");

  std::vector<int> checkpoints;
  auto* rec = app.add_subcommand("recover", "dump reshaped iterates of one run");
  add_common(rec, rec_opts);
  rec->add_option("--checkpoints", checkpoints, "iterate indices to dump")->delimiter(',');

  auto* stab = app.add_subcommand("stability", "replace-one stability trials");
  add_common(stab, stab_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      KeyValues kv = gather(gen_opts, "data_seed");
      const std::string out = kv.count("out") ? kv["out"] : "instance.txt";
      kv.erase("out");
      const ExperimentConfig cfg = ExperimentConfig::from_key_values(kv);
      const ProblemInstance inst = build_instance(cfg, cfg.gen.seed);
      save_instance(out, inst);
      std::cout << "wrote " << out << " (n=" << inst.n() << ", dim=" << inst.dim() << ")\n";
    } else if (*runc) {
      const ExperimentConfig cfg = ExperimentConfig::from_key_values(gather(run_opts, "seed"));
      const ExperimentSummary s = run_experiment(cfg);
      std::cout << s.results_path << ": " << s.cells << " cells, " << s.skipped << " skipped, "
                << s.executed << " run, " << s.failed << " failed\n";
    } else if (*speed) {
      const auto rows = read_results(results_path);
      std::ofstream file;
      if (!speedup_out.empty()) {
        file.open(speedup_out);
        if (!file) throw std::runtime_error("cannot write " + speedup_out);
      }
      std::ostream& os = speedup_out.empty() ? std::cout : file;
      if (robustness) {
        os << "algorithm,kind,beta,m,mean_hits,grid_points\n";
        for (const auto& e : robustness_table(rows)) {
          os << e.algorithm << ',' << e.kind << ',' << e.beta << ',' << e.m << ',' << e.mean_hits
             << ',' << e.grid_points << '\n';
        }
      } else {
        write_speedup(os, speedup_table(rows));
      }
    } else if (*stat) {
      KeyValues kv = gather(st_opts, "seed");
      const std::string out = kv.count("out") ? kv["out"] : "";
      kv.erase("out");
      const ExperimentConfig cfg = ExperimentConfig::from_key_values(kv);
      auto [inst, sc] = single_run(cfg);
      sc.keep_iterates = true;
      sc.record_every = 1;
      const RunRecord record = run(inst, sc);
      const auto rows = stationarity_trace(inst, record, rho > 0.0 ? rho : record.rho, stride);
      if (out.empty()) {
        write_stationarity(std::cout, rows);
      } else {
        std::ofstream os(out);
        if (!os) throw std::runtime_error("cannot write " + out);
        write_stationarity(os, rows);
      }
    } else if (*rec) {
      KeyValues kv = gather(rec_opts, "seed");
      const std::string out = kv.count("out") ? kv["out"] : "recover";
      kv.erase("out");
      const ExperimentConfig cfg = ExperimentConfig::from_key_values(kv);
      auto [inst, sc] = single_run(cfg);
      sc.checkpoints = checkpoints;
      const RunRecord record = run(inst, sc);
      for (const auto& p : recover_dump(record, checkpoints, out)) std::cout << p << '\n';
    } else if (*stab) {
      const StabilityConfig cfg = StabilityConfig::from_key_values(gather(stab_opts, "seed"));
      for (const auto& cell : stability_command(cfg)) {
        std::cout << to_string(cell.kind) << " m=" << cell.m << " gamma=" << cell.gamma
                  << " trials=" << cell.report.trials << " invalid=" << cell.report.invalid
                  << " max_ratio=" << cell.report.max_ratio
                  << " violations=" << cell.report.violations << '\n';
      }
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
