// Command-line harness: populate chunk stores, run experiment matrices,
// check near-optimality against the exhaustive split oracle, and measure
// scheduler decision overhead.

#include <CLI11.hpp>

#include <iostream>

#include "cake/bench.hpp"
#include "cake/config.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_path;
  std::string mode_override;
  bool verbose = false;
  bool parallel = false;
};

cake::ExperimentConfig load_experiment(const CommonArgs& args) {
  auto cfg = cake::ConfigFile::load(args.config_path);
  auto exp = cake::ExperimentConfig::from_config(cfg);
  if (!args.mode_override.empty()) exp.clock = cake::parse_clock_mode(args.mode_override);
  return exp;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "experiment config file");
  if (needs_config) opt->required();
  cmd->add_option("--out", args.out_path, "output path");
  cmd->add_option("--mode", args.mode_override, "clock mode override: sim|live")
      ->check(CLI::IsMember({"sim", "live"}));
  cmd->add_flag("--verbose", args.verbose, "write per-run event logs");
  cmd->add_flag("--parallel", args.parallel, "run sim-mode matrix cells in parallel");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cake: bidirectional KV-cache acquisition benchmark"};
  app.require_subcommand(1);

  CommonArgs args;
  auto* populate = app.add_subcommand("populate", "write the chunk stores for an experiment");
  add_common(populate, args);
  auto* bench = app.add_subcommand("bench", "run the experiment matrix and emit results CSV");
  add_common(bench, args);
  auto* oracle = app.add_subcommand("oracle", "compare cake TTFT against the exhaustive split oracle");
  add_common(oracle, args);
  auto* overhead = app.add_subcommand("overhead", "measure per-chunk scheduling decision latency");
  add_common(overhead, args, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (populate->parsed()) {
      auto exp = load_experiment(args);
      if (!args.out_path.empty()) exp.store_root = args.out_path;
      return cake::cmd_populate(exp, std::cout);
    }
    if (bench->parsed()) {
      auto exp = load_experiment(args);
      std::filesystem::path out = args.out_path.empty() ? "results.csv" : args.out_path;
      return cake::cmd_bench(exp, out, args.verbose, args.parallel, std::cout);
    }
    if (oracle->parsed()) {
      auto exp = load_experiment(args);
      exp.clock = cake::ClockMode::sim;
      return cake::cmd_oracle(exp, std::cout);
    }
    if (overhead->parsed()) {
      return cake::cmd_overhead(std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
