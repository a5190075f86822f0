// Copyright (C) 2026 The ctrlz-lab Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end for the experiment harness.
//
//   ctrlz run <config.json>
//   ctrlz sweep <config.json> --dmax 1,2,3 --n 1,2,4
//   ctrlz compare <config.json> --strategies ddim,resampling,zsampling,sop,ctrlz
//
// Common flags: --seed <u64>, --runs <int>, --out <dir>, --jobs <int>.
// Exit codes: 0 success, 2 configuration error, 3 non-finite value.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctrlz/harness/config.hpp"
#include "ctrlz/harness/experiment.hpp"
#include "ctrlz/harness/report.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<unsigned> jobs;
  std::string out = "ctrlz-out";
};

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("config", o.config, "Experiment configuration (JSON)")->required();
  sub->add_option("--seed", o.seed, "Override the master seed");
  sub->add_option("--runs", o.runs, "Override the number of runs")->check(CLI::PositiveNumber);
  sub->add_option("--jobs", o.jobs, "Worker threads across runs")->check(CLI::PositiveNumber);
  sub->add_option("--out", o.out, "Output directory");
}

ctrlz::harness::ExperimentConfig load(const CommonOptions& o) {
  auto cfg = ctrlz::harness::load_config(o.config);
  if (o.seed) cfg.master_seed = *o.seed;
  if (o.runs) cfg.runs = *o.runs;
  if (o.jobs) cfg.jobs = *o.jobs;
  return cfg;
}

void print_table(const std::vector<ctrlz::harness::ExperimentResult>& results) {
  using ctrlz::harness::format_number;
  std::cout << "strategy,mean_final_reward,stddev_final_reward,escape_rate,mean_nfe_avg\n";
  for (const auto& r : results) {
    std::cout << r.label << ',' << format_number(r.stats.mean_final_reward) << ','
              << format_number(r.stats.stddev_final_reward) << ',' << format_number(r.stats.escape_rate)
              << ',' << format_number(r.stats.mean_nfe_avg) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ctrl-Z sampling laboratory"};
  app.require_subcommand(1);

  CommonOptions run_opts, sweep_opts, compare_opts;
  std::vector<int> dmax{1, 2, 3};
  std::vector<int> ncand{1, 2, 4};
  std::vector<std::string> strategies{"ddim", "resampling", "zsampling", "sop", "ctrlz"};

  auto* run = app.add_subcommand("run", "Run the configured strategy");
  add_common(run, run_opts);

  auto* sweep = app.add_subcommand("sweep", "Sweep Ctrl-Z over d_max x N");
  add_common(sweep, sweep_opts);
  sweep->add_option("--dmax", dmax, "d_max grid")->delimiter(',');
  sweep->add_option("--n", ncand, "N grid")->delimiter(',');

  auto* cmp = app.add_subcommand("compare", "Compare strategies on shared seeds");
  add_common(cmp, compare_opts);
  cmp->add_option("--strategies", strategies, "Strategies to compare")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  std::string command;
  for (int i = 1; i < argc; ++i) command += (i > 1 ? " " : "") + std::string(argv[i]);

  try {
    std::vector<ctrlz::harness::ExperimentResult> results;
    std::string out;
    if (*run) {
      const auto cfg = load(run_opts);
      results.push_back(ctrlz::harness::run_experiment(cfg));
      out = run_opts.out;
    } else if (*sweep) {
      const auto cfg = load(sweep_opts);
      results = ctrlz::harness::sweep(cfg, dmax, ncand);
      out = sweep_opts.out;
    } else {
      const auto cfg = load(compare_opts);
      std::vector<ctrlz::harness::Strategy> list;
      for (const auto& s : strategies) {
        const auto parsed = ctrlz::harness::parse_strategy(s);
        if (!parsed) throw ctrlz::ConfigError("--strategies", "unknown strategy \"" + s + "\"");
        list.push_back(*parsed);
      }
      results = ctrlz::harness::compare(cfg, list);
      out = compare_opts.out;
    }
    ctrlz::harness::write_outputs(out, results, command);
    print_table(results);
  } catch (const ctrlz::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ctrlz::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ctrlz::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
