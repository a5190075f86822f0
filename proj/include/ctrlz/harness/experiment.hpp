// Copyright (C) 2026 The ctrlz-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ctrlz/harness/config.hpp"
#include "ctrlz/models.hpp"
#include "ctrlz/rewards.hpp"
#include "ctrlz/rng.hpp"
#include "ctrlz/samplers.hpp"

namespace ctrlz::harness {

struct RunRecord {
  int run_index = 0;
  RunResult result;
  double final_reward = 0.0;
  bool escaped = false;
};

struct AggregateStats {
  int runs = 0;
  double mean_final_reward = 0.0;
  double stddev_final_reward = 0.0;
  double escape_rate = 0.0;
  double mean_nfe_avg = 0.0;
  double mean_reward_calls = 0.0;
  std::uint64_t total_events = 0;
  /// Exploration triggers per step index t.
  std::map<int, std::uint64_t> initiation_histogram;
  /// Terminal depths, split by how the exploration ended.
  std::map<std::pair<int, Termination>, std::uint64_t> depth_histogram;
};

/// Results of one strategy (or one sweep cell) over all runs.
struct ExperimentResult {
  std::string label;
  Strategy strategy = Strategy::kDdim;
  AggregateStats stats;
  std::vector<RunRecord> runs;
};

/// Standard-normal x_T of run `run_index`; shared by every strategy so
/// comparisons are paired.
inline LatentState initial_noise(std::uint64_t seed, const NoiseSchedule& sched, Eigen::Index dim) {
  return {KeyedNoise(seed).gaussian({Stream::kInitialNoise, 0, 0, 0}, dim), sched.num_steps()};
}

/// Executes one trajectory of the configured strategy for a given run seed.
inline RunResult run_once(const ExperimentConfig& cfg, const MixtureDenoiser& model, std::uint64_t seed) {
  EvalContext ctx;
  const KeyedNoise noise(seed);
  const Reward reward(cfg.reward, cfg.condition);
  LatentState x_T = initial_noise(seed, model.schedule(), model.dim());
  switch (cfg.strategy.name) {
    case Strategy::kDdim:
      return run_ddim(ctx, model, std::move(x_T), cfg.guidance, seed);
    case Strategy::kResampling:
      return run_resampling(ctx, model, std::move(x_T), cfg.guidance, noise);
    case Strategy::kZSampling:
      return run_zsampling(ctx, model, std::move(x_T), cfg.guidance, cfg.strategy.zsampling_inversion, seed);
    case Strategy::kSop:
      return run_sop(ctx, model, std::move(x_T), cfg.guidance, reward, cfg.strategy.sop_candidates, noise);
    case Strategy::kCtrlZ: {
      CtrlZParams p = cfg.strategy.ctrlz;
      p.guidance = cfg.guidance;
      return run_ctrlz(ctx, model, std::move(x_T), reward, p, noise);
    }
  }
  throw InvalidArgument("run_once: unknown strategy");
}

inline AggregateStats aggregate(const std::vector<RunRecord>& runs) {
  AggregateStats s;
  s.runs = static_cast<int>(runs.size());
  if (runs.empty()) return s;
  const double n = static_cast<double>(runs.size());
  double sum = 0.0, nfe = 0.0, calls = 0.0, escaped = 0.0;
  for (const auto& r : runs) {
    sum += r.final_reward;
    nfe += r.result.nfe_avg;
    calls += static_cast<double>(r.result.reward_calls);
    escaped += r.escaped ? 1.0 : 0.0;
    for (const auto& ev : r.result.events) {
      ++s.total_events;
      ++s.initiation_histogram[ev.t];
      ++s.depth_histogram[{ev.terminal_depth, ev.terminated_by}];
    }
  }
  s.mean_final_reward = sum / n;
  s.mean_nfe_avg = nfe / n;
  s.mean_reward_calls = calls / n;
  s.escape_rate = escaped / n;
  if (runs.size() > 1) {
    double ss = 0.0;
    for (const auto& r : runs) ss += (r.final_reward - s.mean_final_reward) * (r.final_reward - s.mean_final_reward);
    s.stddev_final_reward = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

/// Runs cfg.runs independent trajectories and aggregates them. Run i uses
/// seed run_seed(master_seed, i) regardless of how many jobs execute it.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::string label = {}) {
  const MixtureDenoiser model(cfg.mixture, cfg.condition, cfg.schedule.build());
  const Reward reward(cfg.reward, cfg.condition);
  std::vector<RunRecord> records(static_cast<std::size_t>(cfg.runs));

  auto work = [&](int i) {
    const std::uint64_t seed = run_seed(cfg.master_seed, static_cast<std::uint64_t>(i));
    RunRecord rec;
    rec.run_index = i;
    rec.result = run_once(cfg, model, seed);
    if (!rec.result.x0.allFinite()) throw NumericError("non-finite final sample");
    rec.final_reward = reward(rec.result.x0);
    if (!std::isfinite(rec.final_reward)) throw NumericError("non-finite final reward");
    rec.escaped = (rec.result.x0 - cfg.escape.target).norm() <= cfg.escape.radius;
    records[static_cast<std::size_t>(i)] = std::move(rec);
  };

  const unsigned jobs = std::min<unsigned>(std::max(cfg.jobs, 1u), static_cast<unsigned>(cfg.runs));
  if (jobs <= 1) {
    for (int i = 0; i < cfg.runs; ++i) work(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < jobs; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (int i = next++; i < cfg.runs; i = next++) work(i);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  ExperimentResult out;
  out.label = label.empty() ? std::string(to_string(cfg.strategy.name)) : std::move(label);
  out.strategy = cfg.strategy.name;
  out.stats = aggregate(records);
  out.runs = std::move(records);
  return out;
}

/// Runs `cfg` once per strategy with shared seeds.
inline std::vector<ExperimentResult> compare(const ExperimentConfig& cfg, const std::vector<Strategy>& strategies) {
  ctrlz::detail::require(!strategies.empty(), "compare: at least one strategy is required");
  std::vector<ExperimentResult> out;
  for (Strategy s : strategies) {
    ExperimentConfig c = cfg;
    c.strategy.name = s;
    out.push_back(run_experiment(c));
  }
  return out;
}

inline std::string sweep_label(int d_max, int n) {
  return "ctrlz[d_max=" + std::to_string(d_max) + ",n=" + std::to_string(n) + "]";
}

/// Ctrl-Z over the grid d_max x N, one cell per pair, with shared seeds.
inline std::vector<ExperimentResult> sweep(const ExperimentConfig& cfg, const std::vector<int>& d_max_values,
                                           const std::vector<int>& n_values) {
  if (d_max_values.empty() || n_values.empty()) throw ConfigError("grid", "sweep grid must be nonempty");
  if (cfg.strategy.name != Strategy::kCtrlZ) throw ConfigError("strategy.name", "sweep requires ctrlz");
  for (int d : d_max_values) {
    if (d < 1) throw ConfigError("grid.dmax", "d_max values must be >= 1");
  }
  for (int n : n_values) {
    if (n < 1) throw ConfigError("grid.n", "N values must be >= 1");
  }
  std::vector<ExperimentResult> out;
  for (int d : d_max_values) {
    for (int n : n_values) {
      ExperimentConfig c = cfg;
      c.strategy.ctrlz.d_max = d;
      c.strategy.ctrlz.n_candidates = n;
      out.push_back(run_experiment(c, sweep_label(d, n)));
    }
  }
  return out;
}

}  // namespace ctrlz::harness
