// Copyright (C) 2026 The ctrlz-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <concepts>
#include <exception>
#include <functional>
#include <type_traits>
#include <limits>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "ctrlz/dynamics.hpp"
#include "ctrlz/errors.hpp"
#include "ctrlz/models.hpp"
#include "ctrlz/rewards.hpp"
#include "ctrlz/rng.hpp"

namespace ctrlz {

// ---------------------------------------------------------------------------
// Parameters and results
// ---------------------------------------------------------------------------

/// When a Ctrl-Z step inside the exploration window enters exploration.
struct InitiationPolicy {
  enum class Kind { kRewardBased, kAlways, kRandom };
  Kind kind = Kind::kRewardBased;
  double p = 0.0;  // only for kRandom

  static InitiationPolicy reward_based() { return {Kind::kRewardBased, 0.0}; }
  static InitiationPolicy always() { return {Kind::kAlways, 0.0}; }
  static InitiationPolicy random(double p) { return {Kind::kRandom, p}; }
};

/// Guidance used by the re-denoising steps of candidates.
enum class ExplorationGuidance {
  kSame,              // same as the default steps
  kCfgInExploration,  // plain CFG in exploration, whatever the default mode
};

struct CtrlZParams {
  int lambda = 40;
  double delta = 0.0;
  int d_max = 3;
  int n_candidates = 4;
  InitiationPolicy initiation = InitiationPolicy::reward_based();
  GuidanceConfig guidance{};
  ExplorationGuidance guidance_in_exploration = ExplorationGuidance::kSame;

  void validate(int num_steps) const {
    detail::require(lambda >= 0 && lambda <= num_steps, "CtrlZParams: lambda must lie in [0, T]");
    detail::require(std::isfinite(delta), "CtrlZParams: delta must be finite");
    detail::require(d_max >= 1, "CtrlZParams: d_max must be >= 1");
    detail::require(n_candidates >= 1, "CtrlZParams: n_candidates must be >= 1");
    detail::require(std::isfinite(guidance.omega), "CtrlZParams: omega must be finite");
    if (initiation.kind == InitiationPolicy::Kind::kRandom) {
      detail::require(initiation.p >= 0.0 && initiation.p <= 1.0, "CtrlZParams: p must lie in [0, 1]");
    }
  }

  GuidanceConfig exploration_guidance() const {
    if (guidance_in_exploration == ExplorationGuidance::kCfgInExploration) {
      return {guidance.omega, GuidanceMode::kCfg};
    }
    return guidance;
  }
};

enum class Trigger { kRewardPlateau, kAlways, kRandom };
enum class Termination { kThresholdMet, kDepthCap };

inline std::string_view to_string(Trigger t) {
  switch (t) {
    case Trigger::kRewardPlateau: return "reward_plateau";
    case Trigger::kAlways: return "always";
    case Trigger::kRandom: return "random";
  }
  return "?";
}

inline std::string_view to_string(Termination t) {
  return t == Termination::kThresholdMet ? "threshold_met" : "depth_cap";
}

/// One zigzag exploration at step t.
struct ExplorationEvent {
  int t = 0;
  Trigger trigger = Trigger::kRewardPlateau;
  int depths_tried = 0;
  int candidates_evaluated = 0;
  /// Inversion depth (after the t = T clamp) of the last escalation level.
  int terminal_depth = 0;
  Termination terminated_by = Termination::kDepthCap;
  double accepted_score = 0.0;
  double default_score = 0.0;
  /// Last accepted score before this step; -inf at the first window step.
  double previous_score = 0.0;

  /// True when the retained score fell below the last accepted one.
  bool regressed() const noexcept { return accepted_score < previous_score; }

  friend bool operator==(const ExplorationEvent&, const ExplorationEvent&) = default;
};

struct StepScore {
  int t = 0;
  double score = 0.0;
  friend bool operator==(const StepScore&, const StepScore&) = default;
};

struct RunResult {
  Vector x0;
  std::vector<StepScore> reward_trace;
  std::vector<ExplorationEvent> events;
  std::uint64_t nfe_total = 0;
  double nfe_avg = 0.0;
  std::uint64_t reward_calls = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const RunResult& a, const RunResult& b) {
    return a.x0.size() == b.x0.size() && a.x0 == b.x0 && a.reward_trace == b.reward_trace &&
           a.events == b.events && a.nfe_total == b.nfe_total && a.nfe_avg == b.nfe_avg &&
           a.reward_calls == b.reward_calls && a.seed == b.seed;
  }
};

/// How many threads may evaluate the candidates of one escalation level.
struct Execution {
  unsigned workers = 1;
};

/// Any scorer of a clean estimate; `Reward` is the stock one.
template <class R>
concept RewardFunction = std::regular_invocable<const R&, const Vector&> &&
                         std::convertible_to<std::invoke_result_t<const R&, const Vector&>, double>;

// ---------------------------------------------------------------------------
// Internals
// ---------------------------------------------------------------------------

namespace detail {

inline void require_finite(const LatentState& s, const char* where) {
  if (!s.finite()) throw NumericError(std::string(where) + ": non-finite state");
}

template <RewardFunction R>
double counted_score(EvalContext& ctx, const R& reward, const Vector& x0_hat) {
  ctx.count_reward_call();
  const double r = reward(x0_hat);
  if (std::isnan(r)) throw NumericError("reward returned NaN");
  return r;
}

template <class N>
std::uint64_t seed_of(const N& noise) {
  if constexpr (requires { noise.seed(); }) {
    return noise.seed();
  } else {
    return 0;
  }
}

/// Tracks counter deltas for the run being executed on a shared context.
class RunMeter {
 public:
  explicit RunMeter(const EvalContext& ctx)
      : ctx_(ctx), nfe0_(ctx.nfe_count()), rewards0_(ctx.reward_calls()) {}

  void finish(RunResult& r, int num_steps) const {
    r.nfe_total = ctx_.nfe_count() - nfe0_;
    r.reward_calls = ctx_.reward_calls() - rewards0_;
    r.nfe_avg = static_cast<double>(r.nfe_total) / static_cast<double>(num_steps);
  }

 private:
  const EvalContext& ctx_;
  std::uint64_t nfe0_;
  std::uint64_t rewards0_;
};

/// A single guided DDIM step; one NFE.
template <Denoiser M>
std::pair<LatentState, Vector> denoise_step(EvalContext& ctx, const M& model, const LatentState& x,
                                            const GuidanceConfig& g) {
  const Prediction p = model.predict(ctx, x, g);
  auto out = ddim_step(x, p, g.mode, model.schedule());
  require_finite(out.first, "ddim_step");
  return out;
}

struct Candidate {
  LatentState state;
  double score = 0.0;
};

/// Re-noises x_t by `delta` levels with `noise`, denoises back to level t-1
/// (delta + 1 NFEs) and scores the clean estimate of the last step.
template <Denoiser M, RewardFunction R>
Candidate rollout(EvalContext& ctx, const M& model, const R& reward, const LatentState& x_t,
                  int delta, const Vector& noise, const GuidanceConfig& g) {
  LatentState cur = stochastic_invert(x_t, delta, noise, model.schedule());
  Vector x0_hat;
  while (cur.t >= x_t.t) {
    auto [next, est] = denoise_step(ctx, model, cur, g);
    cur = std::move(next);
    x0_hat = std::move(est);
  }
  return {std::move(cur), counted_score(ctx, reward, x0_hat)};
}

/// Evaluates fn(0..n-1) on up to `workers` threads; results are indexed by
/// candidate so the outcome does not depend on scheduling.
template <class Fn>
std::vector<Candidate> evaluate_all(int n, unsigned workers, Fn&& fn) {
  std::vector<Candidate> out(static_cast<std::size_t>(n));
  const unsigned threads = std::min<unsigned>(std::max(workers, 1u), static_cast<unsigned>(n));
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = fn(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int i = static_cast<int>(w); i < n; i += static_cast<int>(threads)) {
            out[static_cast<std::size_t>(i)] = fn(i);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

template <Denoiser M>
void require_start(const M& model, const LatentState& x_T) {
  const int T = model.schedule().num_steps();
  detail::require(x_T.t == T, "sampler: x_T must sit at level T");
  detail::require(x_T.x.size() == model.dim(), "sampler: x_T dimension mismatch");
  require_finite(x_T, "sampler");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

namespace detail {

template <Denoiser M, class R>
RunResult ddim_impl(EvalContext& ctx, const M& model, LatentState x_T, const GuidanceConfig& g,
                    const R* reward, std::uint64_t seed) {
  require_start(model, x_T);
  const RunMeter meter(ctx);
  RunResult res;
  LatentState x = std::move(x_T);
  while (x.t >= 1) {
    const int t = x.t;
    auto [next, x0_hat] = denoise_step(ctx, model, x, g);
    if (reward) res.reward_trace.push_back({t, counted_score(ctx, *reward, x0_hat)});
    x = std::move(next);
  }
  res.x0 = std::move(x.x);
  res.seed = seed;
  meter.finish(res, model.schedule().num_steps());
  return res;
}

}  // namespace detail

/// Plain deterministic DDIM, one NFE per step.
template <Denoiser M>
RunResult run_ddim(EvalContext& ctx, const M& model, LatentState x_T, const GuidanceConfig& g,
                   std::uint64_t seed = 0) {
  return detail::ddim_impl<M, Reward>(ctx, model, std::move(x_T), g, nullptr, seed);
}

/// DDIM that also scores every step's clean estimate into `reward_trace`.
/// Reward calls are counted separately from NFEs.
template <Denoiser M, RewardFunction R>
RunResult run_ddim(EvalContext& ctx, const M& model, LatentState x_T, const GuidanceConfig& g,
                   const R& reward, std::uint64_t seed = 0) {
  return detail::ddim_impl(ctx, model, std::move(x_T), g, &reward, seed);
}

/// Resampling: after each default step, re-noise x_{t-1} one level with fresh
/// noise and denoise it again, keeping the result unconditionally. 2 NFEs/step.
template <Denoiser M, NoiseSource N>
RunResult run_resampling(EvalContext& ctx, const M& model, LatentState x_T, const GuidanceConfig& g,
                         const N& noise) {
  detail::require_start(model, x_T);
  const detail::RunMeter meter(ctx);
  const auto& sched = model.schedule();
  RunResult res;
  LatentState x = std::move(x_T);
  while (x.t >= 1) {
    const int t = x.t;
    auto first = detail::denoise_step(ctx, model, x, g).first;
    const LatentState renoised =
        stochastic_invert(first, 1, noise.gaussian({Stream::kResampling, t, 1, 0}, model.dim()), sched);
    x = detail::denoise_step(ctx, model, renoised, g).first;
  }
  res.x0 = std::move(x.x);
  res.seed = detail::seed_of(noise);
  meter.finish(res, sched.num_steps());
  return res;
}

/// Z-Sampling: denoise under `g`, invert deterministically one level with a
/// prediction under `inversion_guidance`, then denoise again under `g`.
/// 3 NFEs/step. The inversion prediction is taken at the state x_{t-1} with
/// the level label t it is being inverted to.
template <Denoiser M>
RunResult run_zsampling(EvalContext& ctx, const M& model, LatentState x_T, const GuidanceConfig& g,
                        const GuidanceConfig& inversion_guidance, std::uint64_t seed = 0) {
  detail::require_start(model, x_T);
  const detail::RunMeter meter(ctx);
  const auto& sched = model.schedule();
  RunResult res;
  LatentState x = std::move(x_T);
  while (x.t >= 1) {
    const int t = x.t;
    const LatentState prev = detail::denoise_step(ctx, model, x, g).first;
    const Prediction inv = model.predict(ctx, LatentState{prev.x, t}, inversion_guidance);
    const LatentState back = deterministic_invert(prev, inv.eps, sched);
    detail::require_finite(back, "deterministic_invert");
    x = detail::denoise_step(ctx, model, back, g).first;
  }
  res.x0 = std::move(x.x);
  res.seed = seed;
  meter.finish(res, sched.num_steps());
  return res;
}

/// Search over paths: at every step score the default continuation plus N
/// candidates re-noised by min(1, T - t) levels, keep the best (ties go to
/// the lowest index, the default being index 0).
template <Denoiser M, RewardFunction R, NoiseSource N>
RunResult run_sop(EvalContext& ctx, const M& model, LatentState x_T, const GuidanceConfig& g,
                  const R& reward, int n_candidates, const N& noise, Execution exec = {}) {
  detail::require(n_candidates >= 1, "run_sop: n_candidates must be >= 1");
  detail::require_start(model, x_T);
  const detail::RunMeter meter(ctx);
  const int T = model.schedule().num_steps();
  RunResult res;
  LatentState x = std::move(x_T);
  while (x.t >= 1) {
    const int t = x.t;
    auto [best_state, x0_hat] = detail::denoise_step(ctx, model, x, g);
    double best = detail::counted_score(ctx, reward, x0_hat);
    const int delta = std::min(1, T - t);
    const auto cands = detail::evaluate_all(n_candidates, exec.workers, [&](int i) {
      const Vector eps = noise.gaussian({Stream::kSop, t, 1, i + 1}, model.dim());
      return detail::rollout(ctx, model, reward, x, delta, eps, g);
    });
    for (const auto& c : cands) {
      if (c.score > best) {
        best = c.score;
        best_state = c.state;
      }
    }
    res.reward_trace.push_back({t, best});
    x = std::move(best_state);
  }
  res.x0 = std::move(x.x);
  res.seed = detail::seed_of(noise);
  meter.finish(res, T);
  return res;
}

/// Ctrl-Z sampling: reward-guided zigzag exploration with adaptive inversion
/// depth inside the first `lambda` steps.
///
/// Each window step scores the default DDIM continuation. Unless the step is
/// accepted (reward-based policy and r >= r_prev + delta, or a random gate
/// that did not fire), N candidates are re-noised from x_t by
/// min(depth, T - t) levels and denoised back to t-1, escalating depth from 1
/// to d_max until the best score seen reaches r_prev + delta. The best state
/// seen (default included, strict improvement only) is executed either way.
template <Denoiser M, RewardFunction R, NoiseSource N>
RunResult run_ctrlz(EvalContext& ctx, const M& model, LatentState x_T, const R& reward,
                    const CtrlZParams& params, const N& noise, Execution exec = {}) {
  const int T = model.schedule().num_steps();
  params.validate(T);
  detail::require_start(model, x_T);
  const detail::RunMeter meter(ctx);
  const GuidanceConfig explore_g = params.exploration_guidance();

  RunResult res;
  double r_prev = -std::numeric_limits<double>::infinity();
  LatentState x = std::move(x_T);
  while (x.t >= 1) {
    const int t = x.t;
    auto [next, x0_hat] = detail::denoise_step(ctx, model, x, params.guidance);
    if (t > T - params.lambda) {
      const double r = detail::counted_score(ctx, reward, x0_hat);
      bool explore = false;
      Trigger trigger = Trigger::kRewardPlateau;
      switch (params.initiation.kind) {
        case InitiationPolicy::Kind::kRewardBased:
          explore = !(r >= r_prev + params.delta);
          break;
        case InitiationPolicy::Kind::kAlways:
          explore = true;
          trigger = Trigger::kAlways;
          break;
        case InitiationPolicy::Kind::kRandom:
          explore = noise.uniform({Stream::kInitiationGate, t, 0, 0}) < params.initiation.p;
          trigger = Trigger::kRandom;
          break;
      }

      if (!explore) {
        r_prev = r;
      } else {
        ExplorationEvent ev;
        ev.t = t;
        ev.trigger = trigger;
        ev.default_score = r;
        ev.previous_score = r_prev;
        double best_score = r;
        LatentState best_state = next;
        for (int depth = 1; depth <= params.d_max; ++depth) {
          const int delta = std::min(depth, T - t);
          const auto cands = detail::evaluate_all(params.n_candidates, exec.workers, [&](int i) {
            const Vector eps = noise.gaussian({Stream::kCtrlZ, t, depth, i}, model.dim());
            return detail::rollout(ctx, model, reward, x, delta, eps, explore_g);
          });
          for (const auto& c : cands) {
            if (c.score > best_score) {
              best_score = c.score;
              best_state = c.state;
            }
          }
          ev.depths_tried = depth;
          ev.terminal_depth = delta;
          ev.candidates_evaluated += params.n_candidates;
          if (best_score >= r_prev + params.delta) {
            ev.terminated_by = Termination::kThresholdMet;
            break;
          }
        }
        ev.accepted_score = best_score;
        res.events.push_back(ev);
        next = std::move(best_state);
        r_prev = best_score;
      }
      res.reward_trace.push_back({t, r_prev});
    }
    x = std::move(next);
  }
  res.x0 = std::move(x.x);
  res.seed = detail::seed_of(noise);
  meter.finish(res, T);
  return res;
}

}  // namespace ctrlz
