// Copyright (C) 2026 The ctrlz-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string_view>
#include <utility>

#include <Eigen/Core>

#include "ctrlz/errors.hpp"
#include "ctrlz/schedule.hpp"

namespace ctrlz {

using Vector = Eigen::VectorXd;

/// A point x_t at noise level t.
struct LatentState {
  Vector x;
  int t = 0;

  bool finite() const { return x.allFinite(); }
};

/// One denoiser evaluation. `eps` is the guided noise estimate used for the
/// clean estimate; `eps_uncond` is the unconditional branch, needed by CFG++.
struct Prediction {
  Vector eps;
  Vector eps_uncond;
  Vector x0_hat;
};

enum class GuidanceMode { kCfg, kCfgPlusPlus };

struct GuidanceConfig {
  double omega = 1.0;
  GuidanceMode mode = GuidanceMode::kCfg;

  friend bool operator==(const GuidanceConfig&, const GuidanceConfig&) = default;
};

inline std::string_view to_string(GuidanceMode m) {
  return m == GuidanceMode::kCfg ? "cfg" : "cfgpp";
}

namespace detail {

inline void require_same_size(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) throw InvalidArgument(what);
}

}  // namespace detail

/// Tweedie estimate (x_t - sqrt(1 - ab_t) eps) / sqrt(ab_t).
inline Vector clean_estimate(const LatentState& x_t, const Vector& eps, const NoiseSchedule& sched) {
  detail::require(x_t.t >= 1 && x_t.t <= sched.num_steps(), "clean_estimate: level must lie in [1, T]");
  detail::require_same_size(x_t.x, eps, "clean_estimate: dimension mismatch");
  const double ab = sched.alpha_bar(x_t.t);
  return (x_t.x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
}

/// Deterministic DDIM update x_t -> x_{t-1} (no sigma term).
///
/// The clean estimate uses `eps_for_x0`; the re-noise direction uses
/// `eps_for_noise`. Plain CFG passes the same vector twice, CFG++ passes the
/// unconditional prediction as `eps_for_noise`.
inline std::pair<LatentState, Vector> ddim_step(const LatentState& x_t, const Vector& eps_for_x0,
                                                const Vector& eps_for_noise,
                                                const NoiseSchedule& sched) {
  detail::require(x_t.t >= 1 && x_t.t <= sched.num_steps(), "ddim_step: level must lie in [1, T]");
  detail::require_same_size(x_t.x, eps_for_x0, "ddim_step: dimension mismatch");
  detail::require_same_size(x_t.x, eps_for_noise, "ddim_step: dimension mismatch");
  Vector x0_hat = clean_estimate(x_t, eps_for_x0, sched);
  const double ab_prev = sched.alpha_bar(x_t.t - 1);
  LatentState next{std::sqrt(ab_prev) * x0_hat + std::sqrt(1.0 - ab_prev) * eps_for_noise, x_t.t - 1};
  return {std::move(next), std::move(x0_hat)};
}

/// Re-noises x_t to level t + delta with fresh Gaussian noise, preserving the
/// forward marginal q(x_{t+delta} | x_0).
inline LatentState stochastic_invert(const LatentState& x_t, int delta, const Vector& noise,
                                     const NoiseSchedule& sched) {
  detail::require(delta >= 0, "stochastic_invert: delta must be nonnegative");
  detail::require(x_t.t >= 0 && x_t.t + delta <= sched.num_steps(),
                  "stochastic_invert: t + delta exceeds T");
  detail::require_same_size(x_t.x, noise, "stochastic_invert: dimension mismatch");
  if (delta == 0) return x_t;
  const double ratio = sched.alpha_bar(x_t.t + delta) / sched.alpha_bar(x_t.t);
  return {std::sqrt(ratio) * x_t.x + std::sqrt(1.0 - ratio) * noise, x_t.t + delta};
}

/// First-order DDIM inversion x_{t-1} -> x_t under a fixed noise estimate;
/// the exact inverse of `ddim_step` when both eps arguments equal `eps`.
inline LatentState deterministic_invert(const LatentState& x_prev, const Vector& eps,
                                        const NoiseSchedule& sched) {
  const int t = x_prev.t + 1;
  detail::require(x_prev.t >= 0 && t <= sched.num_steps(), "deterministic_invert: target level exceeds T");
  detail::require_same_size(x_prev.x, eps, "deterministic_invert: dimension mismatch");
  const double ab_t = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(x_prev.t);
  const double scale = std::sqrt(ab_t / ab_prev);
  return {scale * x_prev.x + (std::sqrt(1.0 - ab_t) - scale * std::sqrt(1.0 - ab_prev)) * eps, t};
}

/// eps_uncond + omega * (eps_cond - eps_uncond).
inline Vector guided_epsilon(const Vector& eps_cond, const Vector& eps_uncond, double omega) {
  detail::require_same_size(eps_cond, eps_uncond, "guided_epsilon: dimension mismatch");
  detail::require(std::isfinite(omega), "guided_epsilon: omega must be finite");
  return eps_uncond + omega * (eps_cond - eps_uncond);
}

/// DDIM step driven by a prediction, choosing the re-noise direction by mode.
inline std::pair<LatentState, Vector> ddim_step(const LatentState& x_t, const Prediction& p,
                                                GuidanceMode mode, const NoiseSchedule& sched) {
  const Vector& noise_dir = mode == GuidanceMode::kCfgPlusPlus ? p.eps_uncond : p.eps;
  return ddim_step(x_t, p.eps, noise_dir, sched);
}

}  // namespace ctrlz
