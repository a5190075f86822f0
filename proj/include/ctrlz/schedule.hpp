// Copyright (C) 2026 The ctrlz-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ctrlz/errors.hpp"

namespace ctrlz {

/// Discrete noise schedule over levels 0..T.
///
/// Level 0 is clean data (alpha_bar(0) == 1). Level t in 1..T carries
/// beta(t) and the cumulative product alpha_bar(t) = prod_{i<=t} (1 - beta(i)).
/// Immutable after construction.
class NoiseSchedule {
 public:
  /// Builds a schedule from betas beta(1)..beta(T); each must lie in [0, 1).
  static NoiseSchedule from_betas(std::vector<double> betas) {
    detail::require(!betas.empty(), "NoiseSchedule: at least one step is required");
    std::vector<double> alpha_bars(betas.size() + 1);
    alpha_bars[0] = 1.0;
    for (std::size_t i = 0; i < betas.size(); ++i) {
      const double b = betas[i];
      detail::require(std::isfinite(b) && b >= 0.0 && b < 1.0,
                      "NoiseSchedule: beta must lie in [0, 1)");
      alpha_bars[i + 1] = alpha_bars[i] * (1.0 - b);
    }
    return NoiseSchedule(std::move(betas), std::move(alpha_bars));
  }

  /// Builds a schedule from alpha_bar(1)..alpha_bar(T) (alpha_bar(0) = 1 is
  /// implied). The sequence must be nonincreasing and lie in (0, 1]; betas are
  /// recovered as 1 - alpha_bar(t) / alpha_bar(t-1).
  static NoiseSchedule from_alpha_bars(std::span<const double> levels) {
    detail::require(!levels.empty(), "NoiseSchedule: at least one step is required");
    std::vector<double> alpha_bars(levels.size() + 1);
    std::vector<double> betas(levels.size());
    alpha_bars[0] = 1.0;
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const double a = levels[i];
      detail::require(std::isfinite(a) && a > 0.0 && a <= alpha_bars[i],
                      "NoiseSchedule: alpha_bar must be nonincreasing within (0, 1]");
      alpha_bars[i + 1] = a;
      betas[i] = 1.0 - a / alpha_bars[i];
    }
    return NoiseSchedule(std::move(betas), std::move(alpha_bars));
  }

  int num_steps() const noexcept { return static_cast<int>(betas_.size()); }

  double beta(int t) const {
    check_step(t);
    return betas_[static_cast<std::size_t>(t - 1)];
  }

  double alpha_bar(int t) const {
    check_level(t);
    return alpha_bars_[static_cast<std::size_t>(t)];
  }

  /// beta(1)..beta(T).
  std::span<const double> betas() const noexcept { return betas_; }
  /// alpha_bar(0)..alpha_bar(T).
  std::span<const double> alpha_bars() const noexcept { return alpha_bars_; }

  bool contains_level(int t) const noexcept { return t >= 0 && t <= num_steps(); }

 private:
  NoiseSchedule(std::vector<double> betas, std::vector<double> alpha_bars)
      : betas_(std::move(betas)), alpha_bars_(std::move(alpha_bars)) {}

  void check_step(int t) const {
    if (t < 1 || t > num_steps()) throw InvalidArgument("NoiseSchedule: step index out of range");
  }
  void check_level(int t) const {
    if (!contains_level(t)) throw InvalidArgument("NoiseSchedule: level out of range");
  }

  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

/// Linear beta ramp from beta_start to beta_end, endpoints inclusive.
inline NoiseSchedule build_linear_schedule(int steps, double beta_start, double beta_end) {
  detail::require(steps >= 1, "build_linear_schedule: steps must be >= 1");
  detail::require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
                  "build_linear_schedule: need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  if (steps == 1) {
    betas[0] = beta_start;
  } else {
    const double span = beta_end - beta_start;
    for (int i = 0; i < steps; ++i) {
      betas[static_cast<std::size_t>(i)] =
          beta_start + span * static_cast<double>(i) / static_cast<double>(steps - 1);
    }
    betas.back() = beta_end;
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

/// Parent levels kept by `subsample`: j * T / steps for j = 1..steps, so the
/// noisiest parent level T is always selected.
inline std::vector<int> subsample_indices(int parent_steps, int steps) {
  detail::require(steps >= 1 && steps <= parent_steps,
                  "subsample: steps must lie in [1, parent.num_steps]");
  std::vector<int> idx(static_cast<std::size_t>(steps));
  for (int j = 1; j <= steps; ++j) {
    idx[static_cast<std::size_t>(j - 1)] = static_cast<int>(
        static_cast<long long>(j) * parent_steps / steps);
  }
  return idx;
}

/// Coarsens a training schedule to `steps` inference levels. Child alpha_bar
/// values are copied from the parent; child betas are recomputed from ratios.
inline NoiseSchedule subsample(const NoiseSchedule& parent, int steps) {
  const auto idx = subsample_indices(parent.num_steps(), steps);
  if (steps == parent.num_steps()) return parent;
  std::vector<double> levels;
  levels.reserve(idx.size());
  for (int i : idx) levels.push_back(parent.alpha_bar(i));
  return NoiseSchedule::from_alpha_bars(levels);
}

}  // namespace ctrlz
