// Copyright (C) 2026 The ctrlz-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "ctrlz/dynamics.hpp"
#include "ctrlz/errors.hpp"
#include "ctrlz/models.hpp"

namespace ctrlz {

/// Scalar scorers R(c, x0_hat) over clean estimates.
class RewardSpec {
 public:
  struct NegDistance {
    Vector target;
  };
  /// log of the mixture density under `cond` (or under the condition passed to
  /// `score` when unset).
  struct LogDensity {
    GaussianMixture mix;
    std::optional<Condition> cond;
  };
  /// Linear peak inside `inner_radius`, exact constant `plateau_value` on the
  /// annulus [inner_radius, outer_radius], and decay beyond it.
  struct Plateau {
    Vector target;
    double inner_radius;
    double outer_radius;
    double plateau_value;
    double peak_value;
  };
  using Kind = std::variant<NegDistance, LogDensity, Plateau>;

  static RewardSpec neg_distance(Vector target) {
    detail::require(target.size() > 0 && target.allFinite(), "RewardSpec: target must be finite");
    return RewardSpec(NegDistance{std::move(target)});
  }
  static RewardSpec log_density(GaussianMixture mix, std::optional<Condition> cond = std::nullopt) {
    if (cond) (void)cond->weights_for(mix);
    return RewardSpec(LogDensity{std::move(mix), std::move(cond)});
  }
  static RewardSpec plateau(Vector target, double inner_radius, double outer_radius,
                            double plateau_value, double peak_value) {
    detail::require(target.size() > 0 && target.allFinite(), "RewardSpec: target must be finite");
    detail::require(inner_radius > 0.0 && inner_radius < outer_radius && std::isfinite(outer_radius),
                    "RewardSpec: plateau needs 0 < inner_radius < outer_radius");
    detail::require(std::isfinite(plateau_value) && std::isfinite(peak_value) && plateau_value < peak_value,
                    "RewardSpec: plateau needs plateau_value < peak_value");
    return RewardSpec(Plateau{std::move(target), inner_radius, outer_radius, plateau_value, peak_value});
  }

  const Kind& kind() const noexcept { return kind_; }

  /// The target point for distance-based rewards.
  std::optional<Vector> target() const {
    if (const auto* n = std::get_if<NegDistance>(&kind_)) return n->target;
    if (const auto* p = std::get_if<Plateau>(&kind_)) return p->target;
    return std::nullopt;
  }

 private:
  explicit RewardSpec(Kind k) : kind_(std::move(k)) {}
  Kind kind_;
};

namespace detail {

inline double plateau_score(const RewardSpec::Plateau& p, double dist) {
  if (dist < p.inner_radius) {
    return p.peak_value - (p.peak_value - p.plateau_value) * (dist / p.inner_radius);
  }
  if (dist <= p.outer_radius) return p.plateau_value;
  // Decays away from the annulus for either sign of plateau_value.
  return p.plateau_value >= 0.0 ? p.plateau_value * (p.outer_radius / dist)
                                : p.plateau_value * (dist / p.outer_radius);
}

inline double mixture_log_density(const GaussianMixture& mix, const std::vector<double>& w,
                                  const Vector& x) {
  const double d = static_cast<double>(mix.dim());
  double top = -std::numeric_limits<double>::infinity();
  std::vector<double> logs(mix.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < mix.size(); ++k) {
    if (w[k] <= 0.0) continue;
    const double v = mix.scales()[k] * mix.scales()[k];
    logs[k] = std::log(w[k]) - 0.5 * d * std::log(2.0 * std::numbers::pi * v) -
              0.5 * (x - mix.means()[k]).squaredNorm() / v;
    top = std::max(top, logs[k]);
  }
  double total = 0.0;
  for (double l : logs) {
    if (!std::isinf(l)) total += std::exp(l - top);
  }
  return top + std::log(total);
}

}  // namespace detail

inline double score(const RewardSpec& spec, const Condition& cond, const Vector& x0_hat) {
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, RewardSpec::NegDistance>) {
          detail::require(x0_hat.size() == k.target.size(), "score: dimension mismatch");
          return -(x0_hat - k.target).norm();
        } else if constexpr (std::is_same_v<K, RewardSpec::LogDensity>) {
          detail::require(x0_hat.size() == k.mix.dim(), "score: dimension mismatch");
          const auto w = (k.cond ? *k.cond : cond).weights_for(k.mix);
          return detail::mixture_log_density(k.mix, w, x0_hat);
        } else {
          detail::require(x0_hat.size() == k.target.size(), "score: dimension mismatch");
          return detail::plateau_score(k, (x0_hat - k.target).norm());
        }
      },
      spec.kind());
}

/// A reward bound to its condition; what the samplers consume.
class Reward {
 public:
  Reward(RewardSpec spec, Condition cond) : spec_(std::move(spec)), cond_(std::move(cond)) {}

  double operator()(const Vector& x0_hat) const { return score(spec_, cond_, x0_hat); }

  const RewardSpec& spec() const noexcept { return spec_; }
  const Condition& condition() const noexcept { return cond_; }

 private:
  RewardSpec spec_;
  Condition cond_;
};

}  // namespace ctrlz
