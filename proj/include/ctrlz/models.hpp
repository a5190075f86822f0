// Copyright (C) 2026 The ctrlz-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numbers>
#include <utility>
#include <variant>
#include <vector>

#include "ctrlz/dynamics.hpp"
#include "ctrlz/errors.hpp"
#include "ctrlz/schedule.hpp"

namespace ctrlz {

/// Isotropic Gaussian mixture sum_k w_k N(mu_k, s_k^2 I).
class GaussianMixture {
 public:
  GaussianMixture(std::vector<double> weights, std::vector<Vector> means, std::vector<double> scales)
      : weights_(std::move(weights)), means_(std::move(means)), scales_(std::move(scales)) {
    detail::require(!weights_.empty(), "GaussianMixture: at least one component is required");
    detail::require(weights_.size() == means_.size() && weights_.size() == scales_.size(),
                    "GaussianMixture: weights, means and scales must have equal length");
    double total = 0.0;
    for (double w : weights_) {
      detail::require(std::isfinite(w) && w > 0.0, "GaussianMixture: weights must be positive");
      total += w;
    }
    detail::require(std::abs(total - 1.0) <= 1e-12, "GaussianMixture: weights must sum to 1");
    const auto d = means_.front().size();
    detail::require(d > 0, "GaussianMixture: dimension must be positive");
    for (const auto& m : means_) {
      detail::require(m.size() == d, "GaussianMixture: all means must share a dimension");
      detail::require(m.allFinite(), "GaussianMixture: means must be finite");
    }
    for (double s : scales_) {
      detail::require(std::isfinite(s) && s > 0.0, "GaussianMixture: scales must be positive");
    }
  }

  std::size_t size() const noexcept { return weights_.size(); }
  Eigen::Index dim() const noexcept { return means_.front().size(); }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<Vector>& means() const noexcept { return means_; }
  const std::vector<double>& scales() const noexcept { return scales_; }

 private:
  std::vector<double> weights_;
  std::vector<Vector> means_;
  std::vector<double> scales_;
};

/// Conditioning realized as a reweighting of mixture components.
class Condition {
 public:
  struct Unconditional {};
  struct Component {
    std::size_t index;
  };
  struct Reweight {
    std::vector<double> weights;
  };

  static Condition unconditional() { return Condition(Unconditional{}); }
  static Condition component(std::size_t k) { return Condition(Component{k}); }
  static Condition reweight(std::vector<double> w) {
    double total = 0.0;
    for (double x : w) {
      detail::require(std::isfinite(x) && x >= 0.0, "Condition: reweight entries must be nonnegative");
      total += x;
    }
    detail::require(!w.empty() && std::abs(total - 1.0) <= 1e-12, "Condition: reweight must sum to 1");
    return Condition(Reweight{std::move(w)});
  }

  bool is_unconditional() const noexcept { return std::holds_alternative<Unconditional>(kind_); }
  const std::variant<Unconditional, Component, Reweight>& kind() const noexcept { return kind_; }

  /// Component weights w_k(c) this condition induces on `mix`.
  std::vector<double> weights_for(const GaussianMixture& mix) const {
    if (std::holds_alternative<Unconditional>(kind_)) return mix.weights();
    if (const auto* c = std::get_if<Component>(&kind_)) {
      detail::require(c->index < mix.size(), "Condition: component index out of range");
      std::vector<double> w(mix.size(), 0.0);
      w[c->index] = 1.0;
      return w;
    }
    const auto& w = std::get<Reweight>(kind_).weights;
    detail::require(w.size() == mix.size(), "Condition: reweight length must match mixture size");
    return w;
  }

 private:
  explicit Condition(std::variant<Unconditional, Component, Reweight> k) : kind_(std::move(k)) {}
  std::variant<Unconditional, Component, Reweight> kind_;
};

/// Counts denoiser forward passes and reward evaluations. Safe for concurrent
/// increments; each counter only ever grows.
class EvalContext {
 public:
  EvalContext() = default;
  EvalContext(const EvalContext&) = delete;
  EvalContext& operator=(const EvalContext&) = delete;

  std::uint64_t nfe_count() const noexcept { return nfe_.load(std::memory_order_relaxed); }
  std::uint64_t reward_calls() const noexcept { return rewards_.load(std::memory_order_relaxed); }

  void count_forward_pass() noexcept { nfe_.fetch_add(1, std::memory_order_relaxed); }
  void count_reward_call() noexcept { rewards_.fetch_add(1, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> nfe_{0};
  std::atomic<std::uint64_t> rewards_{0};
};

/// Mean and isotropic variance of component k pushed forward to level t.
inline std::pair<Vector, double> marginal_component_params(const GaussianMixture& mix, std::size_t k,
                                                           int t, const NoiseSchedule& sched) {
  detail::require(k < mix.size(), "marginal_component_params: component index out of range");
  const double ab = sched.alpha_bar(t);
  const double s = mix.scales()[k];
  return {std::sqrt(ab) * mix.means()[k], ab * s * s + (1.0 - ab)};
}

namespace detail {

/// log-sum-exp stabilized posterior responsibilities of the components at
/// level t, given component weights `w`. Zero-weight components get 0.
inline std::vector<double> responsibilities(const Vector& x, const std::vector<double>& w,
                                            const GaussianMixture& mix, int t,
                                            const NoiseSchedule& sched) {
  const auto n = mix.size();
  const double d = static_cast<double>(mix.dim());
  std::vector<double> logits(n, -std::numeric_limits<double>::infinity());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    if (w[k] <= 0.0) continue;
    auto [m, v] = marginal_component_params(mix, k, t, sched);
    logits[k] = std::log(w[k]) - 0.5 * d * std::log(v) - 0.5 * (x - m).squaredNorm() / v;
    top = std::max(top, logits[k]);
  }
  double total = 0.0;
  for (auto& l : logits) {
    l = std::isinf(l) ? 0.0 : std::exp(l - top);
    total += l;
  }
  for (auto& l : logits) l /= total;
  return logits;
}

}  // namespace detail

/// Exact noise prediction for the mixture at level t under `cond`, via
/// eps = -sqrt(1 - ab_t) * grad log q_t(x_t | c).
inline Vector exact_epsilon(const LatentState& x_t, const Condition& cond, const GaussianMixture& mix,
                            const NoiseSchedule& sched) {
  detail::require(x_t.t >= 1 && x_t.t <= sched.num_steps(), "exact_epsilon: level must lie in [1, T]");
  detail::require(x_t.x.size() == mix.dim(), "exact_epsilon: dimension mismatch");
  const auto w = cond.weights_for(mix);
  const auto gamma = detail::responsibilities(x_t.x, w, mix, x_t.t, sched);
  Vector score = Vector::Zero(mix.dim());
  for (std::size_t k = 0; k < mix.size(); ++k) {
    if (gamma[k] == 0.0) continue;
    auto [m, v] = marginal_component_params(mix, k, x_t.t, sched);
    score += gamma[k] * (m - x_t.x) / v;
  }
  return -std::sqrt(1.0 - sched.alpha_bar(x_t.t)) * score;
}

/// One guided forward pass of the analytical denoiser. Counts as one NFE even
/// though both the conditional and unconditional branches are evaluated.
inline Prediction predict(EvalContext& ctx, const LatentState& x_t, const Condition& cond,
                          const GaussianMixture& mix, const GuidanceConfig& g,
                          const NoiseSchedule& sched) {
  Vector eps_uncond = exact_epsilon(x_t, Condition::unconditional(), mix, sched);
  Vector eps_cond = cond.is_unconditional() ? eps_uncond : exact_epsilon(x_t, cond, mix, sched);
  Vector eps = guided_epsilon(eps_cond, eps_uncond, g.omega);
  Vector x0_hat = clean_estimate(x_t, eps, sched);
  ctx.count_forward_pass();
  return {std::move(eps), std::move(eps_uncond), std::move(x0_hat)};
}

/// What a sampler needs from a denoiser: a schedule, a latent dimension and a
/// counted, guided prediction at a level t >= 1.
template <class M>
concept Denoiser = requires(const M& m, EvalContext& ctx, const LatentState& s, const GuidanceConfig& g) {
  { m.schedule() } -> std::convertible_to<const NoiseSchedule&>;
  { m.dim() } -> std::convertible_to<Eigen::Index>;
  { m.predict(ctx, s, g) } -> std::same_as<Prediction>;
};

/// The closed-form mixture denoiser bound to a condition and schedule.
class MixtureDenoiser {
 public:
  MixtureDenoiser(GaussianMixture mix, Condition cond, NoiseSchedule sched)
      : mix_(std::move(mix)), cond_(std::move(cond)), sched_(std::move(sched)) {
    (void)cond_.weights_for(mix_);
  }

  const NoiseSchedule& schedule() const noexcept { return sched_; }
  const GaussianMixture& mixture() const noexcept { return mix_; }
  const Condition& condition() const noexcept { return cond_; }
  Eigen::Index dim() const noexcept { return mix_.dim(); }

  Prediction predict(EvalContext& ctx, const LatentState& x_t, const GuidanceConfig& g) const {
    return ctrlz::predict(ctx, x_t, cond_, mix_, g, sched_);
  }

 private:
  GaussianMixture mix_;
  Condition cond_;
  NoiseSchedule sched_;
};

static_assert(Denoiser<MixtureDenoiser>);

}  // namespace ctrlz
