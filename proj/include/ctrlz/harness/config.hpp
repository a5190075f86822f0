// Copyright (C) 2026 The ctrlz-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctrlz/errors.hpp"
#include "ctrlz/models.hpp"
#include "ctrlz/rewards.hpp"
#include "ctrlz/samplers.hpp"
#include "ctrlz/schedule.hpp"

namespace ctrlz::harness {

enum class Strategy { kDdim, kResampling, kZSampling, kSop, kCtrlZ };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kDdim: return "ddim";
    case Strategy::kResampling: return "resampling";
    case Strategy::kZSampling: return "zsampling";
    case Strategy::kSop: return "sop";
    case Strategy::kCtrlZ: return "ctrlz";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view name) {
  for (auto s : {Strategy::kDdim, Strategy::kResampling, Strategy::kZSampling, Strategy::kSop,
                 Strategy::kCtrlZ}) {
    if (name == to_string(s)) return s;
  }
  return std::nullopt;
}

struct ScheduleSpec {
  std::string family = "linear";
  int t_train = 1000;
  int t_infer = 50;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  NoiseSchedule build() const {
    return subsample(build_linear_schedule(t_train, beta_start, beta_end), t_infer);
  }
};

struct StrategyConfig {
  Strategy name = Strategy::kDdim;
  /// Ctrl-Z parameters; `ctrlz.guidance` mirrors the experiment guidance.
  CtrlZParams ctrlz{};
  int sop_candidates = 4;
  GuidanceConfig zsampling_inversion{0.0, GuidanceMode::kCfg};
};

struct EscapeCriterion {
  Vector target;
  double radius = 1.0;
};

struct ExperimentConfig {
  ScheduleSpec schedule;
  GaussianMixture mixture;
  Condition condition;
  RewardSpec reward;
  GuidanceConfig guidance;
  StrategyConfig strategy;
  std::uint64_t master_seed = 0;
  int runs = 1;
  EscapeCriterion escape;
  /// Threads used to execute runs; results never depend on it.
  unsigned jobs = 1;
};

namespace detail {

using nlohmann::json;

/// Walks a JSON document while tracking the dotted path of the current node,
/// so every failure names the offending field.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }
  const json& raw() const noexcept { return j_; }

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_, msg); }

  bool has(const char* key) const { return j_.is_object() && j_.contains(key); }

  Node at(const char* key) const {
    if (!j_.is_object()) fail("expected an object");
    if (!j_.contains(key)) throw ConfigError(child_path(key), "missing required field");
    return Node(j_.at(key), child_path(key));
  }

  Node at(std::size_t i) const { return Node(j_.at(i), path_ + "[" + std::to_string(i) + "]"); }

  void only(std::initializer_list<const char*> allowed) const {
    if (!j_.is_object()) fail("expected an object");
    for (const auto& item : j_.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || item.key() == a;
      if (!ok) throw ConfigError(child_path(item.key().c_str()), "unknown field");
    }
  }

  double number() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }

  long long integer() const {
    if (!j_.is_number_integer()) fail("expected an integer");
    return j_.get<long long>();
  }

  std::uint64_t unsigned_integer() const {
    if (!j_.is_number_unsigned() && !(j_.is_number_integer() && j_.get<long long>() >= 0)) {
      fail("expected a nonnegative integer");
    }
    return j_.get<std::uint64_t>();
  }

  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }

  std::size_t size() const {
    if (!j_.is_array()) fail("expected an array");
    return j_.size();
  }

  std::vector<double> numbers() const {
    std::vector<double> v(size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = at(i).number();
    return v;
  }

  Vector vector() const {
    const auto v = numbers();
    if (v.empty()) fail("expected a nonempty array");
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  int int_in(long long lo, long long hi) const {
    const long long v = integer();
    if (v < lo || v > hi) fail("must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<int>(v);
  }

 private:
  std::string child_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  const json& j_;
  std::string path_;
};

/// Runs a constructor that may throw InvalidArgument and rethrows it as a
/// ConfigError on `node`.
template <class F>
auto build_at(const Node& node, F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    node.fail(e.what());
  }
}

inline GuidanceConfig parse_guidance(const Node& n) {
  n.only({"omega", "mode"});
  GuidanceConfig g;
  if (n.has("omega")) g.omega = n.at("omega").number();
  if (n.has("mode")) {
    const auto m = n.at("mode").string();
    if (m == "cfg") g.mode = GuidanceMode::kCfg;
    else if (m == "cfgpp") g.mode = GuidanceMode::kCfgPlusPlus;
    else n.at("mode").fail("expected \"cfg\" or \"cfgpp\"");
  }
  return g;
}

inline ScheduleSpec parse_schedule(const Node& n) {
  n.only({"family", "t_train", "t_infer", "beta_start", "beta_end"});
  ScheduleSpec s;
  if (n.has("family")) {
    s.family = n.at("family").string();
    if (s.family != "linear") n.at("family").fail("only \"linear\" is supported");
  }
  if (n.has("t_train")) s.t_train = n.at("t_train").int_in(1, 1'000'000);
  if (n.has("t_infer")) s.t_infer = n.at("t_infer").int_in(1, s.t_train);
  if (s.t_infer > s.t_train) n.at("t_infer").fail("must not exceed t_train");
  if (n.has("beta_start")) s.beta_start = n.at("beta_start").number();
  if (n.has("beta_end")) s.beta_end = n.at("beta_end").number();
  build_at(n, [&] { return s.build(); });
  return s;
}

inline GaussianMixture parse_mixture(const Node& n) {
  n.only({"weights", "means", "scales"});
  const auto weights = n.at("weights").numbers();
  const Node means_node = n.at("means");
  std::vector<Vector> means(means_node.size());
  for (std::size_t i = 0; i < means.size(); ++i) means[i] = means_node.at(i).vector();
  const auto scales = n.at("scales").numbers();
  return build_at(n, [&] { return GaussianMixture(weights, means, scales); });
}

inline Condition parse_condition(const Node& n, const GaussianMixture& mix) {
  const auto kind = n.at("kind").string();
  Condition c = Condition::unconditional();
  if (kind == "unconditional") {
    n.only({"kind"});
  } else if (kind == "component") {
    n.only({"kind", "index"});
    c = Condition::component(static_cast<std::size_t>(
        n.at("index").int_in(0, static_cast<long long>(mix.size()) - 1)));
  } else if (kind == "reweight") {
    n.only({"kind", "weights"});
    const auto w = n.at("weights").numbers();
    c = build_at(n.at("weights"), [&] { return Condition::reweight(w); });
  } else {
    n.at("kind").fail("expected unconditional, component or reweight");
  }
  build_at(n, [&] { return c.weights_for(mix); });
  return c;
}

inline RewardSpec parse_reward(const Node& n, const GaussianMixture& mix) {
  const auto kind = n.at("kind").string();
  auto check_dim = [&](const Vector& v, const Node& at) {
    if (v.size() != mix.dim()) at.fail("dimension must match the mixture");
  };
  if (kind == "neg_distance") {
    n.only({"kind", "target"});
    const Vector target = n.at("target").vector();
    check_dim(target, n.at("target"));
    return RewardSpec::neg_distance(target);
  }
  if (kind == "log_density") {
    n.only({"kind", "mixture", "condition"});
    GaussianMixture m = n.has("mixture") ? parse_mixture(n.at("mixture")) : mix;
    std::optional<Condition> c;
    if (n.has("condition")) c = parse_condition(n.at("condition"), m);
    return RewardSpec::log_density(std::move(m), std::move(c));
  }
  if (kind == "plateau") {
    n.only({"kind", "target", "inner_radius", "outer_radius", "plateau_value", "peak_value"});
    const Vector target = n.at("target").vector();
    check_dim(target, n.at("target"));
    const double inner = n.at("inner_radius").number();
    const double outer = n.at("outer_radius").number();
    const double plateau = n.at("plateau_value").number();
    const double peak = n.at("peak_value").number();
    return build_at(n, [&] { return RewardSpec::plateau(target, inner, outer, plateau, peak); });
  }
  n.at("kind").fail("expected neg_distance, log_density or plateau");
}

inline InitiationPolicy parse_initiation(const Node& n) {
  const auto kind = n.at("kind").string();
  if (kind == "reward_based") {
    n.only({"kind"});
    return InitiationPolicy::reward_based();
  }
  if (kind == "always") {
    n.only({"kind"});
    return InitiationPolicy::always();
  }
  if (kind == "random") {
    n.only({"kind", "p"});
    const double p = n.at("p").number();
    if (p < 0.0 || p > 1.0) n.at("p").fail("must lie in [0, 1]");
    return InitiationPolicy::random(p);
  }
  n.at("kind").fail("expected reward_based, always or random");
}

inline CtrlZParams parse_ctrlz(const Node& n, int num_steps) {
  n.only({"lambda", "delta", "d_max", "n_candidates", "initiation", "guidance_in_exploration"});
  CtrlZParams p;
  p.lambda = std::min(p.lambda, num_steps);
  if (n.has("lambda")) p.lambda = n.at("lambda").int_in(0, num_steps);
  if (n.has("delta")) p.delta = n.at("delta").number();
  if (n.has("d_max")) p.d_max = n.at("d_max").int_in(1, 1'000'000);
  if (n.has("n_candidates")) p.n_candidates = n.at("n_candidates").int_in(1, 1'000'000);
  if (n.has("initiation")) p.initiation = parse_initiation(n.at("initiation"));
  if (n.has("guidance_in_exploration")) {
    const auto g = n.at("guidance_in_exploration").string();
    if (g == "same") p.guidance_in_exploration = ExplorationGuidance::kSame;
    else if (g == "cfg") p.guidance_in_exploration = ExplorationGuidance::kCfgInExploration;
    else n.at("guidance_in_exploration").fail("expected \"same\" or \"cfg\"");
  }
  return p;
}

inline StrategyConfig parse_strategy_block(const Node& n, int num_steps) {
  n.only({"name", "ctrlz", "sop", "zsampling"});
  StrategyConfig s;
  s.ctrlz.lambda = std::min(s.ctrlz.lambda, num_steps);
  const auto name = n.at("name").string();
  const auto parsed = parse_strategy(name);
  if (!parsed) n.at("name").fail("unknown strategy \"" + name + "\"");
  s.name = *parsed;
  if (n.has("ctrlz")) s.ctrlz = parse_ctrlz(n.at("ctrlz"), num_steps);
  if (n.has("sop")) {
    const Node sop = n.at("sop");
    sop.only({"n_candidates"});
    if (sop.has("n_candidates")) s.sop_candidates = sop.at("n_candidates").int_in(1, 1'000'000);
  }
  if (n.has("zsampling")) {
    const Node z = n.at("zsampling");
    z.only({"inversion_guidance"});
    if (z.has("inversion_guidance")) s.zsampling_inversion = parse_guidance(z.at("inversion_guidance"));
  }
  return s;
}

}  // namespace detail

/// Parses and validates an experiment configuration document.
inline ExperimentConfig parse_config(const nlohmann::json& doc) {
  const detail::Node root(doc, "");
  root.only({"schedule", "mixture", "condition", "reward", "guidance", "strategy", "seeds", "escape",
             "jobs"});
  const ScheduleSpec schedule =
      root.has("schedule") ? detail::parse_schedule(root.at("schedule")) : ScheduleSpec{};
  GaussianMixture mixture = detail::parse_mixture(root.at("mixture"));
  Condition condition = root.has("condition") ? detail::parse_condition(root.at("condition"), mixture)
                                              : Condition::unconditional();
  RewardSpec reward = detail::parse_reward(root.at("reward"), mixture);
  const GuidanceConfig guidance =
      root.has("guidance") ? detail::parse_guidance(root.at("guidance")) : GuidanceConfig{};
  StrategyConfig strategy = detail::parse_strategy_block(root.at("strategy"), schedule.t_infer);
  strategy.ctrlz.guidance = guidance;

  std::uint64_t master_seed = 0;
  int runs = 1;
  if (root.has("seeds")) {
    const auto seeds = root.at("seeds");
    seeds.only({"master_seed", "runs"});
    if (seeds.has("master_seed")) master_seed = seeds.at("master_seed").unsigned_integer();
    if (seeds.has("runs")) runs = seeds.at("runs").int_in(1, 100'000'000);
  }

  EscapeCriterion escape;
  std::optional<Vector> target = reward.target();
  if (root.has("escape")) {
    const auto e = root.at("escape");
    e.only({"target", "radius"});
    if (e.has("target")) {
      target = e.at("target").vector();
      if (target->size() != mixture.dim()) e.at("target").fail("dimension must match the mixture");
    }
    if (e.has("radius")) {
      escape.radius = e.at("radius").number();
      if (escape.radius < 0.0) e.at("radius").fail("must be nonnegative");
    }
  }
  if (!target) throw ConfigError("escape.target", "required when the reward has no target");
  escape.target = *target;

  unsigned jobs = 1;
  if (root.has("jobs")) jobs = static_cast<unsigned>(root.at("jobs").int_in(1, 4096));

  return ExperimentConfig{schedule,     std::move(mixture), std::move(condition), std::move(reward),
                          guidance,     std::move(strategy), master_seed,         runs,
                          std::move(escape), jobs};
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

}  // namespace ctrlz::harness
