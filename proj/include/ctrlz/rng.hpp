// Copyright (C) 2026 The ctrlz-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "ctrlz/dynamics.hpp"

namespace ctrlz {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Folds a sequence of words into one 64-bit key.
constexpr std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (auto w : words) h = mix64(h ^ mix64(w));
  return h;
}

/// Seed of run `run_index` under `master_seed`.
constexpr std::uint64_t run_seed(std::uint64_t master_seed, std::uint64_t run_index) noexcept {
  return hash_words({master_seed, run_index, 0x72756eULL});
}

/// Independent random streams. Which stream a draw comes from is keyed by
/// purpose and indices, never by call order, so concurrent consumers see the
/// same values regardless of scheduling.
enum class Stream : std::uint64_t {
  kInitialNoise = 1,
  kResampling = 2,
  kSop = 3,
  kCtrlZ = 4,
  kInitiationGate = 5,
};

struct NoiseKey {
  Stream stream;
  int t = 0;
  int depth = 0;
  int candidate = 0;
};

/// Gaussian and uniform draws from keyed streams under one seed.
class KeyedNoise {
 public:
  explicit KeyedNoise(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  Vector gaussian(const NoiseKey& key, Eigen::Index dim) const {
    std::mt19937_64 gen(engine_seed(key));
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal(gen);
    return v;
  }

  double uniform(const NoiseKey& key) const {
    std::mt19937_64 gen(engine_seed(key));
    return std::uniform_real_distribution<double>(0.0, 1.0)(gen);
  }

 private:
  std::uint64_t engine_seed(const NoiseKey& k) const noexcept {
    return hash_words({seed_, static_cast<std::uint64_t>(k.stream), static_cast<std::uint64_t>(k.t),
                       static_cast<std::uint64_t>(k.depth), static_cast<std::uint64_t>(k.candidate)});
  }

  std::uint64_t seed_;
};

/// A noise source that returns zeros, for degenerate-perturbation checks.
struct ZeroNoise {
  Vector gaussian(const NoiseKey&, Eigen::Index dim) const { return Vector::Zero(dim); }
  double uniform(const NoiseKey&) const { return 0.0; }
};

template <class N>
concept NoiseSource = requires(const N& n, const NoiseKey& k, Eigen::Index d) {
  { n.gaussian(k, d) } -> std::convertible_to<Vector>;
  { n.uniform(k) } -> std::convertible_to<double>;
};

}  // namespace ctrlz
