// Copyright (C) 2026 The ctrlz-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ctrlz {

/// A precondition on an argument was violated (bad index, bad level, bad size).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A non-finite value appeared in a state, prediction or score.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An experiment configuration is malformed. `field()` is the JSON path of the
/// offending entry, e.g. "strategy.ctrlz.lambda".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

namespace detail {

inline void require(bool cond, const char* what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace detail
}  // namespace ctrlz
