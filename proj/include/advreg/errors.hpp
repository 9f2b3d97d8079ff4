// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace advreg {

/// Tensor shapes do not agree for the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An index (label, token, answer) is outside its valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A user-supplied configuration value violates its constraints.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an API precondition (empty batch, non-scalar loss, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A text or binary artifact could not be parsed.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace advreg
