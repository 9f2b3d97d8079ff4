// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "advreg/harness.hpp"

namespace advreg {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// A training run as read from a key-value config file. The dataset's spec
/// hash is part of the config so that a run cannot silently train on data from
/// another world.
struct RunConfig {
  TrainConfig train;
  std::string spec_hash;
};

/// Required keys: lambda_q, lambda_h, epochs, seed, spec_hash. Optional keys
/// fall back to TrainConfig defaults.
RunConfig run_config_from_text(std::string_view text, std::string_view source = "config");
/// Canonical text with every key spelled out; parses back to the same config.
std::string run_config_to_text(const RunConfig& config);

/// Runs one command. `args` excludes the program name. Human-readable
/// summaries go to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace advreg
