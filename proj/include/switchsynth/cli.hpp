#pragma once

#include "switchsynth/core.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace switchsynth {

inline constexpr const char* kToolVersion = "1.0.0";

/// 0 success, 2 input or specification error, 3 infeasible or violated,
/// 4 numerical failure.
int exit_code(ErrorCode code);

/**
 * Command-line entry point. `args` excludes the program name. Human-readable
 * summaries go to `out`; failures print one JSON object to `err`.
 *
 * Subcommands: certify, synthesize, validate, report, sfr-model, wtg-fixture,
 * replay. Each writes a manifest recording input hashes, resolved
 * parameters, output hashes and stage timings.
 */
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace switchsynth
