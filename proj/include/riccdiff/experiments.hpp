#pragma once

#include "riccdiff/config.hpp"
#include "riccdiff/output.hpp"

#include <filesystem>
#include <iosfwd>

namespace riccdiff {

enum ExitCode { kExitPass = 0, kExitCriterionFailure = 1, kExitUsage = 2, kExitNumerical = 3 };

/// Runs the configured experiment; numeric content depends only on the config.
ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads = 0);

/// Runs and writes results.csv, summary.json, plotdata/ and MANIFEST into dir; returns the exit code.
int run_and_write(const ExperimentConfig& cfg, const std::filesystem::path& dir, int threads, std::ostream& log);

/// Prints the verdict table of a result directory; returns the exit code.
int report(const std::filesystem::path& dir, std::ostream& out, std::ostream& err);

}  // namespace riccdiff
