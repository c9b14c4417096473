#pragma once

#include <stdexcept>
#include <string>

namespace rloft {

/// Raised when the collected data fails the excitation-richness rank check.
class RankConditionError : public std::runtime_error {
public:
    explicit RankConditionError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a simulated state grows past the divergence bound.
class InstabilityError : public std::runtime_error {
public:
    explicit InstabilityError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when an iterative solver exhausts its budget before reaching tolerance.
class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Process exit codes used by the CLI.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,        // parse errors, failed checks, misc runtime errors
    kExitRankCondition = 2,
    kExitInstability = 3,
    kExitNonConvergence = 4,
};

}  // namespace rloft
