#pragma once

#include <stdexcept>
#include <string>

namespace riccdiff {

enum class ErrorCode {
    InvalidArgument,
    NotPositiveSemidefinite,
    SolverFailure,
    PreconditionViolated,
    StepSizeTooLarge,
    PathDiverged,
    ThresholdExceeded,
    CollisionFailure,
    InsufficientData,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline const char* error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::NotPositiveSemidefinite: return "not-positive-semidefinite";
    case ErrorCode::SolverFailure: return "solver-failure";
    case ErrorCode::PreconditionViolated: return "precondition-violated";
    case ErrorCode::StepSizeTooLarge: return "step-size-too-large";
    case ErrorCode::PathDiverged: return "path-diverged";
    case ErrorCode::ThresholdExceeded: return "threshold-exceeded";
    case ErrorCode::CollisionFailure: return "collision-failure";
    case ErrorCode::InsufficientData: return "insufficient-data";
    }
    return "unknown";
}

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) fail(code, what);
}

}  // namespace riccdiff
