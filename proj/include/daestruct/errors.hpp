#pragma once

#include <stdexcept>
#include <string>

namespace daestruct {

/// Base error type. `code()` carries a stable machine-readable identifier
/// that the CLI maps into JSON error reports and exit statuses.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    [[nodiscard]] const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define DAESTRUCT_DEFINE_ERROR(Name, code_str)                          \
    class Name : public Error {                                         \
    public:                                                             \
        explicit Name(const std::string& what) : Error(code_str, what) {} \
    }

DAESTRUCT_DEFINE_ERROR(InvalidMatrix, "InvalidMatrix");
DAESTRUCT_DEFINE_ERROR(ShapeMismatch, "ShapeMismatch");
DAESTRUCT_DEFINE_ERROR(SingularPencil, "SingularPencil");
DAESTRUCT_DEFINE_ERROR(NotConnected, "NotConnected");
DAESTRUCT_DEFINE_ERROR(InvalidBranch, "InvalidBranch");
DAESTRUCT_DEFINE_ERROR(GaugeError, "GaugeError");
DAESTRUCT_DEFINE_ERROR(InvalidMaterial, "InvalidMaterial");
DAESTRUCT_DEFINE_ERROR(BuildError, "BuildError");
DAESTRUCT_DEFINE_ERROR(AssumptionViolated, "AssumptionViolated");
DAESTRUCT_DEFINE_ERROR(DegenerateDevice, "DegenerateDevice");
DAESTRUCT_DEFINE_ERROR(IncompleteModel, "IncompleteModel");
DAESTRUCT_DEFINE_ERROR(ReductionUnavailable, "ReductionUnavailable");
DAESTRUCT_DEFINE_ERROR(StepFailure, "StepFailure");
DAESTRUCT_DEFINE_ERROR(ParseError, "ParseError");
DAESTRUCT_DEFINE_ERROR(IoError, "IoError");

#undef DAESTRUCT_DEFINE_ERROR

} // namespace daestruct
