#pragma once

#include <stdexcept>
#include <string>

namespace safekernel {

enum class ErrorCode {
    InvalidArgument,
    DimensionMismatch,
    EmptySet,
    EmptyKernel,
    SingularMatrix,
    UnsupportedSummand,
    DomainError,
    ResourceLimit,
    NoModelsLeft,
    MissingKernel,
    ConfigError,
    IoError,
};

const char* to_string(ErrorCode code) noexcept;

// Every failure in the library is reported through this type; the C API maps
// the code onto its status enum.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

} // namespace safekernel
