#include "safekernel/error.hpp"

namespace safekernel {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::EmptyKernel: return "EmptyKernel";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::UnsupportedSummand: return "UnsupportedSummand";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::ResourceLimit: return "ResourceLimit";
    case ErrorCode::NoModelsLeft: return "NoModelsLeft";
    case ErrorCode::MissingKernel: return "MissingKernel";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

} // namespace safekernel
