#pragma once

#include <stdexcept>
#include <string>

namespace conic_purge {

enum class ErrorCode {
    InvalidArgument,
    TooFewPoints,
    DegenerateBandwidth,
    ConvergenceFailure,
    NotAnEllipse,
    NotAnEllipsoid,
    DegenerateConfiguration,
    NoValidModel,
    ZeroVector,
    LengthMismatch,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::DegenerateBandwidth: return "DegenerateBandwidth";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::NotAnEllipse: return "NotAnEllipse";
    case ErrorCode::NotAnEllipsoid: return "NotAnEllipsoid";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::NoValidModel: return "NoValidModel";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    // Failures caused by the numbers rather than by how the library was called.
    bool numerical() const noexcept {
        switch (code_) {
        case ErrorCode::DegenerateBandwidth:
        case ErrorCode::ConvergenceFailure:
        case ErrorCode::NotAnEllipse:
        case ErrorCode::NotAnEllipsoid:
        case ErrorCode::DegenerateConfiguration:
        case ErrorCode::NoValidModel:
        case ErrorCode::ZeroVector:
            return true;
        default:
            return false;
        }
    }

private:
    ErrorCode code_;
};

} // namespace conic_purge
