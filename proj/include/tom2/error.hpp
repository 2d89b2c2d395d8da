#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tom2 {

enum class ErrorCode {
    ZeroEvidence,
    DivergentSupport,
    InconsistentPlay,
    UnmatchedSeeds,
    InvalidConfig,
    UnknownSession,
    CardAlreadyPlayed,
    WrongPile,
    SessionClosed,
};

inline std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::ZeroEvidence: return "ZeroEvidence";
    case ErrorCode::DivergentSupport: return "DivergentSupport";
    case ErrorCode::InconsistentPlay: return "InconsistentPlay";
    case ErrorCode::UnmatchedSeeds: return "UnmatchedSeeds";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::CardAlreadyPlayed: return "CardAlreadyPlayed";
    case ErrorCode::WrongPile: return "WrongPile";
    case ErrorCode::SessionClosed: return "SessionClosed";
    }
    return "Unknown";
}

/// Every recoverable failure in the library is reported as an Error carrying a
/// machine-readable code. `field` names the offending config field for
/// InvalidConfig and is empty otherwise.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string field = {})
        : std::runtime_error(message), code_(code), field_(std::move(field))
    {
    }

    ErrorCode code() const noexcept { return code_; }
    const std::string& field() const noexcept { return field_; }

private:
    ErrorCode code_;
    std::string field_;
};

} // namespace tom2
