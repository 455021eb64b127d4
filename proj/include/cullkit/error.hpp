#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cullkit {

enum class ErrorCode {
    InvalidArgument,
    NonPositiveDepth,
    ZeroAxis,
    DegenerateConfiguration,
    BehindCamera,
    LengthMismatch,
    NoObjectCells,
    InvalidDistribution,
    AllVerticesBehindCamera,
    EmptyMask,
    DimensionMismatch,
    EmptyProposalSet,
    AllProposalsFailed,
    NoConsensus,
    ScorerProcessFailed,
    CellOutOfRange,
    KeypointsOutOfImage,
    ParseError,
    UnsupportedFormat,
    InvalidRotation,
    IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::ZeroAxis: return "ZeroAxis";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NoObjectCells: return "NoObjectCells";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::AllVerticesBehindCamera: return "AllVerticesBehindCamera";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyProposalSet: return "EmptyProposalSet";
    case ErrorCode::AllProposalsFailed: return "AllProposalsFailed";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::ScorerProcessFailed: return "ScorerProcessFailed";
    case ErrorCode::CellOutOfRange: return "CellOutOfRange";
    case ErrorCode::KeypointsOutOfImage: return "KeypointsOutOfImage";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::InvalidRotation: return "InvalidRotation";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace cullkit
