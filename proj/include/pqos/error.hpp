#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pqos {

enum class Errc {
    FileNotFound,
    SchemaMismatch,
    EmptyCollection,
    UnsupportedFormat,
    UnknownMeasurement,
    AmbiguousRoles,
    InvalidCoordinate,
    ZeroVariance,
    SeriesTooShort,
    LengthMismatch,
    TooFewPairs,
    EmptyDataset,
    NoPairedColumns,
    TooFewRows,
    PartitionTooShort,
    InvalidConfig,
    NonFiniteLoss,
    ShapeMismatch,
    Empty,
    ZeroBaseline,
    IoError,
    ParseError,
    AllRunsFailed,
};

constexpr std::string_view to_string(Errc e) noexcept {
    switch (e) {
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::EmptyCollection: return "EmptyCollection";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::UnknownMeasurement: return "UnknownMeasurement";
    case Errc::AmbiguousRoles: return "AmbiguousRoles";
    case Errc::InvalidCoordinate: return "InvalidCoordinate";
    case Errc::ZeroVariance: return "ZeroVariance";
    case Errc::SeriesTooShort: return "SeriesTooShort";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::TooFewPairs: return "TooFewPairs";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::NoPairedColumns: return "NoPairedColumns";
    case Errc::TooFewRows: return "TooFewRows";
    case Errc::PartitionTooShort: return "PartitionTooShort";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::Empty: return "Empty";
    case Errc::ZeroBaseline: return "ZeroBaseline";
    case Errc::IoError: return "IoError";
    case Errc::ParseError: return "ParseError";
    case Errc::AllRunsFailed: return "AllRunsFailed";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the `Errc` kinds so
/// callers (and the CLI error record) can dispatch on it.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace pqos
