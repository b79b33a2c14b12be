#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cellcloud {

enum class ErrorCode {
    MalformedRow,
    UnknownType,
    DuplicateCell,
    InvalidPatch,
    OverlappingPatches,
    TooFewCells,
    TooFewPoints,
    InvalidArgument,
    DimMismatch,
    EmptyGroup,
    EmptyCloud,
    DegenerateRatio,
    ExhaustedResampling,
    EmptyCohort,
    NoEvents,
    NoComparablePairs,
    BadFormat,
    Io,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// All data-level failures raised by the library. `line()` is set for
// errors tied to a 1-based input line.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::optional<std::size_t> line = std::nullopt);

    ErrorCode code() const noexcept { return code_; }
    std::optional<std::size_t> line() const noexcept { return line_; }

private:
    ErrorCode code_;
    std::optional<std::size_t> line_;
};

}  // namespace cellcloud
