#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dnaeval {

enum class ErrorKind {
    InvalidArgument,
    DimensionMismatch,
    AllZero,
    NegativeEntry,
    TemplateMissing,
    TemplateInvalid,
    PredefinedAspectsPresent,
    ProviderError,
    AuthError,
    BudgetExceeded,
    SchemaError,
    DuplicateId,
    UnknownFormat,
    UpstreamLayoutError,
    MissingStratumField,
    EmptyDenominator,
    UnknownModelPrice,
    IdMismatch,
    IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Library-wide exception. Every failure mode that callers branch on has its own kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace dnaeval
