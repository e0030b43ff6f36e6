#include "dnaeval/error.hpp"

namespace dnaeval {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::AllZero: return "AllZero";
        case ErrorKind::NegativeEntry: return "NegativeEntry";
        case ErrorKind::TemplateMissing: return "TemplateMissing";
        case ErrorKind::TemplateInvalid: return "TemplateInvalid";
        case ErrorKind::PredefinedAspectsPresent: return "PredefinedAspectsPresent";
        case ErrorKind::ProviderError: return "ProviderError";
        case ErrorKind::AuthError: return "AuthError";
        case ErrorKind::BudgetExceeded: return "BudgetExceeded";
        case ErrorKind::SchemaError: return "SchemaError";
        case ErrorKind::DuplicateId: return "DuplicateId";
        case ErrorKind::UnknownFormat: return "UnknownFormat";
        case ErrorKind::UpstreamLayoutError: return "UpstreamLayoutError";
        case ErrorKind::MissingStratumField: return "MissingStratumField";
        case ErrorKind::EmptyDenominator: return "EmptyDenominator";
        case ErrorKind::UnknownModelPrice: return "UnknownModelPrice";
        case ErrorKind::IdMismatch: return "IdMismatch";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace dnaeval
