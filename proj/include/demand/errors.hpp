#pragma once

#include <stdexcept>
#include <string>

namespace demand {

/// Broad failure class; the CLI maps each to a process exit code.
enum class ErrorCategory {
    Config,     ///< exit 2
    Data,       ///< exit 3
    Numerical,  ///< exit 4
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

// Data errors: the inputs violate a precondition.
struct DomainError : Error {
    explicit DomainError(const std::string& w) : Error(ErrorCategory::Data, w) {}
};
struct LengthError : Error {
    explicit LengthError(const std::string& w) : Error(ErrorCategory::Data, w) {}
};
struct StructureError : Error {
    explicit StructureError(const std::string& w) : Error(ErrorCategory::Data, w) {}
};
struct DimensionError : Error {
    explicit DimensionError(const std::string& w) : Error(ErrorCategory::Data, w) {}
};
struct DegenerateInputError : Error {
    explicit DegenerateInputError(const std::string& w) : Error(ErrorCategory::Data, w) {}
};
struct FoldSizeError : Error {
    explicit FoldSizeError(const std::string& w) : Error(ErrorCategory::Data, w) {}
};

// Config errors: the run description is unusable.
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorCategory::Config, w) {}
};
struct StabilityError : Error {
    explicit StabilityError(const std::string& w) : Error(ErrorCategory::Config, w) {}
};
struct GeometryError : Error {
    explicit GeometryError(const std::string& w) : Error(ErrorCategory::Config, w) {}
};

// Numerical errors: the data are valid but the problem is not solvable as posed.
struct RankError : Error {
    explicit RankError(const std::string& w) : Error(ErrorCategory::Numerical, w) {}
};
struct DegenerateTreatmentError : Error {
    explicit DegenerateTreatmentError(const std::string& w) : Error(ErrorCategory::Numerical, w) {}
};

inline int exit_code(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::Config: return 2;
        case ErrorCategory::Data: return 3;
        case ErrorCategory::Numerical: return 4;
    }
    return 1;
}

}  // namespace demand
