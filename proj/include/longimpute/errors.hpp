#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace longimpute {

// Base for every error the library raises on bad input or failed numerics.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DuplicationError : public Error {
public:
    explicit DuplicationError(const std::string& what) : Error(what), line_(0) {}
    DuplicationError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EligibilityError : public Error { using Error::Error; };
class IntermittentMissingnessError : public Error { using Error::Error; };
class ScheduleError : public Error { using Error::Error; };
class EmptyAnalysisSetError : public Error { using Error::Error; };
class SampleSizeError : public Error { using Error::Error; };
class PoolingError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class DegenerateInferenceError : public Error { using Error::Error; };
class SeparationError : public Error { using Error::Error; };
class DegenerateOutcomeError : public Error { using Error::Error; };
class SingularCovarianceError : public Error { using Error::Error; };

class SingularDesignError : public Error {
public:
    SingularDesignError(const std::string& what, std::vector<std::string> columns)
        : Error(what), columns_(std::move(columns)) {}
    const std::vector<std::string>& columns() const noexcept { return columns_; }

private:
    std::vector<std::string> columns_;
};

// Invalid configuration value; `field` is a dotted path such as "dropout.coef_art".
class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& what)
        : Error(field + ": " + what), field_(field) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace longimpute
