#pragma once

#include <stdexcept>
#include <string>

namespace feqstab {

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: dimension mismatch, out-of-range parameter, malformed value.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A function produced a non-finite value; `where` names the offending point.
class EvaluationError : public Error {
public:
    EvaluationError(const std::string& what, std::string where)
        : Error(what + " at " + where), where_(std::move(where)) {}

    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

/// The majorant series diverges; no stability constant exists.
class NotContractiveError : public Error {
public:
    NotContractiveError(const std::string& what, double factor)
        : Error(what), factor_(factor) {}

    double factor() const noexcept { return factor_; }

private:
    double factor_;
};

/// A non-commuting operator power would exceed the recursion depth cap.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Iteration budget exhausted before the tail bound fell below tolerance.
class IterationLimitError : public Error {
public:
    IterationLimitError(const std::string& what, double last_tail)
        : Error(what), last_tail_(last_tail) {}

    double last_tail() const noexcept { return last_tail_; }

private:
    double last_tail_;
};

} // namespace feqstab
