#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eoslab {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed arguments: dimension mismatch, non-finite entries, bad shapes.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// A negative moment or the conserved quantity was requested for a model
/// with a zero eigenvalue.
class SingularModel : public Error {
public:
    using Error::Error;
};

/// A denominator in a closed-form nullcline or series vanished.
class SingularNullcline : public Error {
public:
    using Error::Error;
};

/// State outside the admissibility cone of the reduced model.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Iteration blew up. Carries the step index at which it was detected.
class Divergence : public Error {
public:
    Divergence(const std::string& what, std::size_t step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    [[nodiscard]] std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Root bracketing failed. Carries the last bracket tried.
class RootNotFound : public Error {
public:
    RootNotFound(const std::string& what, double lo, double hi)
        : Error(what + " [" + std::to_string(lo) + ", " + std::to_string(hi) + "]"),
          lo_(lo),
          hi_(hi) {}

    [[nodiscard]] double lo() const noexcept { return lo_; }
    [[nodiscard]] double hi() const noexcept { return hi_; }

private:
    double lo_;
    double hi_;
};

/// A value the exact maps can never produce showed up (e.g. a clearly
/// negative squared projection).
class InternalError : public Error {
public:
    using Error::Error;
};

}  // namespace eoslab
