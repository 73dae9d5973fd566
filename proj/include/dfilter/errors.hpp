#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dfilter {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    DimensionMismatch(std::string name, std::size_t expected_rows, std::size_t expected_cols,
                      std::size_t rows, std::size_t cols);

    const std::string& name() const noexcept { return name_; }
    std::size_t expected_rows() const noexcept { return expected_rows_; }
    std::size_t expected_cols() const noexcept { return expected_cols_; }

private:
    std::string name_;
    std::size_t expected_rows_;
    std::size_t expected_cols_;
};

class InvariantViolation : public Error {
public:
    explicit InvariantViolation(std::string what_failed)
        : Error("invariant violated: " + what_failed), invariant_(std::move(what_failed)) {}

    const std::string& invariant() const noexcept { return invariant_; }

private:
    std::string invariant_;
};

class NonFiniteInput : public Error {
public:
    using Error::Error;
};

/// The filter produced a non-finite state or variance; `step` is the 0-based time index.
class NonFiniteState : public Error {
public:
    explicit NonFiniteState(std::size_t step)
        : Error("non-finite filter state at step " + std::to_string(step)), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// sigma^2 fell below the floor, so log sigma^2 would not be finite.
class DegenerateLikelihood : public Error {
public:
    explicit DegenerateLikelihood(double sigma2)
        : Error("degenerate likelihood: sigma2 below floor"), sigma2_(sigma2) {}

    /// The value sigma^2 was clamped to (the floor).
    double sigma2() const noexcept { return sigma2_; }

private:
    double sigma2_;
};

class NonFiniteDerivative : public Error {
public:
    NonFiniteDerivative(std::size_t step, std::size_t i, std::size_t j)
        : Error("non-finite derivative at step " + std::to_string(step) + " (" + std::to_string(i) +
                "," + std::to_string(j) + ")"),
          step_(step), i_(i), j_(j) {}

    std::size_t step() const noexcept { return step_; }
    std::size_t i() const noexcept { return i_; }
    std::size_t j() const noexcept { return j_; }

private:
    std::size_t step_;
    std::size_t i_;
    std::size_t j_;
};

class Overflow : public Error {
public:
    using Error::Error;
};

class NonFiniteObjective : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& detail)
        : Error("parse error on line " + std::to_string(line) + ": " + detail), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class NonFiniteValue : public Error {
public:
    explicit NonFiniteValue(std::size_t line)
        : Error("non-finite value on line " + std::to_string(line)), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace dfilter
