#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace softcal {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the mathematical domain of the operation
/// (negative, non-finite, empty, mismatched lengths).
class InputDomainError : public Error {
public:
    using Error::Error;
};

/// Invalid hyper-parameters, method/calibrator pairings or experiment configs.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The requested A-LR bound does not exist (e.g. epsilon = 0 makes 1/epsilon infinite).
class UnboundedError : public Error {
public:
    using Error::Error;
};

/// A query the problem cannot answer, such as an optimality gap without a known f*.
class UnsupportedQueryError : public Error {
public:
    using Error::Error;
};

/// A non-finite gradient or iterate was presented to an optimizer. The state is left untouched.
class PoisonedStateError : public Error {
public:
    PoisonedStateError(const std::string& what, std::uint64_t step) : Error(what), step_(step) {}
    std::uint64_t step() const noexcept { return step_; }

private:
    std::uint64_t step_;
};

/// Malformed input file. Carries the byte offset at which parsing failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

}  // namespace softcal
