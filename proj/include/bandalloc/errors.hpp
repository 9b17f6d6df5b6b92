#pragma once

#include <stdexcept>
#include <string>

namespace bandalloc {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Inputs that are individually valid but inconsistent with each other
// (secrecy reward without an eavesdropper gain, zero total QCI, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class BracketError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double best)
        : std::runtime_error(what), best_(best) {}
    double best_iterate() const noexcept { return best_; }

private:
    double best_;
};

class SizeError : public std::length_error {
public:
    using std::length_error::length_error;
};

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace bandalloc
