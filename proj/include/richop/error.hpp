#pragma once

#include <stdexcept>
#include <string>

namespace richop {

// Invalid arguments or violated preconditions of an operation.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical procedure failed (solver stagnation, broken factorization, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed configuration or file contents.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operator construction impossible with the given data (e.g. the encoded
// coefficients leave the admissible set).
class BuildError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A certified tolerance was exceeded by a measurement.
class CertificateViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace richop
