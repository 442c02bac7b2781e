#pragma once

#include <stdexcept>
#include <string>

namespace ata {

/// Raised for malformed or invalid input data (bad files, invariant
/// violations, degenerate fits). The CLI maps it to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for invalid invocations (bad flag combinations, unknown names).
/// The CLI maps it to exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace ata
