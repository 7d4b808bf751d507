#pragma once

#include <stdexcept>
#include <string>

namespace qbp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad sizes, non-positive variance, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The requested graph cannot exist (e.g. odd n*d for a regular graph).
class InfeasibleGraph : public Error {
 public:
  using Error::Error;
};

/// Brute-force enumeration would exceed the configured cap.
class InstanceTooLarge : public Error {
 public:
  using Error::Error;
};

/// Every Monte-Carlo realization failed to converge.
class AllSamplesFailed : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace qbp
