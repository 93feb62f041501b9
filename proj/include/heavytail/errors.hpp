#pragma once

#include <stdexcept>
#include <string>

namespace heavytail {

/// Invalid argument or parameter set for a mathematical operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed or inconsistent input data (CSV rows, prices, timestamps).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A fitter could not produce an estimate.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs that belong together do not match (e.g. a fit and a different sample).
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A chi-square configuration leaves no degrees of freedom.
class DegreesOfFreedomError : public DomainError {
 public:
  using DomainError::DomainError;
};

namespace detail {

inline void require_domain(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

}  // namespace detail
}  // namespace heavytail
