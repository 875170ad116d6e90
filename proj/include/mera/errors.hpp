#pragma once

#include <stdexcept>
#include <string>

namespace mera {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments: shapes, ranges, malformed configurations.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Contraction legs with mismatched dimensions.
class ContractError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Non-finite values or numerically singular problems.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Selection or orthogonalization could not reach full rank.
class RankError : public NumericError {
 public:
  RankError(const std::string& what, std::size_t achieved)
      : NumericError(what), achieved_rank(achieved) {}
  std::size_t achieved_rank;
};

}  // namespace mera
