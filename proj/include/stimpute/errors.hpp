#pragma once

#include <stdexcept>
#include <string>

namespace stimpute {

// Malformed input data: CSV parse failures, bad config files, missing paths.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated operation contract: shape mismatches, degenerate rows, NaN inputs.
class ContractError : public std::logic_error {
public:
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Runtime numerical failure: NaN loss, non-finite gradients.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace stimpute
