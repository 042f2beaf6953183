#pragma once

/// \file errors.hpp
/// Error categories shared by the library. Argument and shape problems are
/// reported as std::invalid_argument; file and format problems as
/// std::runtime_error; invalid pipeline configuration as ConfigError; failures
/// of a numerical method as NumericalError.

#include <stdexcept>
#include <string>

namespace cpsdre {

/// A numerical method failed (non-convergence, singular iterate, blow-up).
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// A pipeline configuration is malformed or references missing inputs.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cpsdre
