#pragma once

#include <stdexcept>
#include <string>

namespace loid {

// Error categories map onto CLI exit codes: config/input problems (2),
// probe backend failures (3), numerical failures (4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace loid
