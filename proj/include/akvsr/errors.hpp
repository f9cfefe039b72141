// akvsr/errors.hpp
//
// Exception types shared by every module. Each maps onto one failure class
// named in the module contracts; the CLI maps them onto exit codes.

#pragma once

#include <stdexcept>
#include <string>

namespace akvsr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class ParameterError : public Error { public: using Error::Error; };
class ContractError : public Error { public: using Error::Error; };
class IndexError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class SizeError : public Error { public: using Error::Error; };
class RangeError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class FileError : public Error { public: using Error::Error; };
// Non-finite values where the math requires finite ones.
class NumericError : public Error { public: using Error::Error; };

// Checkpoint digest, truncation and parse failures.
class IntegrityError : public Error { public: using Error::Error; };
class VersionError : public IntegrityError { public: using IntegrityError::IntegrityError; };

}  // namespace akvsr
