#ifndef SAN_ERROR_HPP
#define SAN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace san {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the primitive or layer signature.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value became NaN or infinite.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or text file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VocabError : public Error {
 public:
  using Error::Error;
};

class TaxonomyError : public Error {
 public:
  using Error::Error;
};

/// Scene or question constraints could not be satisfied.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Dataset files are missing or inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Every learning-rate candidate diverged.
class SearchError : public Error {
 public:
  using Error::Error;
};

}  // namespace san

#endif  // SAN_ERROR_HPP
