#pragma once

#include <stdexcept>
#include <string>

namespace powerlens {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A document does not match its schema. `path` names the offending field,
// e.g. "parameters[3].domain.min".
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class InvalidValueError : public Error {
 public:
  using Error::Error;
};

class ProfileMismatchError : public Error {
 public:
  using Error::Error;
};

// Two applicable constraint predicates on one parameter admit no common value.
class ContradictionError : public Error {
 public:
  using Error::Error;
};

// A reasoner backend failed or returned output that does not parse.
class BackendError : public Error {
 public:
  using Error::Error;
};

class CorruptFileError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace powerlens
