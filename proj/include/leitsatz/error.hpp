#pragma once

#include <stdexcept>
#include <string>

namespace leitsatz {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration or violated call precondition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A remote service (tokenizer, generator, embedder) failed or was unreachable.
class ServiceError : public Error {
 public:
  ServiceError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}

  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

}  // namespace leitsatz
