#pragma once

#include <stdexcept>
#include <string>

namespace mhf {

// Base for every error raised by the library. Subclasses name the failing
// stage so the CLI can map them onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class ImportError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class LayoutMismatchError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class UnparseableResponse : public Error {
 public:
  explicit UnparseableResponse(std::string response)
      : Error("unparseable response: " + response), response_(std::move(response)) {}
  const std::string& response() const { return response_; }

 private:
  std::string response_;
};

}  // namespace mhf
