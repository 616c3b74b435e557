#pragma once

#include <stdexcept>
#include <string>

namespace bwsemo {

/// Malformed or invalid dataset content. `line` is 1-based, 0 when the
/// problem is not tied to a single row.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class TemplateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user configuration; the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The backend cannot be reached or did not answer in time.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class HttpStatusError : public std::runtime_error {
 public:
  HttpStatusError(int status, const std::string& body)
      : std::runtime_error("HTTP " + std::to_string(status) + ": " + body), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

/// The backend has no continuation-scoring capability.
class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bwsemo
