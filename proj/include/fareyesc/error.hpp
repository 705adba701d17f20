#pragma once

#include <stdexcept>
#include <string>

namespace fareyesc {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the documented domain (non-finite input, bad index, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Result would not be representable in the requested number type.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// Rejected configuration or parameter record.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fareyesc

#include <functional>

namespace fareyesc {

using WarningHandler = std::function<void(const std::string&)>;

/// Replaces the sink for non-fatal diagnostics (default: "warning: ..." on
/// stderr). Returns the previous handler.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

}  // namespace fareyesc
