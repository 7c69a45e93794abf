#pragma once

#include <stdexcept>
#include <string>

namespace ctranatd {

// Base for every error raised by the library. category() is the short
// machine-parseable tag the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}
  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

class DimensionError : public Error {
 public:
  DimensionError(std::string axis, const std::string& what)
      : Error("dimension", what), axis_(std::move(axis)) {}
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class SchemaError : public Error {
 public:
  SchemaError(std::string column, const std::string& what)
      : Error("schema", what), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

class EncodingError : public Error {
 public:
  explicit EncodingError(const std::string& what) : Error("encoding", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

class EmptyDataError : public Error {
 public:
  explicit EmptyDataError(const std::string& what) : Error("empty_data", what) {}
};

class UndefinedMetric : public Error {
 public:
  explicit UndefinedMetric(const std::string& what) : Error("undefined_metric", what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

class InvalidWindow : public Error {
 public:
  explicit InvalidWindow(const std::string& what) : Error("invalid_window", what) {}
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error("protocol", what) {}
};

}  // namespace ctranatd
