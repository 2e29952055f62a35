#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pgsp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Thrown by the eigensolver when the restart cap is reached.
class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string& what, std::vector<double> residuals)
      : Error(what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const noexcept { return residuals_; }

private:
  std::vector<double> residuals_;
};

namespace detail {
inline void require_dims(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}
}  // namespace detail

}  // namespace pgsp
