#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kfp {

enum class ErrorKind {
  NonIntegrable,
  DivergentMoment,
  Degenerate,
  NoSpectralGap,
  WeightBelowOne,
  MeanNotZero,
  ZeroPoincare,
  IllConditioned,
  SourceNotOrthogonal,
  CFLViolation,
  Blowup,
  NoDecay,
  Parse,
  Validation,
  Io,
};

const char* kind_name(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so the
// CLI can map it to an exit code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what);
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string key, const std::string& what);
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace kfp
