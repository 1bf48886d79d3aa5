#include "kfp/errors.hpp"

namespace kfp {

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonIntegrable: return "NonIntegrable";
    case ErrorKind::DivergentMoment: return "DivergentMoment";
    case ErrorKind::Degenerate: return "Degenerate";
    case ErrorKind::NoSpectralGap: return "NoSpectralGap";
    case ErrorKind::WeightBelowOne: return "WeightBelowOne";
    case ErrorKind::MeanNotZero: return "MeanNotZero";
    case ErrorKind::ZeroPoincare: return "ZeroPoincare";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::SourceNotOrthogonal: return "SourceNotOrthogonal";
    case ErrorKind::CFLViolation: return "CFLViolation";
    case ErrorKind::Blowup: return "Blowup";
    case ErrorKind::NoDecay: return "NoDecay";
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::Validation: return "ValidationError";
    case ErrorKind::Io: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(kind_name(kind)) + ": " + what), kind_(kind) {}

ParseError::ParseError(std::size_t line, std::size_t column, const std::string& what)
    : Error(ErrorKind::Parse,
            "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

ValidationError::ValidationError(std::string key, const std::string& what)
    : Error(ErrorKind::Validation, key + ": " + what), key_(std::move(key)) {}

}  // namespace kfp
