#include "passivity/errors.hpp"

namespace passivity {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::NotHermitian: return "NotHermitian";
    case Errc::NonFinite: return "NonFinite";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::Singular: return "Singular";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::MalformedTable: return "MalformedTable";
    case Errc::NotDifferentiable: return "NotDifferentiable";
    case Errc::UnknownParameter: return "UnknownParameter";
    case Errc::UnknownBus: return "UnknownBus";
    case Errc::UnknownComponent: return "UnknownComponent";
    case Errc::RefineGrid: return "RefineGrid";
    case Errc::ZeroDenominator: return "ZeroDenominator";
    case Errc::OutOfRegion: return "OutOfRegion";
    case Errc::Defective: return "Defective";
    case Errc::Parse: return "ParseError";
    case Errc::Validation: return "ValidationError";
    case Errc::Io: return "IoError";
  }
  return "Unknown";
}

bool is_input_error(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedTable:
    case Errc::UnknownParameter:
    case Errc::UnknownBus:
    case Errc::UnknownComponent:
    case Errc::Parse:
    case Errc::Validation:
      return true;
    default:
      return false;
  }
}

namespace {

std::string join_issues(const std::vector<std::string>& issues) {
  std::string out = "validation failed";
  for (const auto& issue : issues) {
    out += "\n  - ";
    out += issue;
  }
  return out;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : Error(Errc::Validation, join_issues(issues)), issues_(std::move(issues)) {}

}  // namespace passivity
