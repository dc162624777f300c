#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace passivity {

enum class Errc {
  NotHermitian,
  NonFinite,
  NoConvergence,
  Singular,
  OutOfRange,
  MalformedTable,
  NotDifferentiable,
  UnknownParameter,
  UnknownBus,
  UnknownComponent,
  RefineGrid,
  ZeroDenominator,
  OutOfRegion,
  Defective,
  Parse,
  Validation,
  Io,
};

std::string_view to_string(Errc code) noexcept;

// True for errors caused by bad input data rather than numerical failure.
bool is_input_error(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

  // Same error kind with extra context prepended ("at omega=...: ...").
  Error with_context(const std::string& context) const {
    return Error(code_, context + ": " + what());
  }

 private:
  Errc code_;
};

// Iteration cap exceeded; carries whatever was resolved before giving up.
class NoConvergenceError : public Error {
 public:
  NoConvergenceError(const std::string& what, std::vector<std::complex<double>> partial)
      : Error(Errc::NoConvergence, what), partial_(std::move(partial)) {}
  const std::vector<std::complex<double>>& partial() const noexcept { return partial_; }

 private:
  std::vector<std::complex<double>> partial_;
};

// Every violated constraint found while validating an input, not just the first.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  std::vector<std::string> issues_;
};

}  // namespace passivity
