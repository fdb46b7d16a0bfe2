#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace tankxrl {

/// Base of every error raised by the workbench. `code()` is the stable
/// machine-readable name (e.g. "StepPastHorizon") used in JSON payloads and
/// CLI exit diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define TANKXRL_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

TANKXRL_DEFINE_ERROR(StepPastHorizon);
TANKXRL_DEFINE_ERROR(NonFiniteState);
TANKXRL_DEFINE_ERROR(PolicyEvalError);
TANKXRL_DEFINE_ERROR(ShapeMismatch);
TANKXRL_DEFINE_ERROR(WeightFileError);
TANKXRL_DEFINE_ERROR(NonFiniteLoss);
TANKXRL_DEFINE_ERROR(NonFiniteAttribution);
TANKXRL_DEFINE_ERROR(DecompositionInfidelity);
TANKXRL_DEFINE_ERROR(IntervalOutOfRange);
TANKXRL_DEFINE_ERROR(ConfigError);
TANKXRL_DEFINE_ERROR(OutOfScopeQuery);
TANKXRL_DEFINE_ERROR(ArgumentValidationError);
TANKXRL_DEFINE_ERROR(EndpointError);
TANKXRL_DEFINE_ERROR(SessionNotFound);
TANKXRL_DEFINE_ERROR(NotFound);
TANKXRL_DEFINE_ERROR(IoError);

#undef TANKXRL_DEFINE_ERROR

}  // namespace tankxrl
