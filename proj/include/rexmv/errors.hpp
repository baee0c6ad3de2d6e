#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace rexmv {

// Failure categories; the CLI maps them to process exit codes
// (Validation -> 1, Numeric -> 2, Property -> 3).
enum class ErrorClass { Validation = 1, Numeric = 2, Property = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, std::string name, const std::string& what)
      : std::runtime_error(name + ": " + what),
        class_(cls),
        name_(std::move(name)) {}

  ErrorClass error_class() const noexcept { return class_; }
  const std::string& name() const noexcept { return name_; }

 private:
  ErrorClass class_;
  std::string name_;
};

#define REXMV_ERROR(Name, Class)                                        \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what)                              \
        : Error(ErrorClass::Class, #Name, what) {}                      \
  }

REXMV_ERROR(SingularVolatility, Validation);
REXMV_ERROR(NonPositivePremium, Validation);
REXMV_ERROR(NotPositiveDefinite, Validation);
REXMV_ERROR(OutOfRange, Validation);
REXMV_ERROR(InvalidSet, Validation);
REXMV_ERROR(DimensionMismatch, Validation);
REXMV_ERROR(DegenerateScenario, Validation);
REXMV_ERROR(InvalidIntensity, Validation);
REXMV_ERROR(DomainError, Validation);
REXMV_ERROR(GridTooLarge, Validation);
REXMV_ERROR(TooFewPaths, Validation);
REXMV_ERROR(ParseError, Validation);
REXMV_ERROR(NonPositivePrice, Validation);
REXMV_ERROR(UnsortedDates, Validation);
REXMV_ERROR(WindowTooLarge, Validation);
REXMV_ERROR(InsufficientData, Validation);
REXMV_ERROR(PropertyViolation, Property);
REXMV_ERROR(FactorizationFailure, Numeric);
REXMV_ERROR(NumericOverflow, Numeric);
REXMV_ERROR(NoBracket, Numeric);
REXMV_ERROR(NonConvergence, Numeric);
REXMV_ERROR(Divergence, Numeric);
REXMV_ERROR(NonFinite, Numeric);

#undef REXMV_ERROR

}  // namespace rexmv
