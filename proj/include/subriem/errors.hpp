#pragma once

#include <stdexcept>
#include <string>

namespace subriem {

// Base of every error thrown by the library. `kind()` is a stable tag used by
// the CLI when mapping failures onto report statuses.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define SUBRIEM_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(tag, what) {}         \
  };

SUBRIEM_DEFINE_ERROR(StructuralError, "structural")
SUBRIEM_DEFINE_ERROR(DomainError, "domain")
SUBRIEM_DEFINE_ERROR(NumericError, "numeric")
SUBRIEM_DEFINE_ERROR(UnsupportedError, "unsupported")
SUBRIEM_DEFINE_ERROR(InfeasibleError, "infeasible")
SUBRIEM_DEFINE_ERROR(TuningError, "tuning")
SUBRIEM_DEFINE_ERROR(DegenerateError, "degenerate")
SUBRIEM_DEFINE_ERROR(TruncationError, "truncation")
SUBRIEM_DEFINE_ERROR(IntegrabilityError, "integrability")
SUBRIEM_DEFINE_ERROR(RefusedError, "refused")
SUBRIEM_DEFINE_ERROR(ConfigError, "config")
SUBRIEM_DEFINE_ERROR(IoError, "io")

#undef SUBRIEM_DEFINE_ERROR

// Root finder ran out of iterations; carries the last bracket.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double lo, double hi)
      : Error("solver", what), lo_(lo), hi_(hi) {}
  double bracket_lo() const noexcept { return lo_; }
  double bracket_hi() const noexcept { return hi_; }

 private:
  double lo_, hi_;
};

}  // namespace subriem
