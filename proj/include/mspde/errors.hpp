#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace mspde {

inline std::string short_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

/// Base class of every error raised by the library. `kind()` is the
/// machine-readable tag used in CLI error records.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

  /// Numerical failures map to CLI exit code 3, everything else to 2.
  virtual bool numerical() const noexcept { return false; }

 private:
  std::string kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, std::string kind = "config_invalid")
      : Error(std::move(kind), what) {}
};

class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double residual)
      : Error("non_convergence", what + " (residual " + short_number(residual) + ")"),
        residual_(residual) {}

  bool numerical() const noexcept override { return true; }
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class LinearSolveFailure : public Error {
 public:
  LinearSolveFailure(const std::string& what, double residual)
      : Error("linear_solve_failure", what + " (residual " + short_number(residual) + ")"),
        residual_(residual) {}

  bool numerical() const noexcept override { return true; }
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class StabilityViolation : public Error {
 public:
  StabilityViolation(double tau, double suggested_tau)
      : Error("stability_violation",
              "time step " + short_number(tau) + " exceeds the explicit-drift bound " +
                  short_number(suggested_tau)),
        tau_(tau),
        suggested_tau_(suggested_tau) {}

  bool numerical() const noexcept override { return true; }
  double tau() const noexcept { return tau_; }
  double suggested_tau() const noexcept { return suggested_tau_; }

 private:
  double tau_;
  double suggested_tau_;
};

class PicardDivergence : public Error {
 public:
  PicardDivergence(const std::string& what, double alpha)
      : Error("picard_divergence", what + "; try alpha = " + short_number(2.0 * alpha)),
        alpha_(alpha) {}

  bool numerical() const noexcept override { return true; }
  double alpha() const noexcept { return alpha_; }

 private:
  double alpha_;
};

class MissingFlux : public Error {
 public:
  explicit MissingFlux(const std::string& what) : Error("missing_flux", what) {}
};

}  // namespace mspde
