#ifndef TPA_CORE_HPP
#define TPA_CORE_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace tpa {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ComplexVector = Eigen::VectorXcd;

/// State of the semi-discrete system, length N_u.
using StateVector = Vector;
/// Model parameters, length N_mu.
using ParamVector = Vector;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or inconsistent construction data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A nonlinear or linear stage solve inside a time step failed.
namespace detail {
inline std::string format_residual(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", r);
  return buf;
}
}  // namespace detail

class StepFailure : public Error {
 public:
  StepFailure(Index step, Index stage, double residual, const std::string& what)
      : Error("step " + std::to_string(step) + ", stage " + std::to_string(stage) + ": " + what +
              " (residual " + detail::format_residual(residual) + ")"),
        step_(step),
        stage_(stage),
        residual_(residual) {}

  Index step() const { return step_; }
  Index stage() const { return stage_; }
  double residual() const { return residual_; }

 private:
  Index step_;
  Index stage_;
  double residual_;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

}  // namespace tpa

#endif  // TPA_CORE_HPP
