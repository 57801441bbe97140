#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aff {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A diffusion parameter collection violates one admissibility condition.
/// `rule` is one of: dimension, admiss1, alphacond, driftcond1, driftcond2,
/// driftcond3. `index` is the 0-based coordinate (or alpha index) involved.
class Inadmissible : public Error {
 public:
  Inadmissible(std::string rule, std::size_t index, const std::string& what)
      : Error("inadmissible parameters [" + rule + ", index " +
              std::to_string(index) + "]: " + what),
        rule_(std::move(rule)),
        index_(index) {}

  const std::string& rule() const noexcept { return rule_; }
  std::size_t index() const noexcept { return index_; }

 private:
  std::string rule_;
  std::size_t index_;
};

/// The solution norm crossed the blow-up threshold at time `t`.
class BlowUp : public Error {
 public:
  explicit BlowUp(double t)
      : Error("ODE solution blew up at t = " + std::to_string(t)), t_(t) {}
  double time() const noexcept { return t_; }

 private:
  double t_;
};

class StepSizeUnderflow : public Error {
 public:
  explicit StepSizeUnderflow(double t)
      : Error("step size underflow at t = " + std::to_string(t)), t_(t) {}
  double time() const noexcept { return t_; }

 private:
  double t_;
};

class InvalidParams : public Error {
 public:
  using Error::Error;
};

class FactorizationError : public Error {
 public:
  using Error::Error;
};

class OutOfDomain : public Error {
 public:
  explicit OutOfDomain(double t)
      : Error("evaluation point t = " + std::to_string(t) +
              " outside the interpolation domain"),
        t_(t) {}
  double time() const noexcept { return t_; }

 private:
  double t_;
};

class SingularGamma : public Error {
 public:
  using Error::Error;
};

class DegenerateNormalizer : public Error {
 public:
  using Error::Error;
};

class WeightCollapse : public Error {
 public:
  explicit WeightCollapse(std::size_t step)
      : Error("particle weights collapsed at step " + std::to_string(step)),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class QuadratureFailure : public Error {
 public:
  using Error::Error;
};

class DegenerateGamma : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised by strict Fourier inversion when the characteristic function has
/// not decayed at the truncation point.
class TruncationWarning : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace aff
