#ifndef ELLIP_ERRORS_HPP
#define ELLIP_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ellip {

// Invalid argument to a density/weight routine (negative u, q < 1, bad shape).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// v or v_dot unbounded: power-exponential with lambda != 1 evaluated at u = 0.
class SingularWeightError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Parameter outside the model's declared domain (e.g. sigma2 <= 0).
class ParameterDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A scatter matrix failed its Cholesky factorization.
class NotPositiveDefiniteError : public std::runtime_error {
 public:
  NotPositiveDefiniteError(std::size_t index, const std::string& what)
      : std::runtime_error(what + " (observation " + std::to_string(index) + ")"),
        index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// Non-finite mean or scatter produced by a model evaluation.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A matrix entering gamma or rho is singular.
class DegenerateAdjustmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file or configuration; the message names the row, column or key.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Error raised by run_test, tagged with the pipeline stage that failed.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace ellip

#endif
