#pragma once

#include <stdexcept>
#include <string>

namespace ppkde {

//! Raised when a quadrature integrand or a density evaluation is not finite.
class NumericalError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! The product of subset estimators has (numerically) no mass: the subset
//! supports barely overlap and the normalization constant underflows.
class DegenerateProduct : public NumericalError
{
public:
  explicit DegenerateProduct(double lambda_hat)
    : NumericalError("degenerate product estimator: lambda_hat = " +
                     std::to_string(lambda_hat))
    , lambda_hat_(lambda_hat)
  {}

  double lambda_hat() const noexcept { return lambda_hat_; }

private:
  double lambda_hat_;
};

//! An iterative routine exhausted its iteration budget.
class NonConvergence : public NumericalError
{
public:
  using NumericalError::NumericalError;
};

//! A Gamma-function argument in a closed form is non-positive.
class GammaDomain : public std::domain_error
{
public:
  using std::domain_error::domain_error;
};

//! Invalid experiment or command-line configuration.
class ConfigError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

//! Reading inputs or writing outputs failed; the message names the file.
class IoError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

} // namespace ppkde
