#ifndef MIXRES_CORE_HPP
#define MIXRES_CORE_HPP

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mixres {

using cdouble = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Index = Eigen::Index;

/// Base of every numerical failure raised by the library. Argument
/// validation failures are reported as std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite input, or an arcsine argument outside the clipping band.
class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// The prior covariance could not be Cholesky-factorized.
class SingularPriorError : public Error {
 public:
  using Error::Error;
};

/// A pre-quantization covariance with a zero or negative diagonal entry.
class DegenerateCovarianceError : public Error {
 public:
  using Error::Error;
};

/// The joint measurement covariance is singular or too ill-conditioned for
/// the linear estimator to exist.
class EstimatorUndefinedError : public Error {
 public:
  EstimatorUndefinedError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

/// Mixing matrices that do not satisfy the orthonormal-block assumptions.
class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

class InstanceTooLarge : public Error {
 public:
  using Error::Error;
};

inline double max_abs(const CMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace mixres

#endif  // MIXRES_CORE_HPP
