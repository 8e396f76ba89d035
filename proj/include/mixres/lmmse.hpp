#ifndef MIXRES_LMMSE_HPP
#define MIXRES_LMMSE_HPP

// Second-order statistics of the mixed-resolution measurement vector and the
// general LMMSE filter obtained from them by a dense linear solve.
//
// The quantized block follows the arcsine law, applied separately to the real
// and imaginary parts of the normalized pre-quantization covariance; the cross
// terms with theta and x_a follow from Bussgang's theorem, which for the sign
// quantizer scales the linear cross-covariance by sqrt(2/pi) diag(C_y)^{-1/2}.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mixres/core.hpp"
#include "mixres/model.hpp"

namespace mixres {

/// Pearson ratios beyond 1 by at most this much are clipped; further out is an
/// error.
inline constexpr double kArcsineClipTolerance = 1e-9;
/// Largest condition estimate of C_x for which the estimator is reported.
inline constexpr double kMaxCondition = 1e12;
/// Round-off band below zero within which the MSE is clamped to 0.
inline constexpr double kMseClampTolerance = 1e-9;

struct CovarianceBundle {
  CMatrix c_xa;        // N_a x N_a
  CMatrix c_y;         // N_q x N_q, before quantization
  CMatrix c_xq;        // N_q x N_q, arcsine law
  CMatrix c_xa_xq;     // N_a x N_q
  CMatrix c_theta_xa;  // M x N_a
  CMatrix c_theta_xq;  // M x N_q
  CMatrix c_x;         // joint, analog block first
  CMatrix c_theta_x;   // M x (N_a + N_q)
};

struct LmmseFilter {
  CMatrix w;  // M x (N_a + N_q)
  double mse = 0.0;
  /// 1-norm condition estimate of C_x; NaN when the filter came from a closed
  /// form and no matrix was factorized.
  double condition = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline constexpr double kTwoOverPi = 2.0 / std::numbers::pi;

template <typename Derived>
Eigen::VectorXd quantizer_input_scales(const Eigen::MatrixBase<Derived>& c_y) {
  Eigen::VectorXd s(c_y.rows());
  for (Index i = 0; i < c_y.rows(); ++i) {
    const double d = c_y(i, i).real();
    if (!(d > 0.0)) {
      throw DegenerateCovarianceError("pre-quantization variance " + std::to_string(i) +
                                      " is not positive");
    }
    s[i] = 1.0 / std::sqrt(d);
  }
  return s;
}

inline double clipped(double r, Index i, Index j) {
  if (std::abs(r) > 1.0 + kArcsineClipTolerance) {
    throw DomainError("arcsine argument " + std::to_string(r) + " at (" + std::to_string(i) +
                      "," + std::to_string(j) + ") outside [-1, 1]");
  }
  return std::clamp(r, -1.0, 1.0);
}

/// Replaces a pre-quantization covariance by the covariance of its 1-bit
/// quantized outputs. Works on blocks of a larger matrix.
template <typename Derived>
void apply_arcsine_law(Eigen::MatrixBase<Derived>& c) {
  const Index n = c.rows();
  Eigen::VectorXd d(n);
  for (Index i = 0; i < n; ++i) {
    d[i] = c(i, i).real();
    if (!(d[i] > 0.0)) {
      throw DegenerateCovarianceError("pre-quantization variance " + std::to_string(i) +
                                      " is not positive");
    }
  }
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (i == j) {
        c(i, i) = 1.0;
        continue;
      }
      const double norm = std::sqrt(d[i] * d[j]);
      const double re = clipped(c(i, j).real() / norm, i, j);
      const double im = clipped(c(i, j).imag() / norm, i, j);
      c(i, j) = cdouble(kTwoOverPi * std::asin(re), kTwoOverPi * std::asin(im));
    }
  }
}

/// Writes C_x and C_theta_x for the model into the given buffers. The
/// quantized block is transformed in place so that only one N x N matrix is
/// ever allocated.
inline void build_joint(const MixedModel& model, CMatrix& c_x, CMatrix& c_theta_x) {
  validate(model);
  const Index na = model.n_analog();
  const Index nq = model.n_quantized();
  const Index n = na + nq;
  const Index dim = model.dim();
  const CMatrix& s = model.sigma_theta;

  c_x.resize(n, n);
  c_theta_x.resize(dim, n);

  if (na > 0) {
    const CMatrix hs = model.h * s;
    c_x.topLeftCorner(na, na).noalias() = hs * model.h.adjoint();
    c_x.topLeftCorner(na, na).diagonal().array() += model.total_var_a();
    c_theta_x.leftCols(na) = hs.adjoint();  // Sigma H^H
  }
  if (nq > 0) {
    const CMatrix gs = model.g * s;
    auto cq = c_x.bottomRightCorner(nq, nq);
    cq.noalias() = gs * model.g.adjoint();
    cq.diagonal().array() += model.total_var_q();
    const Eigen::VectorXd scale = quantizer_input_scales(cq) * std::sqrt(kTwoOverPi);

    CMatrix t = gs.adjoint();  // Sigma G^H
    t *= scale.asDiagonal();
    c_theta_x.rightCols(nq) = t;
    if (na > 0) {
      c_x.topRightCorner(na, nq).noalias() = model.h * t;
      c_x.bottomLeftCorner(nq, na) = c_x.topRightCorner(na, nq).adjoint();
    }
    apply_arcsine_law(cq);
  }
}

}  // namespace detail

inline CMatrix cov_analog(const MixedModel& model) {
  validate(model);
  CMatrix c = model.h * model.sigma_theta * model.h.adjoint();
  c.diagonal().array() += model.total_var_a();
  return c;
}

inline CMatrix cov_pre_quantization(const MixedModel& model) {
  validate(model);
  CMatrix c = model.g * model.sigma_theta * model.g.adjoint();
  c.diagonal().array() += model.total_var_q();
  return c;
}

/// D^{-1/2} C_y D^{-1/2}, D = diag(C_y): the matrix of Pearson correlation
/// coefficients fed (real and imaginary parts separately) to the arcsine.
inline CMatrix normalized_correlation(const CMatrix& c_y) {
  const Eigen::VectorXd s = detail::quantizer_input_scales(c_y);
  return s.asDiagonal() * c_y * s.asDiagonal();
}

inline CMatrix cov_quantized(const CMatrix& c_y) {
  if (c_y.rows() != c_y.cols()) throw DimensionError("cov_quantized: C_y must be square");
  CMatrix c = c_y;
  detail::apply_arcsine_law(c);
  return c;
}

inline CMatrix cross_cov_theta_quantized(const MixedModel& model, const CMatrix& c_y) {
  const Eigen::VectorXd s = detail::quantizer_input_scales(c_y);
  return std::sqrt(detail::kTwoOverPi) * model.sigma_theta * model.g.adjoint() * s.asDiagonal();
}

inline CMatrix cross_cov_analog_quantized(const MixedModel& model, const CMatrix& c_y) {
  const Eigen::VectorXd s = detail::quantizer_input_scales(c_y);
  return std::sqrt(detail::kTwoOverPi) * model.h * model.sigma_theta * model.g.adjoint() *
         s.asDiagonal();
}

inline CovarianceBundle assemble(const MixedModel& model) {
  validate(model);
  CovarianceBundle b;
  b.c_xa = cov_analog(model);
  b.c_y = cov_pre_quantization(model);
  b.c_xq = cov_quantized(b.c_y);
  b.c_theta_xa = model.sigma_theta * model.h.adjoint();
  if (model.n_quantized() > 0) {
    b.c_theta_xq = cross_cov_theta_quantized(model, b.c_y);
    b.c_xa_xq = cross_cov_analog_quantized(model, b.c_y);
  } else {
    b.c_theta_xq.resize(model.dim(), 0);
    b.c_xa_xq.resize(model.n_analog(), 0);
  }

  const Index na = model.n_analog();
  const Index nq = model.n_quantized();
  b.c_x.resize(na + nq, na + nq);
  b.c_x.topLeftCorner(na, na) = b.c_xa;
  b.c_x.topRightCorner(na, nq) = b.c_xa_xq;
  b.c_x.bottomLeftCorner(nq, na) = b.c_xa_xq.adjoint();
  b.c_x.bottomRightCorner(nq, nq) = b.c_xq;
  b.c_theta_x.resize(model.dim(), na + nq);
  b.c_theta_x << b.c_theta_xa, b.c_theta_xq;
  return b;
}

namespace detail {

template <typename Lu>
double checked_condition(const Lu& lu) {
  const double rc = lu.rcond();
  const double cond = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
  if (!(cond <= kMaxCondition)) {
    throw EstimatorUndefinedError(
        "measurement covariance is singular or ill-conditioned (condition ~ " +
            std::to_string(cond) + ")",
        cond);
  }
  return cond;
}

inline double finish_mse(double prior_trace, double explained) {
  double mse = prior_trace - explained;
  if (mse < 0.0 && mse >= -kMseClampTolerance) mse = 0.0;
  return mse;
}

}  // namespace detail

/// General LMMSE filter W = C_theta_x C_x^{-1} and its MSE, via a partially
/// pivoted LU solve of C_x (never an explicit inverse).
inline LmmseFilter lmmse(const MixedModel& model) {
  CMatrix c_x;
  CMatrix c_theta_x;
  detail::build_joint(model, c_x, c_theta_x);
  Eigen::PartialPivLU<CMatrix> lu(c_x);
  LmmseFilter f;
  f.condition = detail::checked_condition(lu);
  const CMatrix z = lu.solve(c_theta_x.adjoint());  // C_x^{-1} C_theta_x^H
  f.w = z.adjoint();                                // C_x is Hermitian
  f.mse = detail::finish_mse(model.sigma_theta.trace().real(), (c_theta_x * z).trace().real());
  return f;
}

/// MSE only, factorizing C_x in place. This is the route used for large
/// instances where the filter itself is not needed.
inline double lmmse_mse(const MixedModel& model) {
  CMatrix c_x;
  CMatrix c_theta_x;
  detail::build_joint(model, c_x, c_theta_x);
  Eigen::PartialPivLU<Eigen::Ref<CMatrix>> lu(c_x);
  detail::checked_condition(lu);
  const CMatrix z = lu.solve(c_theta_x.adjoint());
  return detail::finish_mse(model.sigma_theta.trace().real(), (c_theta_x * z).trace().real());
}

inline CVector estimate(const LmmseFilter& filter, const CVector& x) {
  if (x.size() != filter.w.cols()) {
    throw DimensionError("estimate: measurement length " + std::to_string(x.size()) +
                         " != filter width " + std::to_string(filter.w.cols()));
  }
  return filter.w * x;
}

inline CVector estimate(const LmmseFilter& filter, const Measurements& x) {
  return estimate(filter, x.stacked());
}

}  // namespace mixres

#endif  // MIXRES_LMMSE_HPP
