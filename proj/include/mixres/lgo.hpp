#ifndef MIXRES_LGO_HPP
#define MIXRES_LGO_HPP

// Closed-form LMMSE filter and MSE for orthonormal-block (LGO) models.
//
// With S = rho_a n_a + s_a and r = rho_q / (rho_q + s_q) (s_a, s_q the total
// analog and quantized-path variances, noise plus dither):
//
//   alpha     = (2/pi) acos(r)
//   beta(n_a) = (2/pi) asin(r) / rho_q - 2 rho_a n_a / (pi (rho_q + s_q) S)
//   MSE       = M - M ( rho_a n_a / S
//                       + 2 rho_q n_q s_a^2 / (pi (rho_q + s_q) (alpha + beta rho_q n_q) S^2) )
//
// All of it is scalar arithmetic; the matrix dimensions never enter.

#include <cmath>
#include <limits>
#include <numbers>

#include "mixres/core.hpp"
#include "mixres/lmmse.hpp"
#include "mixres/model.hpp"

namespace mixres {

/// Tolerance on ||B^H B - rho n I||_max when checking the block assumptions.
inline constexpr double kAssumptionTolerance = 1e-8;

struct LgoMse {
  double value = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

namespace detail {

inline constexpr double kPi = std::numbers::pi;

/// rho n / (rho n + v), taken as 0 when there is no analog data at all.
inline double analog_share(int n_a, double rho_a, double var_a_total) {
  const double num = rho_a * n_a;
  return num == 0.0 ? 0.0 : num / (num + var_a_total);
}

}  // namespace detail

inline double alpha(double rho_q, double var_q_total) {
  return 2.0 / detail::kPi * std::acos(rho_q / (rho_q + var_q_total));
}

inline double beta(int n_a, double rho_a, double rho_q, double var_a_total, double var_q_total) {
  const double r = rho_q / (rho_q + var_q_total);
  return 2.0 / detail::kPi * std::asin(r) / rho_q -
         2.0 / (detail::kPi * (rho_q + var_q_total)) *
             detail::analog_share(n_a, rho_a, var_a_total);
}

/// Purely quantized case (n_a = 0).
inline double mse_pure_quantized(int m, int n_q, double rho_q, double var_q_total) {
  if (n_q == 0) return m;
  const double a = alpha(rho_q, var_q_total);
  const double scale = 2.0 * rho_q / (detail::kPi * (rho_q + var_q_total));
  return m * (1.0 - scale / (a / n_q + (1.0 - a)));
}

/// Purely analog case (n_q = 0): M s_a / (rho_a n_a + s_a).
inline double mse_pure_analog(int m, int n_a, double rho_a, double var_a_total) {
  const double ra = rho_a * n_a;
  return ra == 0.0 ? m : m * (var_a_total / (ra + var_a_total));
}

/// Limit of the MSE as the quantized-path variance vanishes, for n_q >= 1.
/// Independent of n_q.
inline double mse_noiseless_quantized_limit(int m, int n_a, double rho_a, double var_a) {
  const double ra = rho_a * n_a;
  const double s = ra + var_a;
  if (ra == 0.0) return m * (1.0 - 2.0 / detail::kPi);
  if (var_a == 0.0) return 0.0;
  const double gain = ra / s + 2.0 * var_a * var_a / (detail::kPi * s * s - 2.0 * ra * s);
  return m * (1.0 - gain);
}

inline LgoMse mse_closed_form(const LgoParams& p) {
  validate(p);
  const double va = p.total_var_a();
  const double vq = p.total_var_q();
  LgoMse out;
  out.alpha = alpha(p.rho_q, vq);
  out.beta = beta(p.n_a, p.rho_a, p.rho_q, va, vq);

  if (p.n_a == 0 && p.n_q == 0) {
    out.value = p.m;
  } else if (p.n_a == 0) {
    out.value = mse_pure_quantized(p.m, p.n_q, p.rho_q, vq);
  } else if (p.n_q == 0) {
    out.value = mse_pure_analog(p.m, p.n_a, p.rho_a, va);
  } else if (va == 0.0) {
    out.value = 0.0;
  } else {
    // Written as M (s_a / S) (1 - q t) with t = 1 / (alpha / (rho_q n_q) + beta):
    // every step is a monotone floating-point operation, so the computed value
    // is exactly non-increasing in n_q and never exceeds the pure-analog MSE.
    const double s = p.rho_a * p.n_a + va;
    const double q = 2.0 * va / (detail::kPi * (p.rho_q + vq) * s);
    const double t = 1.0 / (out.alpha / (p.rho_q * p.n_q) + out.beta);
    out.value = p.m * (va / s) * (1.0 - q * t);
  }
  return out;
}

namespace detail {

inline void check_gram(const CMatrix& a, double expected, const char* which) {
  const Index m = a.cols();
  const double dev = max_abs(a.adjoint() * a - expected * CMatrix::Identity(m, m));
  if (dev > kAssumptionTolerance) {
    throw AssumptionViolation(std::string(which) + "^H " + which +
                              " deviates from rho n I by " + std::to_string(dev));
  }
}

}  // namespace detail

/// Verifies that (H, G) have the block structure described by p.
inline void check_lgo_structure(const LgoParams& p, const CMatrix& h, const CMatrix& g) {
  validate(p);
  if (h.rows() != p.n_analog() || h.cols() != p.m || g.rows() != p.n_quantized() ||
      g.cols() != p.m) {
    throw DimensionError("H and G dimensions do not match (M n_a) x M and (M n_q) x M");
  }
  if (p.n_a > 0) detail::check_gram(h, p.rho_a * p.n_a, "H");
  if (p.n_q > 0) {
    const CMatrix g1 = g.topRows(p.m);
    detail::check_gram(g1, p.rho_q, "G_1");
    for (int i = 1; i < p.n_q; ++i) {
      const double dev = max_abs(g.middleRows(Index{i} * p.m, p.m) - g1);
      if (dev > kAssumptionTolerance) {
        throw AssumptionViolation("G blocks are not all equal (block " + std::to_string(i) +
                                  " differs by " + std::to_string(dev) + ")");
      }
    }
  }
}

/// Closed-form filter [c1 H^H | c2 G^H] for the given orthonormal-block
/// matrices. Dithered parameters are handled by substituting the total
/// variances, exactly as for the MSE.
inline LmmseFilter filter_closed_form(const LgoParams& p, const CMatrix& h, const CMatrix& g) {
  check_lgo_structure(p, h, g);
  const double va = p.total_var_a();
  const double vq = p.total_var_q();
  const double s = p.rho_a * p.n_a + va;
  const double a = alpha(p.rho_q, vq);
  const double b = beta(p.n_a, p.rho_a, p.rho_q, va, vq);
  const double denom = a + b * p.rho_q * p.n_q;
  const double k = std::sqrt(2.0 / (detail::kPi * (p.rho_q + vq)));

  double c1 = 0.0;
  double c2 = 0.0;
  if (p.n_a > 0) {
    c1 = 1.0 / s;
    if (p.n_q > 0) {
      c1 -= 2.0 * p.rho_q * p.n_q * va / (detail::kPi * (p.rho_q + vq) * denom * s * s);
      c2 = k * va / (denom * s);
    }
  } else if (p.n_q > 0) {
    c2 = k / denom;  // s_a cancels when there is no analog block
  }

  LmmseFilter f;
  f.w.resize(p.m, h.rows() + g.rows());
  f.w << c1 * h.adjoint(), c2 * g.adjoint();
  f.mse = mse_closed_form(p).value;
  return f;
}

}  // namespace mixres

#endif  // MIXRES_LGO_HPP
