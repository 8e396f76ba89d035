#ifndef MIXRES_MODEL_HPP
#define MIXRES_MODEL_HPP

// Mixed-resolution measurement model: analog samples x_a = H theta + w_a (+ dither)
// and 1-bit samples x_q = Q(G theta + w_q (+ dither)), with theta ~ CN(0, Sigma).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include "mixres/core.hpp"
#include "mixres/rng.hpp"

namespace mixres {

struct MixedModel {
  CMatrix h;            // N_a x M, analog mixing
  CMatrix g;            // N_q x M, quantized-path mixing
  CMatrix sigma_theta;  // M x M prior covariance
  double var_a = 0.0;
  double var_q = 0.0;
  double var_da = 0.0;  // analog dither
  double var_dq = 0.0;  // quantized-path dither

  Index dim() const { return sigma_theta.rows(); }
  Index n_analog() const { return h.rows(); }
  Index n_quantized() const { return g.rows(); }
  Index n_total() const { return h.rows() + g.rows(); }
  double total_var_a() const { return var_a + var_da; }
  double total_var_q() const { return var_q + var_dq; }
};

/// Scalar description of a model that satisfies the orthonormal-block (LGO)
/// assumptions: identity prior, H made of n_a stacked M x M blocks with
/// B^H B = rho_a I, and G = 1_{n_q} (x) G_1 with G_1^H G_1 = rho_q I.
struct LgoParams {
  int m = 1;
  int n_a = 0;
  int n_q = 0;
  double rho_a = 1.0;
  double rho_q = 1.0;
  double var_a = 0.0;
  double var_q = 0.0;
  double var_da = 0.0;
  double var_dq = 0.0;

  double total_var_a() const { return var_a + var_da; }
  double total_var_q() const { return var_q + var_dq; }
  Index n_analog() const { return Index{m} * n_a; }
  Index n_quantized() const { return Index{m} * n_q; }
};

/// Uniform midrise quantizer applied per real/imaginary component.
struct QuantizerSpec {
  int bits = 6;
  double lo = -5.0;
  double hi = 5.0;

  int levels() const { return 1 << bits; }
  double step() const { return (hi - lo) / levels(); }
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

inline bool nonneg_finite(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace detail

inline void validate(const LgoParams& p) {
  detail::require(p.m >= 1, "LgoParams: m must be >= 1");
  detail::require(p.n_a >= 0 && p.n_q >= 0, "LgoParams: block counts must be >= 0");
  detail::require(std::isfinite(p.rho_a) && p.rho_a > 0.0, "LgoParams: rho_a must be > 0");
  detail::require(std::isfinite(p.rho_q) && p.rho_q > 0.0, "LgoParams: rho_q must be > 0");
  detail::require(detail::nonneg_finite(p.var_a) && detail::nonneg_finite(p.var_q) &&
                      detail::nonneg_finite(p.var_da) && detail::nonneg_finite(p.var_dq),
                  "LgoParams: variances must be finite and >= 0");
}

inline void validate(const QuantizerSpec& q) {
  detail::require(q.bits >= 1 && q.bits <= 30, "QuantizerSpec: bits must be in [1, 30]");
  detail::require(std::isfinite(q.lo) && std::isfinite(q.hi) && q.lo < q.hi,
                  "QuantizerSpec: lo < hi required");
}

/// Checks shapes, variances and Hermitian symmetry of the prior. Positive
/// definiteness is checked where the prior is factorized.
inline void validate(const MixedModel& m) {
  const Index dim = m.sigma_theta.rows();
  detail::require(dim >= 1 && m.sigma_theta.cols() == dim, "MixedModel: prior must be square");
  detail::require(m.h.cols() == dim, "MixedModel: H column count != M");
  detail::require(m.g.cols() == dim, "MixedModel: G column count != M");
  detail::require(m.n_total() >= 1, "MixedModel: at least one measurement required");
  detail::require(detail::nonneg_finite(m.var_a) && detail::nonneg_finite(m.var_q) &&
                      detail::nonneg_finite(m.var_da) && detail::nonneg_finite(m.var_dq),
                  "MixedModel: variances must be finite and >= 0");
  detail::require(max_abs(m.sigma_theta - m.sigma_theta.adjoint()) <= 1e-12,
                  "MixedModel: prior covariance is not Hermitian");
}

// ---------------------------------------------------------------------------
// Quantizers

inline cdouble quantize_1bit(cdouble z) {
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
    throw DomainError("quantize_1bit: non-finite input");
  }
  constexpr double a = 1.0 / std::numbers::sqrt2;
  return {z.real() >= 0.0 ? a : -a, z.imag() >= 0.0 ? a : -a};
}

namespace detail {

inline double quantize_component(double v, const QuantizerSpec& q) {
  const int top = q.levels() - 1;
  const double step = q.step();
  if (v <= q.lo) return q.lo + 0.5 * step;
  if (v >= q.hi) return q.lo + (top + 0.5) * step;
  int k = static_cast<int>(std::floor((v - q.lo) / step));
  k = std::clamp(k, 0, top);
  // Settle cells against the actual thresholds lo + k*step so that ties at a
  // threshold always go to the upper cell.
  while (k > 0 && v < q.lo + k * step) --k;
  while (k < top && v >= q.lo + (k + 1) * step) ++k;
  return q.lo + (k + 0.5) * step;
}

}  // namespace detail

inline cdouble quantize_bbit(cdouble z, const QuantizerSpec& q) {
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
    throw DomainError("quantize_bbit: non-finite input");
  }
  return {detail::quantize_component(z.real(), q), detail::quantize_component(z.imag(), q)};
}

/// The b-bit quantizer whose one-bit instance reproduces quantize_1bit.
inline QuantizerSpec sign_equivalent_quantizer() {
  return {1, -std::numbers::sqrt2, std::numbers::sqrt2};
}

// ---------------------------------------------------------------------------
// Sampling

/// Draws CN(0, Sigma) vectors through a cached Cholesky factor.
class GaussianSampler {
 public:
  explicit GaussianSampler(const CMatrix& sigma) {
    if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
      throw DimensionError("GaussianSampler: covariance must be square and non-empty");
    }
    Eigen::LLT<CMatrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
      throw SingularPriorError("prior covariance is not positive definite");
    }
    factor_ = llt.matrixL();
  }

  CVector draw(RngStream& rng) const {
    CVector z(factor_.rows());
    for (Index i = 0; i < z.size(); ++i) z[i] = rng.complex_normal();
    return factor_.triangularView<Eigen::Lower>() * z;
  }

 private:
  CMatrix factor_;
};

inline CVector sample_parameter(const CMatrix& sigma_theta, RngStream& rng) {
  return GaussianSampler(sigma_theta).draw(rng);
}

struct Measurements {
  CVector analog;
  CVector quantized;

  CVector stacked() const {
    CVector x(analog.size() + quantized.size());
    x << analog, quantized;
    return x;
  }
};

/// Draws (x_a, x_q) given theta. Noise draw order is fixed: analog noise,
/// analog dither, then per quantized entry noise and dither.
inline Measurements sample_measurements(const MixedModel& model, const CVector& theta,
                                        RngStream& rng) {
  if (theta.size() != model.dim()) {
    throw DimensionError("sample_measurements: theta length != M");
  }
  Measurements out;
  out.analog = model.n_analog() > 0 ? CVector(model.h * theta) : CVector(0);
  for (Index i = 0; i < out.analog.size(); ++i) {
    out.analog[i] += rng.complex_normal(model.var_a);
    out.analog[i] += rng.complex_normal(model.var_da);
  }
  out.quantized = model.n_quantized() > 0 ? CVector(model.g * theta) : CVector(0);
  for (Index i = 0; i < out.quantized.size(); ++i) {
    cdouble y = out.quantized[i];
    y += rng.complex_normal(model.var_q);
    y += rng.complex_normal(model.var_dq);
    out.quantized[i] = quantize_1bit(y);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Constructors for orthonormal-block models

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases
/// of diag(R) moved into Q.
inline CMatrix random_unitary(Index n, RngStream& rng) {
  CMatrix a(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) a(i, j) = rng.complex_normal();
  Eigen::HouseholderQR<CMatrix> qr(a);
  CMatrix q = qr.householderQ() * CMatrix::Identity(n, n);
  const CMatrix& r = qr.matrixQR();
  for (Index j = 0; j < n; ++j) {
    const double mag = std::abs(r(j, j));
    if (mag > 0.0) q.col(j) *= r(j, j) / mag;
  }
  return q;
}

inline CMatrix dft_unitary(Index n) {
  CMatrix f(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) {
      const double phase = -2.0 * std::numbers::pi * static_cast<double>((r * c) % n) / n;
      f(r, c) = std::polar(scale, phase);
    }
  return f;
}

/// 1_n (x) block
inline CMatrix repeat_blocks(const CMatrix& block, int n) {
  CMatrix out(block.rows() * n, block.cols());
  for (int i = 0; i < n; ++i) out.middleRows(i * block.rows(), block.rows()) = block;
  return out;
}

struct MixingMatrices {
  CMatrix h;
  CMatrix g;
};

/// H stacks n_a independent scaled unitaries (so H^H H = rho_a n_a I);
/// G repeats one scaled unitary n_q times.
inline MixingMatrices make_lgo_matrices(const LgoParams& p, RngStream& rng) {
  validate(p);
  MixingMatrices out;
  out.h.resize(p.n_analog(), p.m);
  const double sa = std::sqrt(p.rho_a);
  for (int i = 0; i < p.n_a; ++i) out.h.middleRows(Index{i} * p.m, p.m) = sa * random_unitary(p.m, rng);
  const CMatrix g1 = std::sqrt(p.rho_q) * random_unitary(p.m, rng);
  out.g = repeat_blocks(g1, p.n_q);
  return out;
}

inline MixedModel make_model(const LgoParams& p, MixingMatrices mats) {
  MixedModel m;
  m.h = std::move(mats.h);
  m.g = std::move(mats.g);
  m.sigma_theta = CMatrix::Identity(p.m, p.m);
  m.var_a = p.var_a;
  m.var_q = p.var_q;
  m.var_da = p.var_da;
  m.var_dq = p.var_dq;
  return m;
}

inline MixedModel make_lgo_model(const LgoParams& p, RngStream& rng) {
  return make_model(p, make_lgo_matrices(p, rng));
}

inline MixedModel make_scalar_model(int n_a, int n_q, double var) {
  detail::require(n_a >= 0 && n_q >= 0 && n_a + n_q >= 1,
                  "make_scalar_model: need at least one measurement");
  detail::require(detail::nonneg_finite(var), "make_scalar_model: variance must be >= 0");
  MixedModel m;
  m.h = CMatrix::Ones(n_a, 1);
  m.g = CMatrix::Ones(n_q, 1);
  m.sigma_theta = CMatrix::Identity(1, 1);
  m.var_a = var;
  m.var_q = var;
  return m;
}

enum class PilotKind { RandomUnitary, Dft };

/// Training-phase channel estimation: K users send a K x K unitary pilot,
/// repeated n_a times through high-resolution ADCs and n_q times through 1-bit
/// ADCs.
inline MixedModel make_mimo_model(int users, int n_a, int n_q, double rho, double var,
                                  PilotKind pilot, RngStream& rng) {
  detail::require(users >= 1, "make_mimo_model: K must be >= 1");
  detail::require(n_a >= 0 && n_q >= 0 && n_a + n_q >= 1,
                  "make_mimo_model: need at least one pilot repetition");
  detail::require(std::isfinite(rho) && rho > 0.0, "make_mimo_model: rho must be > 0");
  detail::require(detail::nonneg_finite(var), "make_mimo_model: variance must be >= 0");
  const CMatrix phi = pilot == PilotKind::Dft ? dft_unitary(users) : random_unitary(users, rng);
  const CMatrix scaled = std::sqrt(rho) * phi;
  MixedModel m;
  m.h = repeat_blocks(scaled, n_a);
  m.g = repeat_blocks(scaled, n_q);
  m.sigma_theta = CMatrix::Identity(users, users);
  m.var_a = var;
  m.var_q = var;
  return m;
}

}  // namespace mixres

#endif  // MIXRES_MODEL_HPP
