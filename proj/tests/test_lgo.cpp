#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "mixres/lgo.hpp"
#include "mixres/lmmse.hpp"
#include "mixres/model.hpp"

using namespace mixres;

namespace {

constexpr double kPi = std::numbers::pi;

LgoParams random_params(RngStream& rng, int max_m, int max_na, int max_nq) {
  LgoParams p;
  p.m = rng.uniform_int(1, max_m);
  p.n_a = rng.uniform_int(0, max_na);
  p.n_q = rng.uniform_int(p.n_a == 0 ? 1 : 0, max_nq);
  p.rho_a = rng.log_uniform(0.1, 10.0);
  p.rho_q = rng.log_uniform(0.1, 10.0);
  p.var_a = rng.log_uniform(0.1, 10.0);
  p.var_q = rng.log_uniform(0.1, 10.0);
  return p;
}

}  // namespace

TEST(Alpha, KnownValues) {
  EXPECT_EQ(alpha(1.0, 0.0), 0.0);
  EXPECT_NEAR(alpha(2.0, 2.0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(alpha(1.0, 1e12), 1.0, 1e-9);
}

TEST(Beta, KnownValues) {
  EXPECT_NEAR(beta(0, 1.0, 2.0, 1.0, 2.0), 2.0 / kPi * std::asin(0.5) / 2.0, 1e-15);
  EXPECT_NEAR(beta(1, 1.0, 1.0, 1.0, 1.0), 1.0 / 3.0 - 1.0 / (2.0 * kPi), 1e-15);
  // 0/0 in the analog share is taken as 0.
  EXPECT_NEAR(beta(0, 1.0, 1.0, 0.0, 1.0), 1.0 / 3.0, 1e-15);
}

TEST(MseClosedForm, BranchCases) {
  LgoParams p;
  p.m = 4;
  EXPECT_EQ(mse_closed_form(p).value, 4.0);
  p.n_a = 1;
  p.n_q = 3;
  p.var_a = 0.0;
  p.var_q = 1.0;
  EXPECT_EQ(mse_closed_form(p).value, 0.0);
  p.var_a = 1.0;
  p.n_q = 0;
  EXPECT_NEAR(mse_closed_form(p).value, mse_pure_analog(4, 1, 1.0, 1.0), 1e-15);
  p.n_a = 0;
  p.n_q = 5;
  EXPECT_NEAR(mse_closed_form(p).value, mse_pure_quantized(4, 5, 1.0, 1.0), 1e-15);
}

TEST(MseClosedForm, ScalarMixedMatchesMatrixRoute) {
  const LgoParams p{1, 1, 2, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0};
  EXPECT_NEAR(mse_closed_form(p).value, lmmse(make_scalar_model(1, 2, 1.0)).mse, 1e-9);
}

TEST(MseClosedForm, MatchesMatrixRouteOnRandomInstances) {
  RngStream rng(101, 0);
  for (int t = 0; t < 150; ++t) {
    const LgoParams p = random_params(rng, 6, 5, 8);
    const MixedModel m = make_lgo_model(p, rng);
    EXPECT_NEAR(mse_closed_form(p).value, lmmse(m).mse, 1e-9 * p.m)
        << "m=" << p.m << " n_a=" << p.n_a << " n_q=" << p.n_q;
  }
}

TEST(MseClosedForm, DitheredMatchesMatrixRoute) {
  RngStream rng(102, 0);
  for (int t = 0; t < 60; ++t) {
    LgoParams p = random_params(rng, 4, 4, 6);
    p.var_da = rng.uniform(0.0, 2.0);
    p.var_dq = rng.uniform(0.0, 2.0);
    const MixedModel m = make_lgo_model(p, rng);
    EXPECT_NEAR(mse_closed_form(p).value, lmmse(m).mse, 1e-9 * p.m);
  }
}

TEST(MseClosedForm, RangeAndCoefficientInvariants) {
  RngStream rng(103, 0);
  for (int t = 0; t < 10000; ++t) {
    LgoParams p = random_params(rng, 10, 30, 200);
    p.var_dq = rng.uniform(0.0, 2.0);
    const LgoMse r = mse_closed_form(p);
    EXPECT_GE(r.alpha, 0.0);
    EXPECT_LT(r.alpha, 1.0);
    EXPECT_GT(r.beta, 0.0);
    EXPECT_GE(r.value, 0.0);
    EXPECT_LE(r.value, p.m);
  }
}

TEST(MseClosedForm, NonIncreasingInQuantizedCount) {
  RngStream rng(104, 0);
  for (int t = 0; t < 300; ++t) {
    LgoParams p = random_params(rng, 10, 20, 1);
    p.n_q = 0;
    double prev = mse_closed_form(p).value;
    for (int n_q = 1; n_q <= 40; ++n_q) {
      p.n_q = n_q;
      const double cur = mse_closed_form(p).value;
      EXPECT_LE(cur, prev) << "n_q=" << n_q;
      prev = cur;
    }
  }
}

TEST(PureCases, KnownValuesAndMonotone) {
  EXPECT_EQ(mse_pure_quantized(3, 0, 1.0, 1.0), 3.0);
  EXPECT_NEAR(mse_pure_quantized(1, 1, 1.0, 1.0), 1.0 - 1.0 / kPi, 1e-15);
  EXPECT_NEAR(mse_pure_analog(1, 1, 1.0, 1.0), 0.5, 1e-15);
  EXPECT_LT(mse_pure_analog(1, 1000000, 1.0, 1.0), 1e-5);
  double prev_q = mse_pure_quantized(2, 0, 1.3, 0.7);
  double prev_a = mse_pure_analog(2, 0, 1.3, 0.7);
  for (int n = 1; n <= 100; ++n) {
    const double q = mse_pure_quantized(2, n, 1.3, 0.7);
    const double a = mse_pure_analog(2, n, 1.3, 0.7);
    EXPECT_LT(q, prev_q);
    EXPECT_LT(a, prev_a);
    prev_q = q;
    prev_a = a;
  }
}

TEST(PureCases, AnalogMatchesMatrixRoute) {
  RngStream rng(105, 0);
  for (int t = 0; t < 40; ++t) {
    LgoParams p = random_params(rng, 5, 6, 1);
    p.n_a = std::max(p.n_a, 1);
    p.n_q = 0;
    const MixedModel m = make_lgo_model(p, rng);
    EXPECT_NEAR(mse_pure_analog(p.m, p.n_a, p.rho_a, p.var_a), lmmse(m).mse, 1e-10 * p.m);
  }
}

TEST(NoiselessLimit, AgreesWithTinyQuantizedNoise) {
  for (int n_a : {0, 1, 3, 10}) {
    for (double var_a : {0.1, 1.0, 10.0}) {
      const double lim = mse_noiseless_quantized_limit(1, n_a, 1.0, var_a);
      for (int n_q : {1, 5, 50}) {
        const LgoParams p{1, n_a, n_q, 1.0, 1.0, var_a, 1e-12, 0.0, 0.0};
        EXPECT_NEAR(mse_closed_form(p).value, lim, 1e-6) << "n_a=" << n_a << " n_q=" << n_q;
      }
    }
  }
}

TEST(NoiselessLimit, ConvergesAtSquareRootRate) {
  // alpha grows like sqrt(var_q), so the gap to the limit shrinks tenfold for
  // every hundredfold drop in var_q. With a single quantized block alpha cancels
  // against beta and the convergence is linear.
  RngStream rng(106, 0);
  for (int t = 0; t < 100; ++t) {
    LgoParams p = random_params(rng, 6, 10, 50);
    p.n_q = std::max(p.n_q, 1);
    const double lim = mse_noiseless_quantized_limit(p.m, p.n_a, p.rho_a, p.var_a);
    p.var_q = 1e-8;
    const double gap_hi = std::abs(mse_closed_form(p).value - lim);
    p.var_q = 1e-10;
    const double gap_lo = std::abs(mse_closed_form(p).value - lim);
    EXPECT_LT(gap_hi, 1e-3 * p.m);
    const double rate = p.n_q == 1 ? 100.0 : 10.0;
    EXPECT_NEAR(gap_hi / gap_lo, rate, 0.01 * rate) << "n_a=" << p.n_a << " n_q=" << p.n_q;
  }
}

TEST(NoiselessLimit, NoAnalogData) {
  EXPECT_NEAR(mse_noiseless_quantized_limit(3, 0, 1.0, 1.0), 3.0 * (1.0 - 2.0 / kPi), 1e-15);
  EXPECT_EQ(mse_noiseless_quantized_limit(3, 2, 1.0, 0.0), 0.0);
}

TEST(AnalogDither, NeverHelps) {
  RngStream rng(107, 0);
  for (int t = 0; t < 200; ++t) {
    LgoParams p = random_params(rng, 8, 10, 50);
    p.n_a = std::max(p.n_a, 1);
    p.var_dq = rng.uniform(0.0, 2.0);
    double prev = mse_closed_form(p).value;
    for (int k = 1; k <= 20; ++k) {
      p.var_da = 0.1 * k;
      const double cur = mse_closed_form(p).value;
      EXPECT_GE(cur, prev * (1 - 1e-14));
      prev = cur;
    }
  }
}

TEST(FilterClosedForm, MatchesMatrixFilter) {
  RngStream rng(108, 0);
  for (int t = 0; t < 100; ++t) {
    LgoParams p = random_params(rng, 6, 4, 6);
    p.var_dq = rng.uniform(0.0, 1.0);
    const MixingMatrices mm = make_lgo_matrices(p, rng);
    const LmmseFilter closed = filter_closed_form(p, mm.h, mm.g);
    const LmmseFilter general = lmmse(make_model(p, mm));
    EXPECT_LT(max_abs(closed.w - general.w), 1e-8);
    EXPECT_EQ(closed.mse, mse_closed_form(p).value);
    EXPECT_TRUE(std::isnan(closed.condition));
  }
}

TEST(FilterClosedForm, PureAnalogCoefficient) {
  RngStream rng(109, 0);
  const LgoParams p{3, 2, 0, 1.5, 1.0, 0.8, 0.0, 0.0, 0.0};
  const MixingMatrices mm = make_lgo_matrices(p, rng);
  const LmmseFilter f = filter_closed_form(p, mm.h, mm.g);
  EXPECT_LT(max_abs(f.w - mm.h.adjoint() / (1.5 * 2 + 0.8)), 1e-15);
}

TEST(FilterClosedForm, ScalarHandCoefficients) {
  // n_a = n_q = 1, all variances and gains 1: S = 2, alpha = 2/3,
  // beta = 1/3 - 1/(2 pi), k = 1/sqrt(pi).
  const double beta_v = 1.0 / 3.0 - 1.0 / (2.0 * kPi);
  const double denom = 2.0 / 3.0 + beta_v;
  const double c1 = 0.5 - 2.0 / (kPi * 2.0 * denom * 4.0);
  const double c2 = 1.0 / std::sqrt(kPi) / (denom * 2.0);
  const LgoParams p{1, 1, 1, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0};
  const LmmseFilter f = filter_closed_form(p, CMatrix::Ones(1, 1), CMatrix::Ones(1, 1));
  EXPECT_NEAR(f.w(0, 0).real(), c1, 1e-15);
  EXPECT_NEAR(f.w(0, 1).real(), c2, 1e-15);
  const LmmseFilter g = lmmse(make_scalar_model(1, 1, 1.0));
  EXPECT_NEAR(std::abs(g.w(0, 0) - c1), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(g.w(0, 1) - c2), 0.0, 1e-12);
}

TEST(FilterClosedForm, RejectsNonOrthonormalMatrices) {
  const LgoParams p{2, 1, 2, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0};
  RngStream rng(110, 0);
  MixingMatrices mm = make_lgo_matrices(p, rng);
  MixingMatrices bad_h = mm;
  bad_h.h(0, 0) += 1e-3;
  EXPECT_THROW(filter_closed_form(p, bad_h.h, bad_h.g), AssumptionViolation);
  MixingMatrices bad_g = mm;
  bad_g.g.bottomRows(2) = std::sqrt(p.rho_q) * random_unitary(2, rng);
  EXPECT_THROW(filter_closed_form(p, bad_g.h, bad_g.g), AssumptionViolation);
  EXPECT_THROW(filter_closed_form(p, mm.h.topRows(1), mm.g), DimensionError);
}
