#include <cmath>

#include <gtest/gtest.h>

#include "mixres/allocation.hpp"

using namespace mixres;

namespace {

LgoParams base(int m, double var, double rho = 1.0) {
  LgoParams p;
  p.m = m;
  p.rho_a = p.rho_q = rho;
  p.var_a = p.var_q = var;
  return p;
}

/// Frontier search written out directly from the closed forms.
std::pair<int, int> brute_frontier(const LgoParams& b, const PowerBudget& budget) {
  const double ca = std::ldexp(1.0, budget.bits) * b.m;
  const double cq = 2.0 * b.m;
  int best_a = 0, best_q = 0;
  double best = INFINITY;
  for (int n_a = 0; n_a * ca <= budget.p_max_norm; ++n_a) {
    const int n_q = static_cast<int>((budget.p_max_norm - n_a * ca) / cq);
    LgoParams p = b;
    p.n_a = n_a;
    p.n_q = n_q;
    const double v = mse_closed_form(p).value;
    if (v < best) {
      best = v;
      best_a = n_a;
      best_q = n_q;
    }
  }
  return {best_a, best_q};
}

}  // namespace

TEST(Budget, NaRange) {
  EXPECT_EQ(na_range(10, {6, 12800}).size(), 21u);
  EXPECT_EQ(na_range(10, {6, 12800}).back(), 20);
  EXPECT_EQ(na_range(5, {2, 100}), (std::vector<int>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(na_range(5, {2, 19.5}), (std::vector<int>{0}));
}

TEST(Budget, MaxNq) {
  EXPECT_EQ(max_nq(3, 5, {2, 100}), 4);
  EXPECT_EQ(max_nq(0, 10, {6, 12800}), 640);
  EXPECT_EQ(max_nq(20, 10, {6, 12800}), 0);
  EXPECT_EQ(max_nq(5, 5, {2, 109}), 0);
  EXPECT_THROW(max_nq(6, 5, {2, 100}), std::invalid_argument);
  EXPECT_THROW(max_nq(-1, 5, {2, 100}), std::invalid_argument);
}

TEST(Budget, Validation) {
  EXPECT_THROW(na_range(2, {0, 10}), std::invalid_argument);
  EXPECT_THROW(na_range(2, {4, -1}), std::invalid_argument);
  EXPECT_THROW(validate(DitherScheme{DitherMode::Both, 0.1, 0.2}), std::invalid_argument);
  EXPECT_NO_THROW(validate(DitherScheme{DitherMode::None, 0.0, 0.2}));
}

TEST(Allocate, LowNoiseIsAllAnalog) {
  const PowerBudget b{6, 12800};
  const AllocationResult r = allocate(base(10, 0.1), b);
  EXPECT_EQ(r.n_a_star, 20);
  EXPECT_EQ(r.n_q_star, max_nq(20, 10, b));
  EXPECT_NEAR(r.mse_star, mse_pure_analog(10, 20, 1.0, 0.1), 1e-12);
  EXPECT_EQ(r.trace.size(), 21u);
}

TEST(Allocate, HighNoiseIsAllQuantized) {
  const AllocationResult r = allocate(base(10, 3.0), {6, 12800});
  EXPECT_EQ(r.n_a_star, 0);
  EXPECT_EQ(r.n_q_star, 640);
}

TEST(Allocate, NoiselessAnalogNeedsOneBlock) {
  LgoParams p = base(4, 1.0);
  p.var_a = 0.0;
  const AllocationResult r = allocate(p, {4, 1000});
  EXPECT_EQ(r.n_a_star, 1);
  EXPECT_EQ(r.mse_star, 0.0);
}

TEST(Allocate, InfeasibleBudgetIsEmpty) {
  const AllocationResult r = allocate(base(5, 1.0), {3, 9.0});
  EXPECT_FALSE(r.feasible);
  EXPECT_EQ(r.n_a_star, 0);
  EXPECT_EQ(r.n_q_star, 0);
  EXPECT_EQ(r.mse_star, 5.0);
  const AllocationResult e = allocate_exhaustive(base(5, 1.0), {3, 9.0});
  EXPECT_EQ(e.n_a_star + e.n_q_star, 0);
  EXPECT_EQ(e.mse_star, 5.0);
}

TEST(Allocate, RejectsDither) {
  LgoParams p = base(2, 1.0);
  p.var_dq = 0.1;
  EXPECT_THROW(allocate(p, {4, 200}), std::invalid_argument);
}

TEST(Allocate, FrontierAndBudgetInvariants) {
  RngStream rng(201, 0);
  for (int t = 0; t < 500; ++t) {
    const int m = rng.uniform_int(1, 12);
    const PowerBudget b{rng.uniform_int(1, 8), rng.log_uniform(1.0, 1e5)};
    LgoParams p = base(m, rng.log_uniform(0.01, 20.0), rng.log_uniform(0.1, 10.0));
    p.rho_q = rng.log_uniform(0.1, 10.0);
    p.var_q = rng.log_uniform(0.01, 20.0);
    const AllocationResult r = allocate(p, b);
    if (!r.feasible) continue;
    const double ca = std::ldexp(1.0, b.bits) * m;
    EXPECT_EQ(r.n_q_star, max_nq(r.n_a_star, m, b));
    const double used = ca * r.n_a_star + 2.0 * m * r.n_q_star;
    EXPECT_LE(used, b.p_max_norm);
    EXPECT_LT(b.p_max_norm - used, 2.0 * m);
    double min_trace = INFINITY;
    for (const auto& pt : r.trace) min_trace = std::min(min_trace, pt.mse);
    EXPECT_EQ(r.mse_star, min_trace);
    EXPECT_EQ(std::make_pair(r.n_a_star, r.n_q_star), brute_frontier(p, b));
  }
}

TEST(AllocateExhaustive, AgreesWithFrontierSearch) {
  RngStream rng(202, 0);
  for (int t = 0; t < 25; ++t) {
    const int m = rng.uniform_int(1, 3);
    const int bits = rng.uniform_int(1, 4);
    const PowerBudget b{bits, rng.uniform(2.0 * m, 40.0 * m)};
    LgoParams p = base(m, rng.log_uniform(0.05, 10.0), rng.log_uniform(0.2, 5.0));
    p.rho_q = rng.log_uniform(0.2, 5.0);
    p.var_q = rng.log_uniform(0.05, 10.0);
    const AllocationResult fast = allocate(p, b);
    const AllocationResult ref = allocate_exhaustive(p, b, {static_cast<std::uint64_t>(t) + 1, 1});
    EXPECT_NEAR(fast.mse_star, ref.mse_star, 1e-12);

    // No interior point beats the frontier point with the same n_a.
    for (const auto& pt : ref.trace) {
      LgoParams q = p;
      q.n_a = pt.n_a;
      q.n_q = max_nq(pt.n_a, m, b);
      EXPECT_GE(pt.mse, mse_closed_form(q).value - 1e-12);
    }
  }
}

TEST(AllocateExhaustive, RefusesLargeInstances) {
  EXPECT_THROW(allocate_exhaustive(base(10, 1.0), {6, 12800}), InstanceTooLarge);
}

TEST(AllocateExhaustive, ThreadCountDoesNotChangeResult) {
  const LgoParams p = base(2, 0.7);
  const PowerBudget b{3, 120};
  const AllocationResult a = allocate_exhaustive(p, b, {5, 1});
  const AllocationResult c = allocate_exhaustive(p, b, {5, 3});
  ASSERT_EQ(a.trace.size(), c.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].mse, c.trace[i].mse);
}

TEST(DitherGrid, DefaultGrid) {
  const std::vector<double> g = dither_grid(DitherScheme{});
  ASSERT_EQ(g.size(), 21u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_NEAR(g.back(), 2.0, 1e-15);
  EXPECT_EQ(dither_grid({DitherMode::None, 2.0, 0.1}), std::vector<double>{0.0});
}

TEST(AllocateWithDither, ModeNoneEqualsAllocate) {
  RngStream rng(203, 0);
  for (int t = 0; t < 50; ++t) {
    const LgoParams p = base(rng.uniform_int(1, 10), rng.log_uniform(0.05, 10.0));
    const PowerBudget b{6, rng.log_uniform(100.0, 20000.0)};
    const AllocationResult a = allocate(p, b);
    const AllocationResult d = allocate_with_dither(p, b, {DitherMode::None, 2.0, 0.1});
    EXPECT_EQ(a.n_a_star, d.n_a_star);
    EXPECT_EQ(a.n_q_star, d.n_q_star);
    EXPECT_EQ(a.mse_star, d.mse_star);
    EXPECT_EQ(d.dither_var_star, 0.0);
  }
}

TEST(AllocateWithDither, NeverWorseThanUndithered) {
  RngStream rng(204, 0);
  for (int t = 0; t < 100; ++t) {
    const LgoParams p = base(rng.uniform_int(1, 10), rng.log_uniform(0.05, 10.0));
    const PowerBudget b{6, rng.log_uniform(100.0, 20000.0)};
    const AllocationResult a = allocate(p, b);
    const AllocationResult d = allocate_with_dither(p, b, {});
    EXPECT_LE(d.mse_star, a.mse_star);
    EXPECT_EQ(d.n_q_star, max_nq(d.n_a_star, p.m, b));
  }
}

TEST(AllocateWithDither, BothModeDominatedByQuantizedOnly) {
  RngStream rng(205, 0);
  for (int t = 0; t < 100; ++t) {
    const LgoParams p = base(rng.uniform_int(1, 10), rng.log_uniform(0.05, 10.0));
    const PowerBudget b{6, rng.log_uniform(100.0, 20000.0)};
    const AllocationResult both = allocate_with_dither(p, b, {DitherMode::Both, 2.0, 0.1});
    LgoParams q = p;
    q.n_a = both.n_a_star;
    q.n_q = both.n_q_star;
    q.var_dq = both.dither_var_star;
    EXPECT_LE(mse_closed_form(q).value, both.mse_star);
  }
}

TEST(AllocateWithDither, MiddleNoiseImproves) {
  const AllocationResult a = allocate(base(10, 1.0), {6, 12800});
  const AllocationResult d = allocate_with_dither(base(10, 1.0), {6, 12800}, {});
  EXPECT_LT(d.mse_star, a.mse_star);
  EXPECT_GT(d.dither_var_star, 0.0);
}

TEST(AllocateWithDither, TieBreakPrefersLessDither) {
  // Noiseless analog data gives zero MSE for every n_a >= 1 and every dither
  // level, so only the tie-break decides.
  LgoParams p = base(2, 1.0);
  p.var_a = 0.0;
  const AllocationResult d = allocate_with_dither(p, {3, 70.0}, {});
  EXPECT_EQ(d.mse_star, 0.0);
  EXPECT_EQ(d.n_a_star, 1);
  EXPECT_EQ(d.n_q_star, max_nq(1, 2, {3, 70.0}));
  EXPECT_EQ(d.dither_var_star, 0.0);
}

TEST(AllocateWithDither, ThreadCountDoesNotChangeResult) {
  const LgoParams p = base(10, 0.8);
  const PowerBudget b{6, 12800};
  const AllocationResult a = allocate_with_dither(p, b, {}, 1);
  const AllocationResult c = allocate_with_dither(p, b, {}, 4);
  EXPECT_EQ(a.mse_star, c.mse_star);
  EXPECT_EQ(a.dither_var_star, c.dither_var_star);
  EXPECT_EQ(a.n_a_star, c.n_a_star);
}

TEST(NoiselessPolicy, ResidualPowerKeepsQuantized) {
  const PowerBudget b{4, 16.0 * 3 * 5 + 2.0 * 3 * 2 + 1.0};
  const NoiselessPolicy pol = noiseless_quantized_policy(3, b, 1.0, 1.0);
  EXPECT_EQ(pol.option, NoiselessPolicy::Option::MixedMaxPower);
  EXPECT_EQ(pol.n_a, 5);
  EXPECT_EQ(pol.n_q, 2);
}

TEST(NoiselessPolicy, InequalityMatchesDirectComparison) {
  RngStream rng(206, 0);
  int all_analog = 0, mixed = 0;
  for (int t = 0; t < 3000; ++t) {
    const int m = rng.uniform_int(1, 10);
    const int bits = rng.uniform_int(1, 8);
    const int n_max = rng.uniform_int(1, 40);
    const double ca = std::ldexp(1.0, bits) * m;
    const PowerBudget b{bits, ca * n_max + rng.uniform(0.0, std::min(ca, 2.0 * m) * 0.999)};
    const double rho = rng.log_uniform(0.05, 20.0);
    const double var = rng.log_uniform(0.01, 20.0);
    const NoiselessPolicy pol = noiseless_quantized_policy(m, b, rho, var);
    const double analog = mse_pure_analog(m, n_max, rho, var);
    const double limit = max_nq(n_max - 1, m, b) >= 1
                             ? mse_noiseless_quantized_limit(m, n_max - 1, rho, var)
                             : mse_pure_analog(m, n_max - 1, rho, var);
    if (std::abs(analog - limit) < 1e-12 * m) continue;
    if (analog < limit) {
      EXPECT_EQ(pol.option, NoiselessPolicy::Option::AllAnalog);
      ++all_analog;
    } else {
      EXPECT_EQ(pol.option, NoiselessPolicy::Option::MixedMaxPower);
      EXPECT_EQ(pol.n_a, n_max - 1);
      ++mixed;
    }
  }
  EXPECT_GT(all_analog, 100);
  EXPECT_GT(mixed, 100);
}
