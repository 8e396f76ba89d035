#ifndef MIXRES_ALLOCATION_HPP
#define MIXRES_ALLOCATION_HPP

// Choice of how many analog (b-bit) and 1-bit measurement blocks to collect
// under a normalized ADC power budget
//
//   2^b M n_a + 2 M n_q <= p_max_norm.
//
// The MSE only decreases with n_q, so the optimum sits on the max-power
// frontier and a one-dimensional search over n_a suffices.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "mixres/core.hpp"
#include "mixres/lgo.hpp"
#include "mixres/lmmse.hpp"
#include "mixres/model.hpp"
#include "mixres/parallel.hpp"
#include "mixres/rng.hpp"

namespace mixres {

struct PowerBudget {
  int bits = 6;
  double p_max_norm = 0.0;
};

struct TracePoint {
  int n_a = 0;
  int n_q = 0;
  double dither_var = 0.0;
  double mse = 0.0;
};

struct AllocationResult {
  int n_a_star = 0;
  int n_q_star = 0;
  double dither_var_star = 0.0;
  double mse_star = 0.0;
  bool feasible = true;
  std::vector<TracePoint> trace;
};

enum class DitherMode { None, QuantizedOnly, Both };

struct DitherScheme {
  DitherMode mode = DitherMode::QuantizedOnly;
  double grid_max = 2.0;
  double grid_step = 0.1;
};

/// Limits for the exhaustive reference solver.
inline constexpr std::int64_t kExhaustiveMaxPairs = 10000;
inline constexpr Index kExhaustiveMaxRows = 2000;

inline void validate(const PowerBudget& b) {
  detail::require(b.bits >= 1 && b.bits <= 30, "PowerBudget: bits must be in [1, 30]");
  detail::require(std::isfinite(b.p_max_norm) && b.p_max_norm > 0.0,
                  "PowerBudget: p_max_norm must be > 0");
}

inline void validate(const DitherScheme& s) {
  detail::require(std::isfinite(s.grid_max) && s.grid_max >= 0.0,
                  "DitherScheme: grid_max must be >= 0");
  detail::require(std::isfinite(s.grid_step) && s.grid_step > 0.0,
                  "DitherScheme: grid_step must be > 0");
  if (s.mode != DitherMode::None) {
    detail::require(s.grid_step <= s.grid_max, "DitherScheme: grid_step must be <= grid_max");
  }
}

/// Cost of one analog block of M samples.
inline double analog_cost(int m, const PowerBudget& b) {
  return std::ldexp(static_cast<double>(m), b.bits);
}

inline double quantized_cost(int m) { return 2.0 * m; }

inline bool budget_feasible(int m, const PowerBudget& b) {
  validate(b);
  return b.p_max_norm >= std::min(analog_cost(m, b), quantized_cost(m));
}

/// Largest n_a the budget allows.
inline int max_na(int m, const PowerBudget& b) {
  detail::require(m >= 1, "max_na: M must be >= 1");
  validate(b);
  return static_cast<int>(std::floor(b.p_max_norm / analog_cost(m, b)));
}

/// {0, 1, ..., max_na}
inline std::vector<int> na_range(int m, const PowerBudget& b) {
  const int top = max_na(m, b);
  std::vector<int> out(static_cast<std::size_t>(top) + 1);
  for (int i = 0; i <= top; ++i) out[static_cast<std::size_t>(i)] = i;
  return out;
}

/// n_q that spends the power left over after n_a analog blocks.
inline int max_nq(int n_a, int m, const PowerBudget& b) {
  const int top = max_na(m, b);
  if (n_a < 0 || n_a > top) {
    throw std::invalid_argument("max_nq: n_a = " + std::to_string(n_a) + " outside [0, " +
                                std::to_string(top) + "]");
  }
  const double rest = b.p_max_norm - analog_cost(m, b) * n_a;
  return static_cast<int>(std::floor(rest / quantized_cost(m)));
}

namespace detail {

inline double point_mse(LgoParams p, int n_a, int n_q) {
  p.n_a = n_a;
  p.n_q = n_q;
  return mse_closed_form(p).value;
}

inline AllocationResult empty_allocation(int m) {
  AllocationResult r;
  r.feasible = false;
  r.mse_star = m;
  r.trace.push_back({0, 0, 0.0, static_cast<double>(m)});
  return r;
}

/// (mse, dither, n_a, n_q) lexicographic order.
inline bool better(const TracePoint& a, const TracePoint& b) {
  return std::tie(a.mse, a.dither_var, a.n_a, a.n_q) <
         std::tie(b.mse, b.dither_var, b.n_a, b.n_q);
}

inline void take_best(AllocationResult& r) {
  const TracePoint* best = nullptr;
  for (const auto& t : r.trace) {
    if (best == nullptr || better(t, *best)) best = &t;
  }
  r.n_a_star = best->n_a;
  r.n_q_star = best->n_q;
  r.dither_var_star = best->dither_var;
  r.mse_star = best->mse;
}

}  // namespace detail

/// One-dimensional search along the max-power frontier using the closed-form
/// MSE. params_base supplies M, rho_a, rho_q and the noise variances; its
/// block counts are ignored and its dither variances must be zero.
inline AllocationResult allocate(const LgoParams& params_base, const PowerBudget& budget) {
  validate(params_base);
  validate(budget);
  detail::require(params_base.var_da == 0.0 && params_base.var_dq == 0.0,
                  "allocate: dither variances must be 0 (use allocate_with_dither)");
  const int m = params_base.m;
  if (!budget_feasible(m, budget)) return detail::empty_allocation(m);

  AllocationResult r;
  for (int n_a : na_range(m, budget)) {
    const int n_q = max_nq(n_a, m, budget);
    r.trace.push_back({n_a, n_q, 0.0, detail::point_mse(params_base, n_a, n_q)});
  }
  detail::take_best(r);
  return r;
}

struct ExhaustiveOptions {
  std::uint64_t seed = 1;
  int threads = 1;
};

/// Reference solver: every feasible (n_a, n_q), each evaluated with the
/// general matrix LMMSE on LGO matrices. One set of matrices of the largest
/// size is drawn and its leading rows are used for every pair.
inline AllocationResult allocate_exhaustive(const LgoParams& params_base,
                                            const PowerBudget& budget,
                                            const ExhaustiveOptions& opts = {}) {
  validate(params_base);
  validate(budget);
  const int m = params_base.m;
  if (!budget_feasible(m, budget)) return detail::empty_allocation(m);

  const int top = max_na(m, budget);
  std::vector<TracePoint> pairs;
  Index rows = 0;
  std::int64_t count = 0;
  for (int n_a = 0; n_a <= top; ++n_a) {
    const int nq_top = max_nq(n_a, m, budget);
    count += nq_top + 1;
    rows = std::max(rows, Index{m} * (n_a + nq_top));
    if (count > kExhaustiveMaxPairs) break;
  }
  if (count > kExhaustiveMaxPairs || rows > kExhaustiveMaxRows) {
    throw InstanceTooLarge("allocate_exhaustive: feasible grid has more than " +
                           std::to_string(kExhaustiveMaxPairs) + " pairs or " +
                           std::to_string(kExhaustiveMaxRows) + " rows");
  }
  for (int n_a = 0; n_a <= top; ++n_a) {
    const int nq_top = max_nq(n_a, m, budget);
    for (int n_q = 0; n_q <= nq_top; ++n_q) pairs.push_back({n_a, n_q, 0.0, 0.0});
  }

  LgoParams full = params_base;
  full.n_a = top;
  full.n_q = max_nq(0, m, budget);
  RngStream rng(opts.seed, 0);
  const MixingMatrices mats = make_lgo_matrices(full, rng);

  parallel_for(static_cast<Index>(pairs.size()), opts.threads, [&](Index i) {
    TracePoint& t = pairs[static_cast<std::size_t>(i)];
    if (t.n_a == 0 && t.n_q == 0) {
      t.mse = m;
      return;
    }
    LgoParams p = params_base;
    p.n_a = t.n_a;
    p.n_q = t.n_q;
    MixingMatrices sub{mats.h.topRows(p.n_analog()), mats.g.topRows(p.n_quantized())};
    t.mse = lmmse_mse(make_model(p, std::move(sub)));
  });

  AllocationResult r;
  r.trace = std::move(pairs);
  detail::take_best(r);
  return r;
}

/// {0, step, 2 step, ..., <= grid_max}; {0} for mode None.
inline std::vector<double> dither_grid(const DitherScheme& s) {
  validate(s);
  if (s.mode == DitherMode::None) return {0.0};
  const auto n = static_cast<int>(std::floor(s.grid_max / s.grid_step + 1e-9));
  std::vector<double> out(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) out[static_cast<std::size_t>(k)] = k * s.grid_step;
  return out;
}

inline LgoParams with_dither(LgoParams p, DitherMode mode, double var_d) {
  p.var_da = mode == DitherMode::Both ? var_d : 0.0;
  p.var_dq = mode == DitherMode::None ? 0.0 : var_d;
  return p;
}

/// Frontier search with an inner grid search over the dither variance.
inline AllocationResult allocate_with_dither(const LgoParams& params_base,
                                             const PowerBudget& budget,
                                             const DitherScheme& scheme, int threads = 1) {
  validate(params_base);
  validate(budget);
  validate(scheme);
  const int m = params_base.m;
  if (!budget_feasible(m, budget)) return detail::empty_allocation(m);

  const std::vector<int> range = na_range(m, budget);
  const std::vector<double> grid = dither_grid(scheme);
  AllocationResult r;
  r.trace.resize(range.size() * grid.size());
  parallel_for(static_cast<Index>(range.size()), threads, [&](Index i) {
    const int n_a = range[static_cast<std::size_t>(i)];
    const int n_q = max_nq(n_a, m, budget);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const LgoParams p = with_dither(params_base, scheme.mode, grid[k]);
      r.trace[static_cast<std::size_t>(i) * grid.size() + k] = {
          n_a, n_q, grid[k], detail::point_mse(p, n_a, n_q)};
    }
  });
  detail::take_best(r);
  return r;
}

struct NoiselessPolicy {
  enum class Option { MixedMaxPower, AllAnalog };
  Option option = Option::AllAnalog;
  int n_a = 0;
  int n_q = 0;
};

/// Closed-form allocation rule when the quantized path is noiseless.
/// AllAnalog spends everything on n_a_max analog blocks, with any leftover too
/// small for a quantized block; MixedMaxPower keeps some quantized blocks.
inline NoiselessPolicy noiseless_quantized_policy(int m, const PowerBudget& budget, double rho_a,
                                                  double var_a) {
  detail::require(std::isfinite(rho_a) && rho_a > 0.0, "noiseless_quantized_policy: rho_a > 0");
  detail::require(detail::nonneg_finite(var_a), "noiseless_quantized_policy: var_a >= 0");
  using Option = NoiselessPolicy::Option;
  const int n_max = max_na(m, budget);
  const double residual = budget.p_max_norm - analog_cost(m, budget) * n_max;
  if (residual >= quantized_cost(m)) {
    return {Option::MixedMaxPower, n_max, max_nq(n_max, m, budget)};
  }
  if (n_max == 0 || var_a == 0.0) return {Option::AllAnalog, n_max, 0};

  constexpr double pi = std::numbers::pi;
  const double r = rho_a;
  const double s = var_a;
  const double lhs = ((pi - 2.0) * r * r - 2.0 * r * s) * n_max;
  const double rhs = 2.0 * s * s - pi * r * s + (pi - 2.0) * r * r;
  if (lhs > rhs) return {Option::AllAnalog, n_max, 0};
  return {Option::MixedMaxPower, n_max - 1, max_nq(n_max - 1, m, budget)};
}

}  // namespace mixres

#endif  // MIXRES_ALLOCATION_HPP
