#ifndef MIXRES_SIMULATE_HPP
#define MIXRES_SIMULATE_HPP

// Monte-Carlo validation of the analytic MSE, noise sweeps over fixed and
// optimized allocations, and the closed-form vs. matrix-solve timing study.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "mixres/allocation.hpp"
#include "mixres/core.hpp"
#include "mixres/lgo.hpp"
#include "mixres/lmmse.hpp"
#include "mixres/model.hpp"
#include "mixres/parallel.hpp"
#include "mixres/rng.hpp"

namespace mixres {

/// Trials per random stream. Fixed so that results do not depend on the
/// number of workers.
inline constexpr std::int64_t kTrialsPerChunk = 4096;

struct SimConfig {
  std::int64_t trials = 100000;
  std::uint64_t seed = 1;
  /// b-bit emulation of the analog path; ideal analog when empty.
  std::optional<QuantizerSpec> analog_quantizer;
  int threads = 1;
};

struct SimResult {
  double empirical_mse = 0.0;
  double std_error = 0.0;
  double analytic_mse = 0.0;
  std::int64_t trials_run = 0;
};

namespace detail {

/// Running mean and sum of squared deviations; merging is order-sensitive
/// only through floating point, so merges are always done in chunk order.
struct Moments {
  std::int64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }

  void merge(const Moments& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double total = static_cast<double>(n + o.n);
    const double d = o.mean - mean;
    mean += d * static_cast<double>(o.n) / total;
    m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / total;
    n += o.n;
  }
};

}  // namespace detail

/// Draws theta and the measurements, applies the filter and averages the
/// squared error. Stream ids are stream_base * 2^32 + chunk index.
inline SimResult run_monte_carlo(const MixedModel& model, const LmmseFilter& filter,
                                 const SimConfig& cfg, std::uint64_t stream_base = 0) {
  validate(model);
  detail::require(cfg.trials >= 1, "SimConfig: trials must be >= 1");
  if (cfg.analog_quantizer) validate(*cfg.analog_quantizer);
  if (filter.w.rows() != model.dim() || filter.w.cols() != model.n_total()) {
    throw DimensionError("run_monte_carlo: filter does not match the model dimensions");
  }

  const GaussianSampler prior(model.sigma_theta);
  const std::int64_t chunks = (cfg.trials + kTrialsPerChunk - 1) / kTrialsPerChunk;
  std::vector<detail::Moments> partial(static_cast<std::size_t>(chunks));

  parallel_for(chunks, cfg.threads, [&](Index c) {
    RngStream rng(cfg.seed, (stream_base << 32) + static_cast<std::uint64_t>(c));
    const std::int64_t begin = c * kTrialsPerChunk;
    const std::int64_t end = std::min(cfg.trials, begin + kTrialsPerChunk);
    detail::Moments& acc = partial[static_cast<std::size_t>(c)];
    for (std::int64_t t = begin; t < end; ++t) {
      const CVector theta = prior.draw(rng);
      Measurements x = sample_measurements(model, theta, rng);
      if (cfg.analog_quantizer) {
        for (Index i = 0; i < x.analog.size(); ++i) {
          x.analog[i] = quantize_bbit(x.analog[i], *cfg.analog_quantizer);
        }
      }
      acc.add((estimate(filter, x) - theta).squaredNorm());
    }
  });

  detail::Moments total;
  for (const auto& p : partial) total.merge(p);
  SimResult r;
  r.trials_run = total.n;
  r.empirical_mse = total.mean;
  const double var = total.n > 1 ? total.m2 / static_cast<double>(total.n - 1) : 0.0;
  r.std_error = std::sqrt(var / static_cast<double>(total.n));
  r.analytic_mse = filter.mse;
  return r;
}

// ---------------------------------------------------------------------------
// Scenarios

enum class ScenarioKind { Scalar, Mimo, Custom };

/// Where the measurement blocks come from. Scalar and MIMO scenarios satisfy
/// the orthonormal-block assumptions; a custom scenario supplies one analog
/// block H and one quantized block G that are repeated n_a and n_q times.
struct Scenario {
  ScenarioKind kind = ScenarioKind::Scalar;
  int users = 1;
  double rho = 1.0;
  PilotKind pilot = PilotKind::RandomUnitary;
  std::uint64_t pilot_seed = 1;
  MixedModel custom;
};

inline int scenario_dim(const Scenario& s) {
  switch (s.kind) {
    case ScenarioKind::Scalar:
      return 1;
    case ScenarioKind::Mimo:
      return s.users;
    case ScenarioKind::Custom:
      return static_cast<int>(s.custom.dim());
  }
  return 1;
}

inline bool scenario_is_lgo(const Scenario& s) { return s.kind != ScenarioKind::Custom; }

/// Closed-form parameters for an orthonormal-block scenario.
inline LgoParams scenario_params(const Scenario& s, int n_a, int n_q, double var) {
  LgoParams p;
  p.m = scenario_dim(s);
  p.n_a = n_a;
  p.n_q = n_q;
  p.rho_a = p.rho_q = s.rho;
  p.var_a = p.var_q = var;
  return p;
}

inline MixedModel build_model(const Scenario& s, int n_a, int n_q, double var) {
  switch (s.kind) {
    case ScenarioKind::Scalar: {
      RngStream unused(s.pilot_seed, 0);
      return make_mimo_model(1, n_a, n_q, s.rho, var, PilotKind::Dft, unused);
    }
    case ScenarioKind::Mimo: {
      RngStream rng(s.pilot_seed, 0);
      return make_mimo_model(s.users, n_a, n_q, s.rho, var, s.pilot, rng);
    }
    case ScenarioKind::Custom: {
      detail::require(n_a >= 0 && n_q >= 0 && n_a + n_q >= 1,
                      "build_model: need at least one measurement block");
      MixedModel m = s.custom;
      m.h = repeat_blocks(s.custom.h, n_a);
      m.g = repeat_blocks(s.custom.g, n_q);
      m.var_a = m.var_q = var;
      validate(m);
      return m;
    }
  }
  return {};
}

/// Filter and analytic MSE: closed form for orthonormal-block scenarios,
/// matrix solve otherwise.
inline LmmseFilter build_filter(const Scenario& s, const MixedModel& model, int n_a, int n_q,
                                double var) {
  if (scenario_is_lgo(s)) return filter_closed_form(scenario_params(s, n_a, n_q, var), model.h, model.g);
  return lmmse(model);
}

inline double analytic_mse(const Scenario& s, int n_a, int n_q, double var) {
  if (scenario_is_lgo(s)) return mse_closed_form(scenario_params(s, n_a, n_q, var)).value;
  if (n_a == 0 && n_q == 0) return s.custom.sigma_theta.trace().real();
  return lmmse_mse(build_model(s, n_a, n_q, var));
}

struct MseRow {
  double sigma2 = 0.0;
  int n_a = 0;
  int n_q = 0;
  double mse_analytic = 0.0;
  std::optional<SimResult> empirical;
};

/// Analytic MSE on every (sigma^2, allocation) cell, with sigma^2 applied to
/// both paths. When `empirical` is set each cell is also simulated, cell i
/// using stream base i + 1.
inline std::vector<MseRow> sweep_mse_vs_noise(const Scenario& scenario,
                                              const std::vector<double>& sigma_grid,
                                              const std::vector<std::pair<int, int>>& allocations,
                                              const std::optional<SimConfig>& empirical = {}) {
  for (double v : sigma_grid) {
    detail::require(detail::nonneg_finite(v), "sweep_mse_vs_noise: sigma^2 must be >= 0");
  }
  for (const auto& [a, q] : allocations) {
    detail::require(a >= 0 && q >= 0, "sweep_mse_vs_noise: block counts must be >= 0");
  }
  std::vector<MseRow> rows;
  rows.reserve(sigma_grid.size() * allocations.size());
  std::uint64_t cell = 0;
  for (double v : sigma_grid) {
    for (const auto& [n_a, n_q] : allocations) {
      MseRow row{v, n_a, n_q, analytic_mse(scenario, n_a, n_q, v), std::nullopt};
      ++cell;
      if (empirical && n_a + n_q > 0) {
        const MixedModel model = build_model(scenario, n_a, n_q, v);
        const LmmseFilter f = build_filter(scenario, model, n_a, n_q, v);
        row.empirical = run_monte_carlo(model, f, *empirical, cell);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

struct AllocationRow {
  double sigma2 = 0.0;
  bool feasible = true;
  int n_a_max = 0;
  double mse_all_analog = 0.0;
  double mse_all_quantized = 0.0;
  AllocationResult optimal;
  AllocationResult dithered;
};

/// Per sigma^2: all-analog (n_a_max, 0) and all-quantized (0, max_nq(0))
/// baselines, the optimal undithered allocation and the optimal dithered one.
inline std::vector<AllocationRow> sweep_allocation_vs_noise(int m, const PowerBudget& budget,
                                                            const std::vector<double>& sigma_grid,
                                                            const DitherScheme& scheme,
                                                            double rho = 1.0, int threads = 1) {
  validate(budget);
  validate(scheme);
  std::vector<AllocationRow> rows(sigma_grid.size());
  for (double v : sigma_grid) {
    detail::require(detail::nonneg_finite(v), "sweep_allocation_vs_noise: sigma^2 must be >= 0");
  }
  const bool feasible = budget_feasible(m, budget);
  parallel_for(static_cast<Index>(sigma_grid.size()), threads, [&](Index i) {
    AllocationRow& row = rows[static_cast<std::size_t>(i)];
    LgoParams p;
    p.m = m;
    p.rho_a = p.rho_q = rho;
    p.var_a = p.var_q = sigma_grid[static_cast<std::size_t>(i)];
    row.sigma2 = p.var_a;
    row.feasible = feasible;
    row.optimal = allocate(p, budget);
    row.dithered = allocate_with_dither(p, budget, scheme);
    if (!feasible) {
      row.mse_all_analog = row.mse_all_quantized = m;
      return;
    }
    row.n_a_max = max_na(m, budget);
    row.mse_all_analog = detail::point_mse(p, row.n_a_max, 0);
    row.mse_all_quantized = detail::point_mse(p, 0, max_nq(0, m, budget));
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Timing

struct DurationStats {
  double median_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  int runs = 0;
};

struct BenchOptions {
  int bits = 6;
  double rho = 1.0;
  double var = 1.0;
  int repeats = 10;
  int warmup = 2;
  bool run_direct = true;
  /// Once the direct sweep has used this much time in total, no more
  /// repetitions are started (at least one always runs).
  double direct_time_cap_s = 60.0;
  /// Closed-form sweeps are batched until one measured unit lasts this long.
  double min_unit_ms = 2.0;
  std::uint64_t seed = 1;
};

struct BenchResult {
  int m = 0;
  int n_a_max = 0;
  DurationStats closed_form;
  std::optional<DurationStats> direct;
  int closed_form_batch = 1;
  /// Sum of the MSE over the frontier from each route; they should agree.
  double closed_form_checksum = 0.0;
  double direct_checksum = 0.0;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

inline DurationStats summarize(std::vector<double> samples) {
  DurationStats s;
  s.runs = static_cast<int>(samples.size());
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  s.median_ms = n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  s.min_ms = samples.front();
  s.max_ms = samples.back();
  return s;
}

}  // namespace detail

/// Budget that makes n_a_max the largest affordable analog block count.
inline PowerBudget bench_budget(int m, int n_a_max, int bits) {
  return {bits, std::ldexp(static_cast<double>(m) * n_a_max, bits)};
}

/// Times the full frontier sweep at each (M, n_a_max) using (a) the closed
/// form and (b) the general matrix route at every frontier point.
inline std::vector<BenchResult> bench_runtime(const std::vector<int>& m_list,
                                              const std::vector<int>& n_a_max_list,
                                              const BenchOptions& opts = {}) {
  detail::require(opts.repeats >= 1, "bench: repeats must be >= 1");
  detail::require(opts.warmup >= 0, "bench: warmup must be >= 0");
  std::vector<BenchResult> out;
  for (int m : m_list) {
    for (int n_a_max : n_a_max_list) {
      detail::require(m >= 1 && n_a_max >= 1, "bench: M and n_a_max must be >= 1");
      const PowerBudget budget = bench_budget(m, n_a_max, opts.bits);
      LgoParams base;
      base.m = m;
      base.rho_a = base.rho_q = opts.rho;
      base.var_a = base.var_q = opts.var;

      BenchResult r;
      r.m = m;
      r.n_a_max = n_a_max;

      double checksum = 0.0;
      auto closed_sweep = [&] {
        const AllocationResult a = allocate(base, budget);
        double s = 0.0;
        for (const auto& t : a.trace) s += t.mse;
        checksum = s;
      };
      int batch = 1;
      for (;;) {
        const auto t0 = detail::Clock::now();
        for (int i = 0; i < batch; ++i) closed_sweep();
        if (detail::elapsed_ms(t0) >= opts.min_unit_ms || batch >= (1 << 24)) break;
        batch *= 2;
      }
      for (int w = 0; w < opts.warmup; ++w) {
        for (int i = 0; i < batch; ++i) closed_sweep();
      }
      std::vector<double> samples;
      for (int rep = 0; rep < opts.repeats; ++rep) {
        const auto t0 = detail::Clock::now();
        for (int i = 0; i < batch; ++i) closed_sweep();
        samples.push_back(detail::elapsed_ms(t0) / batch);
      }
      r.closed_form = detail::summarize(std::move(samples));
      r.closed_form_batch = batch;
      r.closed_form_checksum = checksum;

      if (opts.run_direct) {
        LgoParams full = base;
        full.n_a = n_a_max;
        full.n_q = max_nq(0, m, budget);
        RngStream rng(opts.seed, 0);
        const MixingMatrices mats = make_lgo_matrices(full, rng);
        auto direct_sweep = [&] {
          double s = 0.0;
          for (int n_a = 0; n_a <= n_a_max; ++n_a) {
            LgoParams p = base;
            p.n_a = n_a;
            p.n_q = max_nq(n_a, m, budget);
            if (p.n_a + p.n_q == 0) {
              s += m;
              continue;
            }
            MixingMatrices sub{mats.h.topRows(p.n_analog()), mats.g.topRows(p.n_quantized())};
            s += lmmse_mse(make_model(p, std::move(sub)));
          }
          return s;
        };
        const double cap_ms = opts.direct_time_cap_s * 1000.0;
        double spent = 0.0;
        std::vector<double> direct;
        for (int w = 0; w < opts.warmup && spent < cap_ms; ++w) {
          const auto t0 = detail::Clock::now();
          r.direct_checksum = direct_sweep();
          const double ms = detail::elapsed_ms(t0);
          spent += ms;
          // A warm-up that alone exhausts the cap is kept as the only sample.
          if (ms >= cap_ms) direct.push_back(ms);
        }
        for (int rep = 0; rep < opts.repeats && (direct.empty() || spent < cap_ms); ++rep) {
          const auto t0 = detail::Clock::now();
          r.direct_checksum = direct_sweep();
          const double ms = detail::elapsed_ms(t0);
          direct.push_back(ms);
          spent += ms;
        }
        r.direct = detail::summarize(std::move(direct));
      }
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace mixres

#endif  // MIXRES_SIMULATE_HPP
