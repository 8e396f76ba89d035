#ifndef MIXRES_EXPERIMENT_HPP
#define MIXRES_EXPERIMENT_HPP

// Experiment configuration (JSON), the commands behind the command-line tool,
// and CSV/JSON table writers.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mixres/allocation.hpp"
#include "mixres/core.hpp"
#include "mixres/lgo.hpp"
#include "mixres/lmmse.hpp"
#include "mixres/model.hpp"
#include "mixres/simulate.hpp"

namespace mixres {

using Json = nlohmann::ordered_json;

/// Malformed or inconsistent configuration. The message names the key path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration records

using ComplexRows = std::vector<std::vector<std::array<double, 2>>>;

struct CustomModelConfig {
  ComplexRows h;            // one analog block, rows x M
  ComplexRows g;            // one quantized block, rows x M
  ComplexRows sigma_theta;  // M x M; identity when empty
  bool operator==(const CustomModelConfig&) const = default;
};

struct ScenarioConfig {
  std::string kind = "scalar";  // scalar | mimo | custom
  int users = 1;
  double rho = 1.0;
  std::string pilot = "random_unitary";  // random_unitary | dft
  std::optional<CustomModelConfig> custom;
  bool operator==(const ScenarioConfig&) const = default;
};

struct SigmaRange {
  double start = 0.1;
  double stop = 3.0;
  int count = 30;
  std::string spacing = "linear";  // linear | log
  bool operator==(const SigmaRange&) const = default;
};

/// Either an explicit list or a range expanded at run time.
struct SigmaGrid {
  std::vector<double> values;
  std::optional<SigmaRange> range;
  bool operator==(const SigmaGrid&) const = default;
};

struct BudgetConfig {
  int bits = 6;
  std::optional<double> p_max;
  std::optional<int> n_a_max;  // p_max = 2^bits * M * n_a_max
  bool operator==(const BudgetConfig&) const = default;
};

struct DitherConfig {
  std::string mode = "quantized_only";  // none | quantized_only | both
  double grid_max = 2.0;
  double grid_step = 0.1;
  bool operator==(const DitherConfig&) const = default;
};

struct QuantizerConfig {
  int bits = 6;
  double lo = -5.0;
  double hi = 5.0;
  bool operator==(const QuantizerConfig&) const = default;
};

struct SimSection {
  std::int64_t trials = 100000;
  std::optional<QuantizerConfig> analog_quantizer;
  bool empirical = false;
  bool operator==(const SimSection&) const = default;
};

struct BenchSection {
  std::vector<int> m = {1, 3, 10};
  std::vector<int> n_a_max = {5, 10, 20};
  int bits = 6;
  double var = 1.0;
  int repeats = 10;
  int warmup = 2;
  bool direct = true;
  double direct_time_cap_s = 60.0;
  bool operator==(const BenchSection&) const = default;
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  SigmaGrid sigma2;
  std::vector<std::array<int, 2>> allocations;
  BudgetConfig budget;
  DitherConfig dither;
  SimSection sim;
  BenchSection bench;
  bool oracle = false;
  std::optional<std::string> trace_output;
  int threads = 1;
  std::uint64_t seed = 1;
  std::optional<std::string> output;
  std::string format = "csv";
  bool operator==(const ExperimentConfig&) const = default;
};

// ---------------------------------------------------------------------------
// JSON reading with key-path diagnostics

namespace detail {

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

inline std::string join_index(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

[[noreturn]] inline void config_fail(const std::string& path, const std::string& what) {
  throw ConfigError((path.empty() ? std::string("config") : path) + ": " + what);
}

inline double read_double(const Json& j, const std::string& path) {
  if (!j.is_number()) config_fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) config_fail(path, "must be finite");
  return v;
}

inline std::int64_t read_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) config_fail(path, "expected an integer");
  return j.get<std::int64_t>();
}

inline int read_int32(const Json& j, const std::string& path) {
  const std::int64_t v = read_int(j, path);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    config_fail(path, "integer out of range");
  }
  return static_cast<int>(v);
}

inline std::uint64_t read_u64(const Json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) config_fail(path, "must be >= 0");
  config_fail(path, "expected an unsigned integer");
}

inline bool read_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) config_fail(path, "expected true or false");
  return j.get<bool>();
}

inline std::string read_string(const Json& j, const std::string& path) {
  if (!j.is_string()) config_fail(path, "expected a string");
  return j.get<std::string>();
}

inline std::string read_choice(const Json& j, const std::string& path,
                               std::initializer_list<const char*> choices) {
  const std::string s = read_string(j, path);
  std::string list;
  for (const char* c : choices) {
    if (s == c) return s;
    list += list.empty() ? c : std::string(", ") + c;
  }
  config_fail(path, "'" + s + "' is not one of {" + list + "}");
}

/// Walks an object, tracking which keys were consumed so that the remainder
/// can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_fail(path_, "expected an object");
  }

  const Json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return join_path(path_, key); }

  template <typename T, typename Reader>
  void field(const std::string& key, T& out, Reader&& read) {
    if (const Json* v = get(key)) out = read(*v, path(key));
  }

  template <typename T, typename Reader>
  void optional_field(const std::string& key, std::optional<T>& out, Reader&& read) {
    if (const Json* v = get(key)) {
      if (v->is_null()) {
        out.reset();
      } else {
        out = read(*v, path(key));
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) config_fail(path(it.key()), "unknown key");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T, typename Reader>
std::vector<T> read_list(const Json& j, const std::string& path, Reader&& read) {
  if (!j.is_array()) config_fail(path, "expected a list");
  std::vector<T> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read(j[i], join_index(path, i)));
  return out;
}

inline ComplexRows read_complex_rows(const Json& j, const std::string& path) {
  return read_list<std::vector<std::array<double, 2>>>(
      j, path, [](const Json& row, const std::string& rp) {
        return read_list<std::array<double, 2>>(row, rp, [](const Json& e, const std::string& ep) {
          if (e.is_number()) return std::array<double, 2>{read_double(e, ep), 0.0};
          if (!e.is_array() || e.size() != 2) {
            config_fail(ep, "expected a number or a [re, im] pair");
          }
          return std::array<double, 2>{read_double(e[0], ep + "[0]"), read_double(e[1], ep + "[1]")};
        });
      });
}

inline CustomModelConfig read_custom(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  CustomModelConfig c;
  r.field("h", c.h, read_complex_rows);
  r.field("g", c.g, read_complex_rows);
  r.field("sigma_theta", c.sigma_theta, read_complex_rows);
  r.finish();
  return c;
}

inline ScenarioConfig read_scenario(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  ScenarioConfig s;
  r.field("kind", s.kind, [](const Json& v, const std::string& p) {
    return read_choice(v, p, {"scalar", "mimo", "custom"});
  });
  r.field("users", s.users, read_int32);
  r.field("rho", s.rho, read_double);
  r.field("pilot", s.pilot, [](const Json& v, const std::string& p) {
    return read_choice(v, p, {"random_unitary", "dft"});
  });
  r.optional_field("custom", s.custom, read_custom);
  r.finish();
  return s;
}

inline SigmaGrid read_sigma(const Json& j, const std::string& path) {
  SigmaGrid g;
  if (j.is_array()) {
    g.values = read_list<double>(j, path, read_double);
    return g;
  }
  ObjectReader r(j, path);
  SigmaRange range;
  r.field("start", range.start, read_double);
  r.field("stop", range.stop, read_double);
  r.field("count", range.count, read_int32);
  r.field("spacing", range.spacing, [](const Json& v, const std::string& p) {
    return read_choice(v, p, {"linear", "log"});
  });
  r.finish();
  g.range = range;
  return g;
}

inline BudgetConfig read_budget(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  BudgetConfig b;
  r.field("bits", b.bits, read_int32);
  r.optional_field("p_max", b.p_max, read_double);
  r.optional_field("n_a_max", b.n_a_max, read_int32);
  r.finish();
  return b;
}

inline DitherConfig read_dither(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  DitherConfig d;
  r.field("mode", d.mode, [](const Json& v, const std::string& p) {
    return read_choice(v, p, {"none", "quantized_only", "both"});
  });
  r.field("grid_max", d.grid_max, read_double);
  r.field("grid_step", d.grid_step, read_double);
  r.finish();
  return d;
}

inline QuantizerConfig read_quantizer(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  QuantizerConfig q;
  r.field("bits", q.bits, read_int32);
  r.field("lo", q.lo, read_double);
  r.field("hi", q.hi, read_double);
  r.finish();
  return q;
}

inline SimSection read_sim(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  SimSection s;
  r.field("trials", s.trials, read_int);
  r.optional_field("analog_quantizer", s.analog_quantizer, read_quantizer);
  r.field("empirical", s.empirical, read_bool);
  r.finish();
  return s;
}

inline BenchSection read_bench(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  BenchSection b;
  auto ints = [](const Json& v, const std::string& p) { return read_list<int>(v, p, read_int32); };
  r.field("m", b.m, ints);
  r.field("n_a_max", b.n_a_max, ints);
  r.field("bits", b.bits, read_int32);
  r.field("var", b.var, read_double);
  r.field("repeats", b.repeats, read_int32);
  r.field("warmup", b.warmup, read_int32);
  r.field("direct", b.direct, read_bool);
  r.field("direct_time_cap_s", b.direct_time_cap_s, read_double);
  r.finish();
  return b;
}

}  // namespace detail

/// Structural checks that do not depend on the command.
inline void check_config(const ExperimentConfig& c) {
  using detail::config_fail;
  const auto& s = c.scenario;
  if (s.users < 1) config_fail("scenario.users", "must be >= 1");
  if (!(s.rho > 0.0)) config_fail("scenario.rho", "must be > 0");
  if (s.kind == "custom" && !s.custom) config_fail("scenario.custom", "required for kind custom");
  if (s.kind != "custom" && s.custom) config_fail("scenario.custom", "only allowed for kind custom");
  for (std::size_t i = 0; i < c.sigma2.values.size(); ++i) {
    if (c.sigma2.values[i] < 0.0) config_fail(detail::join_index("sigma2", i), "must be >= 0");
  }
  if (const auto& r = c.sigma2.range) {
    if (r->count < 1) config_fail("sigma2.count", "must be >= 1");
    if (r->start < 0.0) config_fail("sigma2.start", "must be >= 0");
    if (r->stop < r->start) config_fail("sigma2.stop", "must be >= start");
    if (r->spacing == "log" && !(r->start > 0.0)) {
      config_fail("sigma2.start", "must be > 0 for log spacing");
    }
  }
  for (std::size_t i = 0; i < c.allocations.size(); ++i) {
    if (c.allocations[i][0] < 0 || c.allocations[i][1] < 0) {
      config_fail(detail::join_index("allocations", i), "block counts must be >= 0");
    }
  }
  if (c.budget.bits < 1 || c.budget.bits > 30) config_fail("budget.bits", "must be in [1, 30]");
  if (c.budget.p_max && c.budget.n_a_max) {
    config_fail("budget", "give either p_max or n_a_max, not both");
  }
  if (c.budget.p_max && !(*c.budget.p_max > 0.0)) config_fail("budget.p_max", "must be > 0");
  if (c.budget.n_a_max && *c.budget.n_a_max < 0) config_fail("budget.n_a_max", "must be >= 0");
  if (!(c.dither.grid_step > 0.0)) config_fail("dither.grid_step", "must be > 0");
  if (c.dither.grid_max < 0.0) config_fail("dither.grid_max", "must be >= 0");
  if (c.dither.mode != "none" && c.dither.grid_step > c.dither.grid_max) {
    config_fail("dither.grid_step", "must be <= grid_max");
  }
  if (c.sim.trials < 1) config_fail("sim.trials", "must be >= 1");
  if (const auto& q = c.sim.analog_quantizer) {
    if (q->bits < 1 || q->bits > 30) config_fail("sim.analog_quantizer.bits", "must be in [1, 30]");
    if (!(q->lo < q->hi)) config_fail("sim.analog_quantizer", "lo < hi required");
  }
  for (std::size_t i = 0; i < c.bench.m.size(); ++i) {
    if (c.bench.m[i] < 1) config_fail(detail::join_index("bench.m", i), "must be >= 1");
  }
  for (std::size_t i = 0; i < c.bench.n_a_max.size(); ++i) {
    if (c.bench.n_a_max[i] < 1) config_fail(detail::join_index("bench.n_a_max", i), "must be >= 1");
  }
  if (c.bench.bits < 1 || c.bench.bits > 30) config_fail("bench.bits", "must be in [1, 30]");
  if (c.bench.var < 0.0) config_fail("bench.var", "must be >= 0");
  if (c.bench.repeats < 1) config_fail("bench.repeats", "must be >= 1");
  if (c.bench.warmup < 0) config_fail("bench.warmup", "must be >= 0");
  if (!(c.bench.direct_time_cap_s > 0.0)) config_fail("bench.direct_time_cap_s", "must be > 0");
  if (c.threads < 0) config_fail("threads", "must be >= 0");
  if (c.format != "csv" && c.format != "json") config_fail("format", "must be csv or json");
}

inline ExperimentConfig config_from_json(const Json& j) {
  detail::ObjectReader r(j, "");
  ExperimentConfig c;
  r.field("scenario", c.scenario, detail::read_scenario);
  r.field("sigma2", c.sigma2, detail::read_sigma);
  r.field("allocations", c.allocations, [](const Json& v, const std::string& p) {
    return detail::read_list<std::array<int, 2>>(v, p, [](const Json& e, const std::string& ep) {
      if (!e.is_array() || e.size() != 2) detail::config_fail(ep, "expected [n_a, n_q]");
      return std::array<int, 2>{detail::read_int32(e[0], ep + "[0]"),
                                detail::read_int32(e[1], ep + "[1]")};
    });
  });
  r.field("budget", c.budget, detail::read_budget);
  r.field("dither", c.dither, detail::read_dither);
  r.field("sim", c.sim, detail::read_sim);
  r.field("bench", c.bench, detail::read_bench);
  r.field("oracle", c.oracle, detail::read_bool);
  r.optional_field("trace_output", c.trace_output, detail::read_string);
  r.field("threads", c.threads, detail::read_int32);
  r.field("seed", c.seed, detail::read_u64);
  r.optional_field("output", c.output, detail::read_string);
  r.field("format", c.format, [](const Json& v, const std::string& p) {
    return detail::read_choice(v, p, {"csv", "json"});
  });
  r.finish();
  check_config(c);
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace detail {

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

inline Json complex_rows_json(const ComplexRows& rows) {
  Json out = Json::array();
  for (const auto& row : rows) {
    Json r = Json::array();
    for (const auto& e : row) r.push_back(Json::array({e[0], e[1]}));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

/// Full record including defaults; config_from_json(config_to_json(c)) == c.
inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  Json sc;
  sc["kind"] = c.scenario.kind;
  sc["users"] = c.scenario.users;
  sc["rho"] = c.scenario.rho;
  sc["pilot"] = c.scenario.pilot;
  if (c.scenario.custom) {
    sc["custom"] = {{"h", detail::complex_rows_json(c.scenario.custom->h)},
                    {"g", detail::complex_rows_json(c.scenario.custom->g)},
                    {"sigma_theta", detail::complex_rows_json(c.scenario.custom->sigma_theta)}};
  } else {
    sc["custom"] = nullptr;
  }
  j["scenario"] = sc;
  if (c.sigma2.range) {
    j["sigma2"] = {{"start", c.sigma2.range->start},
                   {"stop", c.sigma2.range->stop},
                   {"count", c.sigma2.range->count},
                   {"spacing", c.sigma2.range->spacing}};
  } else {
    j["sigma2"] = c.sigma2.values;
  }
  Json allocs = Json::array();
  for (const auto& a : c.allocations) allocs.push_back(Json::array({a[0], a[1]}));
  j["allocations"] = allocs;
  j["budget"] = {{"bits", c.budget.bits},
                 {"p_max", detail::optional_json(c.budget.p_max)},
                 {"n_a_max", detail::optional_json(c.budget.n_a_max)}};
  j["dither"] = {{"mode", c.dither.mode},
                 {"grid_max", c.dither.grid_max},
                 {"grid_step", c.dither.grid_step}};
  Json q = nullptr;
  if (c.sim.analog_quantizer) {
    q = {{"bits", c.sim.analog_quantizer->bits},
         {"lo", c.sim.analog_quantizer->lo},
         {"hi", c.sim.analog_quantizer->hi}};
  }
  j["sim"] = {{"trials", c.sim.trials}, {"analog_quantizer", q}, {"empirical", c.sim.empirical}};
  j["bench"] = {{"m", c.bench.m},
                {"n_a_max", c.bench.n_a_max},
                {"bits", c.bench.bits},
                {"var", c.bench.var},
                {"repeats", c.bench.repeats},
                {"warmup", c.bench.warmup},
                {"direct", c.bench.direct},
                {"direct_time_cap_s", c.bench.direct_time_cap_s}};
  j["oracle"] = c.oracle;
  j["trace_output"] = detail::optional_json(c.trace_output);
  j["threads"] = c.threads;
  j["seed"] = c.seed;
  j["output"] = detail::optional_json(c.output);
  j["format"] = c.format;
  return j;
}

// ---------------------------------------------------------------------------
// Conversion to library inputs

inline std::vector<double> sigma_values(const SigmaGrid& g) {
  if (!g.range) return g.values;
  const SigmaRange& r = *g.range;
  std::vector<double> out(static_cast<std::size_t>(r.count));
  for (int i = 0; i < r.count; ++i) {
    const double t = r.count == 1 ? 0.0 : static_cast<double>(i) / (r.count - 1);
    out[static_cast<std::size_t>(i)] =
        r.spacing == "log" ? std::exp(std::log(r.start) + t * (std::log(r.stop) - std::log(r.start)))
                           : r.start + t * (r.stop - r.start);
  }
  if (r.count > 1) out.back() = r.stop;
  return out;
}

namespace detail {

inline CMatrix to_matrix(const ComplexRows& rows, const std::string& path, Index cols) {
  CMatrix m(static_cast<Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Index>(rows[i].size()) != cols) {
      config_fail(join_index(path, i), "expected " + std::to_string(cols) + " entries");
    }
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      m(static_cast<Index>(i), static_cast<Index>(k)) = cdouble(rows[i][k][0], rows[i][k][1]);
    }
  }
  return m;
}

}  // namespace detail

inline Scenario to_scenario(const ExperimentConfig& c) {
  Scenario s;
  s.rho = c.scenario.rho;
  s.pilot_seed = c.seed;
  s.pilot = c.scenario.pilot == "dft" ? PilotKind::Dft : PilotKind::RandomUnitary;
  if (c.scenario.kind == "scalar") {
    s.kind = ScenarioKind::Scalar;
    s.users = 1;
  } else if (c.scenario.kind == "mimo") {
    s.kind = ScenarioKind::Mimo;
    s.users = c.scenario.users;
  } else {
    s.kind = ScenarioKind::Custom;
    const CustomModelConfig& cm = *c.scenario.custom;
    Index dim = 0;
    if (!cm.sigma_theta.empty()) {
      dim = static_cast<Index>(cm.sigma_theta.size());
    } else if (!cm.h.empty()) {
      dim = static_cast<Index>(cm.h.front().size());
    } else if (!cm.g.empty()) {
      dim = static_cast<Index>(cm.g.front().size());
    }
    if (dim < 1) detail::config_fail("scenario.custom", "cannot infer the parameter dimension");
    s.custom.sigma_theta = cm.sigma_theta.empty()
                               ? CMatrix(CMatrix::Identity(dim, dim))
                               : detail::to_matrix(cm.sigma_theta, "scenario.custom.sigma_theta", dim);
    s.custom.h = detail::to_matrix(cm.h, "scenario.custom.h", dim);
    s.custom.g = detail::to_matrix(cm.g, "scenario.custom.g", dim);
    if (max_abs(s.custom.sigma_theta - s.custom.sigma_theta.adjoint()) > 1e-12) {
      detail::config_fail("scenario.custom.sigma_theta", "must be Hermitian");
    }
    s.users = static_cast<int>(dim);
  }
  return s;
}

inline PowerBudget to_budget(const ExperimentConfig& c, int m) {
  if (c.budget.p_max) return {c.budget.bits, *c.budget.p_max};
  if (c.budget.n_a_max) {
    const double p = std::ldexp(static_cast<double>(m) * *c.budget.n_a_max, c.budget.bits);
    if (!(p > 0.0)) detail::config_fail("budget.n_a_max", "gives an empty budget");
    return {c.budget.bits, p};
  }
  detail::config_fail("budget", "p_max or n_a_max is required");
}

inline DitherScheme to_dither(const DitherConfig& d) {
  DitherScheme s;
  s.mode = d.mode == "none"   ? DitherMode::None
           : d.mode == "both" ? DitherMode::Both
                              : DitherMode::QuantizedOnly;
  s.grid_max = d.grid_max;
  s.grid_step = d.grid_step;
  return s;
}

inline SimConfig to_sim(const ExperimentConfig& c) {
  SimConfig s;
  s.trials = c.sim.trials;
  s.seed = c.seed;
  s.threads = c.threads;
  if (const auto& q = c.sim.analog_quantizer) s.analog_quantizer = QuantizerSpec{q->bits, q->lo, q->hi};
  return s;
}

// ---------------------------------------------------------------------------
// Tables

using Cell = std::variant<std::monostate, std::int64_t, double, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw std::logic_error("table row width mismatch");
    rows.push_back(std::move(row));
  }
};

namespace detail {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string csv_field(const Cell& c) {
  struct Visitor {
    std::string operator()(std::monostate) const { return ""; }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(double v) const { return format_double(v); }
    std::string operator()(const std::string& s) const {
      if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
      std::string q = "\"";
      for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      return q + "\"";
    }
  };
  return std::visit(Visitor{}, c);
}

inline Json cell_json(const Cell& c) {
  struct Visitor {
    Json operator()(std::monostate) const { return nullptr; }
    Json operator()(std::int64_t v) const { return v; }
    Json operator()(double v) const { return std::isfinite(v) ? Json(v) : Json(format_double(v)); }
    Json operator()(const std::string& s) const { return s; }
  };
  return std::visit(Visitor{}, c);
}

}  // namespace detail

inline void write_csv(std::ostream& os, const Table& t) {
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    os << (i ? "," : "") << detail::csv_field(t.columns[i]);
  }
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << detail::csv_field(row[i]);
    os << '\n';
  }
}

/// Array of row objects keyed by column name. Doubles are written with
/// round-trip precision.
inline Json table_json(const Table& t) {
  Json out = Json::array();
  for (const auto& row : t.rows) {
    Json obj = Json::object();
    for (std::size_t i = 0; i < row.size(); ++i) obj[t.columns[i]] = detail::cell_json(row[i]);
    out.push_back(std::move(obj));
  }
  return out;
}

inline void write_table(std::ostream& os, const Table& t, const std::string& format) {
  if (format == "json") {
    os << table_json(t).dump(2) << '\n';
  } else {
    write_csv(os, t);
  }
}

// ---------------------------------------------------------------------------
// Commands

struct CommandOutput {
  Table table;
  std::optional<Table> trace;
  std::vector<std::string> warnings;
  std::vector<std::string> notes;
};

namespace detail {

inline Cell cell(int v) { return static_cast<std::int64_t>(v); }
inline Cell cell(std::int64_t v) { return v; }
inline Cell cell(double v) { return v; }

inline std::vector<double> required_sigma(const ExperimentConfig& c) {
  std::vector<double> s = sigma_values(c.sigma2);
  if (s.empty()) config_fail("sigma2", "at least one value is required");
  return s;
}

inline void add_trace(Table& t, const std::string& policy, double sigma2,
                      const AllocationResult& r) {
  for (const auto& p : r.trace) {
    t.add({policy, sigma2, cell(p.n_a), cell(p.n_q), p.dither_var, p.mse});
  }
}

inline Table trace_table() {
  return Table{{"policy", "sigma2", "n_a", "n_q", "dither_var", "mse"}, {}};
}

inline std::string infeasible_warning(const PowerBudget& b, int m) {
  return "budget p_max=" + format_double(b.p_max_norm) + " cannot afford a single block at M=" +
         std::to_string(m) + "; reporting the empty allocation";
}

}  // namespace detail

/// Analytic MSE over sigma^2 x allocations; optional Monte-Carlo columns and,
/// with `oracle`, the matrix-route MSE next to the closed form.
inline CommandOutput cmd_mse(const ExperimentConfig& c) {
  const Scenario scenario = to_scenario(c);
  const std::vector<double> sigma = detail::required_sigma(c);
  if (c.allocations.empty()) detail::config_fail("allocations", "at least one pair is required");
  std::vector<std::pair<int, int>> allocs;
  for (const auto& a : c.allocations) allocs.emplace_back(a[0], a[1]);

  std::optional<SimConfig> sim;
  if (c.sim.empirical) sim = to_sim(c);
  const std::vector<MseRow> rows = sweep_mse_vs_noise(scenario, sigma, allocs, sim);

  CommandOutput out;
  out.table.columns = {"sigma2", "n_a", "n_q", "mse_analytic"};
  if (sim) out.table.columns.insert(out.table.columns.end(), {"mse_empirical", "std_error"});
  const bool oracle = c.oracle && scenario_is_lgo(scenario);
  if (oracle) out.table.columns.push_back("mse_matrix");
  double worst = 0.0;
  for (const auto& r : rows) {
    std::vector<Cell> row{r.sigma2, detail::cell(r.n_a), detail::cell(r.n_q), r.mse_analytic};
    if (sim) {
      if (r.empirical) {
        row.insert(row.end(), {r.empirical->empirical_mse, r.empirical->std_error});
      } else {
        row.insert(row.end(), {r.mse_analytic, 0.0});
      }
    }
    if (oracle) {
      const double direct = r.n_a + r.n_q == 0
                                ? static_cast<double>(scenario_dim(scenario))
                                : lmmse_mse(build_model(scenario, r.n_a, r.n_q, r.sigma2));
      worst = std::max(worst, std::abs(direct - r.mse_analytic));
      row.push_back(direct);
    }
    out.table.add(std::move(row));
  }
  if (oracle) out.notes.push_back("max |closed form - matrix route| = " + detail::format_double(worst));
  if (c.oracle && !oracle) out.notes.push_back("oracle skipped: custom scenarios use the matrix route");
  return out;
}

/// Optimal undithered and dithered allocations per sigma^2 along with the
/// all-analog and all-quantized baselines.
inline CommandOutput cmd_allocate(const ExperimentConfig& c) {
  const Scenario scenario = to_scenario(c);
  if (!scenario_is_lgo(scenario)) detail::config_fail("scenario.kind", "allocate needs scalar or mimo");
  const int m = scenario_dim(scenario);
  const PowerBudget budget = to_budget(c, m);
  const std::vector<double> sigma = detail::required_sigma(c);
  const DitherScheme scheme = to_dither(c.dither);
  const std::vector<AllocationRow> rows =
      sweep_allocation_vs_noise(m, budget, sigma, scheme, scenario.rho, c.threads);

  CommandOutput out;
  out.table.columns = {"sigma2",  "mse_all_analog", "mse_all_quantized", "n_a_opt",
                       "n_q_opt", "mse_opt",        "n_a_dither",        "n_q_dither",
                       "dither_var", "mse_dither"};
  if (c.oracle) out.table.columns.push_back("mse_exhaustive");
  if (!budget_feasible(m, budget)) out.warnings.push_back(detail::infeasible_warning(budget, m));

  Table trace = detail::trace_table();
  double worst = 0.0;
  for (const auto& r : rows) {
    std::vector<Cell> row{r.sigma2,
                          r.mse_all_analog,
                          r.mse_all_quantized,
                          detail::cell(r.optimal.n_a_star),
                          detail::cell(r.optimal.n_q_star),
                          r.optimal.mse_star,
                          detail::cell(r.dithered.n_a_star),
                          detail::cell(r.dithered.n_q_star),
                          r.dithered.dither_var_star,
                          r.dithered.mse_star};
    if (c.oracle) {
      LgoParams p = scenario_params(scenario, 0, 0, r.sigma2);
      const AllocationResult ex = allocate_exhaustive(p, budget, {c.seed, c.threads});
      worst = std::max(worst, std::abs(ex.mse_star - r.optimal.mse_star));
      row.push_back(ex.mse_star);
    }
    out.table.add(std::move(row));
    detail::add_trace(trace, "optimal", r.sigma2, r.optimal);
    detail::add_trace(trace, "dithered", r.sigma2, r.dithered);
  }
  if (c.oracle) out.notes.push_back("max |allocate - exhaustive| = " + detail::format_double(worst));
  out.trace = std::move(trace);
  return out;
}

/// Dithered allocation per sigma^2 for the configured scheme.
inline CommandOutput cmd_dither(const ExperimentConfig& c) {
  const Scenario scenario = to_scenario(c);
  if (!scenario_is_lgo(scenario)) detail::config_fail("scenario.kind", "dither needs scalar or mimo");
  const int m = scenario_dim(scenario);
  const PowerBudget budget = to_budget(c, m);
  const std::vector<double> sigma = detail::required_sigma(c);
  const DitherScheme scheme = to_dither(c.dither);

  CommandOutput out;
  out.table.columns = {"sigma2", "n_a", "n_q", "dither_var", "mse", "mse_undithered"};
  if (!budget_feasible(m, budget)) out.warnings.push_back(detail::infeasible_warning(budget, m));
  Table trace = detail::trace_table();
  for (double v : sigma) {
    const LgoParams p = scenario_params(scenario, 0, 0, v);
    const AllocationResult d = allocate_with_dither(p, budget, scheme, c.threads);
    const AllocationResult u = allocate(p, budget);
    out.table.add({v, detail::cell(d.n_a_star), detail::cell(d.n_q_star), d.dither_var_star,
                   d.mse_star, u.mse_star});
    detail::add_trace(trace, "dithered", v, d);
  }
  out.trace = std::move(trace);
  return out;
}

/// Monte-Carlo check of the analytic MSE on every (sigma^2, allocation) cell.
inline CommandOutput cmd_simulate(const ExperimentConfig& c) {
  const Scenario scenario = to_scenario(c);
  const std::vector<double> sigma = detail::required_sigma(c);
  if (c.allocations.empty()) detail::config_fail("allocations", "at least one pair is required");
  std::vector<std::pair<int, int>> allocs;
  for (const auto& a : c.allocations) {
    if (a[0] + a[1] == 0) detail::config_fail("allocations", "(0, 0) cannot be simulated");
    allocs.emplace_back(a[0], a[1]);
  }
  const std::vector<MseRow> rows = sweep_mse_vs_noise(scenario, sigma, allocs, to_sim(c));

  CommandOutput out;
  out.table.columns = {"sigma2", "n_a", "n_q", "mse_analytic", "mse_empirical", "std_error",
                       "z_score", "trials"};
  int flagged = 0;
  for (const auto& r : rows) {
    const SimResult& s = *r.empirical;
    const double z = s.std_error > 0.0 ? (s.empirical_mse - r.mse_analytic) / s.std_error : 0.0;
    if (std::abs(z) > 3.0) ++flagged;
    out.table.add({r.sigma2, detail::cell(r.n_a), detail::cell(r.n_q), r.mse_analytic,
                   s.empirical_mse, s.std_error, z, detail::cell(s.trials_run)});
  }
  if (flagged > 0) {
    out.warnings.push_back(std::to_string(flagged) +
                           " cell(s) deviate from the analytic MSE by more than 3 standard errors");
  }
  return out;
}

/// Closed-form vs. matrix-route sweep timing.
inline CommandOutput cmd_bench(const ExperimentConfig& c) {
  BenchOptions opts;
  opts.bits = c.bench.bits;
  opts.rho = c.scenario.rho;
  opts.var = c.bench.var;
  opts.repeats = c.bench.repeats;
  opts.warmup = c.bench.warmup;
  opts.run_direct = c.bench.direct;
  opts.direct_time_cap_s = c.bench.direct_time_cap_s;
  opts.seed = c.seed;
  if (c.bench.m.empty()) detail::config_fail("bench.m", "at least one value is required");
  if (c.bench.n_a_max.empty()) detail::config_fail("bench.n_a_max", "at least one value is required");
  const std::vector<BenchResult> results = bench_runtime(c.bench.m, c.bench.n_a_max, opts);

  CommandOutput out;
  out.table.columns = {"M", "n_a_max", "t_closed_ms", "t_direct_ms", "closed_runs", "direct_runs"};
  for (const auto& r : results) {
    out.table.add({detail::cell(r.m), detail::cell(r.n_a_max), r.closed_form.median_ms,
                   r.direct ? Cell(r.direct->median_ms) : Cell(),
                   detail::cell(r.closed_form.runs),
                   r.direct ? detail::cell(r.direct->runs) : Cell()});
    if (r.direct && r.direct->runs < opts.repeats) {
      out.notes.push_back("M=" + std::to_string(r.m) + " n_a_max=" + std::to_string(r.n_a_max) +
                          ": direct sweep stopped after " + std::to_string(r.direct->runs) +
                          " run(s) at the time cap");
    }
  }
  return out;
}

inline CommandOutput run_command(const std::string& name, const ExperimentConfig& c) {
  if (name == "mse") return cmd_mse(c);
  if (name == "allocate") return cmd_allocate(c);
  if (name == "dither") return cmd_dither(c);
  if (name == "simulate") return cmd_simulate(c);
  if (name == "bench") return cmd_bench(c);
  throw ConfigError("unknown command '" + name + "'");
}

}  // namespace mixres

#endif  // MIXRES_EXPERIMENT_HPP
