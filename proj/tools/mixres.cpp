// Command-line front end: mse, allocate, dither, simulate, bench.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mixres/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Flags {
  std::string config;
  std::optional<std::string> output;
  std::optional<std::string> format;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  bool empirical = false;
  bool oracle = false;
};

mixres::ExperimentConfig resolve(const Flags& f) {
  mixres::ExperimentConfig c = f.config.empty() ? mixres::ExperimentConfig{} : mixres::load_config(f.config);
  if (f.output) c.output = *f.output;
  if (f.format) c.format = *f.format;
  if (f.threads) c.threads = *f.threads;
  if (f.seed) c.seed = *f.seed;
  if (f.repeats) c.bench.repeats = *f.repeats;
  if (f.empirical) c.sim.empirical = true;
  if (f.oracle) c.oracle = true;
  mixres::check_config(c);
  return c;
}

void write_to(const std::optional<std::string>& path, const mixres::Table& t,
              const std::string& format) {
  if (!path || *path == "-") {
    mixres::write_table(std::cout, t, format);
    return;
  }
  std::ofstream out(*path, std::ios::binary);
  if (!out) throw mixres::ConfigError("output: cannot open '" + *path + "' for writing");
  mixres::write_table(out, t, format);
}

int run(const std::string& command, const Flags& flags) {
  try {
    const mixres::ExperimentConfig c = resolve(flags);
    const mixres::CommandOutput out = mixres::run_command(command, c);
    for (const auto& w : out.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& n : out.notes) std::cerr << n << '\n';
    write_to(c.output, out.table, c.format);
    if (out.trace && c.trace_output) write_to(c.trace_output, *out.trace, "csv");
    return 0;
  } catch (const mixres::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mixres::Error& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::bad_alloc&) {
    std::cerr << "numerical error: out of memory\n";
    return kExitNumerical;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-resolution LMMSE estimation and ADC allocation"};
  app.require_subcommand(1);
  Flags flags;

  const char* commands[][2] = {
      {"mse", "analytic (and optionally empirical) MSE over a noise grid"},
      {"allocate", "optimal analog/1-bit allocation per noise level"},
      {"dither", "optimal allocation with dithering per noise level"},
      {"simulate", "Monte-Carlo check of the analytic MSE"},
      {"bench", "closed-form vs. matrix-solve timing"},
  };
  std::string chosen;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--output", flags.output, "output file (default stdout)");
    sub->add_option("--format", flags.format, "table format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--threads", flags.threads, "worker threads (0 = all cores)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", flags.seed, "random seed");
    sub->add_flag("--empirical", flags.empirical, "add Monte-Carlo columns");
    sub->add_flag("--oracle", flags.oracle, "cross-check against the matrix-route solver");
    sub->add_option("--repeats", flags.repeats, "timing repetitions")->check(CLI::PositiveNumber);
    sub->callback([&chosen, n = std::string(name)] { chosen = n; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  return run(chosen, flags);
}
