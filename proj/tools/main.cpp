// Command-line front end for the levyub engine. All behaviour lives behind
// the C API; this file only maps flags onto configuration overrides.
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "levyub/levyub.h"

namespace {

struct Engine {
  levyub_engine* ptr = levyub_engine_new();
  Engine() = default;
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;
  ~Engine() { levyub_engine_free(ptr); }
};

const char* status_label(levyub_status status) {
  switch (status) {
    case LEVYUB_OK:
      return "ok";
    case LEVYUB_ERR_CONFIG:
      return "config error";
    case LEVYUB_ERR_IO:
      return "io error";
    case LEVYUB_ERR_NUMERIC:
      return "numeric error";
    case LEVYUB_ERR_DIMENSION:
      return "dimension error";
    case LEVYUB_ERR_NO_SOLUTION:
      return "no solution";
    case LEVYUB_ERR_ARGUMENT:
      return "bad argument";
    case LEVYUB_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown error";
}

struct CommonOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out_dir;
  int replicates = 1;
  std::vector<std::string> overrides;
};

void add_common_options(CLI::App* cmd, CommonOptions* opts) {
  cmd->add_option("--config", opts->config_path,
                  "JSON configuration file to load before applying flags")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts->seed, "Master random seed (unsigned 64-bit)");
  cmd->add_option("--workers", opts->workers, "Worker thread count")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", opts->out_dir, "Output directory for result files");
  cmd->add_option("--replicates", opts->replicates,
                  "Number of independent replicates")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--set", opts->overrides,
                  "Extra configuration override as dotted.key=value (repeatable)")
      ->type_name("KEY=VALUE");
}

int fail(const Engine& engine, levyub_status status) {
  std::fprintf(stderr, "levyub: %s: %s\n", status_label(status),
               levyub_last_error(engine.ptr));
  return static_cast<int>(status);
}

// Quote a value as a JSON string so the engine never mistakes it for a number.
std::string json_quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    switch (ch) {
      case '"':
        out += "\\\"";
        break;
      case '\\':
        out += "\\\\";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\r':
        out += "\\r";
        break;
      case '\t':
        out += "\\t";
        break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", ch);
          out += buf;
        } else {
          out.push_back(ch);
        }
    }
  }
  out.push_back('"');
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Debiased Monte Carlo parameter inference for jump-driven state-space "
      "models"};
  app.require_subcommand(1);

  CommonOptions opts;
  int pmmh_level = -1;

  CLI::App* simulate =
      app.add_subcommand("simulate", "Generate a synthetic observation series");
  CLI::App* pmmh = app.add_subcommand(
      "pmmh", "Particle marginal Metropolis-Hastings at a fixed resolution");
  CLI::App* unbiased = app.add_subcommand(
      "unbiased", "Debiased estimator: coarse chain plus randomized "
                  "multilevel correction");
  CLI::App* truth = app.add_subcommand(
      "truth", "High-resolution reference estimate for later comparisons");
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Cost/accuracy sweep across iteration budgets and resolutions");
  CLI::App* rate_probe = app.add_subcommand(
      "rate-probe", "Measure the coupled strong convergence rate");

  for (CLI::App* cmd : {simulate, pmmh, unbiased, truth, sweep, rate_probe})
    add_common_options(cmd, &opts);
  pmmh->add_option("--level", pmmh_level,
                   "Discretization level for the fixed-resolution chain")
      ->check(CLI::NonNegativeNumber);

  CLI11_PARSE(app, argc, argv);
  CLI::App* cmd = app.get_subcommands().front();

  Engine engine;
  if (engine.ptr == nullptr) {
    std::fprintf(stderr, "levyub: failed to allocate engine\n");
    return static_cast<int>(LEVYUB_ERR_INTERNAL);
  }

  if (cmd->count("--config") > 0) {
    const levyub_status status =
        levyub_load_config_file(engine.ptr, opts.config_path.c_str());
    if (status != LEVYUB_OK) return fail(engine, status);
  }
  for (const std::string& entry : opts.overrides) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "levyub: --set expects dotted.key=value, got '%s'\n",
                   entry.c_str());
      return static_cast<int>(LEVYUB_ERR_ARGUMENT);
    }
    const std::string key = entry.substr(0, eq);
    const std::string value = entry.substr(eq + 1);
    const levyub_status status =
        levyub_set_option(engine.ptr, key.c_str(), value.c_str());
    if (status != LEVYUB_OK) return fail(engine, status);
  }

  const auto set_option = [&](const char* key,
                              const std::string& value) -> levyub_status {
    return levyub_set_option(engine.ptr, key, value.c_str());
  };
  struct Override {
    const char* flag;
    const char* key;
    std::string value;
  };
  const std::vector<Override> overrides = {
      {"--seed", "experiment.seed", std::to_string(opts.seed)},
      {"--workers", "experiment.workers", std::to_string(opts.workers)},
      {"--out", "experiment.out_dir", json_quote(opts.out_dir)},
      {"--replicates", "experiment.replicates",
       std::to_string(opts.replicates)},
  };
  for (const Override& o : overrides) {
    if (cmd->count(o.flag) == 0) continue;
    const levyub_status status = set_option(o.key, o.value);
    if (status != LEVYUB_OK) return fail(engine, status);
  }
  if (cmd == pmmh && pmmh->count("--level") > 0) {
    const levyub_status status =
        set_option("pmmh.level", std::to_string(pmmh_level));
    if (status != LEVYUB_OK) return fail(engine, status);
  }

  const levyub_status status = levyub_run(engine.ptr, cmd->get_name().c_str());
  if (status != LEVYUB_OK) return fail(engine, status);
  std::printf("%s\n", levyub_result_json(engine.ptr));
  return 0;
}
