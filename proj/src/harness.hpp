#pragma once
// Experiment orchestration: configuration, data ingestion, replicated runs,
// ground-truth estimation, cost sweeps, and result emission.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "euler.hpp"
#include "inference.hpp"
#include "measure.hpp"
#include "smc.hpp"

namespace levyub {

struct MeasureConfig {
  double c = 0.8;
  double alpha = 0.5;
  double u = 1.0;
};

struct ModelConfig {
  std::string kind = "geometric";
  std::vector<double> y0{1.0};
};

struct ObservationConfig {
  double noise_sd = 0.25;  // Gaussian observation noise on coordinate 0
};

struct SyntheticConfig {
  int steps = 50;                  // number of observations n
  std::vector<double> theta{0.5};  // generating parameter
  int level = 12;                  // discretization level of the latent draw
};

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or "csv"
  std::string path;
  std::string value_column = "value";
  std::string kind = "returns";  // "returns" passthrough, "prices" log-returns
  std::string date_column;       // optional; kept as row labels when present
  SyntheticConfig synthetic;
};

struct PriorConfig {
  std::vector<double> lower{0.0};
  std::vector<double> upper{1.5};
  std::vector<double> step{0.1};     // random-walk proposal scale
  std::vector<double> initial{0.75};
};

struct PmmhConfig {
  int iterations = 20000;
  int burn_in = -1;  // -1: 10% of iterations
  int particles = 60;
  double evidence_floor = 1e-8;
  int level = 8;  // discretization level of the baseline chain
};

struct UnbiasedConfig {
  int min_level = 1;
  int max_level = 12;
  double level_decay = 1.5;  // correction-level mass ~ 2^(-decay * l)
  int correction_particles = 20;
  bool scale_corrections_by_repeats = false;
  bool per_iteration_assembly = false;
};

struct FunctionalConfig {
  std::string kind = "theta";  // "theta" or "terminal_state"
  int index = 0;
};

struct ExperimentSection {
  int replicates = 52;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out_dir = "results";
  bool deterministic_reduction = true;
  std::optional<double> reference;  // MSE reference; replicate mean when unset
  FunctionalConfig functional;
};

struct TruthConfig {
  int max_level = 14;
  int replicates = 52;
  int iterations = -1;  // -1: reuse pmmh.iterations
};

struct SweepConfig {
  std::vector<int> budgets{2500, 5000, 10000, 20000};  // chain iterations
  std::vector<int> pmmh_levels{4, 6, 8};
};

struct RateProbeConfig {
  int min_level = 3;
  int max_level = 8;
  std::int64_t samples = 100000;
  std::vector<double> theta{0.5};
};

struct DebugConfig {
  std::string schedule_dump;  // when set, `simulate` also emits one schedule CSV
  int schedule_level = 3;
};

struct ExperimentConfig {
  MeasureConfig measure;
  ModelConfig model;
  ObservationConfig observation;
  DataConfig data;
  PriorConfig prior;
  PmmhConfig pmmh;
  UnbiasedConfig unbiased;
  ExperimentSection experiment;
  TruthConfig truth;
  SweepConfig sweep;
  RateProbeConfig rate_probe;
  DebugConfig debug;

  void validate() const;
  nlohmann::json to_json() const;
  // Strict parse: unknown keys are rejected; absent keys keep defaults.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::string& path);
  // Hex digest of the canonical serialized form (git blob convention).
  std::string hash() const;
};

struct ObservationSeries {
  std::vector<double> values;
  std::vector<std::string> timestamps;  // empty unless a date column was read
};

// Reads a CSV with a header row. kind "prices" turns column values p_i into
// log-returns log(p_i / p_{i-1}); kind "returns" passes values through.
ObservationSeries load_returns(const std::string& path,
                               const std::string& value_column,
                               const std::string& kind,
                               const std::string& date_column = "");

struct SyntheticData {
  ObservationSeries observations;
  Eigen::MatrixXd latent;  // n x d, row i = state after transition i+1
};

// Bundles the model objects a run needs, with ownership, so the raw pointers
// inside SdeModel/HmmSpec stay valid for the bundle's lifetime.
struct BuiltModel {
  std::unique_ptr<TruncatedStableMeasure> measure;
  std::unique_ptr<SdeModel> model;
  std::unique_ptr<LevelTable> levels;
  HmmSpec hmm;
};

BuiltModel build_model(const ExperimentConfig& config,
                       const ObservationSeries& series, int max_level);

// Latent path at the configured synthetic level plus Gaussian observations of
// coordinate 0, drawn from the master seed's dedicated data substream.
SyntheticData generate_synthetic(const ExperimentConfig& config);

// The observations a command runs on: synthetic (regenerated from the seed)
// or loaded from the configured CSV.
ObservationSeries resolve_observations(const ExperimentConfig& config);

struct ReplicateRecord {
  int replicate = 0;
  double estimate = 0.0;
  double within_se = 0.0;  // chain batch-means error (baseline runs only)
  double wall_seconds = 0.0;
  std::uint64_t euler_steps = 0;
  int distinct_states = 0;
  double accept_rate = 0.0;
  Eigen::VectorXd extra_estimates;  // secondary functionals, JSON only
};

struct ExperimentSummary {
  std::vector<ReplicateRecord> records;  // CSV emission order
  double mean = 0.0;
  double se = 0.0;
  double mse = 0.0;
  double reference = 0.0;
  bool reference_from_mean = false;
  std::uint64_t total_euler_steps = 0;
  double total_wall_seconds = 0.0;
};

// Runs `count` tasks on at most `workers` threads (inline when workers <= 1).
// Tasks must write only their own slots. The first thrown exception is
// rethrown after all threads join. completion_order, when given, receives
// task indices in finish order.
void parallel_for(int workers, int count, const std::function<void(int)>& task,
                  std::vector<int>* completion_order = nullptr);

// R independent debiased-estimator replicates on the given observations.
// Replicate r draws its randomness from base_key's child r; results are
// reduced in replicate order under deterministic reduction, in completion
// order otherwise.
ExperimentSummary run_unbiased_replicates(const ExperimentConfig& config,
                                          const ObservationSeries& series,
                                          int replicates, int iterations,
                                          int max_level, StreamKey base_key);

// R independent baseline chains at a fixed level; each record's estimate is
// the chain average of the primary functional over theta, with a batch-means
// within-chain error in within_se.
ExperimentSummary run_pmmh_replicates(const ExperimentConfig& config,
                                      const ObservationSeries& series,
                                      int replicates, int iterations, int level,
                                      StreamKey base_key);

// Mean over R elevated-level replicates with its standard error.
struct GroundTruth {
  double reference = 0.0;
  double se = 0.0;
  ExperimentSummary summary;
};
GroundTruth estimate_ground_truth(const ExperimentConfig& config,
                                  const ObservationSeries& series);

// One emitted artifact set: a JSON summary plus named CSV bodies.
struct CommandResult {
  std::string summary;  // serialized JSON
  std::vector<std::pair<std::string, std::string>> files;
};

// Dispatches one CLI command ("simulate", "pmmh", "unbiased", "truth",
// "sweep", "rate-probe") and returns its artifacts without touching disk.
CommandResult run_command(const ExperimentConfig& config,
                          const std::string& command);

// Writes <command>_summary.json and every CSV body under out_dir.
void write_artifacts(const CommandResult& result, const std::string& out_dir,
                     const std::string& command);

// 17-significant-digit decimal form; parsing it back recovers the double
// bitwise.
std::string format_double(double value);

}  // namespace levyub
