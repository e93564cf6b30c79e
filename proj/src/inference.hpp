#pragma once
// Parameter inference: a Metropolis chain over particle-filter evidence at a
// fixed coarse level, plus a randomized level-difference correction that
// removes the time-discretization bias of the reported posterior averages.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "measure.hpp"
#include "rng.hpp"
#include "smc.hpp"

namespace levyub {

// Prior and Metropolis proposal over the parameter vector. log_prior may
// return -inf outside the support; propose draws theta' given theta.
// log_proposal(to, from) = log q(to | from) is consulted only when the
// proposal is declared asymmetric.
struct ParamModel {
  std::function<double(const Eigen::VectorXd&)> log_prior;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, RngStream&)> propose;
  std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>
      log_proposal;
  bool symmetric = true;
  Eigen::VectorXd initial;
};

// Uniform prior on the axis-aligned box [lower, upper] with a componentwise
// Gaussian random-walk proposal of the given step sizes.
ParamModel uniform_box_gaussian_walk(const Eigen::VectorXd& lower,
                                     const Eigen::VectorXd& upper,
                                     const Eigen::VectorXd& step,
                                     const Eigen::VectorXd& initial);

struct PmmhOptions {
  int iterations = 10000;  // recorded iterations (after warm-up)
  int burn_in = -1;        // warm-up iterations; -1 means 10% of iterations
  int particles = 60;
  double evidence_floor = 1e-8;  // epsilon added to every evidence estimate
  // Test hook: replaces the particle filter as the evidence source.
  std::function<ParticleCloud(const Eigen::VectorXd&, RngStream&)>
      evidence_override;
};

// One accepted parameter value together with the particle cloud that won it
// the acceptance and the number of recorded iterations it survived.
struct AcceptedState {
  Eigen::VectorXd theta;
  ParticleCloud cloud;
  int repeats = 0;
};

struct PmmhResult {
  std::vector<AcceptedState> states;         // acceptances during recording
  std::vector<Eigen::VectorXd> theta_trace;  // chain value, every recorded iter
  int iterations = 0;                        // recorded iterations
  int initial_repeats = 0;  // recorded iterations spent in the inherited state
  double accept_rate = 0.0;                  // states.size() / iterations
  std::uint64_t euler_steps = 0;  // all propagation cells, warm-up included
};

// Metropolis over theta whose likelihood is the particle-filter evidence
// (floored by evidence_floor). Each iteration consumes its own keyed
// substreams for proposal, filter, and accept draw, so rejecting an
// out-of-support proposal without running the filter does not shift the
// randomness of later iterations.
PmmhResult pmmh_run(const HmmSpec& hmm, const ParamModel& prior,
                    const LevelParams& level, const PmmhOptions& options,
                    StreamKey chain_key);

// Probability mass over correction levels {coarse_level+1, ..., max_level},
// proportional to 2^(-decay * l).
struct LevelPmf {
  int coarse_level = 1;
  int max_level = 12;
  std::vector<double> probabilities;  // index 0 <-> coarse_level + 1

  double probability(int level) const;
  int sample(RngStream& rng) const;
};

LevelPmf make_level_pmf(int coarse_level, int max_level, double decay);

// Functional of (theta, trajectory). The trajectory matrix holds one recorded
// state per row; the terminal state is the last row.
using PathFunctional =
    std::function<double(const Eigen::VectorXd&, const Eigen::MatrixXd&)>;

PathFunctional theta_component(int index);
PathFunctional terminal_state_component(int index);

// Scalar aggregates of one accepted state's contribution to the debiased
// estimator: the normalized coarse-filter averages and the signed correction
// averages, one entry per functional, plus the bookkeeping needed to regroup
// the sums by iteration.
struct StateAggregate {
  Eigen::VectorXd theta;
  int repeats = 0;  // recorded iterations spent at this state
  int level = 0;    // correction level drawn for this state
  double base_mass = 0.0;       // sum of normalized coarse weights
  double corr_mass = 0.0;       // signed correction mass
  Eigen::VectorXd base_phi;     // coarse weighted averages, per functional
  Eigen::VectorXd corr_phi;     // signed correction averages, per functional
  std::uint64_t correction_steps = 0;
};

struct AssembledEstimate {
  Eigen::VectorXd values;      // numerators / denominator
  Eigen::VectorXd numerators;  // one per functional
  double denominator = 0.0;
};

// Grouped assembly: each distinct state contributes repeats * base + corr
// (or repeats * corr when scale_corrections_by_repeats is set).
AssembledEstimate assemble_grouped(const std::vector<StateAggregate>& states,
                                   bool scale_corrections_by_repeats);

// Iteration-by-iteration assembly of the very same aggregates: every repeat
// contributes base + corr/repeats (or base + corr when the scale flag is
// set). Identical to the grouped form up to floating-point regrouping.
AssembledEstimate assemble_per_iteration(
    const std::vector<StateAggregate>& states,
    bool scale_corrections_by_repeats);

struct UnbiasedOptions {
  PmmhOptions pmmh;
  int correction_particles = 20;
  LevelPmf levels;
  // Count each repeat's correction in full instead of sharing one correction
  // across a state's repeats (variance/sensitivity variant).
  bool scale_corrections_by_repeats = false;
  bool per_iteration_assembly = false;  // ungrouped summation order
};

struct UnbiasedResult {
  std::vector<StateAggregate> states;
  Eigen::VectorXd estimates;  // one per functional
  double denominator = 0.0;
  int iterations = 0;
  int distinct_states = 0;  // number of accepted states
  double accept_rate = 0.0;
  std::uint64_t euler_steps = 0;  // chain plus all corrections
};

// Optional executor for the per-state correction tasks; arguments are the
// task count and the task body. Defaults to a sequential loop. Each task owns
// a keyed stream and writes only its own slot, so any execution order yields
// the same result.
using TaskRunner = std::function<void(int, const std::function<void(int)>&)>;

// The debiased posterior estimator: run the coarse-level chain, then for each
// accepted state draw a correction level and run the coupled filter, and
// assemble the self-normalized ratio over the requested functionals.
UnbiasedResult unbiased_estimate(const HmmSpec& hmm, const ParamModel& prior,
                                 const std::vector<PathFunctional>& functionals,
                                 const LevelTable& levels,
                                 const UnbiasedOptions& options, StreamKey key,
                                 const TaskRunner& runner = {});

}  // namespace levyub
