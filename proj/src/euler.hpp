#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "measure.hpp"
#include "schedule.hpp"

namespace levyub {

// Characteristics of the driving process: drift b, diffusion Sigma (with its
// symmetric square root cached at construction), and the jump measure. The
// measure pointer is borrowed, not owned, and may be null for a pure
// drift-diffusion driver (which then cannot generate schedules).
struct LevyTriplet {
  Eigen::VectorXd drift;
  Eigen::MatrixXd diffusion;
  const LevyMeasure* measure = nullptr;

  Eigen::MatrixXd diffusion_sqrt;
  bool zero_diffusion = true;

  int driver_dim() const { return static_cast<int>(drift.size()); }
};

// Validates symmetry and positive semidefiniteness of the diffusion and
// caches its square root.
LevyTriplet make_levy_triplet(Eigen::VectorXd drift, Eigen::MatrixXd diffusion,
                              const LevyMeasure* measure);

// State equation dY = f_theta(Y) dX. The drift function writes the d x r
// coefficient matrix into a caller-provided workspace so the inner Euler loop
// never allocates.
using DriftFn = std::function<void(const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& y,
                                   Eigen::MatrixXd& out)>;

struct SdeModel {
  LevyTriplet triplet;
  DriftFn drift;
  int state_dim = 1;
};

// dY = theta[0] * Y dX in one dimension; the model used throughout the
// shipped experiments.
SdeModel make_geometric_model(const LevyMeasure* measure);

// Driver increments over the cells of a schedule:
//   dX_i = (b - compensator) dt_i + sqrt(Sigma) dW_i + dL_i.
// `brownian` must carry one r-vector per cell (pass an empty span only for a
// zero-diffusion triplet, in which case the Brownian term is absent). For a
// driver of dimension > 1 the schedule must be jump-free, since schedule
// heights are scalar.
std::vector<Eigen::VectorXd> assemble_increments(
    const JumpSchedule& schedule, const LevyTriplet& triplet,
    const LevelParams& level, const std::vector<Eigen::VectorXd>& brownian);

struct UnitPathResult {
  Eigen::VectorXd terminal;
  std::uint64_t steps = 0;
};

// Optional instrumentation captured by the propagation routines (tests use
// this to replay increments; production paths pass null).
struct UnitPathTrace {
  JumpSchedule schedule;
  std::vector<Eigen::VectorXd> brownian;
  std::vector<Eigen::VectorXd> increments;
};

struct CoupledUnitPathResult {
  Eigen::VectorXd fine_terminal;
  Eigen::VectorXd coarse_terminal;
  std::uint64_t fine_steps = 0;
  std::uint64_t coarse_steps = 0;
};

struct CoupledPathTrace {
  CoupledJumpSchedule schedule;
  std::vector<Eigen::VectorXd> fine_brownian;    // per fine cell
  std::vector<Eigen::VectorXd> coarse_brownian;  // per coarse cell
  std::vector<Eigen::VectorXd> fine_increments;
  std::vector<Eigen::VectorXd> coarse_increments;
};

// One unit interval of the Euler recursion Y_i = Y_{i-1} + f(Y_{i-1}) dX_i at
// a single level: draws a schedule, then Brownian increments cell by cell.
// Throws NonFiniteStateError (naming level and step) if the state leaves the
// finite range. Steps counted = schedule cells.
UnitPathResult propagate_unit(const Eigen::VectorXd& y0,
                              const Eigen::VectorXd& theta,
                              const LevelParams& level, const SdeModel& model,
                              RngStream& rng, UnitPathTrace* trace = nullptr);

// One unit interval of the coupled pair (level, level - 1), started from a
// pair of states (equal on the first transition, generally different after):
// a single schedule draw drives both legs (coarse jumps thinned from fine),
// and a single Brownian path is sampled on the union of the two grids so
// each leg's increments are sums of shared sub-increments. Marginally each
// leg is distributed exactly as its single-level counterpart.
CoupledUnitPathResult propagate_unit_coupled(
    const Eigen::VectorXd& y0_fine, const Eigen::VectorXd& y0_coarse,
    const Eigen::VectorXd& theta, const LevelParams& fine,
    const LevelParams& coarse, const SdeModel& model, RngStream& rng,
    CoupledPathTrace* trace = nullptr);

struct MlmcResult {
  double value = 0.0;
  double variance = 0.0;  // estimator variance from per-level sample spread
  std::uint64_t steps = 0;
};

// Diagnostic multilevel combination for E[phi(Y_1)]: plain average at level 0
// plus coupled difference averages up to max_level. counts[l] gives the
// sample size for term l and must have max_level + 1 entries.
MlmcResult mlmc_estimate(const std::function<double(const Eigen::VectorXd&)>& phi,
                         int max_level, const std::vector<std::int64_t>& counts,
                         const Eigen::VectorXd& y0, const Eigen::VectorXd& theta,
                         const SdeModel& model, const LevelTable& levels,
                         RngStream& rng);

}  // namespace levyub
