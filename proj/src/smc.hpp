#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "euler.hpp"

namespace levyub {

// Log observation potential log G_k(theta, y, z_k), k is 1-based. Must never
// return NaN or +inf; -inf is admitted as "zero mass" for an individual
// particle (e.g. Gaussian underflow), and a whole generation of zero mass
// aborts the filter with DegenerateWeightsError.
using LogPotentialFn =
    std::function<double(int k, const Eigen::VectorXd& theta,
                         const Eigen::VectorXd& y, const Eigen::VectorXd& z)>;

// State-space model over n unit-interval transitions: latent Euler dynamics
// from `model`, observation density G against the data z_1..z_n.
struct HmmSpec {
  const SdeModel* model = nullptr;
  LogPotentialFn log_potential;
  std::vector<Eigen::VectorXd> observations;
  Eigen::VectorXd y0;

  int horizon() const { return static_cast<int>(observations.size()); }
};

enum class PathStorage { kTerminal, kFull };

// Output of one particle filter pass. paths[i] holds the i-th resampled
// trajectory: an n x d matrix (row k-1 = state after transition k) under
// kFull, or its 1 x d terminal row under kTerminal. log_weights[i] holds
// log V^i where V^i = [prod_{k<n} mean_j w_k^j] * w_n^i / N; the V^i are
// unnormalized, and sum_i V^i estimates the evidence without bias.
struct ParticleCloud {
  std::vector<Eigen::MatrixXd> paths;
  Eigen::VectorXd log_weights;
  double log_evidence = 0.0;  // log sum_i V^i
  std::uint64_t steps = 0;    // Euler steps consumed
  PathStorage storage = PathStorage::kTerminal;
};

// N categorical draws from a normalized weight vector (sum within 1e-12 of
// one). Zero-weight entries are never selected; an all-zero vector raises
// DegenerateWeightsError.
std::vector<int> multinomial_resample(const Eigen::VectorXd& normalized_weights,
                                      int count, RngStream& rng);

// Bootstrap particle filter with multinomial resampling of complete
// trajectories at every step.
ParticleCloud particle_filter(const HmmSpec& hmm, const Eigen::VectorXd& theta,
                              const LevelParams& level, int particles,
                              RngStream& rng,
                              PathStorage storage = PathStorage::kTerminal);

// Potential for a coupled pair: the arithmetic mean of the two single-level
// potentials, guaranteeing G / G_pair <= 2 for both legs.
double coupled_potential(const HmmSpec& hmm, const Eigen::VectorXd& theta, int k,
                         const Eigen::VectorXd& y_fine,
                         const Eigen::VectorXd& y_coarse,
                         const Eigen::VectorXd& z);
double log_coupled_potential(const HmmSpec& hmm, const Eigen::VectorXd& theta,
                             int k, const Eigen::VectorXd& y_fine,
                             const Eigen::VectorXd& y_coarse,
                             const Eigen::VectorXd& z);

struct CpfOptions {
  bool record_ancestry = false;  // keep per-step resampling indices (tests)
};

// Output of the coupled particle filter: pairs of trajectories driven by the
// coupled kernel, weighted by the pair potential, resampled with shared
// indices. Pair trajectories are always stored in full together with the
// per-step log pair-potentials along the resampled ancestry, which the
// level-difference estimator needs.
struct CoupledCloud {
  std::vector<Eigen::MatrixXd> fine_paths;    // n x d each
  std::vector<Eigen::MatrixXd> coarse_paths;  // n x d each
  Eigen::VectorXd log_weights;                // log of the pair V^i
  double log_evidence = 0.0;
  Eigen::MatrixXd step_log_pair_potential;  // n x N, along resampled ancestry
  std::vector<std::vector<int>> ancestry;   // filled when record_ancestry
  std::uint64_t fine_steps = 0;
  std::uint64_t coarse_steps = 0;
};

CoupledCloud coupled_particle_filter(const HmmSpec& hmm,
                                     const Eigen::VectorXd& theta,
                                     const LevelParams& fine,
                                     const LevelParams& coarse, int particles,
                                     RngStream& rng, CpfOptions options = {});

// One signed sample of the level-difference estimator: a trajectory, the log
// magnitude of its weight, and the block sign (+1 fine, -1 coarse).
struct SignedWeightedSample {
  Eigen::MatrixXd path;
  double log_magnitude = 0.0;
  int sign = 1;
};

struct LevelDifference {
  std::vector<SignedWeightedSample> samples;  // 2N: N fine then N coarse
  double log_evidence = 0.0;                  // from the coupled filter
  std::uint64_t fine_steps = 0;
  std::uint64_t coarse_steps = 0;
};

// Run the coupled filter and reweight each leg by its likelihood ratio
//   H = prod_k G_k(leg state) / pair potential_k,
// recomputed along the stored resampled trajectories. Every factor lies in
// (0, 2]; the expectation of sum_i sign_i |V^i| phi over the 2N samples is
// the difference of the unnormalized smoothers at the two levels.
LevelDifference unbiased_level_difference(const HmmSpec& hmm,
                                          const Eigen::VectorXd& theta,
                                          const LevelParams& fine,
                                          const LevelParams& coarse,
                                          int particles, RngStream& rng,
                                          CpfOptions options = {});

// sum_i sign_i exp(log_magnitude_i) phi(path_i), with positive and negative
// masses accumulated separately (exact zero on perfect cancellation) and a
// common exponent factored out against overflow.
double signed_weighted_sum(
    const LevelDifference& difference,
    const std::function<double(const Eigen::MatrixXd&)>& phi);

}  // namespace levyub
