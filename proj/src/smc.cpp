#include "smc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "errors.hpp"
#include "stats.hpp"

namespace levyub {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void validate_hmm(const HmmSpec& hmm, const Eigen::VectorXd& theta, int particles) {
  if (hmm.model == nullptr) throw ConfigError("smc: HmmSpec has no model");
  if (!hmm.log_potential) throw ConfigError("smc: HmmSpec has no potential");
  if (hmm.observations.empty()) throw ConfigError("smc: empty observation sequence");
  if (hmm.y0.size() != hmm.model->state_dim)
    throw DimensionError("smc: initial state dimension mismatch");
  if (particles < 1) throw DimensionError("smc: need at least one particle");
  if (theta.size() < 1) throw DimensionError("smc: empty parameter vector");
}

double checked_log_potential(const HmmSpec& hmm, int k, const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& y, const Eigen::VectorXd& z) {
  const double lg = hmm.log_potential(k, theta, y, z);
  if (std::isnan(lg) || lg == std::numeric_limits<double>::infinity()) {
    std::ostringstream msg;
    msg << "smc: potential at step " << k << " is invalid (log G = " << lg << ")";
    throw NumericError(msg.str());
  }
  return lg;
}

// Normalized weights from log weights; throws if the whole generation has
// zero mass. Returns the log-sum-exp alongside.
double normalize_step_weights(const Eigen::VectorXd& lw, int k, Eigen::VectorXd& w) {
  const double lse = log_sum_exp(lw.data(), static_cast<std::size_t>(lw.size()));
  if (lse == kNegInf) {
    std::ostringstream msg;
    msg << "smc: every particle weight vanished at step " << k;
    throw DegenerateWeightsError(msg.str());
  }
  w.resize(lw.size());
  for (Eigen::Index i = 0; i < lw.size(); ++i) w[i] = std::exp(lw[i] - lse);
  return lse;
}

}  // namespace

std::vector<int> multinomial_resample(const Eigen::VectorXd& normalized_weights,
                                      int count, RngStream& rng) {
  const auto n = normalized_weights.size();
  if (n < 1) throw DimensionError("multinomial_resample: empty weight vector");
  if (count < 1) throw DimensionError("multinomial_resample: count must be positive");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = normalized_weights[i];
    if (!std::isfinite(w) || w < 0.0)
      throw NumericError("multinomial_resample: weights must be finite and nonnegative");
    total += w;
  }
  if (total == 0.0)
    throw DegenerateWeightsError("multinomial_resample: all weights are zero");
  if (std::abs(total - 1.0) > 1e-12)
    throw NumericError("multinomial_resample: weights must be normalized to 1");

  std::vector<double> cumulative(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += normalized_weights[i];
    cumulative[static_cast<std::size_t>(i)] = acc;
  }
  std::vector<int> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform() * acc;  // acc ~ 1; guards the top boundary
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    out[static_cast<std::size_t>(i)] = static_cast<int>(it - cumulative.begin());
  }
  return out;
}

ParticleCloud particle_filter(const HmmSpec& hmm, const Eigen::VectorXd& theta,
                              const LevelParams& level, int particles,
                              RngStream& rng, PathStorage storage) {
  validate_hmm(hmm, theta, particles);
  const int n = hmm.horizon();
  const int d = hmm.model->state_dim;
  const int N = particles;
  const double log_n = std::log(static_cast<double>(N));

  std::vector<Eigen::VectorXd> cur(static_cast<std::size_t>(N), hmm.y0);
  std::vector<Eigen::MatrixXd> paths;
  if (storage == PathStorage::kFull)
    paths.assign(static_cast<std::size_t>(N), Eigen::MatrixXd::Zero(n, d));

  ParticleCloud cloud;
  cloud.storage = storage;
  double running = 0.0;  // sum over completed steps of (lse_k - log N)
  Eigen::VectorXd lw(N), w(N);

  for (int k = 1; k <= n; ++k) {
    const Eigen::VectorXd& z = hmm.observations[static_cast<std::size_t>(k - 1)];
    for (int i = 0; i < N; ++i) {
      auto res = propagate_unit(cur[static_cast<std::size_t>(i)], theta, level,
                                *hmm.model, rng);
      cloud.steps += res.steps;
      cur[static_cast<std::size_t>(i)] = std::move(res.terminal);
      if (storage == PathStorage::kFull)
        paths[static_cast<std::size_t>(i)].row(k - 1) =
            cur[static_cast<std::size_t>(i)].transpose();
      lw[i] = checked_log_potential(hmm, k, theta, cur[static_cast<std::size_t>(i)], z);
    }
    const double lse = normalize_step_weights(lw, k, w);

    if (k == n) {
      // V^i pairs the final-step weight of index i with the i-th resampled
      // trajectory, as the recursion prescribes.
      cloud.log_weights.resize(N);
      for (int i = 0; i < N; ++i) cloud.log_weights[i] = running + lw[i] - log_n;
      cloud.log_evidence = running + lse - log_n;
    } else {
      running += lse - log_n;
    }

    const std::vector<int> idx = multinomial_resample(w, N, rng);
    std::vector<Eigen::VectorXd> next_cur(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i)
      next_cur[static_cast<std::size_t>(i)] = cur[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    cur.swap(next_cur);
    if (storage == PathStorage::kFull) {
      std::vector<Eigen::MatrixXd> next_paths(static_cast<std::size_t>(N));
      for (int i = 0; i < N; ++i)
        next_paths[static_cast<std::size_t>(i)] =
            paths[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      paths.swap(next_paths);
    }
  }

  if (storage == PathStorage::kFull) {
    cloud.paths = std::move(paths);
  } else {
    cloud.paths.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i)
      cloud.paths[static_cast<std::size_t>(i)] =
          cur[static_cast<std::size_t>(i)].transpose();
  }
  return cloud;
}

double log_coupled_potential(const HmmSpec& hmm, const Eigen::VectorXd& theta,
                             int k, const Eigen::VectorXd& y_fine,
                             const Eigen::VectorXd& y_coarse,
                             const Eigen::VectorXd& z) {
  const double lf = checked_log_potential(hmm, k, theta, y_fine, z);
  const double lc = checked_log_potential(hmm, k, theta, y_coarse, z);
  return log_add(lf, lc) - M_LN2;
}

double coupled_potential(const HmmSpec& hmm, const Eigen::VectorXd& theta, int k,
                         const Eigen::VectorXd& y_fine,
                         const Eigen::VectorXd& y_coarse,
                         const Eigen::VectorXd& z) {
  return std::exp(log_coupled_potential(hmm, theta, k, y_fine, y_coarse, z));
}

CoupledCloud coupled_particle_filter(const HmmSpec& hmm,
                                     const Eigen::VectorXd& theta,
                                     const LevelParams& fine,
                                     const LevelParams& coarse, int particles,
                                     RngStream& rng, CpfOptions options) {
  validate_hmm(hmm, theta, particles);
  const int n = hmm.horizon();
  const int d = hmm.model->state_dim;
  const int N = particles;
  const double log_n = std::log(static_cast<double>(N));

  std::vector<Eigen::VectorXd> cur_f(static_cast<std::size_t>(N), hmm.y0);
  std::vector<Eigen::VectorXd> cur_c(static_cast<std::size_t>(N), hmm.y0);
  CoupledCloud cloud;
  cloud.fine_paths.assign(static_cast<std::size_t>(N), Eigen::MatrixXd::Zero(n, d));
  cloud.coarse_paths.assign(static_cast<std::size_t>(N), Eigen::MatrixXd::Zero(n, d));
  cloud.step_log_pair_potential = Eigen::MatrixXd::Zero(n, N);
  if (options.record_ancestry) cloud.ancestry.reserve(static_cast<std::size_t>(n));

  double running = 0.0;
  Eigen::VectorXd lw(N), w(N);

  for (int k = 1; k <= n; ++k) {
    const Eigen::VectorXd& z = hmm.observations[static_cast<std::size_t>(k - 1)];
    for (int i = 0; i < N; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      auto res = propagate_unit_coupled(cur_f[ui], cur_c[ui], theta, fine, coarse,
                                        *hmm.model, rng);
      cloud.fine_steps += res.fine_steps;
      cloud.coarse_steps += res.coarse_steps;
      cur_f[ui] = std::move(res.fine_terminal);
      cur_c[ui] = std::move(res.coarse_terminal);
      cloud.fine_paths[ui].row(k - 1) = cur_f[ui].transpose();
      cloud.coarse_paths[ui].row(k - 1) = cur_c[ui].transpose();
      lw[i] = log_coupled_potential(hmm, theta, k, cur_f[ui], cur_c[ui], z);
      cloud.step_log_pair_potential(k - 1, i) = lw[i];
    }
    const double lse = normalize_step_weights(lw, k, w);

    if (k == n) {
      cloud.log_weights.resize(N);
      for (int i = 0; i < N; ++i) cloud.log_weights[i] = running + lw[i] - log_n;
      cloud.log_evidence = running + lse - log_n;
    } else {
      running += lse - log_n;
    }

    // One index draw resamples both legs: the members of a pair always share
    // their ancestor.
    const std::vector<int> idx = multinomial_resample(w, N, rng);
    if (options.record_ancestry) cloud.ancestry.push_back(idx);
    std::vector<Eigen::VectorXd> nf(static_cast<std::size_t>(N)),
        nc(static_cast<std::size_t>(N));
    std::vector<Eigen::MatrixXd> npf(static_cast<std::size_t>(N)),
        npc(static_cast<std::size_t>(N));
    Eigen::MatrixXd ng = cloud.step_log_pair_potential;
    for (int i = 0; i < N; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const auto src = static_cast<std::size_t>(idx[ui]);
      nf[ui] = cur_f[src];
      nc[ui] = cur_c[src];
      npf[ui] = cloud.fine_paths[src];
      npc[ui] = cloud.coarse_paths[src];
      ng.col(i).head(k) = cloud.step_log_pair_potential.col(idx[ui]).head(k);
    }
    cur_f.swap(nf);
    cur_c.swap(nc);
    cloud.fine_paths.swap(npf);
    cloud.coarse_paths.swap(npc);
    cloud.step_log_pair_potential.swap(ng);
  }
  return cloud;
}

LevelDifference unbiased_level_difference(const HmmSpec& hmm,
                                          const Eigen::VectorXd& theta,
                                          const LevelParams& fine,
                                          const LevelParams& coarse,
                                          int particles, RngStream& rng,
                                          CpfOptions options) {
  CoupledCloud cloud =
      coupled_particle_filter(hmm, theta, fine, coarse, particles, rng, options);
  const int n = hmm.horizon();
  const int N = particles;

  LevelDifference out;
  out.log_evidence = cloud.log_evidence;
  out.fine_steps = cloud.fine_steps;
  out.coarse_steps = cloud.coarse_steps;
  out.samples.resize(static_cast<std::size_t>(2 * N));

  // Likelihood ratios along the stored resampled trajectories. Each factor
  // G / G_pair is bounded by 2 because the pair potential is the arithmetic
  // mean of the two leg potentials.
  constexpr double kFactorBound = M_LN2 + 1e-9;
  for (int i = 0; i < N; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    double log_h_fine = 0.0, log_h_coarse = 0.0;
    for (int k = 1; k <= n; ++k) {
      const Eigen::VectorXd& z = hmm.observations[static_cast<std::size_t>(k - 1)];
      const double log_pair = cloud.step_log_pair_potential(k - 1, i);
      const double lf = checked_log_potential(
          hmm, k, theta, cloud.fine_paths[ui].row(k - 1).transpose(), z);
      const double lc = checked_log_potential(
          hmm, k, theta, cloud.coarse_paths[ui].row(k - 1).transpose(), z);
      const double factor_f = lf - log_pair;
      const double factor_c = lc - log_pair;
      if (factor_f > kFactorBound || factor_c > kFactorBound)
        throw NumericError(
            "unbiased_level_difference: likelihood-ratio factor exceeded 2");
      log_h_fine += factor_f;
      log_h_coarse += factor_c;
    }
    out.samples[ui] = SignedWeightedSample{cloud.fine_paths[ui],
                                           cloud.log_weights[i] + log_h_fine, +1};
    out.samples[static_cast<std::size_t>(N + i)] = SignedWeightedSample{
        cloud.coarse_paths[ui], cloud.log_weights[i] + log_h_coarse, -1};
  }
  return out;
}

double signed_weighted_sum(
    const LevelDifference& difference,
    const std::function<double(const Eigen::MatrixXd&)>& phi) {
  double max_log = kNegInf;
  for (const auto& s : difference.samples)
    if (s.log_magnitude > max_log) max_log = s.log_magnitude;
  if (max_log == kNegInf) return 0.0;
  SignedAccumulator acc;
  for (const auto& s : difference.samples) {
    const double term = std::exp(s.log_magnitude - max_log) * phi(s.path);
    acc.add(s.sign > 0 ? term : -term);
  }
  return std::exp(max_log) * acc.value();
}

}  // namespace levyub
