#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace levyub {

struct LevelParams;

// A truncated Lévy jump measure on the real line. The driving process keeps
// only jumps with magnitude >= delta_l at discretization level l, where
// delta_l is chosen so that the retained-jump intensity equals 1/step with
// step = 2^-l. Implementations must provide the tail mass
//     lambda(delta) = nu({x : |x| >= delta}),
// the mean of the retained jumps (the drift compensator), the second moment
// of the discarded small jumps, and a sampler for the normalized retained
// jump law  mu(dx) = 1{|x| >= delta} nu(dx) / lambda(delta).
class LevyMeasure {
 public:
  virtual ~LevyMeasure() = default;

  // nu mass of {|x| >= delta}; decreasing in delta, zero at the truncation
  // radius.
  virtual double tail_mass(double delta) const = 0;

  // Support radius u: nu vanishes outside [-u, u].
  virtual double truncation() const = 0;

  // integral of x over {|x| >= delta} (zero for symmetric measures).
  virtual double large_jump_mean(double delta) const = 0;

  // integral of x^2 over {|x| < delta}: the variance lost by dropping small
  // jumps; controls the strong coupling rate.
  virtual double small_jump_variance(double delta) const = 0;

  // One draw from the retained-jump law at the given level.
  virtual double sample_jump(const LevelParams& level, RngStream& rng) const = 0;

  // Solve tail_mass(delta) = lambda for delta in (0, u). The default is a
  // bisection on (eps, u) to relative tolerance 1e-12; concrete measures may
  // override with a closed form. Throws NoSolutionError when the tail mass
  // cannot reach lambda inside the interval.
  virtual double threshold_for_intensity(double lambda) const;
};

// Per-level constants: step size, retained-jump intensity, jump threshold,
// and the compensator for the retained jumps. Cached by LevelTable; all
// propagation code receives these by reference and never re-solves.
struct LevelParams {
  int level = 0;
  double step = 1.0;              // 2^-level
  double intensity = 1.0;         // 1/step, exactly
  double threshold = 0.0;         // delta_level, in (0, u)
  Eigen::VectorXd large_jump_mean;  // compensator, dimension of the driver
};

// Compute (and validate) the constants for one level: intensity 2^l exactly,
// threshold from the measure, compensator from the retained jumps. Fails
// loudly when the implied threshold does not satisfy 0 < delta < u.
LevelParams level_params(const LevyMeasure& measure, int level);

// Immutable per-measure cache of LevelParams for levels 0..max_level.
// Construction validates delta_l < u and monotone decrease of delta_l, and
// checks that the measure has finite second moment on its support.
class LevelTable {
 public:
  LevelTable(const LevyMeasure& measure, int max_level);

  const LevelParams& at(int level) const;
  int max_level() const { return static_cast<int>(params_.size()) - 1; }
  const LevyMeasure& measure() const { return *measure_; }

 private:
  const LevyMeasure* measure_;
  std::vector<LevelParams> params_;
};

// Symmetric truncated stable measure
//     nu(dx) = c |x|^(-1-alpha) dx   on [-u, 0) union (0, u],
// with 0 < alpha < 2, c > 0, u >= 1. Tail mass, threshold, small-jump
// variance, jump CDF and its inverse all have closed forms:
//     lambda(delta)      = (2c/alpha) (delta^-alpha - u^-alpha)
//     delta(lambda)      = (lambda alpha / (2c) + u^-alpha)^(-1/alpha)
//     sigma^2(delta)     = (2c/(2-alpha)) delta^(2-alpha)
//     large_jump_mean    = 0 (symmetry)
class TruncatedStableMeasure : public LevyMeasure {
 public:
  TruncatedStableMeasure(double c, double alpha, double u);

  double tail_mass(double delta) const override;
  double truncation() const override { return u_; }
  double large_jump_mean(double /*delta*/) const override { return 0.0; }
  double small_jump_variance(double delta) const override;
  double sample_jump(const LevelParams& level, RngStream& rng) const override;
  double threshold_for_intensity(double lambda) const override;

  // CDF of the retained jump law at threshold level.threshold. Piecewise:
  // increasing on [-u, -delta], flat 1/2 across the excluded gap, increasing
  // again on [delta, u]; clamped to {0, 1} outside [-u, u].
  double jump_height_cdf(const LevelParams& level, double x) const;

  // Inverse of the CDF on [0, 1]. V <= 1/2 maps to the negative branch, so
  // the mid-point tie resolves to -delta.
  double jump_height_quantile(const LevelParams& level, double v) const;

  double c() const { return c_; }
  double alpha() const { return alpha_; }

 private:
  double c_;
  double alpha_;
  double u_;
};

}  // namespace levyub
