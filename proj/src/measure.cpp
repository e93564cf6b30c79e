#include "measure.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace levyub {

double LevyMeasure::threshold_for_intensity(double lambda) const {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw ConfigError("threshold_for_intensity: intensity must be positive and finite");
  const double u = truncation();
  // tail_mass is decreasing with tail_mass(u) = 0, so a root exists in
  // (0, u) iff the mass can reach lambda as delta shrinks.
  double lo = u * 0.5;
  while (tail_mass(lo) < lambda) {
    lo *= 0.5;
    if (lo < u * 1e-300) {
      std::ostringstream msg;
      msg << "threshold_for_intensity: tail mass cannot reach " << lambda
          << " anywhere in (0, " << u << ")";
      throw NoSolutionError(msg.str());
    }
  }
  double hi = u;
  // Bisect to relative tolerance 1e-12 on delta.
  for (int it = 0; it < 200 && (hi - lo) > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (tail_mass(mid) >= lambda)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

LevelParams level_params(const LevyMeasure& measure, int level) {
  if (level < 0) throw ConfigError("level_params: level must be >= 0");
  LevelParams out;
  out.level = level;
  out.step = std::exp2(-level);      // exact dyadic
  out.intensity = std::exp2(level);  // 1/step, exactly
  out.threshold = measure.threshold_for_intensity(out.intensity);
  const double u = measure.truncation();
  if (!(out.threshold > 0.0) || !(out.threshold < u)) {
    std::ostringstream msg;
    msg << "level_params: implied threshold " << out.threshold << " at level "
        << level << " is outside (0, " << u << ")";
    throw ConfigError(msg.str());
  }
  out.large_jump_mean = Eigen::VectorXd::Constant(1, measure.large_jump_mean(out.threshold));
  return out;
}

LevelTable::LevelTable(const LevyMeasure& measure, int max_level)
    : measure_(&measure) {
  if (max_level < 0) throw ConfigError("LevelTable: max_level must be >= 0");
  const double second_moment = measure.small_jump_variance(measure.truncation());
  if (!std::isfinite(second_moment) || !(second_moment > 0.0))
    throw ConfigError("LevelTable: measure must have a finite positive second moment");
  params_.reserve(static_cast<std::size_t>(max_level) + 1);
  for (int l = 0; l <= max_level; ++l) {
    params_.push_back(level_params(measure, l));
    if (l > 0 && !(params_[l].threshold < params_[l - 1].threshold))
      throw ConfigError("LevelTable: jump thresholds must decrease strictly with level");
  }
}

const LevelParams& LevelTable::at(int level) const {
  if (level < 0 || level >= static_cast<int>(params_.size()))
    throw DimensionError("LevelTable::at: level outside cached range");
  return params_[static_cast<std::size_t>(level)];
}

TruncatedStableMeasure::TruncatedStableMeasure(double c, double alpha, double u)
    : c_(c), alpha_(alpha), u_(u) {
  if (!(c > 0.0) || !std::isfinite(c))
    throw ConfigError("TruncatedStableMeasure: c must be positive");
  if (!(alpha > 0.0) || !(alpha < 2.0))
    throw ConfigError("TruncatedStableMeasure: alpha must lie in (0, 2)");
  if (!(u >= 1.0) || !std::isfinite(u))
    throw ConfigError("TruncatedStableMeasure: u must satisfy u >= 1");
}

double TruncatedStableMeasure::tail_mass(double delta) const {
  if (!(delta > 0.0)) throw ConfigError("tail_mass: delta must be positive");
  if (delta >= u_) return 0.0;
  return (2.0 * c_ / alpha_) * (std::pow(delta, -alpha_) - std::pow(u_, -alpha_));
}

double TruncatedStableMeasure::small_jump_variance(double delta) const {
  if (!(delta > 0.0) || !(delta <= u_))
    throw ConfigError("small_jump_variance: delta must lie in (0, u]");
  return (2.0 * c_ / (2.0 - alpha_)) * std::pow(delta, 2.0 - alpha_);
}

double TruncatedStableMeasure::threshold_for_intensity(double lambda) const {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw ConfigError("threshold_for_intensity: intensity must be positive and finite");
  return std::pow(lambda * alpha_ / (2.0 * c_) + std::pow(u_, -alpha_), -1.0 / alpha_);
}

double TruncatedStableMeasure::jump_height_cdf(const LevelParams& level, double x) const {
  const double delta = level.threshold;
  const double lambda = level.intensity;
  if (x <= -u_) return 0.0;
  if (x >= u_) return 1.0;
  const double scale = c_ / (lambda * alpha_);
  if (x <= -delta)
    return scale * (std::pow(-x, -alpha_) - std::pow(u_, -alpha_));
  if (x < delta) return 0.5;  // no mass in the excluded gap
  return 1.0 - scale * (std::pow(x, -alpha_) - std::pow(u_, -alpha_));
}

double TruncatedStableMeasure::jump_height_quantile(const LevelParams& level, double v) const {
  if (!(v >= 0.0 && v <= 1.0))
    throw ConfigError("jump_height_quantile: v must lie in [0, 1]");
  const double lambda = level.intensity;
  const double u_pow = std::pow(u_, -alpha_);
  // V <= 1/2 resolves to the negative branch, so the tie at 1/2 gives -delta.
  if (v <= 0.5)
    return -std::pow(lambda * alpha_ * v / c_ + u_pow, -1.0 / alpha_);
  return std::pow(lambda * alpha_ * (1.0 - v) / c_ + u_pow, -1.0 / alpha_);
}

double TruncatedStableMeasure::sample_jump(const LevelParams& level, RngStream& rng) const {
  return jump_height_quantile(level, rng.uniform());
}

}  // namespace levyub
