#include <doctest.h>

#include <cmath>
#include <vector>

#include "errors.hpp"
#include "measure.hpp"
#include "oracles.hpp"
#include "rng.hpp"

using namespace levyub;

namespace {

// The reference measure used across the shipped experiments.
TruncatedStableMeasure reference_measure() {
  return TruncatedStableMeasure(0.8, 0.5, 1.0);
}

double rel_err(double actual, double expected) {
  return std::fabs(actual - expected) / std::fabs(expected);
}

}  // namespace

TEST_CASE("tail mass closed form: level-2 threshold carries intensity 4") {
  const auto m = reference_measure();
  // delta = 16/81 = (4/9)^2, so delta^(-1/2) = 9/4 and
  // tail_mass = 3.2 * (9/4 - 1) = 4 exactly (up to pow rounding).
  CHECK(rel_err(m.tail_mass(16.0 / 81.0), 4.0) < 1e-13);
  // Monotone decreasing, zero at the support edge and beyond.
  CHECK(m.tail_mass(0.1) > m.tail_mass(0.2));
  CHECK(m.tail_mass(1.0) == 0.0);
  CHECK(m.tail_mass(1.5) == 0.0);
  CHECK_THROWS_AS(m.tail_mass(0.0), ConfigError);
  CHECK_THROWS_AS(m.tail_mass(-0.5), ConfigError);
}

TEST_CASE("threshold inversion: closed form and generic bisection agree") {
  const auto m = reference_measure();
  const double expected = 16.0 / 81.0;  // = 0.19753086419753085
  CHECK(rel_err(m.threshold_for_intensity(4.0), expected) < 1e-10);

  // Same measure exposed without the closed-form override: the base-class
  // bisection must land on the same threshold.
  struct BisectOnly : LevyMeasure {
    TruncatedStableMeasure inner{0.8, 0.5, 1.0};
    double tail_mass(double d) const override { return inner.tail_mass(d); }
    double truncation() const override { return inner.truncation(); }
    double large_jump_mean(double d) const override {
      return inner.large_jump_mean(d);
    }
    double small_jump_variance(double d) const override {
      return inner.small_jump_variance(d);
    }
    double sample_jump(const LevelParams& level, RngStream& rng) const override {
      return inner.sample_jump(level, rng);
    }
  } bisect;
  CHECK(rel_err(bisect.threshold_for_intensity(4.0), expected) < 1e-10);
  for (double lambda : {1.0, 2.0, 256.0, 16384.0})
    CHECK(rel_err(bisect.threshold_for_intensity(lambda),
                  m.threshold_for_intensity(lambda)) < 1e-10);

  CHECK_THROWS_AS(m.threshold_for_intensity(0.0), ConfigError);
  CHECK_THROWS_AS(m.threshold_for_intensity(-3.0), ConfigError);
}

TEST_CASE("threshold inversion fails loudly when the tail mass is bounded") {
  // A measure whose total tail mass never exceeds 1: intensity 5 has no root.
  struct Bounded : LevyMeasure {
    double tail_mass(double d) const override {
      return d >= 1.0 ? 0.0 : 1.0 - d;
    }
    double truncation() const override { return 1.0; }
    double large_jump_mean(double) const override { return 0.0; }
    double small_jump_variance(double d) const override { return d; }
    double sample_jump(const LevelParams&, RngStream&) const override {
      return 0.0;
    }
  } bounded;
  CHECK_THROWS_AS(bounded.threshold_for_intensity(5.0), NoSolutionError);
  CHECK(rel_err(bounded.threshold_for_intensity(0.25), 0.75) < 1e-10);
}

TEST_CASE("level constants: dyadic intensities exact, thresholds inside (0,1)") {
  const auto m = reference_measure();
  const LevelTable table(m, 14);
  CHECK(table.max_level() == 14);
  CHECK(&table.measure() == static_cast<const LevyMeasure*>(&m));
  double prev_threshold = 2.0;
  for (int l = 0; l <= 14; ++l) {
    const LevelParams& p = table.at(l);
    CHECK(p.level == l);
    CHECK(p.intensity == std::exp2(static_cast<double>(l)));  // exact
    CHECK(p.step == std::exp2(static_cast<double>(-l)));      // exact
    CHECK(p.threshold > 0.0);
    CHECK(p.threshold < 1.0);
    CHECK(p.threshold < prev_threshold);
    prev_threshold = p.threshold;
    REQUIRE(p.large_jump_mean.size() == 1);
    CHECK(p.large_jump_mean[0] == 0.0);  // symmetric measure: no compensator
  }
  CHECK(rel_err(table.at(2).threshold, 16.0 / 81.0) < 1e-10);
  CHECK_THROWS_AS(table.at(-1), DimensionError);
  CHECK_THROWS_AS(table.at(15), DimensionError);
  CHECK_THROWS_AS(level_params(m, -2), ConfigError);
}

TEST_CASE("small-jump variance closed form against frozen values") {
  const auto m = reference_measure();
  // sigma^2(delta) = (2c/(2-alpha)) delta^(2-alpha); at delta = 16/81 this is
  // (1.6/1.5) * (16/81)^1.5 = (1.6/1.5) * (64/729) = 1024/10935.
  CHECK(rel_err(m.small_jump_variance(16.0 / 81.0), 1024.0 / 10935.0) < 1e-12);
  // Whole-support second moment: (1.6/1.5) * 1^(3/2).
  CHECK(rel_err(m.small_jump_variance(1.0), 1.6 / 1.5) < 1e-12);
  CHECK_THROWS_AS(m.small_jump_variance(0.0), ConfigError);
  CHECK_THROWS_AS(m.small_jump_variance(1.5), ConfigError);

  // Cross-check the closed form by quadrature of x^2 nu(dx) over |x| < delta.
  const double delta = 16.0 / 81.0;
  const double by_quadrature =
      2.0 * oracles::integrate(
                [](double x) { return 0.8 * std::pow(x, 0.5); }, 1e-14, delta);
  CHECK(rel_err(m.small_jump_variance(delta), by_quadrature) < 1e-6);
}

TEST_CASE("jump height CDF: branch values, flat gap, clamping") {
  const auto m = reference_measure();
  const LevelParams level = level_params(m, 2);
  const double delta = level.threshold;

  // Frozen value on the negative branch: F(-1/2) = 0.4 (sqrt(2) - 1).
  CHECK(rel_err(m.jump_height_cdf(level, -0.5), 0.4 * (M_SQRT2 - 1.0)) < 1e-12);

  // The excluded gap (-delta, delta) carries no mass: flat CDF at 1/2.
  CHECK(m.jump_height_cdf(level, 0.0) == 0.5);
  CHECK(m.jump_height_cdf(level, -delta * 0.5) == 0.5);
  CHECK(m.jump_height_cdf(level, delta * 0.99) == 0.5);
  CHECK(rel_err(m.jump_height_cdf(level, -delta), 0.5) < 1e-13);

  // Clamped outside the support; continuous inside.
  CHECK(m.jump_height_cdf(level, -1.0) == 0.0);
  CHECK(m.jump_height_cdf(level, -7.0) == 0.0);
  CHECK(m.jump_height_cdf(level, 1.0) == 1.0);
  CHECK(m.jump_height_cdf(level, 7.0) == 1.0);
  CHECK(m.jump_height_cdf(level, -0.4) < m.jump_height_cdf(level, -0.3));
  CHECK(m.jump_height_cdf(level, 0.3) < m.jump_height_cdf(level, 0.4));
  // Symmetry: F(-x) = 1 - F(x) on the branches.
  for (double x : {0.25, 0.5, 0.75, 0.9})
    CHECK(rel_err(m.jump_height_cdf(level, -x),
                  1.0 - m.jump_height_cdf(level, x)) < 1e-12);
}

TEST_CASE("jump height quantile: inverse of the CDF, tie resolves negative") {
  const auto m = reference_measure();
  const LevelParams level = level_params(m, 2);
  const double delta = level.threshold;

  // v = 1/2 sits on the tie between the branches and must map to -delta.
  const double mid = m.jump_height_quantile(level, 0.5);
  CHECK(mid < 0.0);
  CHECK(rel_err(mid, -delta) < 1e-12);
  CHECK(rel_err(m.jump_height_quantile(level, 0.0), -1.0) < 1e-14);
  CHECK(rel_err(m.jump_height_quantile(level, 1.0), 1.0) < 1e-14);

  // F(Q(v)) = v across a fine grid (the sampler's correctness hinges on it).
  for (int i = 1; i <= 99; ++i) {
    const double v = static_cast<double>(i) / 100.0;
    const double x = m.jump_height_quantile(level, v);
    CHECK(std::fabs(x) >= delta * (1.0 - 1e-12));
    CHECK(std::fabs(x) <= 1.0 + 1e-12);
    CHECK(std::fabs(m.jump_height_cdf(level, x) - v) < 1e-10);
  }
  // Q(F(x)) = x on both branches.
  for (double x : {-0.9, -0.5, -0.25, 0.3, 0.6, 0.95})
    CHECK(rel_err(m.jump_height_quantile(level, m.jump_height_cdf(level, x)), x) <
          1e-10);
  CHECK_THROWS_AS(m.jump_height_quantile(level, -0.1), ConfigError);
  CHECK_THROWS_AS(m.jump_height_quantile(level, 1.1), ConfigError);
}

TEST_CASE("jump sampler matches its own law: KS, support, sign balance") {
  const auto m = reference_measure();
  const LevelParams level = level_params(m, 2);
  const double delta = level.threshold;
  RngStream rng(StreamKey{20260819}.child(11));

  const int n = 20000;
  std::vector<double> draws;
  draws.reserve(n);
  int negatives = 0;
  for (int i = 0; i < n; ++i) {
    const double h = m.sample_jump(level, rng);
    CHECK(std::fabs(h) >= delta * (1.0 - 1e-12));
    CHECK(std::fabs(h) <= 1.0);
    negatives += h < 0.0 ? 1 : 0;
    draws.push_back(h);
  }
  // Sign is a fair coin: binomial 4-sigma band.
  const double sign_dev = std::fabs(negatives - 0.5 * n) / std::sqrt(0.25 * n);
  CHECK(sign_dev < 4.0);

  const double p = oracles::ks_test_p(
      draws, [&](double x) { return m.jump_height_cdf(level, x); });
  CHECK(p > 1e-3);
}

TEST_CASE("jump sampler second moment against quadrature") {
  const auto m = reference_measure();
  const LevelParams level = level_params(m, 2);
  const double delta = level.threshold;

  // E[h^2] = (2 / lambda) * int_delta^1 c x^(1-alpha) dx; the closed form is
  // (1.6/6) * (1 - 64/729) = 0.24325560509069313 at level 2.
  const double by_quadrature =
      2.0 / level.intensity *
      oracles::integrate([](double x) { return 0.8 * std::pow(x, 0.5); }, delta,
                         1.0);
  const double frozen = (1.6 / 6.0) * (1.0 - 64.0 / 729.0);
  CHECK(rel_err(by_quadrature, frozen) < 1e-9);

  RngStream rng(StreamKey{20260819}.child(12));
  const int n = 100000;
  std::vector<double> squares;
  squares.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double h = m.sample_jump(level, rng);
    squares.push_back(h * h);
  }
  const auto mom = oracles::moments(squares);
  CHECK(std::fabs(mom.mean - by_quadrature) < 4.0 * mom.se_mean);
}

TEST_CASE("measure constructor rejects invalid parameters") {
  CHECK_THROWS_AS(TruncatedStableMeasure(0.0, 0.5, 1.0), ConfigError);
  CHECK_THROWS_AS(TruncatedStableMeasure(-1.0, 0.5, 1.0), ConfigError);
  CHECK_THROWS_AS(TruncatedStableMeasure(0.8, 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(TruncatedStableMeasure(0.8, 2.0, 1.0), ConfigError);
  CHECK_THROWS_AS(TruncatedStableMeasure(0.8, 0.5, 0.5), ConfigError);
  CHECK_NOTHROW(TruncatedStableMeasure(0.8, 1.5, 2.0));
}

TEST_CASE("large jumps have zero mean by symmetry") {
  const auto m = reference_measure();
  CHECK(m.large_jump_mean(0.2) == 0.0);
  CHECK(m.large_jump_mean(0.9) == 0.0);
}
