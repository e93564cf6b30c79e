#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "errors.hpp"
#include "measure.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "schedule.hpp"

using namespace levyub;

namespace {

TruncatedStableMeasure reference_measure() {
  return TruncatedStableMeasure(0.8, 0.5, 1.0);
}

int jump_count(const JumpSchedule& s) {
  int count = 0;
  for (double h : s.heights) count += h != 0.0 ? 1 : 0;
  return count;
}

std::vector<std::pair<double, double>> jumps_of(const JumpSchedule& s) {
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < s.heights.size(); ++i)
    if (s.heights[i] != 0.0) out.emplace_back(s.times[i + 1], s.heights[i]);
  return out;
}

}  // namespace

TEST_CASE("schedule structure: refined grid covers the dyadic mesh exactly") {
  const auto m = reference_measure();
  const LevelParams level = level_params(m, 3);
  RngStream rng(StreamKey{42}.child(1));

  for (int rep = 0; rep < 400; ++rep) {
    const JumpSchedule s = single_level_schedule(level, m, rng);
    CHECK(s.level == 3);
    REQUIRE(s.times.size() >= 2);
    REQUIRE(s.heights.size() == s.times.size() - 1);
    CHECK(s.cells() == s.heights.size());
    CHECK(s.times.front() == 0.0);
    CHECK(s.times.back() == 1.0);  // exactly, never past the interval
    for (std::size_t i = 1; i < s.times.size(); ++i)
      CHECK(s.times[i] > s.times[i - 1]);  // strictly increasing: no duplicates

    // Sliding refinement: a pure-mesh point sits exactly at prev + step
    // (or the terminal 1.0), and a jump point never overshoots it.
    for (std::size_t i = 0; i < s.heights.size(); ++i) {
      const double mesh_next = std::min(s.times[i] + level.step, 1.0);
      if (s.heights[i] == 0.0)
        CHECK(s.times[i + 1] == mesh_next);
      else
        CHECK(s.times[i + 1] <= mesh_next);
    }

    // Jump heights live in the retained band, mesh-only cells carry zero.
    for (double h : s.heights)
      if (h != 0.0) {
        CHECK(std::fabs(h) >= level.threshold * (1.0 - 1e-12));
        CHECK(std::fabs(h) <= 1.0);
      }
  }
}

TEST_CASE("no-jump draw at level 0 gives the bare mesh with a zero cell") {
  const auto m = reference_measure();
  const LevelParams level = level_params(m, 0);  // intensity 1
  RngStream rng(StreamKey{42}.child(2));
  bool saw_empty = false;
  for (int rep = 0; rep < 200 && !saw_empty; ++rep) {
    const JumpSchedule s = single_level_schedule(level, m, rng);
    if (jump_count(s) == 0) {
      saw_empty = true;  // probability e^-1 per draw
      REQUIRE(s.times.size() == 2);
      CHECK(s.times[0] == 0.0);
      CHECK(s.times[1] == 1.0);
      REQUIRE(s.heights.size() == 1);
      CHECK(s.heights[0] == 0.0);
    }
  }
  CHECK(saw_empty);
}

TEST_CASE("jump counts follow the level intensity: Poisson(8) at level 3") {
  const auto m = reference_measure();
  const LevelParams level = level_params(m, 3);
  RngStream rng(StreamKey{42}.child(3));

  const int n = 4000;
  std::vector<double> counts;
  counts.reserve(n);
  for (int i = 0; i < n; ++i)
    counts.push_back(static_cast<double>(jump_count(single_level_schedule(level, m, rng))));

  const auto mom = oracles::moments(counts);
  CHECK(std::fabs(mom.mean - 8.0) < 4.0 * std::sqrt(8.0 / n));
  // Poisson: variance equals the mean. 6-sigma band for the variance of the
  // sample variance, Var(s^2) ~ (mu4 - var^2)/n with mu4 = 3 var^2 + var.
  const double var_se = std::sqrt((3.0 * 64.0 + 8.0 - 64.0) / n);
  CHECK(std::fabs(mom.variance - 8.0) < 6.0 * var_se);

  // Chi-square goodness of fit against the exact pmf on binned counts.
  const int lo = 3, hi = 13;  // tails pooled
  std::vector<double> expected(hi - lo + 2, 0.0), observed(hi - lo + 2, 0.0);
  for (int k = 0; k <= 60; ++k) {
    const int bin = k < lo ? 0 : (k > hi ? hi - lo + 1 : k - lo + 1);
    expected[bin] += n * oracles::poisson_pmf(k, 8.0);
  }
  for (double c : counts) {
    const int k = static_cast<int>(c);
    const int bin = k < lo ? 0 : (k > hi ? hi - lo + 1 : k - lo + 1);
    observed[bin] += 1.0;
  }
  double chi2 = 0.0;
  for (std::size_t b = 0; b < expected.size(); ++b)
    chi2 += (observed[b] - expected[b]) * (observed[b] - expected[b]) / expected[b];
  CHECK(oracles::chi_square_sf(chi2, static_cast<double>(expected.size() - 1)) > 1e-3);
}

TEST_CASE("first arrival is exponential with the level intensity") {
  const auto m = reference_measure();
  const LevelParams level = level_params(m, 3);
  RngStream rng(StreamKey{42}.child(4));

  const int n = 4000;
  std::vector<double> first_times;
  first_times.reserve(n);
  while (static_cast<int>(first_times.size()) < n) {
    const auto jumps = jumps_of(single_level_schedule(level, m, rng));
    if (!jumps.empty()) first_times.push_back(jumps.front().first);
  }
  // Conditional law of the first arrival given at least one jump in [0, 1]:
  // truncated exponential with rate 8.
  const double z = -std::expm1(-8.0);
  const double p = oracles::ks_test_p(first_times, [&](double t) {
    return -std::expm1(-8.0 * t) / z;
  });
  CHECK(p > 1e-3);
}

TEST_CASE("coupled schedule thins the fine jumps exactly") {
  const auto m = reference_measure();
  const LevelParams fine = level_params(m, 3);
  const LevelParams coarse = level_params(m, 2);
  RngStream rng(StreamKey{42}.child(5));

  bool saw_thinned_jump = false;
  for (int rep = 0; rep < 300; ++rep) {
    const CoupledJumpSchedule cs = coupled_schedule(fine, coarse, m, rng);
    CHECK(cs.fine.level == 3);
    CHECK(cs.coarse.level == 2);

    const auto fine_jumps = jumps_of(cs.fine);
    const auto coarse_jumps = jumps_of(cs.coarse);

    // The coarse jumps are exactly the fine jumps at or above the coarse
    // threshold: same times, same heights, bitwise.
    std::vector<std::pair<double, double>> kept;
    for (const auto& j : fine_jumps)
      if (std::fabs(j.second) >= coarse.threshold) kept.push_back(j);
    REQUIRE(coarse_jumps.size() == kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
      CHECK(coarse_jumps[i].first == kept[i].first);
      CHECK(coarse_jumps[i].second == kept[i].second);
    }
    if (kept.size() < fine_jumps.size()) saw_thinned_jump = true;

    // Each leg obeys its own sliding-refinement invariant.
    for (std::size_t i = 0; i < cs.fine.heights.size(); ++i) {
      const double mesh_next = std::min(cs.fine.times[i] + fine.step, 1.0);
      if (cs.fine.heights[i] == 0.0)
        CHECK(cs.fine.times[i + 1] == mesh_next);
      else
        CHECK(cs.fine.times[i + 1] <= mesh_next);
    }
    for (std::size_t i = 0; i < cs.coarse.heights.size(); ++i) {
      const double mesh_next = std::min(cs.coarse.times[i] + coarse.step, 1.0);
      if (cs.coarse.heights[i] == 0.0)
        CHECK(cs.coarse.times[i + 1] == mesh_next);
      else
        CHECK(cs.coarse.times[i + 1] <= mesh_next);
    }
  }
  CHECK(saw_thinned_jump);  // small fine-only jumps do occur
}

TEST_CASE("coupled coarse leg has the single-level marginal law") {
  const auto m = reference_measure();
  const LevelParams fine = level_params(m, 3);
  const LevelParams coarse = level_params(m, 2);
  RngStream rng_pair(StreamKey{42}.child(6));
  RngStream rng_single(StreamKey{42}.child(7));

  const int n = 4000;
  std::vector<double> pair_counts, single_counts;
  std::vector<double> pair_heights, single_heights;
  for (int i = 0; i < n; ++i) {
    const CoupledJumpSchedule cs = coupled_schedule(fine, coarse, m, rng_pair);
    pair_counts.push_back(static_cast<double>(jump_count(cs.coarse)));
    for (const auto& j : jumps_of(cs.coarse)) pair_heights.push_back(j.second);
    const JumpSchedule s = single_level_schedule(coarse, m, rng_single);
    single_counts.push_back(static_cast<double>(jump_count(s)));
    for (const auto& j : jumps_of(s)) single_heights.push_back(j.second);
  }
  // Counts: Poisson(4) either way; compare means within 4 combined sigma.
  const auto mp = oracles::moments(pair_counts);
  const auto ms = oracles::moments(single_counts);
  CHECK(std::fabs(mp.mean - ms.mean) <
        4.0 * std::sqrt(mp.se_mean * mp.se_mean + ms.se_mean * ms.se_mean));
  CHECK(std::fabs(mp.mean - 4.0) < 4.0 * std::sqrt(4.0 / n));
  // Heights: identical continuous law; two-sample KS.
  CHECK(oracles::ks_two_sample_p(pair_heights, single_heights) > 1e-3);
  // And against the closed-form CDF directly.
  const double p = oracles::ks_test_p(
      pair_heights, [&](double x) { return m.jump_height_cdf(coarse, x); });
  CHECK(p > 1e-3);
}

TEST_CASE("coupled schedule validates the level pairing") {
  const auto m = reference_measure();
  RngStream rng(StreamKey{42}.child(8));
  const LevelParams l4 = level_params(m, 4);
  const LevelParams l2 = level_params(m, 2);
  CHECK_THROWS_AS(coupled_schedule(l4, l2, m, rng), DimensionError);
  CHECK_THROWS_AS(coupled_schedule(l2, l4, m, rng), DimensionError);
}

TEST_CASE("schedules are reproducible from the stream key") {
  const auto m = reference_measure();
  const LevelParams level = level_params(m, 3);
  RngStream a(StreamKey{99}.child(1));
  RngStream b(StreamKey{99}.child(1));
  RngStream c(StreamKey{99}.child(2));
  const JumpSchedule sa = single_level_schedule(level, m, a);
  const JumpSchedule sb = single_level_schedule(level, m, b);
  const JumpSchedule sc = single_level_schedule(level, m, c);
  REQUIRE(sa.times.size() == sb.times.size());
  for (std::size_t i = 0; i < sa.times.size(); ++i)
    CHECK(sa.times[i] == sb.times[i]);
  for (std::size_t i = 0; i < sa.heights.size(); ++i)
    CHECK(sa.heights[i] == sb.heights[i]);
  const bool same_shape = sa.times.size() == sc.times.size();
  bool identical = same_shape;
  if (same_shape)
    for (std::size_t i = 0; i < sa.times.size(); ++i)
      identical = identical && sa.times[i] == sc.times[i];
  CHECK_FALSE(identical);
}
