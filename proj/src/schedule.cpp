#include "schedule.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace levyub {

namespace {

// Refine raw jump times with a uniform mesh: the next grid point is the
// earlier of (previous + step) and the next jump; a jump landing exactly on
// a mesh point wins the tie and carries its height. Terminates at 1.
void refine_with_mesh(const std::vector<double>& raw_times,
                      const std::vector<double>& raw_heights, double step,
                      std::vector<double>& times, std::vector<double>& heights) {
  times.clear();
  heights.clear();
  times.push_back(0.0);
  std::size_t j = 0;
  double prev = 0.0;
  while (prev < 1.0) {
    const double mesh = std::min(prev + step, 1.0);
    if (j < raw_times.size() && raw_times[j] <= mesh) {
      times.push_back(raw_times[j]);
      heights.push_back(raw_heights[j]);
      prev = raw_times[j];
      ++j;
    } else {
      times.push_back(mesh);
      heights.push_back(0.0);
      prev = mesh;
    }
  }
}

}  // namespace

JumpSchedule single_level_schedule(const LevelParams& level,
                                   const LevyMeasure& measure, RngStream& rng) {
  // Arrival times first, then heights, as separate passes over the stream.
  std::vector<double> raw_times;
  double t = 0.0;
  for (;;) {
    t += rng.exponential(level.intensity);
    if (t > 1.0) break;  // clamped pseudo-arrival: marks the end, not a jump
    raw_times.push_back(t);
    if (t == 1.0) break;  // genuine arrival exactly at the terminal point
  }
  std::vector<double> raw_heights(raw_times.size());
  for (std::size_t i = 0; i < raw_times.size(); ++i)
    raw_heights[i] = measure.sample_jump(level, rng);

  JumpSchedule out;
  out.level = level.level;
  refine_with_mesh(raw_times, raw_heights, level.step, out.times, out.heights);
  return out;
}

CoupledJumpSchedule coupled_schedule(const LevelParams& fine,
                                     const LevelParams& coarse,
                                     const LevyMeasure& measure, RngStream& rng) {
  if (coarse.level != fine.level - 1)
    throw DimensionError("coupled_schedule: coarse level must be fine level - 1");
  if (!(coarse.threshold > fine.threshold))
    throw DimensionError("coupled_schedule: coarse threshold must exceed fine threshold");

  CoupledJumpSchedule out;
  out.fine = single_level_schedule(fine, measure, rng);

  // Thinning: the coarse jumps are the fine jumps that clear the coarse
  // threshold, at identical times with identical heights.
  std::vector<double> raw_times, raw_heights;
  for (std::size_t i = 0; i < out.fine.heights.size(); ++i) {
    const double h = out.fine.heights[i];
    if (h != 0.0 && std::abs(h) >= coarse.threshold) {
      raw_times.push_back(out.fine.times[i + 1]);
      raw_heights.push_back(h);
    }
  }
  out.coarse.level = coarse.level;
  refine_with_mesh(raw_times, raw_heights, coarse.step, out.coarse.times,
                   out.coarse.heights);
  return out;
}

}  // namespace levyub
