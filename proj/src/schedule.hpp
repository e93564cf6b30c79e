#pragma once

#include <vector>

#include "measure.hpp"
#include "rng.hpp"

namespace levyub {

// Time grid for one unit interval at a fixed level. times[0] = 0 and
// times.back() = 1; heights[i] is the jump attached to times[i + 1] (zero on
// pure mesh points). Invariants: strictly increasing times, spacing at most
// the level step, every nonzero height magnitude in [threshold, u].
struct JumpSchedule {
  int level = 0;
  std::vector<double> times;    // size K + 1
  std::vector<double> heights;  // size K

  std::size_t cells() const { return heights.size(); }
};

// Fine schedule at level l together with a coarse schedule at level l - 1
// whose jumps are exactly the fine jumps of magnitude >= the coarse
// threshold, at identical times.
struct CoupledJumpSchedule {
  JumpSchedule fine;
  JumpSchedule coarse;
};

// Draw one unit-interval schedule: exponential inter-arrivals at the level
// intensity determine the retained jumps on [0, 1); the grid then refines the
// jump times with mesh spacing equal to the level step. The arrival sequence
// stops at the first time exceeding 1; an arrival landing exactly on 1.0
// keeps its sampled height as the terminal point.
JumpSchedule single_level_schedule(const LevelParams& level,
                                   const LevyMeasure& measure, RngStream& rng);

// Draw a fine schedule at `fine` and derive the coupled coarse schedule at
// `coarse` (which must be exactly one level below) by keeping the fine jumps
// with magnitude >= coarse.threshold and re-refining with the coarse mesh.
CoupledJumpSchedule coupled_schedule(const LevelParams& fine,
                                     const LevelParams& coarse,
                                     const LevyMeasure& measure, RngStream& rng);

}  // namespace levyub
