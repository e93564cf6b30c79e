#include "euler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "errors.hpp"
#include "stats.hpp"

namespace levyub {

LevyTriplet make_levy_triplet(Eigen::VectorXd drift, Eigen::MatrixXd diffusion,
                              const LevyMeasure* measure) {
  LevyTriplet t;
  t.drift = std::move(drift);
  t.diffusion = std::move(diffusion);
  t.measure = measure;
  const auto r = t.drift.size();
  if (r < 1) throw DimensionError("make_levy_triplet: drift must have dimension >= 1");
  if (t.diffusion.rows() != r || t.diffusion.cols() != r)
    throw DimensionError("make_levy_triplet: diffusion must be r x r");
  const double scale = std::max(1.0, t.diffusion.cwiseAbs().maxCoeff());
  if ((t.diffusion - t.diffusion.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ConfigError("make_levy_triplet: diffusion must be symmetric");
  if (t.diffusion.isZero(0.0)) {
    t.zero_diffusion = true;
    t.diffusion_sqrt = Eigen::MatrixXd::Zero(r, r);
    return t;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t.diffusion);
  if (es.info() != Eigen::Success)
    throw NumericError("make_levy_triplet: eigendecomposition of diffusion failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-12 * scale)
      throw ConfigError("make_levy_triplet: diffusion must be positive semidefinite");
    ev[i] = ev[i] > 0.0 ? std::sqrt(ev[i]) : 0.0;
  }
  t.diffusion_sqrt = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  t.zero_diffusion = false;
  return t;
}

SdeModel make_geometric_model(const LevyMeasure* measure) {
  SdeModel m;
  m.triplet = make_levy_triplet(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(1, 1), measure);
  m.state_dim = 1;
  m.drift = [](const Eigen::VectorXd& theta, const Eigen::VectorXd& y,
               Eigen::MatrixXd& out) { out(0, 0) = theta[0] * y[0]; };
  return m;
}

namespace {

// dx = (b - compensator) dt + sqrt(Sigma) dW + dL e_1; dW may be null when
// the diffusion is exactly zero.
inline void fill_increment(const LevyTriplet& t, const Eigen::VectorXd& compensator,
                           double dt, const Eigen::VectorXd* dw, double jump,
                           Eigen::VectorXd& dx) {
  dx = (t.drift - compensator) * dt;
  if (dw != nullptr) dx.noalias() += t.diffusion_sqrt * (*dw);
  if (jump != 0.0) dx[0] += jump;
}

}  // namespace

std::vector<Eigen::VectorXd> assemble_increments(
    const JumpSchedule& schedule, const LevyTriplet& triplet,
    const LevelParams& level, const std::vector<Eigen::VectorXd>& brownian) {
  const auto r = triplet.driver_dim();
  if (level.large_jump_mean.size() != r)
    throw DimensionError("assemble_increments: compensator dimension must match driver");
  if (!triplet.zero_diffusion && brownian.size() != schedule.cells())
    throw DimensionError("assemble_increments: one Brownian increment per cell required");
  if (triplet.zero_diffusion && !brownian.empty() && brownian.size() != schedule.cells())
    throw DimensionError("assemble_increments: Brownian array misaligned with schedule");
  if (r != 1) {
    for (double h : schedule.heights)
      if (h != 0.0)
        throw DimensionError(
            "assemble_increments: scalar jump heights require a one-dimensional driver");
  }
  std::vector<Eigen::VectorXd> out(schedule.cells());
  Eigen::VectorXd dx(r);
  for (std::size_t i = 0; i < schedule.cells(); ++i) {
    const double dt = schedule.times[i + 1] - schedule.times[i];
    const Eigen::VectorXd* dw =
        (!triplet.zero_diffusion && !brownian.empty()) ? &brownian[i] : nullptr;
    fill_increment(triplet, level.large_jump_mean, dt, dw, schedule.heights[i], dx);
    out[i] = dx;
  }
  return out;
}

namespace {

[[noreturn]] void throw_non_finite(int level, std::size_t step) {
  std::ostringstream msg;
  msg << "propagate: non-finite state at level " << level << ", step " << step;
  throw NonFiniteStateError(msg.str());
}

}  // namespace

UnitPathResult propagate_unit(const Eigen::VectorXd& y0,
                              const Eigen::VectorXd& theta,
                              const LevelParams& level, const SdeModel& model,
                              RngStream& rng, UnitPathTrace* trace) {
  const LevyTriplet& t = model.triplet;
  if (t.measure == nullptr)
    throw ConfigError("propagate_unit: model has no jump measure");
  if (t.driver_dim() != 1)
    throw DimensionError("propagate_unit: schedule-driven propagation requires a scalar driver");
  if (y0.size() != model.state_dim)
    throw DimensionError("propagate_unit: initial state has wrong dimension");

  const JumpSchedule schedule = single_level_schedule(level, *t.measure, rng);
  Eigen::VectorXd y = y0;
  Eigen::VectorXd dx(1), dw(1);
  Eigen::MatrixXd f(model.state_dim, 1);
  if (trace != nullptr) {
    trace->schedule = schedule;
    trace->brownian.clear();
    trace->increments.clear();
  }
  for (std::size_t i = 0; i < schedule.cells(); ++i) {
    const double dt = schedule.times[i + 1] - schedule.times[i];
    const Eigen::VectorXd* dwp = nullptr;
    if (!t.zero_diffusion) {
      dw[0] = rng.normal() * std::sqrt(dt);
      dwp = &dw;
    }
    fill_increment(t, level.large_jump_mean, dt, dwp, schedule.heights[i], dx);
    model.drift(theta, y, f);
    y.noalias() += f * dx;
    if (!y.allFinite()) throw_non_finite(level.level, i + 1);
    if (trace != nullptr) {
      if (dwp != nullptr) trace->brownian.push_back(dw);
      trace->increments.push_back(dx);
    }
  }
  return UnitPathResult{std::move(y), schedule.cells()};
}

CoupledUnitPathResult propagate_unit_coupled(
    const Eigen::VectorXd& y0_fine, const Eigen::VectorXd& y0_coarse,
    const Eigen::VectorXd& theta, const LevelParams& fine,
    const LevelParams& coarse, const SdeModel& model, RngStream& rng,
    CoupledPathTrace* trace) {
  const LevyTriplet& t = model.triplet;
  if (t.measure == nullptr)
    throw ConfigError("propagate_unit_coupled: model has no jump measure");
  if (t.driver_dim() != 1)
    throw DimensionError("propagate_unit_coupled: requires a scalar driver");
  if (y0_fine.size() != model.state_dim || y0_coarse.size() != model.state_dim)
    throw DimensionError("propagate_unit_coupled: initial state has wrong dimension");

  const CoupledJumpSchedule cs = coupled_schedule(fine, coarse, *t.measure, rng);

  // One Brownian path for both legs, sampled on the union of the two grids;
  // each leg's cell increment is the sum of the union sub-increments it
  // covers. (The two meshes need not be nested once a fine-only jump shifts
  // the fine grid phase, so the union is the correct common refinement.)
  std::vector<double> union_times;
  union_times.reserve(cs.fine.times.size() + cs.coarse.times.size());
  std::merge(cs.fine.times.begin(), cs.fine.times.end(), cs.coarse.times.begin(),
             cs.coarse.times.end(), std::back_inserter(union_times));
  union_times.erase(std::unique(union_times.begin(), union_times.end()),
                    union_times.end());

  Eigen::VectorXd yf = y0_fine, yc = y0_coarse;
  Eigen::VectorXd dx(1), dwf(1), dwc(1);
  Eigen::MatrixXd f(model.state_dim, 1);
  dwf.setZero();
  dwc.setZero();
  std::size_t fi = 0, ci = 0;  // completed cells per leg
  if (trace != nullptr) {
    trace->schedule = cs;
    trace->fine_brownian.clear();
    trace->coarse_brownian.clear();
    trace->fine_increments.clear();
    trace->coarse_increments.clear();
  }
  for (std::size_t ui = 0; ui + 1 < union_times.size(); ++ui) {
    const double t1 = union_times[ui + 1];
    if (!t.zero_diffusion) {
      const double du = t1 - union_times[ui];
      const double z = rng.normal() * std::sqrt(du);
      dwf[0] += z;
      dwc[0] += z;
    }
    if (fi + 1 < cs.fine.times.size() && t1 == cs.fine.times[fi + 1]) {
      const double dt = cs.fine.times[fi + 1] - cs.fine.times[fi];
      fill_increment(t, fine.large_jump_mean, dt,
                     t.zero_diffusion ? nullptr : &dwf, cs.fine.heights[fi], dx);
      model.drift(theta, yf, f);
      yf.noalias() += f * dx;
      if (!yf.allFinite()) throw_non_finite(fine.level, fi + 1);
      if (trace != nullptr) {
        trace->fine_brownian.push_back(dwf);
        trace->fine_increments.push_back(dx);
      }
      dwf.setZero();
      ++fi;
    }
    if (ci + 1 < cs.coarse.times.size() && t1 == cs.coarse.times[ci + 1]) {
      const double dt = cs.coarse.times[ci + 1] - cs.coarse.times[ci];
      fill_increment(t, coarse.large_jump_mean, dt,
                     t.zero_diffusion ? nullptr : &dwc, cs.coarse.heights[ci], dx);
      model.drift(theta, yc, f);
      yc.noalias() += f * dx;
      if (!yc.allFinite()) throw_non_finite(coarse.level, ci + 1);
      if (trace != nullptr) {
        trace->coarse_brownian.push_back(dwc);
        trace->coarse_increments.push_back(dx);
      }
      dwc.setZero();
      ++ci;
    }
  }
  if (fi != cs.fine.cells() || ci != cs.coarse.cells())
    throw NumericError("propagate_unit_coupled: grid walk failed to close both legs");

  CoupledUnitPathResult out;
  out.fine_terminal = std::move(yf);
  out.coarse_terminal = std::move(yc);
  out.fine_steps = cs.fine.cells();
  out.coarse_steps = cs.coarse.cells();
  return out;
}

MlmcResult mlmc_estimate(const std::function<double(const Eigen::VectorXd&)>& phi,
                         int max_level, const std::vector<std::int64_t>& counts,
                         const Eigen::VectorXd& y0, const Eigen::VectorXd& theta,
                         const SdeModel& model, const LevelTable& levels,
                         RngStream& rng) {
  if (static_cast<int>(counts.size()) != max_level + 1)
    throw DimensionError("mlmc_estimate: need one sample count per level 0..max_level");
  for (auto c : counts)
    if (c < 2) throw ConfigError("mlmc_estimate: every level needs at least 2 samples");

  MlmcResult out;
  for (int l = 0; l <= max_level; ++l) {
    const auto n = counts[static_cast<std::size_t>(l)];
    double sum = 0.0, sum2 = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      double v;
      if (l == 0) {
        auto res = propagate_unit(y0, theta, levels.at(0), model, rng);
        v = phi(res.terminal);
        out.steps += res.steps;
      } else {
        auto res = propagate_unit_coupled(y0, y0, theta, levels.at(l),
                                          levels.at(l - 1), model, rng);
        v = phi(res.fine_terminal) - phi(res.coarse_terminal);
        out.steps += res.fine_steps + res.coarse_steps;
      }
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = (sum2 - sum * mean) / static_cast<double>(n - 1);
    out.value += mean;
    out.variance += var / static_cast<double>(n);
  }
  return out;
}

}  // namespace levyub
