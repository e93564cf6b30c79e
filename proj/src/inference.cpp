#include "inference.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "errors.hpp"
#include "stats.hpp"

namespace levyub {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void validate_param_model(const ParamModel& prior) {
  if (!prior.log_prior) throw ConfigError("pmmh: prior has no log density");
  if (!prior.propose) throw ConfigError("pmmh: prior has no proposal sampler");
  if (!prior.symmetric && !prior.log_proposal)
    throw ConfigError("pmmh: asymmetric proposal needs log_proposal");
  if (prior.initial.size() < 1)
    throw ConfigError("pmmh: empty initial parameter vector");
  if (!std::isfinite(prior.log_prior(prior.initial)))
    throw ConfigError("pmmh: initial parameter has zero prior density");
}

}  // namespace

ParamModel uniform_box_gaussian_walk(const Eigen::VectorXd& lower,
                                     const Eigen::VectorXd& upper,
                                     const Eigen::VectorXd& step,
                                     const Eigen::VectorXd& initial) {
  const auto p = lower.size();
  if (p < 1) throw ConfigError("parameter box: empty bounds");
  if (upper.size() != p || step.size() != p || initial.size() != p)
    throw DimensionError("parameter box: bounds, step, and initial value must share a size");
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(lower[j] < upper[j]))
      throw ConfigError("parameter box: lower bound must be below upper bound");
    if (!(step[j] > 0.0) || !std::isfinite(step[j]))
      throw ConfigError("parameter box: proposal steps must be positive");
    if (!(initial[j] >= lower[j] && initial[j] <= upper[j]))
      throw ConfigError("parameter box: initial value lies outside the box");
  }

  ParamModel model;
  const double log_volume = (upper - lower).array().log().sum();
  model.log_prior = [lower, upper, log_volume](const Eigen::VectorXd& theta) {
    if (theta.size() != lower.size()) throw DimensionError("prior: parameter size mismatch");
    for (Eigen::Index j = 0; j < theta.size(); ++j)
      if (!(theta[j] >= lower[j] && theta[j] <= upper[j])) return kNegInf;
    return -log_volume;
  };
  model.propose = [step](const Eigen::VectorXd& theta, RngStream& rng) {
    Eigen::VectorXd out = theta;
    for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += step[j] * rng.normal();
    return out;
  };
  model.symmetric = true;
  model.initial = initial;
  return model;
}

PmmhResult pmmh_run(const HmmSpec& hmm, const ParamModel& prior,
                    const LevelParams& level, const PmmhOptions& options,
                    StreamKey chain_key) {
  validate_param_model(prior);
  if (options.iterations < 1) throw ConfigError("pmmh: need at least one iteration");
  if (options.particles < 1) throw ConfigError("pmmh: need at least one particle");
  if (!(options.evidence_floor > 0.0) || !std::isfinite(options.evidence_floor))
    throw ConfigError("pmmh: evidence floor must be positive and finite");
  const int burn =
      options.burn_in < 0 ? options.iterations / 10 : options.burn_in;

  const auto run_filter = [&](const Eigen::VectorXd& theta, RngStream& rng) {
    if (options.evidence_override) return options.evidence_override(theta, rng);
    return particle_filter(hmm, theta, level, options.particles, rng,
                           PathStorage::kTerminal);
  };
  const double log_floor = std::log(options.evidence_floor);

  PmmhResult result;
  result.iterations = options.iterations;
  result.theta_trace.reserve(static_cast<std::size_t>(options.iterations));

  Eigen::VectorXd cur_theta = prior.initial;
  double cur_log_prior = prior.log_prior(cur_theta);
  RngStream init_stream(chain_key.child(0));
  ParticleCloud cur_cloud = run_filter(cur_theta, init_stream);
  result.euler_steps += cur_cloud.steps;
  double cur_log_evidence = log_add(cur_cloud.log_evidence, log_floor);

  const int total = burn + options.iterations;
  for (int k = 1; k <= total; ++k) {
    const StreamKey iter_key = chain_key.child(static_cast<std::uint64_t>(k));
    bool accepted = false;

    RngStream proposal_stream(iter_key.child(0));
    Eigen::VectorXd theta_new = prior.propose(cur_theta, proposal_stream);
    const double log_prior_new = prior.log_prior(theta_new);

    // A zero-prior proposal is rejected outright; its filter and accept
    // draws are simply never consumed (each lives in its own substream).
    if (log_prior_new > kNegInf) {
      RngStream filter_stream(iter_key.child(1));
      ParticleCloud cloud_new = run_filter(theta_new, filter_stream);
      result.euler_steps += cloud_new.steps;
      const double log_evidence_new = log_add(cloud_new.log_evidence, log_floor);

      double log_alpha = (log_prior_new + log_evidence_new) -
                         (cur_log_prior + cur_log_evidence);
      if (!prior.symmetric)
        log_alpha += prior.log_proposal(cur_theta, theta_new) -
                     prior.log_proposal(theta_new, cur_theta);

      RngStream accept_stream(iter_key.child(2));
      if (log_alpha >= 0.0 || std::log(accept_stream.uniform()) < log_alpha) {
        accepted = true;
        cur_theta = std::move(theta_new);
        cur_log_prior = log_prior_new;
        cur_cloud = std::move(cloud_new);
        cur_log_evidence = log_evidence_new;
      }
    }

    if (k > burn) {
      if (accepted) {
        result.states.push_back(AcceptedState{cur_theta, cur_cloud, 1});
      } else if (result.states.empty()) {
        ++result.initial_repeats;  // still in the state inherited from warm-up
      } else {
        ++result.states.back().repeats;
      }
      result.theta_trace.push_back(cur_theta);
    }
  }

  result.accept_rate = static_cast<double>(result.states.size()) /
                       static_cast<double>(options.iterations);
  return result;
}

LevelPmf make_level_pmf(int coarse_level, int max_level, double decay) {
  if (coarse_level < 0) throw ConfigError("level pmf: negative coarse level");
  if (max_level <= coarse_level)
    throw ConfigError("level pmf: max level must exceed the coarse level");
  if (!(decay > 0.0) || !std::isfinite(decay))
    throw ConfigError("level pmf: decay must be positive and finite");

  LevelPmf pmf;
  pmf.coarse_level = coarse_level;
  pmf.max_level = max_level;
  pmf.probabilities.resize(static_cast<std::size_t>(max_level - coarse_level));
  double total = 0.0;
  for (int l = coarse_level + 1; l <= max_level; ++l) {
    const double w = std::exp2(-decay * static_cast<double>(l));
    pmf.probabilities[static_cast<std::size_t>(l - coarse_level - 1)] = w;
    total += w;
  }
  for (double& p : pmf.probabilities) p /= total;
  return pmf;
}

double LevelPmf::probability(int level) const {
  if (level <= coarse_level || level > max_level) {
    std::ostringstream msg;
    msg << "level pmf: level " << level << " outside support (" << coarse_level + 1
        << ".." << max_level << ")";
    throw ConfigError(msg.str());
  }
  return probabilities[static_cast<std::size_t>(level - coarse_level - 1)];
}

int LevelPmf::sample(RngStream& rng) const {
  if (probabilities.empty()) throw ConfigError("level pmf: empty distribution");
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    acc += probabilities[i];
    if (u < acc) return coarse_level + 1 + static_cast<int>(i);
  }
  return max_level;  // u landed in the rounding slack at the top
}

PathFunctional theta_component(int index) {
  if (index < 0) throw ConfigError("theta_component: negative index");
  return [index](const Eigen::VectorXd& theta, const Eigen::MatrixXd&) {
    if (index >= theta.size())
      throw DimensionError("theta_component: index beyond parameter size");
    return theta[index];
  };
}

PathFunctional terminal_state_component(int index) {
  if (index < 0) throw ConfigError("terminal_state_component: negative index");
  return [index](const Eigen::VectorXd&, const Eigen::MatrixXd& path) {
    if (path.rows() < 1 || index >= path.cols())
      throw DimensionError("terminal_state_component: index beyond state size");
    return path(path.rows() - 1, index);
  };
}

namespace {

StateAggregate correction_for_state(const HmmSpec& hmm, const AcceptedState& state,
                                    const std::vector<PathFunctional>& functionals,
                                    const LevelTable& levels, const LevelPmf& pmf,
                                    int particles, double log_floor,
                                    RngStream& rng) {
  const auto F = static_cast<Eigen::Index>(functionals.size());
  StateAggregate agg;
  agg.theta = state.theta;
  agg.repeats = state.repeats;
  agg.base_phi = Eigen::VectorXd::Zero(F);
  agg.corr_phi = Eigen::VectorXd::Zero(F);

  const double log_denominator = log_add(state.cloud.log_evidence, log_floor);

  // Coarse-filter averages under weights V^i / (sum V + epsilon).
  const Eigen::VectorXd& lw = state.cloud.log_weights;
  const double base_top = lw.maxCoeff();
  if (base_top > kNegInf) {
    const double base_scale = std::exp(base_top - log_denominator);
    SignedAccumulator mass;
    for (Eigen::Index i = 0; i < lw.size(); ++i)
      mass.add(std::exp(lw[i] - base_top));
    agg.base_mass = base_scale * mass.value();
    for (Eigen::Index f = 0; f < F; ++f) {
      SignedAccumulator acc;
      for (Eigen::Index i = 0; i < lw.size(); ++i)
        acc.add(std::exp(lw[i] - base_top) *
                functionals[static_cast<std::size_t>(f)](
                    state.theta, state.cloud.paths[static_cast<std::size_t>(i)]));
      agg.base_phi[f] = base_scale * acc.value();
    }
  }

  // The level is drawn before any coupled-filter randomness so that the two
  // stages occupy fixed positions in the task's stream.
  agg.level = pmf.sample(rng);
  const LevelDifference diff =
      unbiased_level_difference(hmm, state.theta, levels.at(agg.level),
                                levels.at(agg.level - 1), particles, rng);
  agg.correction_steps = diff.fine_steps + diff.coarse_steps;

  const double log_scale = -std::log(pmf.probability(agg.level)) - log_denominator;
  double corr_top = kNegInf;
  for (const auto& s : diff.samples)
    if (s.log_magnitude > corr_top) corr_top = s.log_magnitude;
  if (corr_top > kNegInf) {
    const double corr_scale = std::exp(corr_top + log_scale);
    SignedAccumulator mass;
    for (const auto& s : diff.samples) {
      const double m = std::exp(s.log_magnitude - corr_top);
      mass.add(s.sign > 0 ? m : -m);
    }
    agg.corr_mass = corr_scale * mass.value();
    for (Eigen::Index f = 0; f < F; ++f) {
      SignedAccumulator acc;
      for (const auto& s : diff.samples) {
        const double term =
            std::exp(s.log_magnitude - corr_top) *
            functionals[static_cast<std::size_t>(f)](state.theta, s.path);
        acc.add(s.sign > 0 ? term : -term);
      }
      agg.corr_phi[f] = corr_scale * acc.value();
    }
  }
  return agg;
}

void validate_aggregates(const std::vector<StateAggregate>& states) {
  if (states.empty())
    throw NumericError("estimator assembly: no accepted states to assemble");
  const Eigen::Index F = states.front().base_phi.size();
  for (const auto& s : states) {
    if (s.repeats < 1)
      throw NumericError("estimator assembly: state with no repeats");
    if (s.base_phi.size() != F || s.corr_phi.size() != F)
      throw DimensionError("estimator assembly: functional count mismatch");
  }
}

AssembledEstimate finish_assembly(const std::vector<SignedAccumulator>& num,
                                  const SignedAccumulator& den) {
  AssembledEstimate out;
  out.denominator = den.value();
  if (!(out.denominator > 0.0))
    throw NumericError("estimator assembly: denominator is not positive");
  const auto F = static_cast<Eigen::Index>(num.size());
  out.numerators.resize(F);
  out.values.resize(F);
  for (Eigen::Index f = 0; f < F; ++f) {
    out.numerators[f] = num[static_cast<std::size_t>(f)].value();
    out.values[f] = out.numerators[f] / out.denominator;
  }
  return out;
}

}  // namespace

AssembledEstimate assemble_grouped(const std::vector<StateAggregate>& states,
                                   bool scale_corrections_by_repeats) {
  validate_aggregates(states);
  const auto F = static_cast<std::size_t>(states.front().base_phi.size());
  std::vector<SignedAccumulator> num(F);
  SignedAccumulator den;
  for (const auto& s : states) {
    const double d = static_cast<double>(s.repeats);
    const double c = scale_corrections_by_repeats ? d : 1.0;
    den.add(d * s.base_mass);
    den.add(c * s.corr_mass);
    for (std::size_t f = 0; f < F; ++f) {
      num[f].add(d * s.base_phi[static_cast<Eigen::Index>(f)]);
      num[f].add(c * s.corr_phi[static_cast<Eigen::Index>(f)]);
    }
  }
  return finish_assembly(num, den);
}

AssembledEstimate assemble_per_iteration(
    const std::vector<StateAggregate>& states,
    bool scale_corrections_by_repeats) {
  validate_aggregates(states);
  const auto F = static_cast<std::size_t>(states.front().base_phi.size());
  std::vector<SignedAccumulator> num(F);
  SignedAccumulator den;
  for (const auto& s : states) {
    const double share =
        scale_corrections_by_repeats ? 1.0 : 1.0 / static_cast<double>(s.repeats);
    for (int r = 0; r < s.repeats; ++r) {
      den.add(s.base_mass);
      den.add(share * s.corr_mass);
      for (std::size_t f = 0; f < F; ++f) {
        num[f].add(s.base_phi[static_cast<Eigen::Index>(f)]);
        num[f].add(share * s.corr_phi[static_cast<Eigen::Index>(f)]);
      }
    }
  }
  return finish_assembly(num, den);
}

UnbiasedResult unbiased_estimate(const HmmSpec& hmm, const ParamModel& prior,
                                 const std::vector<PathFunctional>& functionals,
                                 const LevelTable& levels,
                                 const UnbiasedOptions& options, StreamKey key,
                                 const TaskRunner& runner) {
  if (functionals.empty())
    throw ConfigError("unbiased estimator: no functionals requested");
  if (options.correction_particles < 1)
    throw ConfigError("unbiased estimator: need at least one correction particle");
  if (options.levels.probabilities.empty())
    throw ConfigError("unbiased estimator: level distribution not built");
  // Force range validation of every level the correction may draw.
  levels.at(options.levels.coarse_level);
  levels.at(options.levels.max_level);

  PmmhResult chain = pmmh_run(hmm, prior, levels.at(options.levels.coarse_level),
                              options.pmmh, key.child(0));
  if (chain.states.empty())
    throw NumericError(
        "unbiased estimator: the chain accepted nothing; increase iterations");

  UnbiasedResult result;
  result.iterations = chain.iterations;
  result.distinct_states = static_cast<int>(chain.states.size());
  result.accept_rate = chain.accept_rate;
  result.euler_steps = chain.euler_steps;

  const StreamKey correction_key = key.child(1);
  const double log_floor = std::log(options.pmmh.evidence_floor);
  result.states.resize(chain.states.size());
  const auto task = [&](int k) {
    RngStream stream(correction_key.child(static_cast<std::uint64_t>(k)));
    result.states[static_cast<std::size_t>(k)] = correction_for_state(
        hmm, chain.states[static_cast<std::size_t>(k)], functionals, levels,
        options.levels, options.correction_particles, log_floor, stream);
  };
  if (runner) {
    runner(result.distinct_states, task);
  } else {
    for (int k = 0; k < result.distinct_states; ++k) task(k);
  }

  for (const auto& s : result.states) result.euler_steps += s.correction_steps;

  const AssembledEstimate assembled =
      options.per_iteration_assembly
          ? assemble_per_iteration(result.states,
                                   options.scale_corrections_by_repeats)
          : assemble_grouped(result.states, options.scale_corrections_by_repeats);
  result.estimates = assembled.values;
  result.denominator = assembled.denominator;
  return result;
}

}  // namespace levyub
