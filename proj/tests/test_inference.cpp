#include <doctest.h>

#include <cmath>
#include <vector>

#include "errors.hpp"
#include "inference.hpp"
#include "measure.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "smc.hpp"
#include "stats.hpp"

using namespace levyub;

namespace {

TruncatedStableMeasure& reference_measure() {
  static TruncatedStableMeasure m(0.8, 0.5, 1.0);
  return m;
}

const SdeModel& geometric_model() {
  static SdeModel model = make_geometric_model(&reference_measure());
  return model;
}

Eigen::VectorXd scalar(double v) { return Eigen::VectorXd::Constant(1, v); }

ParamModel unit_box(double step, double initial) {
  return uniform_box_gaussian_walk(scalar(0.0), scalar(1.5), scalar(step),
                                   scalar(initial));
}

HmmSpec gaussian_hmm(std::vector<double> z, double sd) {
  HmmSpec hmm;
  hmm.model = &geometric_model();
  const double log_norm = -std::log(sd) - 0.5 * std::log(2.0 * M_PI);
  hmm.log_potential = [sd, log_norm](int, const Eigen::VectorXd&,
                                     const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& obs) {
    const double r = (obs[0] - y[0]) / sd;
    return log_norm - 0.5 * r * r;
  };
  for (double v : z) hmm.observations.push_back(scalar(v));
  hmm.y0 = scalar(1.0);
  return hmm;
}

// Evidence source that ignores the latent dynamics entirely; lets the
// Metropolis layer be tested against closed-form posteriors.
PmmhOptions override_options(int iterations,
                             std::function<double(double)> log_evidence,
                             int burn_in = -1) {
  PmmhOptions options;
  options.iterations = iterations;
  options.burn_in = burn_in;
  options.particles = 1;
  options.evidence_floor = 1e-300;
  options.evidence_override = [fn = std::move(log_evidence)](
                                  const Eigen::VectorXd& theta, RngStream&) {
    ParticleCloud cloud;
    cloud.log_evidence = fn(theta[0]);
    cloud.log_weights = Eigen::VectorXd::Constant(1, cloud.log_evidence);
    cloud.paths.assign(1, Eigen::MatrixXd::Constant(1, 1, 1.0));
    cloud.steps = 1;
    return cloud;
  };
  return options;
}

std::vector<double> first_component(const std::vector<Eigen::VectorXd>& trace) {
  std::vector<double> xs;
  xs.reserve(trace.size());
  for (const auto& t : trace) xs.push_back(t[0]);
  return xs;
}

}  // namespace

TEST_CASE("uniform box prior with Gaussian walk proposals") {
  const auto model = unit_box(0.1, 0.75);
  CHECK(model.symmetric);
  // Inside the box the density is 1/volume; the boundary is included.
  CHECK(model.log_prior(scalar(0.75)) == doctest::Approx(-std::log(1.5)).epsilon(1e-14));
  CHECK(model.log_prior(scalar(0.0)) == model.log_prior(scalar(1.5)));
  CHECK(model.log_prior(scalar(-1e-12)) ==
        -std::numeric_limits<double>::infinity());
  CHECK(model.log_prior(scalar(1.5 + 1e-12)) ==
        -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(model.log_prior(Eigen::VectorXd::Zero(2)), DimensionError);

  // Proposal moments: mean theta, sd = step.
  RngStream rng(StreamKey{21}.child(0));
  std::vector<double> draws;
  for (int i = 0; i < 20000; ++i)
    draws.push_back(model.propose(scalar(0.75), rng)[0]);
  const auto m = oracles::moments(draws);
  CHECK(std::fabs(m.mean - 0.75) < 4.0 * m.se_mean);
  CHECK(std::fabs(std::sqrt(m.variance) - 0.1) < 0.003);

  CHECK_THROWS_AS(uniform_box_gaussian_walk(Eigen::VectorXd::Zero(2),
                                            scalar(1.0), scalar(0.1),
                                            scalar(0.5)),
                  DimensionError);
  CHECK_THROWS_AS(unit_box(0.1, 2.0), ConfigError);   // initial outside
  CHECK_THROWS_AS(unit_box(-0.1, 0.75), ConfigError);  // nonpositive step
  CHECK_THROWS_AS(uniform_box_gaussian_walk(scalar(1.0), scalar(1.0),
                                            scalar(0.1), scalar(1.0)),
                  ConfigError);  // empty box
}

TEST_CASE("constant evidence turns the chain into a prior sampler") {
  const HmmSpec hmm = gaussian_hmm({1.0}, 0.5);
  const auto level = level_params(reference_measure(), 1);
  const auto options = override_options(20000, [](double) { return 0.0; });
  const PmmhResult res =
      pmmh_run(hmm, unit_box(0.4, 0.75), level, options, StreamKey{77});

  REQUIRE(res.theta_trace.size() == 20000);
  const auto xs = first_component(res.theta_trace);
  for (double x : xs) {
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 1.5);
  }
  const double se = batch_means_se(xs);
  CHECK(std::fabs(mean_and_se(xs).mean - 0.75) < 5.0 * se);
  // Uniform variance (1.5^2)/12.
  const auto m = oracles::moments(xs);
  CHECK(std::fabs(m.variance - 0.1875) < 0.015);
  CHECK(res.accept_rate > 0.2);
}

TEST_CASE("a Gaussian evidence profile is recovered as the posterior") {
  const HmmSpec hmm = gaussian_hmm({1.0}, 0.5);
  const auto level = level_params(reference_measure(), 1);
  const double mu = 0.6, sd = 0.15;
  const auto options = override_options(
      20000, [=](double t) { return -0.5 * (t - mu) * (t - mu) / (sd * sd); });
  const PmmhResult res =
      pmmh_run(hmm, unit_box(0.3, 0.75), level, options, StreamKey{78});

  // Target: normal(mu, sd) truncated to [0, 1.5].
  const double a = (0.0 - mu) / sd, b = (1.5 - mu) / sd;
  const auto pdf = [](double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  };
  const double mass = oracles::normal_cdf(b) - oracles::normal_cdf(a);
  const double target_mean = mu + sd * (pdf(a) - pdf(b)) / mass;

  const auto xs = first_component(res.theta_trace);
  const double se = batch_means_se(xs);
  CHECK(std::fabs(mean_and_se(xs).mean - target_mean) < 5.0 * se);
  const auto m = oracles::moments(xs);
  CHECK(std::fabs(std::sqrt(m.variance) - sd) < 0.02);
}

TEST_CASE("out-of-support proposals never touch the evidence source") {
  const HmmSpec hmm = gaussian_hmm({1.0}, 0.5);
  const auto level = level_params(reference_measure(), 1);
  int calls = 0;
  PmmhOptions options =
      override_options(400, [](double) { return 0.0; }, /*burn_in=*/0);
  auto base = options.evidence_override;
  options.evidence_override = [&calls, base](const Eigen::VectorXd& theta,
                                             RngStream& rng) {
    ++calls;
    return base(theta, rng);
  };
  // Step 2.0 from inside [0, 1.5] leaves the box often. With constant
  // evidence every in-box proposal is accepted, so with no warm-up the call
  // count must be exactly one (initial state) per acceptance plus one.
  const PmmhResult res =
      pmmh_run(hmm, unit_box(2.0, 0.75), level, options, StreamKey{79});
  CHECK(calls == static_cast<int>(res.states.size()) + 1);
  CHECK(res.accept_rate < 1.0);  // some proposals did leave the box
  CHECK(res.accept_rate > 0.0);
}

TEST_CASE("chain bookkeeping: repeats, trace length, acceptance rate") {
  const HmmSpec hmm = gaussian_hmm({1.1, 0.9}, 0.5);
  const auto level = level_params(reference_measure(), 2);
  PmmhOptions options;
  options.iterations = 60;
  options.burn_in = 6;
  options.particles = 8;
  const PmmhResult res =
      pmmh_run(hmm, unit_box(0.2, 0.75), level, options, StreamKey{80});

  REQUIRE(res.iterations == 60);
  REQUIRE(res.theta_trace.size() == 60);
  int covered = res.initial_repeats;
  for (const auto& s : res.states) {
    CHECK(s.repeats >= 1);
    CHECK(s.cloud.paths.size() == 8);
    covered += s.repeats;
  }
  CHECK(covered == 60);  // every recorded iteration belongs to one state
  CHECK(res.accept_rate ==
        static_cast<double>(res.states.size()) / 60.0);
  CHECK(res.euler_steps > 0);

  // Determinism in the chain key.
  const PmmhResult again =
      pmmh_run(hmm, unit_box(0.2, 0.75), level, options, StreamKey{80});
  REQUIRE(again.theta_trace.size() == res.theta_trace.size());
  for (std::size_t i = 0; i < res.theta_trace.size(); ++i)
    CHECK(again.theta_trace[i][0] == res.theta_trace[i][0]);
  CHECK(again.euler_steps == res.euler_steps);

  const PmmhResult other =
      pmmh_run(hmm, unit_box(0.2, 0.75), level, options, StreamKey{81});
  bool same = other.euler_steps == res.euler_steps;
  for (std::size_t i = 0; same && i < res.theta_trace.size(); ++i)
    same = other.theta_trace[i][0] == res.theta_trace[i][0];
  CHECK_FALSE(same);

  CHECK_THROWS_AS(pmmh_run(hmm, unit_box(0.2, 0.75), level, PmmhOptions{.iterations = 0},
                           StreamKey{82}),
                  ConfigError);
}

TEST_CASE("correction level distribution") {
  const LevelPmf pmf = make_level_pmf(2, 12, 1.5);
  REQUIRE(pmf.probabilities.size() == 10);
  double total = 0.0;
  for (double p : pmf.probabilities) total += p;
  CHECK(std::fabs(total - 1.0) < 1e-12);
  // Geometric decay: p(l) / p(l+1) = 2^1.5.
  for (int l = 3; l < 12; ++l)
    CHECK(pmf.probability(l) / pmf.probability(l + 1) ==
          doctest::Approx(std::exp2(1.5)).epsilon(1e-14));
  CHECK_THROWS_AS(pmf.probability(2), ConfigError);
  CHECK_THROWS_AS(pmf.probability(13), ConfigError);

  // Sampling matches the mass function.
  RngStream rng(StreamKey{21}.child(1));
  std::vector<int> counts(13, 0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const int l = pmf.sample(rng);
    REQUIRE(l >= 3);
    REQUIRE(l <= 12);
    ++counts[static_cast<std::size_t>(l)];
  }
  for (int l = 3; l <= 6; ++l) {  // higher levels have too few hits to test
    const double p = pmf.probability(l);
    CHECK(std::fabs(counts[static_cast<std::size_t>(l)] - n * p) <
          4.0 * std::sqrt(n * p * (1.0 - p)));
  }

  // Single-point support.
  const LevelPmf single = make_level_pmf(1, 2, 1.5);
  CHECK(single.probability(2) == 1.0);
  for (int i = 0; i < 10; ++i) CHECK(single.sample(rng) == 2);

  CHECK_THROWS_AS(make_level_pmf(3, 3, 1.5), ConfigError);
  CHECK_THROWS_AS(make_level_pmf(-1, 3, 1.5), ConfigError);
  CHECK_THROWS_AS(make_level_pmf(1, 3, 0.0), ConfigError);
}

TEST_CASE("path functionals pick components and validate indices") {
  Eigen::VectorXd theta(2);
  theta << 0.7, 0.2;
  Eigen::MatrixXd path(3, 1);
  path << 1.0, 2.0, 3.0;
  CHECK(theta_component(0)(theta, path) == 0.7);
  CHECK(theta_component(1)(theta, path) == 0.2);
  CHECK(terminal_state_component(0)(theta, path) == 3.0);
  CHECK_THROWS_AS(theta_component(-1), ConfigError);
  CHECK_THROWS_AS(terminal_state_component(-1), ConfigError);
  CHECK_THROWS_AS(theta_component(2)(theta, path), DimensionError);
  CHECK_THROWS_AS(terminal_state_component(1)(theta, path), DimensionError);
}

TEST_CASE("grouped and per-iteration assembly agree") {
  RngStream rng(StreamKey{21}.child(2));
  std::vector<StateAggregate> states;
  for (int k = 0; k < 12; ++k) {
    StateAggregate s;
    s.theta = scalar(rng.uniform());
    s.repeats = 1 + static_cast<int>(rng.uniform() * 6.0);
    s.level = 2;
    s.base_mass = 0.2 + rng.uniform();
    s.corr_mass = (rng.uniform() - 0.5) * 0.1;
    s.base_phi = Eigen::VectorXd::Zero(3);
    s.corr_phi = Eigen::VectorXd::Zero(3);
    for (int f = 0; f < 3; ++f) {
      s.base_phi[f] = (rng.uniform() - 0.3) * s.base_mass;
      s.corr_phi[f] = (rng.uniform() - 0.5) * 0.1;
    }
    states.push_back(std::move(s));
  }
  for (bool scale : {false, true}) {
    const auto grouped = assemble_grouped(states, scale);
    const auto ungrouped = assemble_per_iteration(states, scale);
    REQUIRE(grouped.values.size() == 3);
    CHECK(std::fabs(grouped.denominator - ungrouped.denominator) <
          1e-12 * std::fabs(grouped.denominator));
    for (int f = 0; f < 3; ++f)
      CHECK(std::fabs(grouped.values[f] - ungrouped.values[f]) <=
            1e-12 * std::max(1.0, std::fabs(grouped.values[f])));
  }

  // With every repeat count equal to one the two orders are the same sums.
  auto flat = states;
  for (auto& s : flat) s.repeats = 1;
  for (bool scale : {false, true}) {
    const auto grouped = assemble_grouped(flat, scale);
    const auto ungrouped = assemble_per_iteration(flat, scale);
    CHECK(grouped.denominator == ungrouped.denominator);
    for (int f = 0; f < 3; ++f)
      CHECK(grouped.values[f] == ungrouped.values[f]);
  }

  CHECK_THROWS_AS(assemble_grouped({}, false), NumericError);
  auto broke = states;
  broke[3].repeats = 0;
  CHECK_THROWS_AS(assemble_grouped(broke, false), NumericError);
  auto zeroed = states;
  for (auto& s : zeroed) {
    s.base_mass = 0.0;
    s.corr_mass = 0.0;
  }
  CHECK_THROWS_AS(assemble_grouped(zeroed, false), NumericError);
  auto ragged = states;
  ragged[2].corr_phi = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(assemble_per_iteration(ragged, false), DimensionError);
}

namespace {

UnbiasedOptions tiny_unbiased_options(int iterations) {
  UnbiasedOptions options;
  options.pmmh.iterations = iterations;
  options.pmmh.burn_in = 4;
  options.pmmh.particles = 10;
  options.correction_particles = 8;
  options.levels = make_level_pmf(1, 4, 1.5);
  return options;
}

}  // namespace

TEST_CASE("debiased estimator: exact self-normalization and cost accounting") {
  const HmmSpec hmm = gaussian_hmm({1.1, 0.9, 1.2}, 0.5);
  const LevelTable table(reference_measure(), 6);
  const auto options = tiny_unbiased_options(40);
  const auto prior = unit_box(0.2, 0.75);

  const PathFunctional one = [](const Eigen::VectorXd&, const Eigen::MatrixXd&) {
    return 1.0;
  };
  const PathFunctional y_term = terminal_state_component(0);
  const PathFunctional y_term_8x = [y_term](const Eigen::VectorXd& t,
                                            const Eigen::MatrixXd& p) {
    return 8.0 * y_term(t, p);
  };

  const UnbiasedResult res = unbiased_estimate(
      hmm, prior, {one, y_term, y_term_8x}, table, options, StreamKey{90});
  REQUIRE(res.estimates.size() == 3);
  // The constant functional's ratio collapses to exactly one.
  CHECK(res.estimates[0] == 1.0);
  // Scaling a functional by a power of two scales the estimate exactly.
  CHECK(res.estimates[2] == 8.0 * res.estimates[1]);
  CHECK(res.denominator > 0.0);
  CHECK(res.iterations == 40);
  CHECK(res.distinct_states == static_cast<int>(res.states.size()));

  // Total cost = chain cost + every correction, exactly.
  const PmmhResult chain =
      pmmh_run(hmm, prior, table.at(1), options.pmmh, StreamKey{90}.child(0));
  std::uint64_t expected_steps = chain.euler_steps;
  for (const auto& s : res.states) {
    expected_steps += s.correction_steps;
    CHECK(s.correction_steps > 0);
    CHECK(s.level >= 2);
    CHECK(s.level <= 4);
    CHECK(s.repeats >= 1);
  }
  CHECK(res.euler_steps == expected_steps);
  CHECK(res.distinct_states == static_cast<int>(chain.states.size()));
}

TEST_CASE("debiased estimator is invariant to correction scheduling") {
  const HmmSpec hmm = gaussian_hmm({1.1, 0.9}, 0.5);
  const LevelTable table(reference_measure(), 6);
  const auto options = tiny_unbiased_options(30);
  const auto prior = unit_box(0.2, 0.75);
  const std::vector<PathFunctional> fns = {theta_component(0),
                                           terminal_state_component(0)};

  const UnbiasedResult seq =
      unbiased_estimate(hmm, prior, fns, table, options, StreamKey{91});
  // Reversed execution order must not change a single bit: every correction
  // task owns a keyed stream and its own output slot.
  const TaskRunner reversed = [](int count, const std::function<void(int)>& task) {
    for (int k = count - 1; k >= 0; --k) task(k);
  };
  const UnbiasedResult rev =
      unbiased_estimate(hmm, prior, fns, table, options, StreamKey{91}, reversed);
  REQUIRE(rev.estimates.size() == seq.estimates.size());
  for (Eigen::Index f = 0; f < seq.estimates.size(); ++f)
    CHECK(rev.estimates[f] == seq.estimates[f]);
  CHECK(rev.denominator == seq.denominator);
  CHECK(rev.euler_steps == seq.euler_steps);

  // Assembly order flag: grouped and per-iteration agree to rounding.
  auto per_iter = options;
  per_iter.per_iteration_assembly = true;
  const UnbiasedResult ung =
      unbiased_estimate(hmm, prior, fns, table, per_iter, StreamKey{91});
  for (Eigen::Index f = 0; f < seq.estimates.size(); ++f)
    CHECK(std::fabs(ung.estimates[f] - seq.estimates[f]) <=
          1e-12 * std::max(1.0, std::fabs(seq.estimates[f])));
  // Both must match the assembly helpers applied to the recorded aggregates.
  const auto direct = assemble_grouped(seq.states, false);
  for (Eigen::Index f = 0; f < seq.estimates.size(); ++f)
    CHECK(direct.values[f] == seq.estimates[f]);
}

TEST_CASE("debiased estimator rejects impossible configurations") {
  const HmmSpec hmm = gaussian_hmm({1.1}, 0.5);
  const LevelTable table(reference_measure(), 6);
  const auto prior = unit_box(0.2, 0.75);
  const std::vector<PathFunctional> fns = {theta_component(0)};

  auto options = tiny_unbiased_options(20);
  CHECK_THROWS_AS(
      unbiased_estimate(hmm, prior, {}, table, options, StreamKey{92}),
      ConfigError);
  auto no_pmf = options;
  no_pmf.levels = LevelPmf{};
  no_pmf.levels.probabilities.clear();
  CHECK_THROWS_AS(
      unbiased_estimate(hmm, prior, fns, table, no_pmf, StreamKey{92}),
      ConfigError);
  auto beyond = options;
  beyond.levels = make_level_pmf(1, 9, 1.5);  // table only reaches level 6
  CHECK_THROWS_AS(
      unbiased_estimate(hmm, prior, fns, table, beyond, StreamKey{92}),
      DimensionError);

  // A chain that never accepts cannot be debiased: huge proposal steps leave
  // the box every time.
  auto stuck = tiny_unbiased_options(25);
  const auto frozen_prior = unit_box(1e6, 0.75);
  CHECK_THROWS_AS(
      unbiased_estimate(hmm, frozen_prior, fns, table, stuck, StreamKey{93}),
      NumericError);
}
