#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "errors.hpp"

namespace levyub {

// log(e^a + e^b) with -inf handled as zero mass.
inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

inline double log_sum_exp(const double* x, std::size_t n) {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > hi) hi = x[i];
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - hi);
  return hi + std::log(s);
}

// Signed sum with positive and negative masses accumulated separately so
// that identical runs of +x and -x terms cancel to exactly zero.
struct SignedAccumulator {
  double positive = 0.0;
  double negative = 0.0;

  void add(double x) {
    if (x >= 0.0)
      positive += x;
    else
      negative += -x;
  }
  double value() const { return positive - negative; }
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

inline MeanSe mean_and_se(const std::vector<double>& xs) {
  MeanSe out;
  out.n = xs.size();
  if (xs.empty()) return out;
  double s = 0.0;
  for (double x : xs) s += x;
  out.mean = s / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  const double var = ss / static_cast<double>(xs.size() - 1);
  out.se = std::sqrt(var / static_cast<double>(xs.size()));
  return out;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

inline LinearFit least_squares_fit(const std::vector<double>& xs,
                                   const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw DimensionError("least_squares_fit: need >= 2 paired points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (xs.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
      rss += r * r;
    }
    fit.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
  }
  return fit;
}

// Batch-means standard error of the mean of a correlated (MCMC) sequence.
inline double batch_means_se(const std::vector<double>& chain) {
  const std::size_t n = chain.size();
  if (n < 4) throw DimensionError("batch_means_se: chain too short");
  const std::size_t b = static_cast<std::size_t>(std::floor(std::sqrt(double(n))));
  const std::size_t nb = n / b;
  std::vector<double> means(nb, 0.0);
  for (std::size_t j = 0; j < nb; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < b; ++i) s += chain[j * b + i];
    means[j] = s / static_cast<double>(b);
  }
  return mean_and_se(means).se;
}

}  // namespace levyub
