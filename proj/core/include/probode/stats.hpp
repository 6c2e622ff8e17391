#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace probode::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean of empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// Unbiased sample variance.
inline double variance(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("variance needs at least two samples");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double standard_deviation(std::span<const double> x) {
  return std::sqrt(variance(x));
}

// log(mean(exp(x))) with max shift; returns -inf when every entry is -inf.
inline double log_mean_exp(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("log_mean_exp of empty sample");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  if (std::isinf(m) && m < 0) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s / static_cast<double>(x.size()));
}

// Monte-Carlo standard error of a correlated chain mean, by batch means.
inline double mcse_mean(std::span<const double> x, int n_batches = 30) {
  if (x.size() < static_cast<std::size_t>(2 * n_batches)) {
    n_batches = std::max(2, static_cast<int>(x.size() / 2));
  }
  const std::size_t batch = x.size() / n_batches;
  std::vector<double> bm;
  bm.reserve(n_batches);
  for (int b = 0; b < n_batches; ++b) {
    bm.push_back(mean(x.subspan(b * batch, batch)));
  }
  return std::sqrt(variance(bm) / static_cast<double>(n_batches));
}

// Standard error of the chain sample variance: batch means applied to the
// centred squares.
inline double mcse_variance(std::span<const double> x, int n_batches = 30) {
  const double m = mean(x);
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - m) * (x[i] - m);
  return mcse_mean(sq, n_batches);
}

// Delta method: sd = sqrt(var), so se(sd) ~= se(var) / (2 sd).
inline double mcse_sd(std::span<const double> x, int n_batches = 30) {
  const double sd = standard_deviation(x);
  if (sd == 0.0) return 0.0;
  return mcse_variance(x, n_batches) / (2.0 * sd);
}

}  // namespace probode::stats
