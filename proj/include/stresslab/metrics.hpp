#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "stresslab/error.hpp"

namespace stresslab {

constexpr double kMreEpsilon = 0.01;

inline void check_pair(std::span<const double> y, std::span<const double> yhat) {
  require(y.size() == yhat.size(), "length-mismatch",
          "field pair lengths differ");
  require(!y.empty(), "length-mismatch", "field pair is empty");
}

inline double mse(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat);
  double acc = 0.0;
  for (size_t j = 0; j < y.size(); ++j) {
    const double d = y[j] - yhat[j];
    acc += d * d;
  }
  return acc / static_cast<double>(y.size());
}

inline double mae(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat);
  double acc = 0.0;
  for (size_t j = 0; j < y.size(); ++j) acc += std::abs(y[j] - yhat[j]);
  return acc / static_cast<double>(y.size());
}

/// Mean relative error in percent. The epsilon term keeps pixels where both
/// fields vanish at zero contribution instead of 0/0.
inline double mre(std::span<const double> y, std::span<const double> yhat,
                  double epsilon = kMreEpsilon) {
  check_pair(y, yhat);
  double acc = 0.0;
  for (size_t j = 0; j < y.size(); ++j)
    acc += std::abs(y[j] - yhat[j]) / (epsilon + std::max(y[j], yhat[j]));
  return acc / static_cast<double>(y.size()) * 100.0;
}

/// Coefficient of determination between per-sample true and predicted
/// scalars (here: field maxima), 1 - SS_res / SS_tot.
inline double r_squared(std::span<const double> truth,
                        std::span<const double> pred) {
  require(truth.size() == pred.size(), "length-mismatch",
          "pair count mismatch");
  require(truth.size() >= 2, "degenerate-variance",
          "need at least two pairs");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  }
  require(ss_tot > 0.0, "degenerate-variance", "true values are constant");
  return 1.0 - ss_res / ss_tot;
}

struct MetricsReport {
  double mse = 0.0;        // MPa^2
  double mae = 0.0;        // MPa
  double mre = 0.0;        // percent
  double r2_max = 0.0;
  size_t samples = 0;
};

}  // namespace stresslab
