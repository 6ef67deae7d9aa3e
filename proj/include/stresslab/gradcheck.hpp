#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stresslab/optimizer.hpp"

namespace stresslab {

struct GradCheckEntry {
  std::string parameter;
  int64_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  size_t samples = 0;
  GradCheckEntry worst;

  bool passed() const { return max_rel_error < tolerance; }

  std::string str() const {
    std::ostringstream os;
    os << "grad_check " << (passed() ? "passed" : "FAILED")
       << " max_rel_error=" << max_rel_error << " tolerance=" << tolerance
       << " samples=" << samples;
    if (samples > 0)
      os << " worst=" << worst.parameter << "[" << worst.index
         << "] analytic=" << worst.analytic << " numeric=" << worst.numeric;
    return os.str();
  }
};

/// Compares tape gradients against central finite differences on a random
/// subsample of each parameter's elements. loss_fn must rebuild the forward
/// graph on the given tape and return the scalar loss; it runs in f64.
inline GradCheckReport grad_check_report(
    std::vector<Parameter<double>>& params,
    const std::function<Value<double>(Tape<double>&)>& loss_fn,
    double tolerance = 1e-4, int samples_per_tensor = 8, uint64_t seed = 0,
    double h = 1e-5) {
  // Analytic pass.
  zero_grads(params);
  Tape<double> tape;
  Value<double> loss = loss_fn(tape);
  require(loss->value.size() == 1, "shape-mismatch",
          "grad_check expects a scalar loss");
  tape.backward(loss);

  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter<double>& p : params)
    analytic.push_back(p.node->grad.empty() ? Tensor<double>(p.tensor().shape())
                                            : p.node->grad);

  auto eval = [&]() {
    Tape<double> t;
    t.set_recording(false);
    return loss_fn(t)->value[0];
  };

  GradCheckReport report;
  report.tolerance = tolerance;
  std::mt19937_64 rng(seed);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<double>& p = params[pi];
    const int64_t n = p.tensor().size();
    const int64_t count = std::min<int64_t>(samples_per_tensor, n);
    for (int64_t s = 0; s < count; ++s) {
      const int64_t i = static_cast<int64_t>(rng() % static_cast<uint64_t>(n));
      const double saved = p.tensor()[i];
      p.tensor()[i] = saved + h;
      const double lp = eval();
      p.tensor()[i] = saved - h;
      const double lm = eval();
      p.tensor()[i] = saved;

      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) /
                         std::max(1e-6, std::abs(a) + std::abs(numeric));
      ++report.samples;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = {p.name, i, a, numeric, rel};
      }
    }
  }
  return report;
}

/// Throwing variant: raises check-failed when the comparison exceeds the
/// tolerance.
inline GradCheckReport grad_check(
    std::vector<Parameter<double>>& params,
    const std::function<Value<double>(Tape<double>&)>& loss_fn,
    double tolerance = 1e-4, int samples_per_tensor = 8, uint64_t seed = 0) {
  GradCheckReport report =
      grad_check_report(params, loss_fn, tolerance, samples_per_tensor, seed);
  if (!report.passed()) fail("check-failed", report.str());
  return report;
}

}  // namespace stresslab
