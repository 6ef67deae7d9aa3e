#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stresslab/autodiff.hpp"

namespace stresslab {

/// Named trainable tensor plus its Adam moment buffers.
template <typename T>
struct Parameter {
  std::string name;
  Value<T> node;
  Tensor<T> m, v;

  Parameter(std::string n, Tensor<T> init)
      : name(std::move(n)), node(make_leaf(std::move(init), true)) {}

  Tensor<T>& tensor() { return node->value; }
  const Tensor<T>& tensor() const { return node->value; }
};

struct LrSchedule {
  double lr0 = 1e-3;
  double gamma = 0.97;
  double decay_steps = 100.0;

  /// Continuous exponential decay, lr(t) = lr0 * gamma^(t / decay_steps).
  double at(double t) const { return lr0 * std::pow(gamma, t / decay_steps); }
};

/// Adam with bias correction and an exponentially decaying learning rate.
template <typename T>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(LrSchedule schedule = {}, double beta1 = 0.9,
                         double beta2 = 0.999, double eps = 1e-8)
      : schedule_(schedule), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  int64_t step_count() const { return t_; }
  const LrSchedule& schedule() const { return schedule_; }

  /// One update over all parameters; t advances to 1 on the first call.
  void step(std::vector<Parameter<T>>& params) {
    ++t_;
    const T lr = static_cast<T>(schedule_.at(static_cast<double>(t_)));
    const T c1 = static_cast<T>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
    const T c2 = static_cast<T>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T eps = static_cast<T>(eps_);
    for (Parameter<T>& p : params) {
      if (p.node->grad.empty()) continue;  // untouched this step
      if (p.m.empty()) {
        p.m = Tensor<T>(p.tensor().shape());
        p.v = Tensor<T>(p.tensor().shape());
      }
      T* w = p.tensor().data();
      const T* g = p.node->grad.data();
      T* m = p.m.data();
      T* v = p.v.data();
      const int64_t n = p.tensor().size();
      for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(g[i]))
          fail("non-finite-loss", "gradient of '" + p.name + "' is not finite");
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        const T mhat = m[i] / c1;
        const T vhat = v[i] / c2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

 private:
  LrSchedule schedule_;
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

template <typename T>
void zero_grads(std::vector<Parameter<T>>& params) {
  for (Parameter<T>& p : params)
    if (!p.node->grad.empty()) p.node->grad.fill(T(0));
}

}  // namespace stresslab
