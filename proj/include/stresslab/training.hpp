#pragma once

#include <algorithm>
#include <chrono>
#include <random>
#include <vector>

#include "stresslab/checkpoint.hpp"
#include "stresslab/dataset.hpp"
#include "stresslab/metrics.hpp"

namespace stresslab {

struct TrainHyper {
  int epochs = 100;
  int batch = 256;
  uint64_t seed = 0;
  LrSchedule lr;
  double target_scale = 1.0;  // targets divided by this during training
  bool keep_best = false;     // retain best-test-MSE parameters
};

struct TrainReport {
  std::vector<double> train_mse, test_mse, train_mae, test_mae;  // per epoch, MPa-units
  double wall_seconds = 0.0;

  double final_train_mse() const { return train_mse.empty() ? 0.0 : train_mse.back(); }
  double final_test_mse() const { return test_mse.empty() ? 0.0 : test_mse.back(); }
};

namespace detail {

/// Gathers dataset rows into network batch tensors. Sample storage is
/// planar [5,H,W]; the network wants NHWC.
template <typename T>
struct Batch {
  Tensor<T> multi, single, load, target;

  Batch(const Dataset& d, const std::vector<int64_t>& idx, double target_scale) {
    const int h = d.height, w = d.width;
    const int64_t px = d.pixels();
    const int n = static_cast<int>(idx.size());
    multi = Tensor<T>({n, h, w, 5});
    single = Tensor<T>({n, h, w, 1});
    load = Tensor<T>({n, 2});
    target = Tensor<T>({n, h, w, 1});
    const T inv_scale = static_cast<T>(1.0 / target_scale);
    for (int k = 0; k < n; ++k) {
      const float* msrc = d.multi_sample(idx[k]);
      T* mdst = multi.data() + static_cast<int64_t>(k) * px * 5;
      for (int64_t j = 0; j < px; ++j)
        for (int ch = 0; ch < 5; ++ch)
          mdst[j * 5 + ch] = static_cast<T>(msrc[ch * px + j]);
      const float* ssrc = d.single_sample(idx[k]);
      T* sdst = single.data() + static_cast<int64_t>(k) * px;
      for (int64_t j = 0; j < px; ++j) sdst[j] = static_cast<T>(ssrc[j]);
      auto [qx, qy] = d.load_pair(idx[k]);
      load[2 * k] = static_cast<T>(qx);
      load[2 * k + 1] = static_cast<T>(qy);
      const float* tsrc = d.target_sample(idx[k]);
      T* tdst = target.data() + static_cast<int64_t>(k) * px;
      for (int64_t j = 0; j < px; ++j)
        tdst[j] = static_cast<T>(tsrc[j]) * inv_scale;
    }
  }

  ModelInput<T> input() const { return {&multi, &single, &load}; }
};

/// Zeroes prediction pixels on void cells, per sample geometry.
template <typename T>
void mask_predictions(Tensor<T>& pred, const Dataset& d,
                      const std::vector<int64_t>& idx) {
  const int64_t px = d.pixels();
  for (size_t k = 0; k < idx.size(); ++k) {
    const float* geo = d.multi_sample(idx[k]);  // channel 0
    T* p = pred.data() + static_cast<int64_t>(k) * px;
    for (int64_t j = 0; j < px; ++j)
      if (geo[j] == 0.0f) p[j] = T(0);
  }
}

inline std::vector<int64_t> all_indices(const Dataset& d) {
  std::vector<int64_t> idx(d.count());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace detail

struct EvalResult {
  MetricsReport metrics;
  std::vector<double> true_max, pred_max;  // per-sample field maxima
};

/// Inference over the dataset: masked predictions against the stored
/// targets, pooled over every pixel of every sample. r2_max is NaN when the
/// true maxima carry no variance (uniform datasets).
template <typename T>
EvalResult evaluate(SurrogateModel<T>& model, const Dataset& d,
                    double target_scale = 1.0, int batch = 256,
                    bool solid_only = false) {
  require(d.count() > 0, "empty-dataset", "nothing to evaluate");
  require(d.height == model.config().height && d.width == model.config().width,
          "arch-input-mismatch", "dataset resolution does not match model");
  const int64_t px = d.pixels();
  EvalResult result;
  double se = 0.0, ae = 0.0, re = 0.0;
  int64_t pixels = 0;

  std::vector<int64_t> order = detail::all_indices(d);
  for (int64_t start = 0; start < d.count(); start += batch) {
    const int64_t stop = std::min<int64_t>(start + batch, d.count());
    std::vector<int64_t> idx(order.begin() + start, order.begin() + stop);
    detail::Batch<T> b(d, idx, 1.0);
    Tape<T> tape;
    tape.set_recording(false);
    Value<T> out = model.forward(tape, b.input(), Mode::kInfer);
    Tensor<T> pred = out->value;
    if (target_scale != 1.0) {
      const T s = static_cast<T>(target_scale);
      for (int64_t i = 0; i < pred.size(); ++i) pred[i] *= s;
    }
    detail::mask_predictions(pred, d, idx);

    for (size_t k = 0; k < idx.size(); ++k) {
      const float* tgt = d.target_sample(idx[k]);
      const float* geo = d.multi_sample(idx[k]);
      const T* p = pred.data() + static_cast<int64_t>(k) * px;
      double tmax = 0.0, pmax = 0.0;
      for (int64_t j = 0; j < px; ++j) {
        if (solid_only && geo[j] == 0.0f) continue;
        const double y = tgt[j], yh = static_cast<double>(p[j]);
        const double diff = y - yh;
        se += diff * diff;
        ae += std::abs(diff);
        re += std::abs(diff) / (kMreEpsilon + std::max(y, yh));
        ++pixels;
        tmax = std::max(tmax, y);
        pmax = std::max(pmax, yh);
      }
      result.true_max.push_back(tmax);
      result.pred_max.push_back(pmax);
    }
  }

  result.metrics.samples = static_cast<size_t>(d.count());
  result.metrics.mse = se / static_cast<double>(pixels);
  result.metrics.mae = ae / static_cast<double>(pixels);
  result.metrics.mre = re / static_cast<double>(pixels) * 100.0;
  try {
    result.metrics.r2_max = r_squared(result.true_max, result.pred_max);
  } catch (const Error&) {
    result.metrics.r2_max = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

/// Masked single-sample prediction as a stress field in MPa.
template <typename T>
StressField predict(SurrogateModel<T>& model, const Dataset& d, int64_t index,
                    double target_scale = 1.0) {
  require(index >= 0 && index < d.count(), "invalid-parameters",
          "sample index out of range");
  detail::Batch<T> b(d, {index}, 1.0);
  Tape<T> tape;
  tape.set_recording(false);
  Value<T> out = model.forward(tape, b.input(), Mode::kInfer);
  Tensor<T> pred = out->value;
  if (target_scale != 1.0) {
    const T s = static_cast<T>(target_scale);
    for (int64_t i = 0; i < pred.size(); ++i) pred[i] *= s;
  }
  detail::mask_predictions(pred, d, {index});
  StressField f(d.height, d.width);
  for (int64_t j = 0; j < d.pixels(); ++j)
    f.values[j] = static_cast<double>(pred[j]);
  return f;
}

/// Epochs of seeded shuffled mini-batches with per-epoch train and test
/// MSE/MAE tracking. Train metrics average the training-mode batch outputs;
/// test metrics come from masked inference like evaluate(). All reported
/// values are in MPa units regardless of target scaling.
template <typename T>
TrainReport train(SurrogateModel<T>& model, const Dataset& train_set,
                  const Dataset& test_set, const TrainHyper& hyper) {
  require(hyper.epochs >= 1 && hyper.batch >= 1, "invalid-parameters",
          "epochs and batch size must be positive");
  require(train_set.count() > 0, "empty-dataset", "training set is empty");
  require(train_set.height == model.config().height &&
              train_set.width == model.config().width,
          "arch-input-mismatch", "dataset resolution does not match model");
  require(hyper.target_scale > 0.0, "invalid-parameters",
          "target scale must be positive");

  const auto t0 = std::chrono::steady_clock::now();
  AdamOptimizer<T> opt(hyper.lr);
  std::mt19937_64 shuffle_rng(hyper.seed);
  std::vector<int64_t> order = detail::all_indices(train_set);
  const double s = hyper.target_scale;
  const int64_t px = train_set.pixels();

  TrainReport report;
  double best_test = std::numeric_limits<double>::infinity();
  std::vector<Tensor<T>> best_params;
  std::vector<Tensor<T>> best_aux;

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double ep_se = 0.0, ep_ae = 0.0;
    int64_t ep_pixels = 0;

    for (int64_t start = 0; start < train_set.count(); start += hyper.batch) {
      const int64_t stop =
          std::min<int64_t>(start + hyper.batch, train_set.count());
      std::vector<int64_t> idx(order.begin() + start, order.begin() + stop);
      detail::Batch<T> b(train_set, idx, s);

      zero_grads(model.params());
      Tape<T> tape;
      Value<T> out = model.forward(tape, b.input(), Mode::kTrain);
      Value<T> loss = mse_loss(tape, out, b.target);
      if (!std::isfinite(static_cast<double>(loss->value[0])))
        fail("non-finite-loss", "training diverged at epoch " +
                                    std::to_string(epoch));
      tape.backward(loss);
      opt.step(model.params());

      const int64_t count = static_cast<int64_t>(idx.size()) * px;
      ep_se += static_cast<double>(loss->value[0]) * static_cast<double>(count);
      const T* p = out->value.data();
      const T* t = b.target.data();
      double ae = 0.0;
      for (int64_t i = 0; i < count; ++i)
        ae += std::abs(static_cast<double>(p[i]) - static_cast<double>(t[i]));
      ep_ae += ae;
      ep_pixels += count;
      tape.clear();
    }

    report.train_mse.push_back(ep_se / static_cast<double>(ep_pixels) * s * s);
    report.train_mae.push_back(ep_ae / static_cast<double>(ep_pixels) * s);

    if (test_set.count() > 0) {
      EvalResult ev = evaluate(model, test_set, s, std::max(hyper.batch, 64));
      report.test_mse.push_back(ev.metrics.mse);
      report.test_mae.push_back(ev.metrics.mae);
      if (hyper.keep_best && ev.metrics.mse < best_test) {
        best_test = ev.metrics.mse;
        best_params.clear();
        for (Parameter<T>& p : model.params()) best_params.push_back(p.tensor());
        best_aux.clear();
        for (const auto& a : model.aux_state()) best_aux.push_back(*a.tensor);
      }
    } else {
      report.test_mse.push_back(0.0);
      report.test_mae.push_back(0.0);
    }
  }

  if (hyper.keep_best && !best_params.empty()) {
    auto& params = model.params();
    for (size_t i = 0; i < params.size(); ++i)
      params[i].tensor() = best_params[i];
    const auto& aux = model.aux_state();
    for (size_t i = 0; i < aux.size(); ++i) *aux[i].tensor = best_aux[i];
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

}  // namespace stresslab
