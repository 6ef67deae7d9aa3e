#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "stresslab/gemm.hpp"
#include "stresslab/tensor.hpp"

namespace stresslab {

enum class Mode { kTrain, kInfer };
enum class Pad { kSame, kValid };

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first contribution
  bool requires_grad = false;
  std::function<void()> backward;
};

template <typename T>
using Value = std::shared_ptr<Node<T>>;

template <typename T>
Value<T> make_leaf(Tensor<T> v, bool requires_grad = false) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(v);
  node->requires_grad = requires_grad;
  return node;
}

/// Zeroes and returns the gradient buffer, allocating it on first use.
template <typename T>
Tensor<T>& ensure_grad(const Value<T>& v) {
  if (v->grad.empty()) {
    Tensor<T> g(v->value.shape());
    v->grad = std::move(g);
  }
  return v->grad;
}

template <typename T>
void add_grad(const Value<T>& v, const Tensor<T>& g) {
  if (!v->requires_grad) return;
  Tensor<T>& dst = ensure_grad(v);
  T* d = dst.data();
  const T* s = g.data();
  for (int64_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

/// Eager reverse-mode tape. Operations append their backward closures in
/// execution order; backward() replays them in exact reverse order, which is
/// a reverse topological order of the computation graph. Gradients at
/// fan-out points accumulate additively. With recording off the operations
/// run forward-only and keep nothing.
template <typename T>
class Tape {
 public:
  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  bool check_finite = true;

  /// Wraps an op output. Recorded nodes get their backward closure assigned
  /// by the op right after emit; leaves keep none.
  Value<T> emit(Tensor<T> value, bool needs_grad) {
    if (check_finite && !value.all_finite())
      fail("non-finite-activation", "operation produced NaN or Inf");
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    if (recording_ && needs_grad) {
      node->requires_grad = true;
      nodes_.push_back(node);
    }
    return node;
  }

  void backward(const Value<T>& root) {
    require(root->requires_grad, "shape-mismatch",
            "backward target does not require gradients");
    ensure_grad(root).fill(T(1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>* n = it->get();
      if (!n->backward || n->grad.empty()) continue;
      n->backward();
    }
  }

  void clear() { nodes_.clear(); }
  size_t recorded() const { return nodes_.size(); }

 private:
  std::vector<Value<T>> nodes_;
  bool recording_ = true;
};

// ---------------------------------------------------------------------------
// Convolution plumbing: window gather/scatter between an image tensor and a
// patch matrix with rows (n, gy, gx) and columns (ky, kx, c).
// ---------------------------------------------------------------------------

struct ConvGeom {
  int n = 0, h = 0, w = 0, c = 0;  // image tensor
  int kh = 0, kw = 0;
  int stride = 1;
  int gh = 0, gw = 0;  // grid (patch rows per image)
  int pt = 0, pl = 0;  // top/left zero padding
};

inline ConvGeom conv_geom(int n, int h, int w, int c, int kh, int kw,
                          int stride, Pad pad) {
  ConvGeom g{n, h, w, c, kh, kw, stride};
  if (pad == Pad::kSame) {
    g.gh = (h + stride - 1) / stride;
    g.gw = (w + stride - 1) / stride;
    const int ph = std::max((g.gh - 1) * stride + kh - h, 0);
    const int pw = std::max((g.gw - 1) * stride + kw - w, 0);
    g.pt = ph / 2;
    g.pl = pw / 2;
  } else {
    require(h >= kh && w >= kw, "shape-mismatch",
            "valid convolution needs input at least as large as the kernel");
    g.gh = (h - kh) / stride + 1;
    g.gw = (w - kw) / stride + 1;
  }
  return g;
}

/// Grid geometry of a stride-s transposed convolution producing (h*s, w*s)
/// from (h, w): the forward-conv view from the large image back to the grid.
inline ConvGeom tconv_geom(int n, int gh, int gw, int c_img, int kh, int kw,
                           int stride) {
  ConvGeom g = conv_geom(n, gh * stride, gw * stride, c_img, kh, kw, stride,
                         Pad::kSame);
  require(g.gh == gh && g.gw == gw, "shape-mismatch",
          "transposed convolution grid mismatch");
  return g;
}

template <typename T>
void im2col(const ConvGeom& g, const T* src, T* dst) {
  const int64_t kcols = static_cast<int64_t>(g.kh) * g.kw * g.c;
  for (int n = 0; n < g.n; ++n) {
    for (int gy = 0; gy < g.gh; ++gy) {
      for (int gx = 0; gx < g.gw; ++gx) {
        T* row = dst + ((static_cast<int64_t>(n) * g.gh + gy) * g.gw + gx) * kcols;
        for (int ky = 0; ky < g.kh; ++ky) {
          const int sy = gy * g.stride + ky - g.pt;
          if (sy < 0 || sy >= g.h) {
            std::memset(row + static_cast<int64_t>(ky) * g.kw * g.c, 0,
                        sizeof(T) * g.kw * g.c);
            continue;
          }
          for (int kx = 0; kx < g.kw; ++kx) {
            const int sx = gx * g.stride + kx - g.pl;
            T* cell = row + (static_cast<int64_t>(ky) * g.kw + kx) * g.c;
            if (sx < 0 || sx >= g.w) {
              std::memset(cell, 0, sizeof(T) * g.c);
            } else {
              const T* s = src + ((static_cast<int64_t>(n) * g.h + sy) * g.w + sx) * g.c;
              std::memcpy(cell, s, sizeof(T) * g.c);
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds patch-matrix rows back into the image.
template <typename T>
void col2im_add(const ConvGeom& g, const T* src, T* dst) {
  const int64_t kcols = static_cast<int64_t>(g.kh) * g.kw * g.c;
  for (int n = 0; n < g.n; ++n) {
    for (int gy = 0; gy < g.gh; ++gy) {
      for (int gx = 0; gx < g.gw; ++gx) {
        const T* row = src + ((static_cast<int64_t>(n) * g.gh + gy) * g.gw + gx) * kcols;
        for (int ky = 0; ky < g.kh; ++ky) {
          const int sy = gy * g.stride + ky - g.pt;
          if (sy < 0 || sy >= g.h) continue;
          for (int kx = 0; kx < g.kw; ++kx) {
            const int sx = gx * g.stride + kx - g.pl;
            if (sx < 0 || sx >= g.w) continue;
            const T* cell = row + (static_cast<int64_t>(ky) * g.kw + kx) * g.c;
            T* d = dst + ((static_cast<int64_t>(n) * g.h + sy) * g.w + sx) * g.c;
            for (int ch = 0; ch < g.c; ++ch) d[ch] += cell[ch];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Layer catalog
// ---------------------------------------------------------------------------

/// 2D convolution, NHWC input, weights [kh, kw, c_in, c_out], optional bias.
template <typename T>
Value<T> conv2d(Tape<T>& tape, const Value<T>& x, const Value<T>& w,
                const Value<T>& b, int stride, Pad pad) {
  require(x->value.ndim() == 4 && w->value.ndim() == 4, "shape-mismatch",
          "conv2d expects NHWC input and [kh,kw,cin,cout] weights");
  require(w->value.dim(2) == x->value.dim(3), "shape-mismatch",
          "conv2d channel mismatch: input " + shape_str(x->value) +
              " vs weights " + shape_str(w->value));
  const ConvGeom g = conv_geom(x->value.dim(0), x->value.dim(1),
                               x->value.dim(2), x->value.dim(3),
                               w->value.dim(0), w->value.dim(1), stride, pad);
  const int f = w->value.dim(3);
  const int64_t m = static_cast<int64_t>(g.n) * g.gh * g.gw;
  const int64_t k = static_cast<int64_t>(g.kh) * g.kw * g.c;
  if (b) require(b->value.size() == f, "shape-mismatch", "conv2d bias size");

  Tensor<T> patches({static_cast<int>(m), static_cast<int>(k)});
  im2col(g, x->value.data(), patches.data());
  Tensor<T> y({g.n, g.gh, g.gw, f});
  gemm(false, false, m, f, k, T(1), patches.data(), k, w->value.data(), f,
       T(0), y.data(), f);
  if (b) {
    T* yd = y.data();
    const T* bd = b->value.data();
    for (int64_t r = 0; r < m; ++r)
      for (int j = 0; j < f; ++j) yd[r * f + j] += bd[j];
  }

  const bool needs = x->requires_grad || w->requires_grad ||
                     (b && b->requires_grad);
  Value<T> out = tape.emit(std::move(y), needs);
  if (tape.recording() && needs) {
    Node<T>* self = out.get();
    out->backward = [x, w, b, g, f, m, k, self]() {
      const T* dy = self->grad.data();
      if (w->requires_grad) {
        Tensor<T> patches({static_cast<int>(m), static_cast<int>(k)});
        im2col(g, x->value.data(), patches.data());
        ensure_grad(w);
        gemm(true, false, k, f, m, T(1), patches.data(), k, dy, f, T(1),
             w->grad.data(), f);
      }
      if (b && b->requires_grad) {
        Tensor<T>& db = ensure_grad(b);
        for (int64_t r = 0; r < m; ++r)
          for (int j = 0; j < f; ++j) db[j] += dy[r * f + j];
      }
      if (x->requires_grad) {
        Tensor<T> dpatches({static_cast<int>(m), static_cast<int>(k)});
        gemm(false, true, m, k, f, T(1), dy, f, w->value.data(), f, T(0),
             dpatches.data(), k);
        ensure_grad(x);
        col2im_add(g, dpatches.data(), x->grad.data());
      }
    };
  }
  return out;
}

/// Stride-s transposed convolution upsampling [n,h,w,cin] to
/// [n, h*s, w*s, cout]. Weights are [cin, kh, kw, cout].
template <typename T>
Value<T> conv2d_transpose(Tape<T>& tape, const Value<T>& x, const Value<T>& w,
                          const Value<T>& b, int stride) {
  require(x->value.ndim() == 4 && w->value.ndim() == 4, "shape-mismatch",
          "conv2d_transpose expects NHWC input and [cin,kh,kw,cout] weights");
  require(w->value.dim(0) == x->value.dim(3), "shape-mismatch",
          "conv2d_transpose channel mismatch");
  const int cin = w->value.dim(0), kh = w->value.dim(1), kw = w->value.dim(2),
            cout = w->value.dim(3);
  const int n = x->value.dim(0), gh = x->value.dim(1), gw = x->value.dim(2);
  const ConvGeom g = tconv_geom(n, gh, gw, cout, kh, kw, stride);
  const int64_t m = static_cast<int64_t>(n) * gh * gw;
  const int64_t k2 = static_cast<int64_t>(kh) * kw * cout;
  if (b) require(b->value.size() == cout, "shape-mismatch", "bias size");

  Tensor<T> scatter({static_cast<int>(m), static_cast<int>(k2)});
  gemm(false, false, m, k2, cin, T(1), x->value.data(), cin, w->value.data(),
       k2, T(0), scatter.data(), k2);
  Tensor<T> y({n, g.h, g.w, cout});
  col2im_add(g, scatter.data(), y.data());
  if (b) {
    T* yd = y.data();
    const T* bd = b->value.data();
    const int64_t rows = y.size() / cout;
    for (int64_t r = 0; r < rows; ++r)
      for (int j = 0; j < cout; ++j) yd[r * cout + j] += bd[j];
  }

  const bool needs = x->requires_grad || w->requires_grad ||
                     (b && b->requires_grad);
  Value<T> out = tape.emit(std::move(y), needs);
  if (tape.recording() && needs) {
    Node<T>* self = out.get();
    out->backward = [x, w, b, g, cin, cout, m, k2, self]() {
      Tensor<T> dscatter({static_cast<int>(m), static_cast<int>(k2)});
      im2col(g, self->grad.data(), dscatter.data());
      if (x->requires_grad) {
        ensure_grad(x);
        gemm(false, true, m, cin, k2, T(1), dscatter.data(), k2,
             w->value.data(), k2, T(1), x->grad.data(), cin);
      }
      if (w->requires_grad) {
        ensure_grad(w);
        gemm(true, false, cin, k2, m, T(1), x->value.data(), cin,
             dscatter.data(), k2, T(1), w->grad.data(), k2);
      }
      if (b && b->requires_grad) {
        Tensor<T>& db = ensure_grad(b);
        const T* dy = self->grad.data();
        const int64_t rows = self->grad.size() / cout;
        for (int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < cout; ++j) db[j] += dy[r * cout + j];
      }
    };
  }
  return out;
}

/// 2x2 stride-2 max pooling; input height/width must be even.
template <typename T>
Value<T> max_pool2x2(Tape<T>& tape, const Value<T>& x) {
  require(x->value.ndim() == 4, "shape-mismatch", "max_pool2x2 expects NHWC");
  const int n = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2),
            c = x->value.dim(3);
  require(h % 2 == 0 && w % 2 == 0, "shape-mismatch",
          "max_pool2x2 needs even height and width");
  const int oh = h / 2, ow = w / 2;
  Tensor<T> y({n, oh, ow, c});
  auto argmax = std::make_shared<std::vector<uint8_t>>(y.size());
  const T* xd = x->value.data();
  T* yd = y.data();
  for (int ni = 0; ni < n; ++ni)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ch = 0; ch < c; ++ch) {
          T best{};
          uint8_t which = 0;
          for (uint8_t q = 0; q < 4; ++q) {
            const int sy = 2 * oy + (q >> 1), sx = 2 * ox + (q & 1);
            const T v = xd[((static_cast<int64_t>(ni) * h + sy) * w + sx) * c + ch];
            if (q == 0 || v > best) {
              best = v;
              which = q;
            }
          }
          const int64_t o = ((static_cast<int64_t>(ni) * oh + oy) * ow + ox) * c + ch;
          yd[o] = best;
          (*argmax)[o] = which;
        }

  Value<T> out = tape.emit(std::move(y), x->requires_grad);
  if (tape.recording() && x->requires_grad) {
    Node<T>* self = out.get();
    out->backward = [x, argmax, n, oh, ow, c, h, w, self]() {
      ensure_grad(x);
      T* dx = x->grad.data();
      const T* dy = self->grad.data();
      for (int ni = 0; ni < n; ++ni)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox)
            for (int ch = 0; ch < c; ++ch) {
              const int64_t o = ((static_cast<int64_t>(ni) * oh + oy) * ow + ox) * c + ch;
              const uint8_t q = (*argmax)[o];
              const int sy = 2 * oy + (q >> 1), sx = 2 * ox + (q & 1);
              dx[((static_cast<int64_t>(ni) * h + sy) * w + sx) * c + ch] += dy[o];
            }
    };
  }
  return out;
}

/// Nearest-neighbor 2x upsampling.
template <typename T>
Value<T> upsample2x(Tape<T>& tape, const Value<T>& x) {
  require(x->value.ndim() == 4, "shape-mismatch", "upsample2x expects NHWC");
  const int n = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2),
            c = x->value.dim(3);
  Tensor<T> y({n, 2 * h, 2 * w, c});
  const T* xd = x->value.data();
  T* yd = y.data();
  for (int ni = 0; ni < n; ++ni)
    for (int sy = 0; sy < 2 * h; ++sy)
      for (int sx = 0; sx < 2 * w; ++sx)
        std::memcpy(
            yd + ((static_cast<int64_t>(ni) * 2 * h + sy) * 2 * w + sx) * c,
            xd + ((static_cast<int64_t>(ni) * h + sy / 2) * w + sx / 2) * c,
            sizeof(T) * c);

  Value<T> out = tape.emit(std::move(y), x->requires_grad);
  if (tape.recording() && x->requires_grad) {
    Node<T>* self = out.get();
    out->backward = [x, n, h, w, c, self]() {
      ensure_grad(x);
      T* dx = x->grad.data();
      const T* dy = self->grad.data();
      for (int ni = 0; ni < n; ++ni)
        for (int sy = 0; sy < 2 * h; ++sy)
          for (int sx = 0; sx < 2 * w; ++sx) {
            const T* s = dy + ((static_cast<int64_t>(ni) * 2 * h + sy) * 2 * w + sx) * c;
            T* d = dx + ((static_cast<int64_t>(ni) * h + sy / 2) * w + sx / 2) * c;
            for (int ch = 0; ch < c; ++ch) d[ch] += s[ch];
          }
    };
  }
  return out;
}

/// Fully connected layer: [n, d] x [d, f] + bias.
template <typename T>
Value<T> fully_connected(Tape<T>& tape, const Value<T>& x, const Value<T>& w,
                         const Value<T>& b) {
  require(x->value.ndim() == 2 && w->value.ndim() == 2, "shape-mismatch",
          "fully_connected expects 2-D input and weights");
  require(x->value.dim(1) == w->value.dim(0), "shape-mismatch",
          "fully_connected dimension mismatch: " + shape_str(x->value) +
              " vs " + shape_str(w->value));
  const int n = x->value.dim(0), d = x->value.dim(1), f = w->value.dim(1);
  if (b) require(b->value.size() == f, "shape-mismatch", "bias size");

  Tensor<T> y({n, f});
  gemm(false, false, n, f, d, T(1), x->value.data(), d, w->value.data(), f,
       T(0), y.data(), f);
  if (b) {
    T* yd = y.data();
    const T* bd = b->value.data();
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < f; ++j) yd[static_cast<int64_t>(r) * f + j] += bd[j];
  }

  const bool needs = x->requires_grad || w->requires_grad ||
                     (b && b->requires_grad);
  Value<T> out = tape.emit(std::move(y), needs);
  if (tape.recording() && needs) {
    Node<T>* self = out.get();
    out->backward = [x, w, b, n, d, f, self]() {
      const T* dy = self->grad.data();
      if (w->requires_grad) {
        ensure_grad(w);
        gemm(true, false, d, f, n, T(1), x->value.data(), d, dy, f, T(1),
             w->grad.data(), f);
      }
      if (b && b->requires_grad) {
        Tensor<T>& db = ensure_grad(b);
        for (int r = 0; r < n; ++r)
          for (int j = 0; j < f; ++j) db[j] += dy[static_cast<int64_t>(r) * f + j];
      }
      if (x->requires_grad) {
        ensure_grad(x);
        gemm(false, true, n, d, f, T(1), dy, f, w->value.data(), f, T(1),
             x->grad.data(), d);
      }
    };
  }
  return out;
}

template <typename T>
Value<T> relu(Tape<T>& tape, const Value<T>& x) {
  Tensor<T> y(x->value.shape());
  const T* xd = x->value.data();
  T* yd = y.data();
  for (int64_t i = 0; i < y.size(); ++i) yd[i] = xd[i] > T(0) ? xd[i] : T(0);

  Value<T> out = tape.emit(std::move(y), x->requires_grad);
  if (tape.recording() && x->requires_grad) {
    Node<T>* self = out.get();
    out->backward = [x, self]() {
      Tensor<T>& dx = ensure_grad(x);
      const T* dy = self->grad.data();
      const T* yv = self->value.data();
      for (int64_t i = 0; i < dx.size(); ++i)
        if (yv[i] > T(0)) dx[i] += dy[i];
    };
  }
  return out;
}

template <typename T>
Value<T> sigmoid(Tape<T>& tape, const Value<T>& x) {
  Tensor<T> y(x->value.shape());
  const T* xd = x->value.data();
  T* yd = y.data();
  for (int64_t i = 0; i < y.size(); ++i) yd[i] = T(1) / (T(1) + std::exp(-xd[i]));

  Value<T> out = tape.emit(std::move(y), x->requires_grad);
  if (tape.recording() && x->requires_grad) {
    Node<T>* self = out.get();
    out->backward = [x, self]() {
      Tensor<T>& dx = ensure_grad(x);
      const T* dy = self->grad.data();
      const T* yv = self->value.data();
      for (int64_t i = 0; i < dx.size(); ++i)
        dx[i] += dy[i] * yv[i] * (T(1) - yv[i]);
    };
  }
  return out;
}

/// Per-channel running statistics owned by the model.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormState(int channels = 0) {
    if (channels > 0) {
      running_mean = Tensor<T>({channels});
      running_var = Tensor<T>({channels});
      running_var.fill(T(1));
    }
  }
};

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.9;

/// Batch normalization over all leading axes, per trailing channel. Train
/// mode normalizes with batch statistics and folds them into the running
/// averages; inference mode applies the running averages.
template <typename T>
Value<T> batch_norm(Tape<T>& tape, const Value<T>& x, const Value<T>& gamma,
                    const Value<T>& beta, BatchNormState<T>& state, Mode mode,
                    T momentum = T(kBatchNormMomentum)) {
  const int c = x->value.dim(x->value.ndim() - 1);
  require(gamma->value.size() == c && beta->value.size() == c &&
              state.running_mean.size() == c,
          "shape-mismatch", "batch_norm channel mismatch");
  const int64_t rows = x->value.size() / c;
  const T eps = T(kBatchNormEps);
  const T* xd = x->value.data();

  Tensor<T> y(x->value.shape());
  const bool needs = x->requires_grad || gamma->requires_grad ||
                     beta->requires_grad;

  if (mode == Mode::kInfer) {
    auto inv_std = std::make_shared<Tensor<T>>(std::vector<int>{c});
    auto mean_copy = std::make_shared<Tensor<T>>(state.running_mean);
    for (int j = 0; j < c; ++j)
      (*inv_std)[j] = T(1) / std::sqrt(state.running_var[j] + eps);
    T* yd = y.data();
    for (int64_t r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j)
        yd[r * c + j] = gamma->value[j] * (xd[r * c + j] - (*mean_copy)[j]) *
                            (*inv_std)[j] + beta->value[j];

    Value<T> out = tape.emit(std::move(y), needs);
    if (tape.recording() && needs) {
      Node<T>* self = out.get();
      out->backward = [x, gamma, beta, inv_std, mean_copy, rows, c, self]() {
        const T* dy = self->grad.data();
        const T* xv = x->value.data();
        if (x->requires_grad) {
          Tensor<T>& dx = ensure_grad(x);
          for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < c; ++j)
              dx[r * c + j] += dy[r * c + j] * gamma->value[j] * (*inv_std)[j];
        }
        if (gamma->requires_grad || beta->requires_grad) {
          Tensor<T>& dg = ensure_grad(gamma);
          Tensor<T>& db = ensure_grad(beta);
          for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < c; ++j) {
              dg[j] += dy[r * c + j] * (xv[r * c + j] - (*mean_copy)[j]) * (*inv_std)[j];
              db[j] += dy[r * c + j];
            }
        }
      };
    }
    return out;
  }

  // Train mode: biased batch variance, running averages as EMA.
  Tensor<T> mean({c}), var({c});
  for (int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j) mean[j] += xd[r * c + j];
  for (int j = 0; j < c; ++j) mean[j] /= static_cast<T>(rows);
  for (int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j) {
      const T d = xd[r * c + j] - mean[j];
      var[j] += d * d;
    }
  for (int j = 0; j < c; ++j) var[j] /= static_cast<T>(rows);

  for (int j = 0; j < c; ++j) {
    state.running_mean[j] = momentum * state.running_mean[j] + (T(1) - momentum) * mean[j];
    state.running_var[j] = momentum * state.running_var[j] + (T(1) - momentum) * var[j];
  }

  auto inv_std = std::make_shared<Tensor<T>>(std::vector<int>{c});
  for (int j = 0; j < c; ++j)
    (*inv_std)[j] = T(1) / std::sqrt(var[j] + eps);
  auto xhat = std::make_shared<Tensor<T>>(x->value.shape());
  T* xh = xhat->data();
  T* yd = y.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j) {
      xh[r * c + j] = (xd[r * c + j] - mean[j]) * (*inv_std)[j];
      yd[r * c + j] = gamma->value[j] * xh[r * c + j] + beta->value[j];
    }

  Value<T> out = tape.emit(std::move(y), needs);
  if (tape.recording() && needs) {
    Node<T>* self = out.get();
    out->backward = [x, gamma, beta, xhat, inv_std, rows, c, self]() {
      const T* dy = self->grad.data();
      const T* xh = xhat->data();
      // Channel sums feed both the parameter gradients and the input grad.
      Tensor<T> sum_dy({c}), sum_dy_xhat({c});
      for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) {
          sum_dy[j] += dy[r * c + j];
          sum_dy_xhat[j] += dy[r * c + j] * xh[r * c + j];
        }
      if (gamma->requires_grad) {
        Tensor<T>& dg = ensure_grad(gamma);
        for (int j = 0; j < c; ++j) dg[j] += sum_dy_xhat[j];
      }
      if (beta->requires_grad) {
        Tensor<T>& db = ensure_grad(beta);
        for (int j = 0; j < c; ++j) db[j] += sum_dy[j];
      }
      if (x->requires_grad) {
        Tensor<T>& dx = ensure_grad(x);
        const T inv_rows = T(1) / static_cast<T>(rows);
        for (int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < c; ++j)
            dx[r * c + j] += gamma->value[j] * (*inv_std)[j] * inv_rows *
                             (static_cast<T>(rows) * dy[r * c + j] - sum_dy[j] -
                              xh[r * c + j] * sum_dy_xhat[j]);
      }
    };
  }
  return out;
}

/// Squeeze step of the SE block: [n,h,w,c] -> per-channel means [n,c].
template <typename T>
Value<T> global_avg_pool(Tape<T>& tape, const Value<T>& x) {
  require(x->value.ndim() == 4, "shape-mismatch", "global_avg_pool expects NHWC");
  const int n = x->value.dim(0), hw = x->value.dim(1) * x->value.dim(2),
            c = x->value.dim(3);
  Tensor<T> y({n, c});
  const T* xd = x->value.data();
  T* yd = y.data();
  for (int ni = 0; ni < n; ++ni) {
    for (int r = 0; r < hw; ++r)
      for (int j = 0; j < c; ++j)
        yd[static_cast<int64_t>(ni) * c + j] += xd[(static_cast<int64_t>(ni) * hw + r) * c + j];
    for (int j = 0; j < c; ++j) yd[static_cast<int64_t>(ni) * c + j] /= static_cast<T>(hw);
  }

  Value<T> out = tape.emit(std::move(y), x->requires_grad);
  if (tape.recording() && x->requires_grad) {
    Node<T>* self = out.get();
    out->backward = [x, n, hw, c, self]() {
      Tensor<T>& dx = ensure_grad(x);
      const T* dy = self->grad.data();
      const T inv = T(1) / static_cast<T>(hw);
      for (int ni = 0; ni < n; ++ni)
        for (int r = 0; r < hw; ++r)
          for (int j = 0; j < c; ++j)
            dx[(static_cast<int64_t>(ni) * hw + r) * c + j] +=
                dy[static_cast<int64_t>(ni) * c + j] * inv;
    };
  }
  return out;
}

/// Residual shortcut join.
template <typename T>
Value<T> add(Tape<T>& tape, const Value<T>& a, const Value<T>& b) {
  require(a->value.same_shape(b->value), "shape-mismatch",
          "add expects equal shapes");
  Tensor<T> y(a->value.shape());
  const T* ad = a->value.data();
  const T* bd = b->value.data();
  T* yd = y.data();
  for (int64_t i = 0; i < y.size(); ++i) yd[i] = ad[i] + bd[i];

  const bool needs = a->requires_grad || b->requires_grad;
  Value<T> out = tape.emit(std::move(y), needs);
  if (tape.recording() && needs) {
    Node<T>* self = out.get();
    out->backward = [a, b, self]() {
      add_grad(a, self->grad);
      add_grad(b, self->grad);
    };
  }
  return out;
}

/// Excitation step of the SE block: rescales u [n,h,w,c] by per-channel
/// weights s [n,c].
template <typename T>
Value<T> scale_channels(Tape<T>& tape, const Value<T>& u, const Value<T>& s) {
  require(u->value.ndim() == 4 && s->value.ndim() == 2, "shape-mismatch",
          "scale_channels expects NHWC and [n,c]");
  const int n = u->value.dim(0), hw = u->value.dim(1) * u->value.dim(2),
            c = u->value.dim(3);
  require(s->value.dim(0) == n && s->value.dim(1) == c, "shape-mismatch",
          "scale_channels shape mismatch");
  Tensor<T> y(u->value.shape());
  const T* ud = u->value.data();
  const T* sd = s->value.data();
  T* yd = y.data();
  for (int ni = 0; ni < n; ++ni)
    for (int r = 0; r < hw; ++r)
      for (int j = 0; j < c; ++j)
        yd[(static_cast<int64_t>(ni) * hw + r) * c + j] =
            ud[(static_cast<int64_t>(ni) * hw + r) * c + j] * sd[static_cast<int64_t>(ni) * c + j];

  const bool needs = u->requires_grad || s->requires_grad;
  Value<T> out = tape.emit(std::move(y), needs);
  if (tape.recording() && needs) {
    Node<T>* self = out.get();
    out->backward = [u, s, n, hw, c, self]() {
      const T* dy = self->grad.data();
      const T* ud = u->value.data();
      const T* sd = s->value.data();
      if (u->requires_grad) {
        Tensor<T>& du = ensure_grad(u);
        for (int ni = 0; ni < n; ++ni)
          for (int r = 0; r < hw; ++r)
            for (int j = 0; j < c; ++j)
              du[(static_cast<int64_t>(ni) * hw + r) * c + j] +=
                  dy[(static_cast<int64_t>(ni) * hw + r) * c + j] *
                  sd[static_cast<int64_t>(ni) * c + j];
      }
      if (s->requires_grad) {
        Tensor<T>& ds = ensure_grad(s);
        for (int ni = 0; ni < n; ++ni)
          for (int r = 0; r < hw; ++r)
            for (int j = 0; j < c; ++j)
              ds[static_cast<int64_t>(ni) * c + j] +=
                  dy[(static_cast<int64_t>(ni) * hw + r) * c + j] *
                  ud[(static_cast<int64_t>(ni) * hw + r) * c + j];
      }
    };
  }
  return out;
}

template <typename T>
Value<T> reshape(Tape<T>& tape, const Value<T>& x, std::initializer_list<int> shape) {
  Tensor<T> y(shape);
  require(y.size() == x->value.size(), "shape-mismatch",
          "reshape changes element count");
  std::memcpy(y.data(), x->value.data(), sizeof(T) * y.size());

  Value<T> out = tape.emit(std::move(y), x->requires_grad);
  if (tape.recording() && x->requires_grad) {
    Node<T>* self = out.get();
    out->backward = [x, self]() {
      Tensor<T>& dx = ensure_grad(x);
      const T* dy = self->grad.data();
      for (int64_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    };
  }
  return out;
}

/// Concatenation along the feature axis of two [n, d] tensors.
template <typename T>
Value<T> concat_features(Tape<T>& tape, const Value<T>& a, const Value<T>& b) {
  require(a->value.ndim() == 2 && b->value.ndim() == 2 &&
              a->value.dim(0) == b->value.dim(0),
          "shape-mismatch", "concat_features expects [n,da] and [n,db]");
  const int n = a->value.dim(0), da = a->value.dim(1), db = b->value.dim(1);
  Tensor<T> y({n, da + db});
  for (int r = 0; r < n; ++r) {
    std::memcpy(y.data() + static_cast<int64_t>(r) * (da + db),
                a->value.data() + static_cast<int64_t>(r) * da, sizeof(T) * da);
    std::memcpy(y.data() + static_cast<int64_t>(r) * (da + db) + da,
                b->value.data() + static_cast<int64_t>(r) * db, sizeof(T) * db);
  }

  const bool needs = a->requires_grad || b->requires_grad;
  Value<T> out = tape.emit(std::move(y), needs);
  if (tape.recording() && needs) {
    Node<T>* self = out.get();
    out->backward = [a, b, n, da, db, self]() {
      const T* dy = self->grad.data();
      if (a->requires_grad) {
        Tensor<T>& dst = ensure_grad(a);
        for (int r = 0; r < n; ++r)
          for (int j = 0; j < da; ++j)
            dst[static_cast<int64_t>(r) * da + j] += dy[static_cast<int64_t>(r) * (da + db) + j];
      }
      if (b->requires_grad) {
        Tensor<T>& dst = ensure_grad(b);
        for (int r = 0; r < n; ++r)
          for (int j = 0; j < db; ++j)
            dst[static_cast<int64_t>(r) * db + j] += dy[static_cast<int64_t>(r) * (da + db) + da + j];
      }
    };
  }
  return out;
}

/// Mean squared error against a constant target, as a scalar value.
template <typename T>
Value<T> mse_loss(Tape<T>& tape, const Value<T>& pred, const Tensor<T>& target) {
  require(pred->value.size() == target.size(), "shape-mismatch",
          "mse_loss size mismatch");
  const int64_t n = pred->value.size();
  const T* pd = pred->value.data();
  const T* td = target.data();
  double acc = 0.0;  // accumulate in double for stability in f32 mode
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pd[i]) - static_cast<double>(td[i]);
    acc += d * d;
  }
  Tensor<T> y({1});
  y[0] = static_cast<T>(acc / static_cast<double>(n));

  Value<T> out = tape.emit(std::move(y), pred->requires_grad);
  if (tape.recording() && pred->requires_grad) {
    Node<T>* self = out.get();
    auto saved = std::make_shared<Tensor<T>>(target);
    out->backward = [pred, saved, n, self]() {
      Tensor<T>& dp = ensure_grad(pred);
      const T g = self->grad[0];
      const T* pd = pred->value.data();
      const T* td = saved->data();
      const T scale = g * T(2) / static_cast<T>(n);
      for (int64_t i = 0; i < n; ++i) dp[i] += scale * (pd[i] - td[i]);
    };
  }
  return out;
}

}  // namespace stresslab
