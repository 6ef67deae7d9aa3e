#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "stresslab/error.hpp"

namespace stresslab {

/// Dense row-major numeric array with up to 4 axes. Image tensors use
/// N x H x W x C; vectors use N x D or flat shapes.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::initializer_list<int> shape) { reset(shape.begin(), shape.end()); }
  explicit Tensor(const std::vector<int>& shape) { reset(shape.begin(), shape.end()); }

  template <typename It>
  void reset(It begin, It end) {
    ndim_ = 0;
    size_ = 1;
    for (It it = begin; it != end; ++it) {
      require(ndim_ < 4, "shape-mismatch", "tensors support at most 4 axes");
      require(*it > 0, "shape-mismatch", "tensor axes must be positive");
      shape_[ndim_++] = *it;
      size_ *= *it;
    }
    require(ndim_ > 0, "shape-mismatch", "tensor needs at least one axis");
    data_.assign(static_cast<size_t>(size_), T(0));
  }

  bool empty() const { return ndim_ == 0; }
  int ndim() const { return ndim_; }
  int dim(int i) const { return shape_[i]; }
  int64_t size() const { return size_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](int64_t i) { return data_[i]; }
  T operator[](int64_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const {
    if (ndim_ != o.ndim_) return false;
    for (int i = 0; i < ndim_; ++i)
      if (shape_[i] != o.shape_[i]) return false;
    return true;
  }

  std::vector<int> shape() const {
    return std::vector<int>(shape_.begin(), shape_.begin() + ndim_);
  }

  Tensor reshaped(std::initializer_list<int> shape) const {
    Tensor out(shape);
    require(out.size() == size_, "shape-mismatch",
            "reshape changes element count");
    out.data_ = data_;
    return out;
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::array<int, 4> shape_{1, 1, 1, 1};
  int ndim_ = 0;
  int64_t size_ = 0;
  std::vector<T> data_;
};

template <typename T>
std::string shape_str(const Tensor<T>& t) {
  std::string s = "[";
  for (int i = 0; i < t.ndim(); ++i)
    s += (i ? "," : "") + std::to_string(t.dim(i));
  return s + "]";
}

}  // namespace stresslab
