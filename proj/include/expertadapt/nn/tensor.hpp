#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "expertadapt/core/errors.hpp"

namespace expertadapt::nn {

/// Dense NCHW tensor. Scalar type is a template parameter so the same model
/// code can run in float for training and double for gradient checking.
template <class T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(checked_size(n_, c_, h_, w_), T(0)) {}

  size_t size() const { return v.size(); }

  size_t index(int in, int ic, int iy, int ix) const {
    return ((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix;
  }
  T& at(int in, int ic, int iy, int ix) { return v[index(in, ic, iy, ix)]; }
  T at(int in, int ic, int iy, int ix) const { return v[index(in, ic, iy, ix)]; }

  T* sample(int in) { return v.data() + static_cast<size_t>(in) * c * h * w; }
  const T* sample(int in) const { return v.data() + static_cast<size_t>(in) * c * h * w; }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  void fill(T value) { std::fill(v.begin(), v.end(), value); }

 private:
  static size_t checked_size(int n_, int c_, int h_, int w_) {
    if (n_ <= 0 || c_ <= 0 || h_ <= 0 || w_ <= 0)
      throw NumericError("tensor dimensions must be positive");
    return static_cast<size_t>(n_) * c_ * h_ * w_;
  }
};

}  // namespace expertadapt::nn
