#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "expertadapt/core/rng.hpp"
#include "expertadapt/nn/tensor.hpp"

namespace expertadapt::nn {

/// Ownership role of a parameter block in the shared/per-expert split.
struct ParamRole {
  bool shared = true;
  int expert_slot = -1;  // 0-based branch slot when !shared

  static ParamRole make_shared() { return {true, -1}; }
  static ParamRole expert(int slot) { return {false, slot}; }
};

/// Non-owning view of one named parameter block and its gradient.
template <class T>
struct ParamRef {
  std::string name;
  ParamRole role;
  std::vector<T>* value = nullptr;
  std::vector<T>* grad = nullptr;
};

template <class T>
using EigenRowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using EigenColMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

/// 2-D convolution, square kernel, zero padding, optional bias.
/// Batches are processed one sample at a time (a weight-matrix × im2col
/// product), so batched and per-sample forwards are bitwise identical.
template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
         bool bias, Rng& init_rng)
      : name_(std::move(name)), in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel),
        stride_(stride), pad_(pad), has_bias_(bias) {
    weight_.resize(static_cast<size_t>(out_ch) * in_ch * kernel * kernel);
    wgrad_.assign(weight_.size(), T(0));
    const double stddev = std::sqrt(2.0 / (static_cast<double>(in_ch) * kernel * kernel));
    for (auto& w : weight_) w = static_cast<T>(init_rng.normal() * stddev);
    if (has_bias_) {
      bias_.assign(static_cast<size_t>(out_ch), T(0));
      bgrad_.assign(bias_.size(), T(0));
    }
  }

  int out_dim(int in_dim) const { return (in_dim + 2 * pad_ - kernel_) / stride_ + 1; }

  Tensor<T> forward(const Tensor<T>& x) {
    input_ = x;
    const int oh = out_dim(x.h), ow = out_dim(x.w);
    Tensor<T> y(x.n, out_ch_, oh, ow);
    const int k2 = in_ch_ * kernel_ * kernel_;
    EigenColMat<T> cols(k2, oh * ow);
    Eigen::Map<const EigenRowMat<T>> wmat(weight_.data(), out_ch_, k2);
    for (int in = 0; in < x.n; ++in) {
      im2col(x.sample(in), x.h, x.w, cols);
      Eigen::Map<EigenRowMat<T>> out(y.sample(in), out_ch_, oh * ow);
      out.noalias() = wmat * cols;
    }
    if (has_bias_) {
      for (int in = 0; in < x.n; ++in)
        for (int oc = 0; oc < out_ch_; ++oc) {
          T* p = y.sample(in) + static_cast<size_t>(oc) * oh * ow;
          for (int i = 0; i < oh * ow; ++i) p[i] += bias_[static_cast<size_t>(oc)];
        }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const Tensor<T>& x = input_;
    const int oh = dy.h, ow = dy.w;
    const int k2 = in_ch_ * kernel_ * kernel_;
    Tensor<T> dx(x.n, x.c, x.h, x.w);
    EigenColMat<T> cols(k2, oh * ow);
    EigenColMat<T> dcols(k2, oh * ow);
    Eigen::Map<const EigenRowMat<T>> wmat(weight_.data(), out_ch_, k2);
    Eigen::Map<EigenRowMat<T>> wgrad(wgrad_.data(), out_ch_, k2);
    for (int in = 0; in < x.n; ++in) {
      im2col(x.sample(in), x.h, x.w, cols);
      Eigen::Map<const EigenRowMat<T>> dout(dy.sample(in), out_ch_, oh * ow);
      wgrad.noalias() += dout * cols.transpose();
      dcols.noalias() = wmat.transpose() * dout;
      col2im(dcols, x.h, x.w, dx.sample(in));
    }
    if (has_bias_) {
      for (int in = 0; in < x.n; ++in)
        for (int oc = 0; oc < out_ch_; ++oc) {
          const T* p = dy.sample(in) + static_cast<size_t>(oc) * oh * ow;
          T s = T(0);
          for (int i = 0; i < oh * ow; ++i) s += p[i];
          bgrad_[static_cast<size_t>(oc)] += s;
        }
    }
    return dx;
  }

  void release_cache() { input_ = Tensor<T>(); }

  void collect_params(std::vector<ParamRef<T>>& out) {
    out.push_back({name_ + ".w", ParamRole::make_shared(), &weight_, &wgrad_});
    if (has_bias_) out.push_back({name_ + ".b", ParamRole::make_shared(), &bias_, &bgrad_});
  }

 private:
  void im2col(const T* img, int h, int w, EigenColMat<T>& cols) const {
    const int oh = out_dim(h), ow = out_dim(w);
    for (int ic = 0; ic < in_ch_; ++ic) {
      const T* chan = img + static_cast<size_t>(ic) * h * w;
      for (int ky = 0; ky < kernel_; ++ky) {
        for (int kx = 0; kx < kernel_; ++kx) {
          const int row = (ic * kernel_ + ky) * kernel_ + kx;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) {
              for (int ox = 0; ox < ow; ++ox) cols(row, oy * ow + ox) = T(0);
              continue;
            }
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              cols(row, oy * ow + ox) =
                  (ix >= 0 && ix < w) ? chan[static_cast<size_t>(iy) * w + ix] : T(0);
            }
          }
        }
      }
    }
  }

  void col2im(const EigenColMat<T>& dcols, int h, int w, T* dimg) const {
    const int oh = out_dim(h), ow = out_dim(w);
    for (int ic = 0; ic < in_ch_; ++ic) {
      T* chan = dimg + static_cast<size_t>(ic) * h * w;
      for (int ky = 0; ky < kernel_; ++ky) {
        for (int kx = 0; kx < kernel_; ++kx) {
          const int row = (ic * kernel_ + ky) * kernel_ + kx;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < w) chan[static_cast<size_t>(iy) * w + ix] += dcols(row, oy * ow + ox);
            }
          }
        }
      }
    }
  }

  std::string name_;
  int in_ch_ = 0, out_ch_ = 0, kernel_ = 0, stride_ = 1, pad_ = 0;
  bool has_bias_ = false;
  std::vector<T> weight_, wgrad_, bias_, bgrad_;
  Tensor<T> input_;
};

/// Instance normalization whose affine pair (γ, β) is selected by expert
/// branch slot: statistics are per sample and per channel, shared by all
/// experts; only the affine parameters are expert-specific. An
/// unconditioned instance keeps a single affine pair, ignores the slot,
/// and reports its parameters as shared.
template <class T>
class CinNorm {
 public:
  CinNorm() = default;
  CinNorm(std::string name, int channels, int n_experts, double eps, bool conditioned = true)
      : name_(std::move(name)), channels_(channels), eps_(eps), conditioned_(conditioned) {
    const size_t rows = conditioned_ ? static_cast<size_t>(n_experts) : 1;
    gamma_.assign(rows, std::vector<T>(channels, T(1)));
    beta_.assign(rows, std::vector<T>(channels, T(0)));
    ggrad_.assign(rows, std::vector<T>(channels, T(0)));
    bgrad_.assign(rows, std::vector<T>(channels, T(0)));
  }

  int channels() const { return channels_; }
  bool conditioned() const { return conditioned_; }
  int n_branches() const { return static_cast<int>(gamma_.size()); }

  /// Appends one branch; identity mode starts at (γ=1, β=0), average mode
  /// at the element-wise mean of existing branches. No-op when the layer
  /// is unconditioned.
  void add_branch(bool average) {
    if (!conditioned_) return;
    std::vector<T> g(channels_, T(1)), b(channels_, T(0));
    if (average) {
      const size_t n = gamma_.size();
      if (n == 0) throw NumericError("average branch init requires existing branches");
      for (int c = 0; c < channels_; ++c) {
        double gs = 0.0, bs = 0.0;
        for (size_t r = 0; r < n; ++r) {
          gs += static_cast<double>(gamma_[r][static_cast<size_t>(c)]);
          bs += static_cast<double>(beta_[r][static_cast<size_t>(c)]);
        }
        g[static_cast<size_t>(c)] = static_cast<T>(gs / static_cast<double>(n));
        b[static_cast<size_t>(c)] = static_cast<T>(bs / static_cast<double>(n));
      }
    }
    gamma_.push_back(std::move(g));
    beta_.push_back(std::move(b));
    ggrad_.emplace_back(channels_, T(0));
    bgrad_.emplace_back(channels_, T(0));
  }

  Tensor<T> forward(const Tensor<T>& x, int expert_slot) {
    if (!conditioned_) expert_slot = 0;
    check_slot(expert_slot);
    slot_ = expert_slot;
    const int m = x.h * x.w;
    xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
    inv_std_.assign(static_cast<size_t>(x.n) * x.c, T(0));
    Tensor<T> y(x.n, x.c, x.h, x.w);
    const auto& g = gamma_[static_cast<size_t>(expert_slot)];
    const auto& b = beta_[static_cast<size_t>(expert_slot)];
    for (int in = 0; in < x.n; ++in) {
      for (int ic = 0; ic < x.c; ++ic) {
        const T* p = x.v.data() + x.index(in, ic, 0, 0);
        T* ph = xhat_.v.data() + x.index(in, ic, 0, 0);
        T* py = y.v.data() + x.index(in, ic, 0, 0);
        double mean = 0.0;
        for (int i = 0; i < m; ++i) mean += static_cast<double>(p[i]);
        mean /= m;
        double var = 0.0;
        for (int i = 0; i < m; ++i) {
          const double d = static_cast<double>(p[i]) - mean;
          var += d * d;
        }
        var /= m;
        const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
        inv_std_[static_cast<size_t>(in) * x.c + ic] = inv;
        const T mu = static_cast<T>(mean);
        const T gc = g[static_cast<size_t>(ic)], bc = b[static_cast<size_t>(ic)];
        for (int i = 0; i < m; ++i) {
          ph[i] = (p[i] - mu) * inv;
          py[i] = gc * ph[i] + bc;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int m = dy.h * dy.w;
    Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
    auto& gg = ggrad_[static_cast<size_t>(slot_)];
    auto& bg = bgrad_[static_cast<size_t>(slot_)];
    const auto& g = gamma_[static_cast<size_t>(slot_)];
    for (int in = 0; in < dy.n; ++in) {
      for (int ic = 0; ic < dy.c; ++ic) {
        const T* pdy = dy.v.data() + dy.index(in, ic, 0, 0);
        const T* ph = xhat_.v.data() + dy.index(in, ic, 0, 0);
        T* pdx = dx.v.data() + dy.index(in, ic, 0, 0);
        const T inv = inv_std_[static_cast<size_t>(in) * dy.c + ic];
        const T gc = g[static_cast<size_t>(ic)];
        double sum_dy = 0.0, sum_dy_h = 0.0;
        for (int i = 0; i < m; ++i) {
          sum_dy += static_cast<double>(pdy[i]);
          sum_dy_h += static_cast<double>(pdy[i]) * static_cast<double>(ph[i]);
        }
        gg[static_cast<size_t>(ic)] += static_cast<T>(sum_dy_h);
        bg[static_cast<size_t>(ic)] += static_cast<T>(sum_dy);
        const T a = static_cast<T>(sum_dy / m);
        const T bterm = static_cast<T>(sum_dy_h / m);
        for (int i = 0; i < m; ++i)
          pdx[i] = gc * inv * (pdy[i] - a - ph[i] * bterm);
      }
    }
    return dx;
  }

  void release_cache() {
    xhat_ = Tensor<T>();
    inv_std_.clear();
  }

  void collect_params(std::vector<ParamRef<T>>& out) {
    for (size_t r = 0; r < gamma_.size(); ++r) {
      const ParamRole role =
          conditioned_ ? ParamRole::expert(static_cast<int>(r)) : ParamRole::make_shared();
      out.push_back({name_ + ".gamma", role, &gamma_[r], &ggrad_[r]});
      out.push_back({name_ + ".beta", role, &beta_[r], &bgrad_[r]});
    }
  }

 private:
  void check_slot(int slot) const {
    if (slot < 0 || slot >= n_branches())
      throw NumericError(detail::strprintf("norm %s: branch slot %d out of range",
                                           name_.c_str(), slot));
  }

  std::string name_;
  int channels_ = 0;
  double eps_ = 1e-5;
  bool conditioned_ = true;
  std::vector<std::vector<T>> gamma_, beta_, ggrad_, bgrad_;
  int slot_ = 0;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <class T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    mask_.assign(x.size(), 0);
    Tensor<T> y(x.n, x.c, x.h, x.w);
    for (size_t i = 0; i < x.size(); ++i) {
      if (x.v[i] > T(0)) {
        y.v[i] = x.v[i];
        mask_[i] = 1;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
    for (size_t i = 0; i < dy.size(); ++i) dx.v[i] = mask_[i] ? dy.v[i] : T(0);
    return dx;
  }

  void release_cache() { mask_.clear(); }

 private:
  std::vector<std::uint8_t> mask_;
};

/// 3x3 stride-2 pad-1 max pooling (the ResNet stem pool). Ties resolve to
/// the first position in scan order; backward routes to the argmax.
template <class T>
class MaxPool3x3s2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    in_h_ = x.h;
    in_w_ = x.w;
    const int oh = (x.h + 2 - 3) / 2 + 1, ow = (x.w + 2 - 3) / 2 + 1;
    Tensor<T> y(x.n, x.c, oh, ow);
    argmax_.assign(y.size(), 0);
    for (int in = 0; in < x.n; ++in) {
      for (int ic = 0; ic < x.c; ++ic) {
        const T* p = x.v.data() + x.index(in, ic, 0, 0);
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            T best = std::numeric_limits<T>::lowest();
            int best_idx = -1;
            for (int ky = 0; ky < 3; ++ky) {
              const int iy = oy * 2 - 1 + ky;
              if (iy < 0 || iy >= x.h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int ix = ox * 2 - 1 + kx;
                if (ix < 0 || ix >= x.w) continue;
                const T v = p[static_cast<size_t>(iy) * x.w + ix];
                if (v > best) {
                  best = v;
                  best_idx = iy * x.w + ix;
                }
              }
            }
            y.at(in, ic, oy, ox) = best;
            argmax_[y.index(in, ic, oy, ox)] = best_idx;
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.n, dy.c, in_h_, in_w_);
    for (int in = 0; in < dy.n; ++in)
      for (int ic = 0; ic < dy.c; ++ic) {
        T* pdx = dx.v.data() + dx.index(in, ic, 0, 0);
        for (int oy = 0; oy < dy.h; ++oy)
          for (int ox = 0; ox < dy.w; ++ox) {
            const size_t oi = dy.index(in, ic, oy, ox);
            pdx[argmax_[oi]] += dy.v[oi];
          }
      }
    return dx;
  }

  void release_cache() { argmax_.clear(); }

 private:
  int in_h_ = 0, in_w_ = 0;
  std::vector<int> argmax_;
};

/// Nearest-neighbour 2x upsampling; backward sums each 2x2 output group.
template <class T>
class Upsample2x {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
    for (int in = 0; in < x.n; ++in)
      for (int ic = 0; ic < x.c; ++ic)
        for (int iy = 0; iy < x.h; ++iy)
          for (int ix = 0; ix < x.w; ++ix) {
            const T v = x.at(in, ic, iy, ix);
            y.at(in, ic, 2 * iy, 2 * ix) = v;
            y.at(in, ic, 2 * iy, 2 * ix + 1) = v;
            y.at(in, ic, 2 * iy + 1, 2 * ix) = v;
            y.at(in, ic, 2 * iy + 1, 2 * ix + 1) = v;
          }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
    for (int in = 0; in < dy.n; ++in)
      for (int ic = 0; ic < dy.c; ++ic)
        for (int iy = 0; iy < dx.h; ++iy)
          for (int ix = 0; ix < dx.w; ++ix)
            dx.at(in, ic, iy, ix) = dy.at(in, ic, 2 * iy, 2 * ix) +
                                    dy.at(in, ic, 2 * iy, 2 * ix + 1) +
                                    dy.at(in, ic, 2 * iy + 1, 2 * ix) +
                                    dy.at(in, ic, 2 * iy + 1, 2 * ix + 1);
    return dx;
  }
};

/// Channel concatenation [a | b] and its split for the backward pass.
template <class T>
inline Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw NumericError("concat_channels: spatial/batch shapes differ");
  Tensor<T> y(a.n, a.c + b.c, a.h, a.w);
  const size_t plane = static_cast<size_t>(a.h) * a.w;
  for (int in = 0; in < a.n; ++in) {
    std::copy_n(a.sample(in), static_cast<size_t>(a.c) * plane, y.sample(in));
    std::copy_n(b.sample(in), static_cast<size_t>(b.c) * plane,
                y.sample(in) + static_cast<size_t>(a.c) * plane);
  }
  return y;
}

template <class T>
inline void split_channels(const Tensor<T>& dy, Tensor<T>& da, Tensor<T>& db) {
  const size_t plane = static_cast<size_t>(dy.h) * dy.w;
  for (int in = 0; in < dy.n; ++in) {
    std::copy_n(dy.sample(in), static_cast<size_t>(da.c) * plane, da.sample(in));
    std::copy_n(dy.sample(in) + static_cast<size_t>(da.c) * plane,
                static_cast<size_t>(db.c) * plane, db.sample(in));
  }
}

}  // namespace expertadapt::nn
