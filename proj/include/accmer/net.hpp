#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "accmer/rng.hpp"

namespace accmer {

/// Dense affine layer, y = W x + b, with weights row-major [out][in].
/// Gradients accumulate into gw/gb until zero_grad().
template <typename T>
struct Linear {
  int in = 0;
  int out = 0;
  std::vector<T> w, b, gw, gb;

  Linear() = default;
  Linear(int in_dim, int out_dim) { resize(in_dim, out_dim); }

  void resize(int in_dim, int out_dim) {
    in = in_dim;
    out = out_dim;
    w.assign(static_cast<std::size_t>(in) * out, T(0));
    b.assign(out, T(0));
    gw.assign(w.size(), T(0));
    gb.assign(b.size(), T(0));
  }

  /// U(-1/sqrt(in), 1/sqrt(in)), drawn weights first then biases.
  void init_uniform(RngStream& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (T& v : w) v = static_cast<T>(rng.uniform(-s, s));
    for (T& v : b) v = static_cast<T>(rng.uniform(-s, s));
  }

  void forward(const T* x, T* y) const {
    for (int o = 0; o < out; ++o) {
      const T* row = w.data() + static_cast<std::size_t>(o) * in;
      T acc = b[o];
      for (int i = 0; i < in; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }

  /// gy = dL/dy. Accumulates parameter gradients; writes dL/dx into gx
  /// when non-null (gx is overwritten, not accumulated).
  void backward(const T* x, const T* gy, T* gx) {
    for (int o = 0; o < out; ++o) {
      const T g = gy[o];
      gb[o] += g;
      T* grow = gw.data() + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) grow[i] += g * x[i];
    }
    if (gx) {
      for (int i = 0; i < in; ++i) gx[i] = T(0);
      for (int o = 0; o < out; ++o) {
        const T g = gy[o];
        const T* row = w.data() + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) gx[i] += g * row[i];
      }
    }
  }

  void zero_grad() {
    std::fill(gw.begin(), gw.end(), T(0));
    std::fill(gb.begin(), gb.end(), T(0));
  }

  std::size_t param_count() const { return w.size() + b.size(); }

  /// Visits (params, grads) tensor pairs in a fixed order.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn(w, gw);
    fn(b, gb);
  }
};

template <typename T>
inline T relu(T x) { return x > T(0) ? x : T(0); }

template <typename T>
inline T elu(T x) { return x > T(0) ? x : std::expm1(x); }

template <typename T>
inline T elu_grad(T x) { return x > T(0) ? T(1) : std::exp(x); }

/// Adam with bias correction. Moment buffers are laid out in the visiting
/// order of the registered tensors, so the caller must pass the same tensor
/// sequence every step.
template <typename T>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Applies one update over the tensor list. Returns false (and changes
  /// nothing) if any gradient is non-finite.
  bool step(std::span<const std::pair<std::span<T>, std::span<const T>>> tensors) {
    std::size_t total = 0;
    for (const auto& [p, g] : tensors) total += p.size();
    if (m_.size() != total) {
      m_.assign(total, T(0));
      v_.assign(total, T(0));
    }
    for (const auto& [p, g] : tensors)
      for (T gi : g)
        if (!std::isfinite(static_cast<double>(gi))) return false;

    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t off = 0;
    for (const auto& [p, g] : tensors) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const T gi = g[i];
        m_[off + i] = static_cast<T>(beta1_ * m_[off + i] + (1.0 - beta1_) * gi);
        v_[off + i] = static_cast<T>(beta2_ * v_[off + i] + (1.0 - beta2_) * gi * gi);
        const double mhat = static_cast<double>(m_[off + i]) / c1;
        const double vhat = static_cast<double>(v_[off + i]) / c2;
        p[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
      off += p.size();
    }
    return true;
  }

  long steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<T> m_, v_;
};

}  // namespace accmer
