#pragma once

#include <complex>
#include <vector>

#include "orthoseis/grid.hpp"

namespace orthoseis {

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

namespace detail {

// Iterative radix-2 Cooley-Tukey over strided data, in place. sign = -1 for
// the forward transform, +1 for the inverse. No normalization is applied at
// this level; callers own the convention. Twiddles are evaluated in double
// and narrowed, which keeps single-precision transforms accurate.
template <class T>
void fft_strided(std::complex<T>* p, int n, std::int64_t stride, int sign) {
  if (n == 1) return;
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j |= bit;
    if (i < j) std::swap(p[i * stride], p[j * stride]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double angle = sign * 2.0 * 3.14159265358979323846264338327950288 / len;
    const std::complex<T> step(static_cast<T>(std::cos(angle)), static_cast<T>(std::sin(angle)));
    for (int start = 0; start < n; start += len) {
      std::complex<T> tw(T(1), T(0));
      for (int k = 0; k < len / 2; ++k) {
        std::complex<T>& a = p[(start + k) * stride];
        std::complex<T>& b = p[(start + k + len / 2) * stride];
        const std::complex<T> t = b * tw;
        b = a - t;
        a += t;
        tw *= step;
      }
    }
  }
}

template <class T>
void fft2_in_place(ComplexGrid<T>& g, int sign) {
  const int h = g.h();
  const int w = g.w();
  const int c = g.c();
  require(is_power_of_two(h) && is_power_of_two(w),
          "fft2: spatial dimensions must be powers of two, got " + g.shape().str());
  for (int y = 0; y < h; ++y) {
    for (int ch = 0; ch < c; ++ch) {
      fft_strided(g.raw() + g.index(y, 0, ch), w, c, sign);
    }
  }
  for (int x = 0; x < w; ++x) {
    for (int ch = 0; ch < c; ++ch) {
      fft_strided(g.raw() + g.index(0, x, ch), h, static_cast<std::int64_t>(w) * c, sign);
    }
  }
}

}  // namespace detail

// Forward 2D transform per channel, normalized by 1/(H*W):
//   F[u,v] = (1/(H*W)) * sum_{y,x} f[y,x] * exp(-2*pi*i*(u*y/H + v*x/W))
template <class T>
ComplexGrid<T> fft2(const RealGrid<T>& x) {
  ComplexGrid<T> g(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) g[i] = std::complex<T>(x[i], T(0));
  detail::fft2_in_place(g, -1);
  const T scale = T(1) / (static_cast<T>(x.h()) * static_cast<T>(x.w()));
  for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= scale;
  return g;
}

template <class T>
ComplexGrid<T> fft2(const ComplexGrid<T>& x) {
  ComplexGrid<T> g = x;
  detail::fft2_in_place(g, -1);
  const T scale = T(1) / (static_cast<T>(x.h()) * static_cast<T>(x.w()));
  for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= scale;
  return g;
}

// Inverse 2D transform per channel, unnormalized:
//   f[y,x] = sum_{u,v} F[u,v] * exp(+2*pi*i*(u*y/H + v*x/W))
// Composed with fft2 above this gives an exact round trip.
template <class T>
ComplexGrid<T> ifft2(const ComplexGrid<T>& f) {
  ComplexGrid<T> g = f;
  detail::fft2_in_place(g, +1);
  return g;
}

// Unnormalized forward DFT; the adjoint of ifft2 and building block for
// gradient propagation through the transforms.
template <class T>
ComplexGrid<T> dft2_unnormalized(const ComplexGrid<T>& x) {
  ComplexGrid<T> g = x;
  detail::fft2_in_place(g, -1);
  return g;
}

}  // namespace orthoseis
