#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "orthoseis/autodiff.hpp"
#include "orthoseis/fft.hpp"
#include "orthoseis/grid.hpp"
#include "orthoseis/rng.hpp"

namespace orthoseis {

enum class Padding { kSame, kValid };

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Gathers kh*kw*cin input scalars per output pixel so the convolution becomes
// one dense (pixels x taps) * (taps x cout) product. Channel-fastest layout
// makes every (ky, kx) tap a contiguous run of cin scalars.
template <class T>
RowMat<T> im2col(const RealGrid<T>& x, int kh, int kw, int oy, int ox, int out_h, int out_w) {
  const int cin = x.c();
  const int taps = kh * kw * cin;
  RowMat<T> cols(static_cast<Eigen::Index>(out_h) * out_w, taps);
  for (int y = 0; y < out_h; ++y) {
    for (int xo = 0; xo < out_w; ++xo) {
      T* row = cols.data() + (static_cast<std::int64_t>(y) * out_w + xo) * taps;
      for (int ky = 0; ky < kh; ++ky) {
        const int yy = y + ky - oy;
        for (int kx = 0; kx < kw; ++kx) {
          const int xx = xo + kx - ox;
          T* dst = row + (ky * kw + kx) * cin;
          if (yy >= 0 && yy < x.h() && xx >= 0 && xx < x.w()) {
            std::memcpy(dst, x.raw() + x.index(yy, xx, 0), sizeof(T) * cin);
          } else {
            std::memset(dst, 0, sizeof(T) * cin);
          }
        }
      }
    }
  }
  return cols;
}

template <class T>
void col2im_add(RealGrid<T>& gx, const RowMat<T>& grad_cols, int kh, int kw, int oy, int ox,
                int out_h, int out_w) {
  const int cin = gx.c();
  const int taps = kh * kw * cin;
  for (int y = 0; y < out_h; ++y) {
    for (int xo = 0; xo < out_w; ++xo) {
      const T* row = grad_cols.data() + (static_cast<std::int64_t>(y) * out_w + xo) * taps;
      for (int ky = 0; ky < kh; ++ky) {
        const int yy = y + ky - oy;
        if (yy < 0 || yy >= gx.h()) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int xx = xo + kx - ox;
          if (xx < 0 || xx >= gx.w()) continue;
          const T* src = row + (ky * kw + kx) * cin;
          T* dst = gx.raw() + gx.index(yy, xx, 0);
          for (int ci = 0; ci < cin; ++ci) dst[ci] += src[ci];
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <class T>
ValueId add(Trace<T>& tr, ValueId a, ValueId b) {
  require_same_shape(tr.value(a), tr.value(b), "add");
  RealGrid<T> out(tr.value(a).shape());
  out.data() = tr.value(a).data() + tr.value(b).data();
  return tr.emit_real(std::move(out), {a, b}, [a, b](Trace<T>& t, ValueId self) {
    const RealGrid<T>& g = t.grad_ref(self);
    if (t.needs_grad(a)) t.grad_buffer(a).data() += g.data();
    if (t.needs_grad(b)) t.grad_buffer(b).data() += g.data();
  });
}

template <class T>
ValueId sub(Trace<T>& tr, ValueId a, ValueId b) {
  require_same_shape(tr.value(a), tr.value(b), "sub");
  RealGrid<T> out(tr.value(a).shape());
  out.data() = tr.value(a).data() - tr.value(b).data();
  return tr.emit_real(std::move(out), {a, b}, [a, b](Trace<T>& t, ValueId self) {
    const RealGrid<T>& g = t.grad_ref(self);
    if (t.needs_grad(a)) t.grad_buffer(a).data() += g.data();
    if (t.needs_grad(b)) t.grad_buffer(b).data() -= g.data();
  });
}

template <class T>
ValueId mul(Trace<T>& tr, ValueId a, ValueId b) {
  require_same_shape(tr.value(a), tr.value(b), "mul");
  RealGrid<T> out(tr.value(a).shape());
  out.data() = tr.value(a).data() * tr.value(b).data();
  return tr.emit_real(std::move(out), {a, b}, [a, b](Trace<T>& t, ValueId self) {
    const RealGrid<T>& g = t.grad_ref(self);
    if (t.needs_grad(a)) t.grad_buffer(a).data() += g.data() * t.value(b).data();
    if (t.needs_grad(b)) t.grad_buffer(b).data() += g.data() * t.value(a).data();
  });
}

template <class T>
ValueId div(Trace<T>& tr, ValueId a, ValueId b) {
  require_same_shape(tr.value(a), tr.value(b), "div");
  RealGrid<T> out(tr.value(a).shape());
  out.data() = tr.value(a).data() / tr.value(b).data();
  return tr.emit_real(std::move(out), {a, b}, [a, b](Trace<T>& t, ValueId self) {
    const RealGrid<T>& g = t.grad_ref(self);
    const auto& bv = t.value(b).data();
    if (t.needs_grad(a)) t.grad_buffer(a).data() += g.data() / bv;
    if (t.needs_grad(b)) {
      t.grad_buffer(b).data() -= g.data() * t.value(self).data() / bv;
    }
  });
}

template <class T>
ValueId scale(Trace<T>& tr, ValueId x, T s) {
  RealGrid<T> out(tr.value(x).shape());
  out.data() = tr.value(x).data() * s;
  return tr.emit_real(std::move(out), {x}, [x, s](Trace<T>& t, ValueId self) {
    t.grad_buffer(x).data() += t.grad_ref(self).data() * s;
  });
}

template <class T>
ValueId add_scalar(Trace<T>& tr, ValueId x, T s) {
  RealGrid<T> out(tr.value(x).shape());
  out.data() = tr.value(x).data() + s;
  return tr.emit_real(std::move(out), {x}, [x](Trace<T>& t, ValueId self) {
    t.grad_buffer(x).data() += t.grad_ref(self).data();
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class T>
ValueId sum_all(Trace<T>& tr, ValueId x) {
  RealGrid<T> out = RealGrid<T>::scalar(tr.value(x).data().sum());
  return tr.emit_real(std::move(out), {x}, [x](Trace<T>& t, ValueId self) {
    t.grad_buffer(x).data() += t.grad_ref(self)[0];
  });
}

template <class T>
ValueId mean_all(Trace<T>& tr, ValueId x) {
  require(tr.value(x).size() > 0, "mean_all: empty grid");
  const T inv = T(1) / static_cast<T>(tr.value(x).size());
  RealGrid<T> out = RealGrid<T>::scalar(tr.value(x).data().sum() * inv);
  return tr.emit_real(std::move(out), {x}, [x, inv](Trace<T>& t, ValueId self) {
    t.grad_buffer(x).data() += t.grad_ref(self)[0] * inv;
  });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <class T>
ValueId tanh_op(Trace<T>& tr, ValueId x) {
  RealGrid<T> out(tr.value(x).shape());
  out.data() = tr.value(x).data().tanh();
  return tr.emit_real(std::move(out), {x}, [x](Trace<T>& t, ValueId self) {
    const auto& y = t.value(self).data();
    t.grad_buffer(x).data() += t.grad_ref(self).data() * (T(1) - y * y);
  });
}

template <class T>
ValueId relu_op(Trace<T>& tr, ValueId x) {
  RealGrid<T> out(tr.value(x).shape());
  out.data() = tr.value(x).data().max(T(0));
  return tr.emit_real(std::move(out), {x}, [x](Trace<T>& t, ValueId self) {
    const auto& xv = t.value(x).data();
    t.grad_buffer(x).data() +=
        t.grad_ref(self).data() * (xv > T(0)).template cast<T>();
  });
}

// Absolute value with subgradient 0 at the origin.
template <class T>
ValueId abs_op(Trace<T>& tr, ValueId x) {
  RealGrid<T> out(tr.value(x).shape());
  out.data() = tr.value(x).data().abs();
  return tr.emit_real(std::move(out), {x}, [x](Trace<T>& t, ValueId self) {
    const auto& xv = t.value(x).data();
    t.grad_buffer(x).data() += t.grad_ref(self).data() * xv.sign();
  });
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

// 2D convolution over (h, w, cin) with a kernel grid of shape
// (kh, kw, cin*cout), flat channel index ci*cout + co. Bias is a (1, 1, cout)
// grid; pass an invalid ValueId to skip it. Same padding requires odd kernel
// dims and preserves the spatial size; valid padding shrinks it.
template <class T>
ValueId conv2d(Trace<T>& tr, ValueId x, ValueId kernel, ValueId bias, Padding pad) {
  const RealGrid<T>& xv = tr.value(x);
  const RealGrid<T>& kv = tr.value(kernel);
  const int cin = xv.c();
  require(cin > 0 && kv.c() % cin == 0,
          "conv2d: kernel channels " + std::to_string(kv.c()) + " not a multiple of input channels " +
              std::to_string(cin));
  const int cout = kv.c() / cin;
  const int kh = kv.h();
  const int kw = kv.w();
  int oy = 0, ox = 0, out_h = 0, out_w = 0;
  if (pad == Padding::kSame) {
    require(kh % 2 == 1 && kw % 2 == 1, "conv2d: same padding requires odd kernel dims");
    oy = kh / 2;
    ox = kw / 2;
    out_h = xv.h();
    out_w = xv.w();
  } else {
    require(xv.h() >= kh && xv.w() >= kw, "conv2d: input smaller than kernel for valid padding");
    out_h = xv.h() - kh + 1;
    out_w = xv.w() - kw + 1;
  }
  if (bias.valid()) {
    require(tr.value(bias).shape() == GridShape{1, 1, cout},
            "conv2d: bias must have shape (1, 1, cout)");
  }

  auto cols = std::make_shared<detail::RowMat<T>>(detail::im2col(xv, kh, kw, oy, ox, out_h, out_w));
  const int taps = kh * kw * cin;
  Eigen::Map<const detail::RowMat<T>> kmat(kv.raw(), taps, cout);

  RealGrid<T> out(out_h, out_w, cout);
  Eigen::Map<detail::RowMat<T>> omat(out.raw(), static_cast<Eigen::Index>(out_h) * out_w, cout);
  omat.noalias() = (*cols) * kmat;
  if (bias.valid()) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bvec(tr.value(bias).raw(), cout);
    omat.rowwise() += bvec;
  }

  auto bwd = [x, kernel, bias, cols, kh, kw, oy, ox, out_h, out_w, taps, cout](Trace<T>& t,
                                                                               ValueId self) {
    const RealGrid<T>& g = t.grad_ref(self);
    Eigen::Map<const detail::RowMat<T>> gmat(g.raw(), static_cast<Eigen::Index>(out_h) * out_w, cout);
    if (bias.valid() && t.needs_grad(bias)) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(t.grad_buffer(bias).raw(), cout);
      gb += gmat.colwise().sum();
    }
    if (t.needs_grad(kernel)) {
      Eigen::Map<detail::RowMat<T>> gk(t.grad_buffer(kernel).raw(), taps, cout);
      gk.noalias() += cols->transpose() * gmat;
    }
    if (t.needs_grad(x)) {
      Eigen::Map<const detail::RowMat<T>> kmat2(t.value(kernel).raw(), taps, cout);
      detail::RowMat<T> grad_cols = gmat * kmat2.transpose();
      detail::col2im_add(t.grad_buffer(x), grad_cols, kh, kw, oy, ox, out_h, out_w);
    }
  };
  return tr.emit_real(std::move(out), {x, kernel, bias}, std::move(bwd));
}

// Stride-2 transposed convolution with a 2x2 kernel grid (2, 2, cin*cout);
// doubles both spatial dims. Output blocks do not overlap, so each output
// pixel is a single (1 x cin) * (cin x cout) product.
template <class T>
ValueId conv2d_transpose2x2(Trace<T>& tr, ValueId x, ValueId kernel, ValueId bias) {
  const RealGrid<T>& xv = tr.value(x);
  const RealGrid<T>& kv = tr.value(kernel);
  const int cin = xv.c();
  require(kv.h() == 2 && kv.w() == 2, "conv2d_transpose2x2: kernel must be 2x2");
  require(cin > 0 && kv.c() % cin == 0, "conv2d_transpose2x2: kernel channels not a multiple of cin");
  const int cout = kv.c() / cin;
  if (bias.valid()) {
    require(tr.value(bias).shape() == GridShape{1, 1, cout},
            "conv2d_transpose2x2: bias must have shape (1, 1, cout)");
  }

  using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
  RealGrid<T> out(2 * xv.h(), 2 * xv.w(), cout);
  for (int y = 0; y < xv.h(); ++y) {
    for (int xo = 0; xo < xv.w(); ++xo) {
      Eigen::Map<const RowVec> xvec(xv.raw() + xv.index(y, xo, 0), cin);
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          Eigen::Map<const detail::RowMat<T>> kab(kv.raw() + kv.index(a, b, 0), cin, cout);
          Eigen::Map<RowVec> ovec(out.raw() + out.index(2 * y + a, 2 * xo + b, 0), cout);
          ovec.noalias() = xvec * kab;
        }
      }
    }
  }
  if (bias.valid()) {
    const RealGrid<T>& bv = tr.value(bias);
    Eigen::Map<detail::RowMat<T>> omat(out.raw(), static_cast<Eigen::Index>(out.h()) * out.w(), cout);
    Eigen::Map<const RowVec> bvec(bv.raw(), cout);
    omat.rowwise() += bvec;
  }

  auto bwd = [x, kernel, bias, cin, cout](Trace<T>& t, ValueId self) {
    const RealGrid<T>& g = t.grad_ref(self);
    const RealGrid<T>& xv2 = t.value(x);
    const RealGrid<T>& kv2 = t.value(kernel);
    using RowVecL = Eigen::Matrix<T, 1, Eigen::Dynamic>;
    if (bias.valid() && t.needs_grad(bias)) {
      Eigen::Map<const detail::RowMat<T>> gmat(g.raw(), static_cast<Eigen::Index>(g.h()) * g.w(),
                                               cout);
      Eigen::Map<RowVecL> gb(t.grad_buffer(bias).raw(), cout);
      gb += gmat.colwise().sum();
    }
    const bool want_x = t.needs_grad(x);
    const bool want_k = t.needs_grad(kernel);
    if (!want_x && !want_k) return;
    RealGrid<T>* gx = want_x ? &t.grad_buffer(x) : nullptr;
    RealGrid<T>* gk = want_k ? &t.grad_buffer(kernel) : nullptr;
    for (int y = 0; y < xv2.h(); ++y) {
      for (int xo = 0; xo < xv2.w(); ++xo) {
        Eigen::Map<const RowVecL> xvec(xv2.raw() + xv2.index(y, xo, 0), cin);
        for (int a = 0; a < 2; ++a) {
          for (int b = 0; b < 2; ++b) {
            Eigen::Map<const RowVecL> gvec(g.raw() + g.index(2 * y + a, 2 * xo + b, 0), cout);
            Eigen::Map<const detail::RowMat<T>> kab(kv2.raw() + kv2.index(a, b, 0), cin, cout);
            if (want_x) {
              Eigen::Map<RowVecL> gxv(gx->raw() + gx->index(y, xo, 0), cin);
              gxv.noalias() += gvec * kab.transpose();
            }
            if (want_k) {
              Eigen::Map<detail::RowMat<T>> gkab(gk->raw() + gk->index(a, b, 0), cin, cout);
              gkab.noalias() += xvec.transpose() * gvec;
            }
          }
        }
      }
    }
  };
  return tr.emit_real(std::move(out), {x, kernel, bias}, std::move(bwd));
}

// ---------------------------------------------------------------------------
// Pooling, dropout, normalization
// ---------------------------------------------------------------------------

// 2x2 max pooling, stride 2. Ties route the gradient to the first maximum in
// scan order, which keeps results independent of threading.
template <class T>
ValueId maxpool2(Trace<T>& tr, ValueId x) {
  const RealGrid<T>& xv = tr.value(x);
  require(xv.h() % 2 == 0 && xv.w() % 2 == 0,
          "maxpool2: spatial dims must be even, got " + xv.shape().str());
  const int oh = xv.h() / 2;
  const int ow = xv.w() / 2;
  const int c = xv.c();
  RealGrid<T> out(oh, ow, c);
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  for (int y = 0; y < oh; ++y) {
    for (int xo = 0; xo < ow; ++xo) {
      for (int ch = 0; ch < c; ++ch) {
        std::int64_t best_idx = xv.index(2 * y, 2 * xo, ch);
        T best = xv[best_idx];
        for (int a = 0; a < 2; ++a) {
          for (int b = 0; b < 2; ++b) {
            const std::int64_t idx = xv.index(2 * y + a, 2 * xo + b, ch);
            if (xv[idx] > best) {
              best = xv[idx];
              best_idx = idx;
            }
          }
        }
        out.at(y, xo, ch) = best;
        (*argmax)[out.index(y, xo, ch)] = best_idx;
      }
    }
  }
  return tr.emit_real(std::move(out), {x}, [x, argmax](Trace<T>& t, ValueId self) {
    const RealGrid<T>& g = t.grad_ref(self);
    RealGrid<T>& gx = t.grad_buffer(x);
    for (std::int64_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
  });
}

// Inverted dropout: keeps an element with probability (1 - rate) and scales
// survivors by 1/(1 - rate) so the expectation is unchanged. Identity in
// inference mode. Mask depends only on the rng state, not on thread count.
template <class T>
ValueId dropout(Trace<T>& tr, ValueId x, T rate, RngState& rng, bool training) {
  require(rate >= T(0) && rate < T(1), "dropout: rate must lie in [0, 1)");
  if (!training || rate == T(0)) return x;
  const RealGrid<T>& xv = tr.value(x);
  auto mask = std::make_shared<RealGrid<T>>(xv.shape());
  const T keep_scale = T(1) / (T(1) - rate);
  for (std::int64_t i = 0; i < xv.size(); ++i) {
    (*mask)[i] = (rng.uniform() >= static_cast<double>(rate)) ? keep_scale : T(0);
  }
  RealGrid<T> out(xv.shape());
  out.data() = xv.data() * mask->data();
  return tr.emit_real(std::move(out), {x}, [x, mask](Trace<T>& t, ValueId self) {
    t.grad_buffer(x).data() += t.grad_ref(self).data() * mask->data();
  });
}

// Group normalization over (h, w, channels-in-group) with per-channel affine
// parameters gain (init 1) and shift (init 0), both shaped (1, 1, c).
template <class T>
ValueId group_norm(Trace<T>& tr, ValueId x, ValueId gain, ValueId shift, int groups, T eps) {
  const RealGrid<T>& xv = tr.value(x);
  const int c = xv.c();
  require(groups >= 1 && c % groups == 0,
          "group_norm: channels " + std::to_string(c) + " not divisible by groups " +
              std::to_string(groups));
  require(tr.value(gain).shape() == GridShape{1, 1, c} &&
              tr.value(shift).shape() == GridShape{1, 1, c},
          "group_norm: gain/shift must have shape (1, 1, c)");
  const int cs = c / groups;
  const std::int64_t n = static_cast<std::int64_t>(xv.h()) * xv.w() * cs;
  require(n > 0, "group_norm: empty group");

  auto xhat = std::make_shared<RealGrid<T>>(xv.shape());
  auto inv_std = std::make_shared<std::vector<T>>(groups);
  for (int g = 0; g < groups; ++g) {
    T sum = T(0), sq = T(0);
    for (int y = 0; y < xv.h(); ++y) {
      for (int xo = 0; xo < xv.w(); ++xo) {
        const T* p = xv.raw() + xv.index(y, xo, g * cs);
        for (int k = 0; k < cs; ++k) {
          sum += p[k];
          sq += p[k] * p[k];
        }
      }
    }
    const T mean = sum / static_cast<T>(n);
    const T var = sq / static_cast<T>(n) - mean * mean;
    const T is = T(1) / std::sqrt(std::max(var, T(0)) + eps);
    (*inv_std)[g] = is;
    for (int y = 0; y < xv.h(); ++y) {
      for (int xo = 0; xo < xv.w(); ++xo) {
        const T* p = xv.raw() + xv.index(y, xo, g * cs);
        T* q = xhat->raw() + xhat->index(y, xo, g * cs);
        for (int k = 0; k < cs; ++k) q[k] = (p[k] - mean) * is;
      }
    }
  }

  const RealGrid<T>& gv = tr.value(gain);
  const RealGrid<T>& sv = tr.value(shift);
  RealGrid<T> out(xv.shape());
  for (int y = 0; y < xv.h(); ++y) {
    for (int xo = 0; xo < xv.w(); ++xo) {
      const T* q = xhat->raw() + xhat->index(y, xo, 0);
      T* o = out.raw() + out.index(y, xo, 0);
      for (int ch = 0; ch < c; ++ch) o[ch] = gv[ch] * q[ch] + sv[ch];
    }
  }

  auto bwd = [x, gain, shift, xhat, inv_std, groups, cs, n](Trace<T>& t, ValueId self) {
    const RealGrid<T>& g = t.grad_ref(self);
    const int h = g.h(), w = g.w(), c2 = g.c();
    if (t.needs_grad(shift)) {
      RealGrid<T>& gs = t.grad_buffer(shift);
      for (int y = 0; y < h; ++y)
        for (int xo = 0; xo < w; ++xo) {
          const T* gp = g.raw() + g.index(y, xo, 0);
          for (int ch = 0; ch < c2; ++ch) gs[ch] += gp[ch];
        }
    }
    if (t.needs_grad(gain)) {
      RealGrid<T>& gg = t.grad_buffer(gain);
      for (int y = 0; y < h; ++y)
        for (int xo = 0; xo < w; ++xo) {
          const T* gp = g.raw() + g.index(y, xo, 0);
          const T* qp = xhat->raw() + xhat->index(y, xo, 0);
          for (int ch = 0; ch < c2; ++ch) gg[ch] += gp[ch] * qp[ch];
        }
    }
    if (!t.needs_grad(x)) return;
    const RealGrid<T>& gainv = t.value(gain);
    RealGrid<T>& gx = t.grad_buffer(x);
    for (int grp = 0; grp < groups; ++grp) {
      T s1 = T(0), s2 = T(0);
      for (int y = 0; y < h; ++y)
        for (int xo = 0; xo < w; ++xo) {
          const T* gp = g.raw() + g.index(y, xo, grp * cs);
          const T* qp = xhat->raw() + xhat->index(y, xo, grp * cs);
          for (int k = 0; k < cs; ++k) {
            const T dxh = gp[k] * gainv[grp * cs + k];
            s1 += dxh;
            s2 += dxh * qp[k];
          }
        }
      const T is = (*inv_std)[grp];
      const T invn = T(1) / static_cast<T>(n);
      for (int y = 0; y < h; ++y)
        for (int xo = 0; xo < w; ++xo) {
          const T* gp = g.raw() + g.index(y, xo, grp * cs);
          const T* qp = xhat->raw() + xhat->index(y, xo, grp * cs);
          T* xp = gx.raw() + gx.index(y, xo, grp * cs);
          for (int k = 0; k < cs; ++k) {
            const T dxh = gp[k] * gainv[grp * cs + k];
            xp[k] += is * (dxh - (s1 + qp[k] * s2) * invn);
          }
        }
    }
  };
  return tr.emit_real(std::move(out), {x, gain, shift}, std::move(bwd));
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

// Concatenates along the channel axis; a's channels come first.
template <class T>
ValueId concat_channels(Trace<T>& tr, ValueId a, ValueId b) {
  const RealGrid<T>& av = tr.value(a);
  const RealGrid<T>& bv = tr.value(b);
  require(av.h() == bv.h() && av.w() == bv.w(),
          "concat_channels: spatial dims differ, " + av.shape().str() + " vs " + bv.shape().str());
  const int ca = av.c();
  const int cb = bv.c();
  RealGrid<T> out(av.h(), av.w(), ca + cb);
  for (int y = 0; y < av.h(); ++y) {
    for (int xo = 0; xo < av.w(); ++xo) {
      std::memcpy(out.raw() + out.index(y, xo, 0), av.raw() + av.index(y, xo, 0), sizeof(T) * ca);
      std::memcpy(out.raw() + out.index(y, xo, ca), bv.raw() + bv.index(y, xo, 0), sizeof(T) * cb);
    }
  }
  return tr.emit_real(std::move(out), {a, b}, [a, b, ca, cb](Trace<T>& t, ValueId self) {
    const RealGrid<T>& g = t.grad_ref(self);
    const bool wa = t.needs_grad(a);
    const bool wb = t.needs_grad(b);
    RealGrid<T>* ga = wa ? &t.grad_buffer(a) : nullptr;
    RealGrid<T>* gb = wb ? &t.grad_buffer(b) : nullptr;
    for (int y = 0; y < g.h(); ++y) {
      for (int xo = 0; xo < g.w(); ++xo) {
        const T* gp = g.raw() + g.index(y, xo, 0);
        if (wa) {
          T* p = ga->raw() + ga->index(y, xo, 0);
          for (int ch = 0; ch < ca; ++ch) p[ch] += gp[ch];
        }
        if (wb) {
          T* p = gb->raw() + gb->index(y, xo, 0);
          for (int ch = 0; ch < cb; ++ch) p[ch] += gp[ca + ch];
        }
      }
    }
  });
}

// Uniform k x k mean filter, valid padding; one window mean per channel.
template <class T>
ValueId box_filter(Trace<T>& tr, ValueId x, int window) {
  const RealGrid<T>& xv = tr.value(x);
  require(window >= 1 && window <= xv.h() && window <= xv.w(),
          "box_filter: window must fit inside the grid");
  const int oh = xv.h() - window + 1;
  const int ow = xv.w() - window + 1;
  const int c = xv.c();
  const T inv = T(1) / (static_cast<T>(window) * static_cast<T>(window));
  RealGrid<T> out(oh, ow, c);
  for (int y = 0; y < oh; ++y) {
    for (int xo = 0; xo < ow; ++xo) {
      T* o = out.raw() + out.index(y, xo, 0);
      for (int ch = 0; ch < c; ++ch) o[ch] = T(0);
      for (int a = 0; a < window; ++a) {
        for (int b = 0; b < window; ++b) {
          const T* p = xv.raw() + xv.index(y + a, xo + b, 0);
          for (int ch = 0; ch < c; ++ch) o[ch] += p[ch];
        }
      }
      for (int ch = 0; ch < c; ++ch) o[ch] *= inv;
    }
  }
  return tr.emit_real(std::move(out), {x}, [x, window, inv](Trace<T>& t, ValueId self) {
    const RealGrid<T>& g = t.grad_ref(self);
    RealGrid<T>& gx = t.grad_buffer(x);
    const int c = gx.c();
    for (int y = 0; y < g.h(); ++y) {
      for (int xo = 0; xo < g.w(); ++xo) {
        const T* gp = g.raw() + g.index(y, xo, 0);
        for (int a = 0; a < window; ++a) {
          for (int b = 0; b < window; ++b) {
            T* p = gx.raw() + gx.index(y + a, xo + b, 0);
            for (int ch = 0; ch < c; ++ch) p[ch] += gp[ch] * inv;
          }
        }
      }
    }
  });
}

// Channelwise softmax at every pixel.
template <class T>
ValueId softmax_channels(Trace<T>& tr, ValueId x) {
  const RealGrid<T>& xv = tr.value(x);
  const int c = xv.c();
  require(c >= 1, "softmax_channels: needs at least one channel");
  RealGrid<T> out(xv.shape());
  for (int y = 0; y < xv.h(); ++y) {
    for (int xo = 0; xo < xv.w(); ++xo) {
      const T* p = xv.raw() + xv.index(y, xo, 0);
      T* o = out.raw() + out.index(y, xo, 0);
      T mx = p[0];
      for (int ch = 1; ch < c; ++ch) mx = std::max(mx, p[ch]);
      T denom = T(0);
      for (int ch = 0; ch < c; ++ch) {
        o[ch] = std::exp(p[ch] - mx);
        denom += o[ch];
      }
      for (int ch = 0; ch < c; ++ch) o[ch] /= denom;
    }
  }
  return tr.emit_real(std::move(out), {x}, [x, c](Trace<T>& t, ValueId self) {
    const RealGrid<T>& g = t.grad_ref(self);
    const RealGrid<T>& y = t.value(self);
    RealGrid<T>& gx = t.grad_buffer(x);
    for (int yy = 0; yy < g.h(); ++yy) {
      for (int xo = 0; xo < g.w(); ++xo) {
        const T* gp = g.raw() + g.index(yy, xo, 0);
        const T* yp = y.raw() + y.index(yy, xo, 0);
        T* xp = gx.raw() + gx.index(yy, xo, 0);
        T dot = T(0);
        for (int ch = 0; ch < c; ++ch) dot += gp[ch] * yp[ch];
        for (int ch = 0; ch < c; ++ch) xp[ch] += yp[ch] * (gp[ch] - dot);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Spectral ops
// ---------------------------------------------------------------------------

// Normalized forward 2D FFT of a real grid. The pullback of the 1/(H*W)
// forward transform is the real part of the unnormalized inverse transform,
// scaled by the same 1/(H*W).
template <class T>
ValueId fft2_op(Trace<T>& tr, ValueId x) {
  const RealGrid<T>& xv = tr.value(x);
  ComplexGrid<T> out = fft2(xv);
  const T inv = T(1) / (static_cast<T>(xv.h()) * static_cast<T>(xv.w()));
  return tr.emit_complex(std::move(out), {x}, [x, inv](Trace<T>& t, ValueId self) {
    const ComplexGrid<T>& g = t.cgrad_ref(self);
    ComplexGrid<T> back = ifft2(g);
    RealGrid<T>& gx = t.grad_buffer(x);
    for (std::int64_t i = 0; i < back.size(); ++i) gx[i] += back[i].real() * inv;
  });
}

// Unnormalized inverse 2D FFT; together with fft2_op the round trip is exact.
// Its pullback is the unnormalized forward transform.
template <class T>
ValueId ifft2_op(Trace<T>& tr, ValueId f) {
  ComplexGrid<T> out = ifft2(tr.cvalue(f));
  return tr.emit_complex(std::move(out), {f}, [f](Trace<T>& t, ValueId self) {
    ComplexGrid<T> back = dft2_unnormalized(t.cgrad_ref(self));
    t.cgrad_buffer(f).real_view() += back.real_view();
  });
}

// Sum of |re| + |im| over a complex grid, as a real scalar; the L1 norm of
// the interleaved component view. Subgradient 0 at exact zeros.
template <class T>
ValueId l1_complex(Trace<T>& tr, ValueId z) {
  const ComplexGrid<T>& zv = tr.cvalue(z);
  T total = T(0);
  for (std::int64_t i = 0; i < zv.size(); ++i) {
    total += std::abs(zv[i].real()) + std::abs(zv[i].imag());
  }
  RealGrid<T> out = RealGrid<T>::scalar(total);
  return tr.emit_real(std::move(out), {z}, [z](Trace<T>& t, ValueId self) {
    const T g = t.grad_ref(self)[0];
    const ComplexGrid<T>& zv2 = t.cvalue(z);
    ComplexGrid<T>& gz = t.cgrad_buffer(z);
    auto sgn = [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); };
    for (std::int64_t i = 0; i < zv2.size(); ++i) {
      gz[i] += std::complex<T>(g * sgn(zv2[i].real()), g * sgn(zv2[i].imag()));
    }
  });
}

// Elementwise complex magnitude with subgradient 0 at the origin.
template <class T>
ValueId magnitude_op(Trace<T>& tr, ValueId z) {
  const ComplexGrid<T>& zv = tr.cvalue(z);
  RealGrid<T> out(zv.shape());
  for (std::int64_t i = 0; i < zv.size(); ++i) out[i] = std::abs(zv[i]);
  return tr.emit_real(std::move(out), {z}, [z](Trace<T>& t, ValueId self) {
    const RealGrid<T>& g = t.grad_ref(self);
    const RealGrid<T>& m = t.value(self);
    const ComplexGrid<T>& zv2 = t.cvalue(z);
    ComplexGrid<T>& gz = t.cgrad_buffer(z);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      if (m[i] > T(0)) gz[i] += zv2[i] * (g[i] / m[i]);
    }
  });
}

}  // namespace orthoseis
