#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "orthoseis/autodiff.hpp"
#include "orthoseis/ops.hpp"

namespace orthoseis {

// Frequency-domain truncation keeps the lowest-|frequency| modes on each
// axis: with k retained rows out of n, the row indices are
// [0, k/2) u [n - k/2, n), i.e. the positive and negative low frequencies.
// k is always even and at most n; retaining k == n keeps every mode, making
// the truncation a no-op.
inline int retained_mode_count(int n, double mode_fraction) {
  require(n >= 2, "retained_mode_count: axis length must be at least 2");
  require(mode_fraction > 0.0 && mode_fraction <= 1.0,
          "retained_mode_count: mode_fraction must lie in (0, 1]");
  const int half = n / 2;
  int side = static_cast<int>(std::lround(mode_fraction * half));
  side = std::clamp(side, 1, half);
  return 2 * side;
}

// Maps a packed retained-mode index a in [0, k) to its frequency index.
inline int mode_index(int n, int k, int a) {
  const int side = k / 2;
  return a < side ? a : n - k + a;
}

// Per-mode channel mixing: for each retained frequency (u, v) the cin input
// spectra combine through a learned complex matrix into cout output spectra,
//   out[u, v, i] = sum_j R[a, b, j, i] * f[u, v, j];
// all other frequencies are zero. R is a complex grid of shape
// (kh, kw, cin*cout) with flat channel index j*cout + i.
template <class T>
ValueId spectral_mix(Trace<T>& tr, ValueId f, ValueId r, int cout) {
  const ComplexGrid<T>& fv = tr.cvalue(f);
  const ComplexGrid<T>& rv = tr.cvalue(r);
  const int cin = fv.c();
  require(cin > 0 && rv.c() == cin * cout,
          "spectral_mix: weight channels " + std::to_string(rv.c()) + " do not match cin*cout");
  const int kh = rv.h();
  const int kw = rv.w();
  require(kh % 2 == 0 && kw % 2 == 0, "spectral_mix: retained mode counts must be even");
  require(kh <= fv.h() && kw <= fv.w(),
          "spectral_mix: retained modes exceed spectrum size " + fv.shape().str());

  ComplexGrid<T> out(fv.h(), fv.w(), cout);
  for (int a = 0; a < kh; ++a) {
    const int u = mode_index(fv.h(), kh, a);
    for (int b = 0; b < kw; ++b) {
      const int v = mode_index(fv.w(), kw, b);
      const std::complex<T>* fp = fv.raw() + fv.index(u, v, 0);
      const std::complex<T>* rp = rv.raw() + rv.index(a, b, 0);
      std::complex<T>* op = out.raw() + out.index(u, v, 0);
      for (int j = 0; j < cin; ++j) {
        const std::complex<T> fj = fp[j];
        const std::complex<T>* rrow = rp + static_cast<std::int64_t>(j) * cout;
        for (int i = 0; i < cout; ++i) op[i] += rrow[i] * fj;
      }
    }
  }

  auto bwd = [f, r, cin, cout, kh, kw](Trace<T>& t, ValueId self) {
    const ComplexGrid<T>& g = t.cgrad_ref(self);
    const ComplexGrid<T>& fv2 = t.cvalue(f);
    const ComplexGrid<T>& rv2 = t.cvalue(r);
    const bool wf = t.needs_grad(f);
    const bool wr = t.needs_grad(r);
    ComplexGrid<T>* gf = wf ? &t.cgrad_buffer(f) : nullptr;
    ComplexGrid<T>* gr = wr ? &t.cgrad_buffer(r) : nullptr;
    for (int a = 0; a < kh; ++a) {
      const int u = mode_index(fv2.h(), kh, a);
      for (int b = 0; b < kw; ++b) {
        const int v = mode_index(fv2.w(), kw, b);
        const std::complex<T>* gp = g.raw() + g.index(u, v, 0);
        const std::complex<T>* fp = fv2.raw() + fv2.index(u, v, 0);
        const std::complex<T>* rp = rv2.raw() + rv2.index(a, b, 0);
        for (int j = 0; j < cin; ++j) {
          const std::complex<T>* rrow = rp + static_cast<std::int64_t>(j) * cout;
          if (wf) {
            std::complex<T> acc(T(0), T(0));
            for (int i = 0; i < cout; ++i) acc += std::conj(rrow[i]) * gp[i];
            gf->raw()[gf->index(u, v, j)] += acc;
          }
          if (wr) {
            const std::complex<T> fc = std::conj(fp[j]);
            std::complex<T>* grow =
                gr->raw() + gr->index(a, b, 0) + static_cast<std::int64_t>(j) * cout;
            for (int i = 0; i < cout; ++i) grow[i] += fc * gp[i];
          }
        }
      }
    }
  };
  return tr.emit_complex(std::move(out), {f, r}, std::move(bwd));
}

// Full spectral block: transform to frequency space, mix the retained modes
// across channels, transform back, and take the elementwise magnitude.
template <class T>
ValueId spectral_layer(Trace<T>& tr, ValueId x, ValueId r, int cout) {
  ValueId f = fft2_op(tr, x);
  ValueId mixed = spectral_mix(tr, f, r, cout);
  ValueId back = ifft2_op(tr, mixed);
  return magnitude_op(tr, back);
}

}  // namespace orthoseis
