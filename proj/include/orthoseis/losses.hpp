#pragma once

#include <cmath>

#include "orthoseis/autodiff.hpp"
#include "orthoseis/ops.hpp"

namespace orthoseis {

// Structural-similarity settings. data_range is the dynamic range L of the
// reference signal (max - min); the stabilizers are C1 = (k1*L)^2 and
// C2 = (k2*L)^2.
struct SsimConfig {
  int window = 11;
  double data_range = 1.0;
  double k1 = 0.01;
  double k2 = 0.03;

  double c1() const { return (k1 * data_range) * (k1 * data_range); }
  double c2() const { return (k2 * data_range) * (k2 * data_range); }
};

template <class T>
ValueId loss_mae(Trace<T>& tr, ValueId pred, ValueId target) {
  return mean_all(tr, abs_op(tr, sub(tr, pred, target)));
}

template <class T>
ValueId loss_mse(Trace<T>& tr, ValueId pred, ValueId target) {
  ValueId d = sub(tr, pred, target);
  return mean_all(tr, mul(tr, d, d));
}

// Mean SSIM over all valid window positions. Statistics use uniform window
// means; variances and the covariance follow from windowed second moments.
template <class T>
ValueId ssim(Trace<T>& tr, ValueId a, ValueId b, const SsimConfig& cfg) {
  require_same_shape(tr.value(a), tr.value(b), "ssim");
  require(cfg.data_range > 0.0, "ssim: data_range must be positive");
  const T c1 = static_cast<T>(cfg.c1());
  const T c2 = static_cast<T>(cfg.c2());
  ValueId mu_a = box_filter(tr, a, cfg.window);
  ValueId mu_b = box_filter(tr, b, cfg.window);
  ValueId mu_aa = mul(tr, mu_a, mu_a);
  ValueId mu_bb = mul(tr, mu_b, mu_b);
  ValueId mu_ab = mul(tr, mu_a, mu_b);
  ValueId var_a = sub(tr, box_filter(tr, mul(tr, a, a), cfg.window), mu_aa);
  ValueId var_b = sub(tr, box_filter(tr, mul(tr, b, b), cfg.window), mu_bb);
  ValueId cov = sub(tr, box_filter(tr, mul(tr, a, b), cfg.window), mu_ab);
  ValueId num = mul(tr, add_scalar(tr, scale(tr, mu_ab, T(2)), c1),
                    add_scalar(tr, scale(tr, cov, T(2)), c2));
  ValueId den = mul(tr, add_scalar(tr, add(tr, mu_aa, mu_bb), c1),
                    add_scalar(tr, add(tr, var_a, var_b), c2));
  return mean_all(tr, div(tr, num, den));
}

template <class T>
ValueId loss_ssim(Trace<T>& tr, ValueId pred, ValueId target, const SsimConfig& cfg) {
  return add_scalar(tr, scale(tr, ssim(tr, pred, target, cfg), T(-1)), T(1));
}

struct LossWeights {
  double mse = 0.5;
  double ssim = 0.5;
  double mae = 0.0;
};

// Weighted combination w_mse*MSE + w_ssim*(1 - SSIM) + w_mae*MAE; terms with
// zero weight are skipped entirely.
template <class T>
ValueId mixed_loss(Trace<T>& tr, ValueId pred, ValueId target, const LossWeights& w,
                   const SsimConfig& ssim_cfg) {
  require(w.mse >= 0.0 && w.ssim >= 0.0 && w.mae >= 0.0, "mixed_loss: weights must be non-negative");
  require(w.mse + w.ssim + w.mae > 0.0, "mixed_loss: at least one weight must be positive");
  ValueId total{};
  auto accumulate = [&tr, &total](ValueId term, double weight) {
    ValueId scaled = scale(tr, term, static_cast<T>(weight));
    total = total.valid() ? add(tr, total, scaled) : scaled;
  };
  if (w.mse > 0.0) accumulate(loss_mse(tr, pred, target), w.mse);
  if (w.ssim > 0.0) accumulate(loss_ssim(tr, pred, target, ssim_cfg), w.ssim);
  if (w.mae > 0.0) accumulate(loss_mae(tr, pred, target), w.mae);
  return total;
}

// ---------------------------------------------------------------------------
// Plain (non-differentiated) metric helpers
// ---------------------------------------------------------------------------

template <class T>
double metric_mae(const RealGrid<T>& a, const RealGrid<T>& b) {
  require_same_shape(a, b, "metric_mae");
  return (a.data() - b.data()).abs().template cast<double>().mean();
}

template <class T>
double metric_mse(const RealGrid<T>& a, const RealGrid<T>& b) {
  require_same_shape(a, b, "metric_mse");
  return (a.data() - b.data()).square().template cast<double>().mean();
}

template <class T>
double metric_ssim(const RealGrid<T>& a, const RealGrid<T>& b, const SsimConfig& cfg) {
  Trace<T> tr;
  ValueId ia = tr.constant(a);
  ValueId ib = tr.constant(b);
  return static_cast<double>(tr.value(ssim(tr, ia, ib, cfg))[0]);
}

// Coefficient of determination of pred against target. Rejects targets with
// zero variance, where the score is undefined.
template <class T>
double r2_score(const RealGrid<T>& pred, const RealGrid<T>& target) {
  require_same_shape(pred, target, "r2_score");
  require(target.size() > 0, "r2_score: empty grids");
  const double mean = target.data().template cast<double>().mean();
  const double ss_tot = (target.data().template cast<double>() - mean).square().sum();
  require(ss_tot > 0.0, "r2_score: target variance is zero");
  const double ss_res =
      (pred.data().template cast<double>() - target.data().template cast<double>()).square().sum();
  return 1.0 - ss_res / ss_tot;
}

}  // namespace orthoseis
