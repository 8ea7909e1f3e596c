#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "orthoseis/losses.hpp"
#include "orthoseis/rng.hpp"

using namespace orthoseis;

namespace {

RealGrid<double> random_section(int h, int w, RngState& rng, double spread = 1.0) {
  RealGrid<double> g(h, w, 1);
  for (std::int64_t i = 0; i < g.size(); ++i) g[i] = rng.normal() * spread;
  return g;
}

double trace_ssim(const RealGrid<double>& a, const RealGrid<double>& b, const SsimConfig& cfg) {
  Trace<double> tr;
  return tr.value(ssim(tr, tr.constant(a), tr.constant(b), cfg))[0];
}

}  // namespace

TEST_CASE("ssim of a signal with itself is one") {
  RngState rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    RealGrid<double> a = random_section(16, 16, rng, 2.0);
    SsimConfig cfg;
    cfg.window = 5;
    cfg.data_range = 4.0;
    CHECK(trace_ssim(a, a, cfg) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("ssim of two distinct constants matches the closed form") {
  // With a = 0, b = L and unit data range the means contribute C1 in the
  // numerator against 1 + C1 in the denominator while the variance factor
  // cancels, leaving SSIM = C1 / (1 + C1).
  RealGrid<double> a = RealGrid<double>::constant(8, 8, 1, 0.0);
  RealGrid<double> b = RealGrid<double>::constant(8, 8, 1, 1.0);
  SsimConfig cfg;
  cfg.window = 3;
  cfg.data_range = 1.0;
  const double c1 = cfg.c1();
  const double expected = c1 / (1.0 + c1);
  CHECK(std::abs(trace_ssim(a, b, cfg) - expected) < 1e-8);
  CHECK(expected == doctest::Approx(9.99900009999e-5).epsilon(1e-6));
}

TEST_CASE("ssim stays within [-1, 1] and penalizes noise") {
  RngState rng(7);
  SsimConfig cfg;
  cfg.window = 7;
  cfg.data_range = 4.0;
  for (int trial = 0; trial < 8; ++trial) {
    RealGrid<double> a = random_section(24, 24, rng);
    RealGrid<double> b = random_section(24, 24, rng);
    const double v = trace_ssim(a, b, cfg);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);

    RealGrid<double> noisy = a;
    for (std::int64_t i = 0; i < noisy.size(); ++i) noisy[i] += rng.normal() * 0.1;
    const double close = trace_ssim(a, noisy, cfg);
    CHECK(close > v);
    CHECK(close < 1.0);
  }
}

TEST_CASE("loss_ssim is one minus ssim") {
  RngState rng(17);
  RealGrid<double> a = random_section(16, 16, rng);
  RealGrid<double> b = random_section(16, 16, rng);
  SsimConfig cfg;
  cfg.window = 5;
  cfg.data_range = 4.0;
  Trace<double> tr;
  ValueId ia = tr.constant(a);
  ValueId ib = tr.constant(b);
  const double s = tr.value(ssim(tr, ia, ib, cfg))[0];
  const double l = tr.value(loss_ssim(tr, ia, ib, cfg))[0];
  CHECK(l == doctest::Approx(1.0 - s).epsilon(1e-12));
}

TEST_CASE("mae and mse losses match their plain metric helpers") {
  RngState rng(23);
  RealGrid<double> a = random_section(10, 12, rng);
  RealGrid<double> b = random_section(10, 12, rng);
  Trace<double> tr;
  ValueId ia = tr.constant(a);
  ValueId ib = tr.constant(b);
  CHECK(tr.value(loss_mae(tr, ia, ib))[0] == doctest::Approx(metric_mae(a, b)).epsilon(1e-12));
  CHECK(tr.value(loss_mse(tr, ia, ib))[0] == doctest::Approx(metric_mse(a, b)).epsilon(1e-12));
}

TEST_CASE("plain metrics agree with hand computation") {
  RealGrid<double> a(1, 1, 4);
  RealGrid<double> b(1, 1, 4);
  a[0] = 1.0;
  a[1] = -2.0;
  a[2] = 0.5;
  a[3] = 3.0;
  b[0] = 0.0;
  b[1] = -1.0;
  b[2] = 0.5;
  b[3] = 1.0;
  CHECK(metric_mae(a, b) == doctest::Approx((1.0 + 1.0 + 0.0 + 2.0) / 4.0).epsilon(1e-14));
  CHECK(metric_mse(a, b) == doctest::Approx((1.0 + 1.0 + 0.0 + 4.0) / 4.0).epsilon(1e-14));
}

TEST_CASE("metric_ssim agrees with the traced ssim") {
  RngState rng(29);
  RealGrid<double> a = random_section(16, 16, rng);
  RealGrid<double> b = random_section(16, 16, rng);
  SsimConfig cfg;
  cfg.window = 5;
  cfg.data_range = 4.0;
  CHECK(metric_ssim(a, b, cfg) == doctest::Approx(trace_ssim(a, b, cfg)).epsilon(1e-12));
}

TEST_CASE("r2 score behaviour") {
  RngState rng(31);
  RealGrid<double> target = random_section(8, 8, rng);
  CHECK(r2_score(target, target) == doctest::Approx(1.0).epsilon(1e-14));

  const double mean = target.data().mean();
  RealGrid<double> mean_pred = RealGrid<double>::constant(8, 8, 1, mean);
  CHECK(r2_score(mean_pred, target) == doctest::Approx(0.0).epsilon(1e-10));

  RealGrid<double> awful(8, 8, 1);
  awful.data() = -5.0 * target.data();
  CHECK(r2_score(awful, target) < 0.0);

  RealGrid<double> flat = RealGrid<double>::constant(8, 8, 1, 1.0);
  CHECK_THROWS(r2_score(target, flat));
}

TEST_CASE("mixed loss combines weighted terms and validates weights") {
  RngState rng(37);
  RealGrid<double> a = random_section(16, 16, rng);
  RealGrid<double> b = random_section(16, 16, rng);
  SsimConfig cfg;
  cfg.window = 5;
  cfg.data_range = 4.0;

  Trace<double> tr;
  ValueId ia = tr.constant(a);
  ValueId ib = tr.constant(b);
  LossWeights w;
  w.mse = 0.5;
  w.ssim = 0.3;
  w.mae = 0.2;
  const double combined = tr.value(mixed_loss(tr, ia, ib, w, cfg))[0];
  const double expected = 0.5 * metric_mse(a, b) + 0.3 * (1.0 - metric_ssim(a, b, cfg)) +
                          0.2 * metric_mae(a, b);
  CHECK(combined == doctest::Approx(expected).epsilon(1e-12));

  LossWeights zero;
  zero.mse = 0.0;
  zero.ssim = 0.0;
  zero.mae = 0.0;
  CHECK_THROWS(mixed_loss(tr, ia, ib, zero, cfg));
  LossWeights negative;
  negative.mse = -1.0;
  CHECK_THROWS(mixed_loss(tr, ia, ib, negative, cfg));
}

TEST_CASE("mixed loss skips zero-weight terms") {
  RngState rng(41);
  RealGrid<double> a = random_section(16, 16, rng);
  RealGrid<double> b = random_section(16, 16, rng);
  SsimConfig cfg;
  cfg.window = 5;
  cfg.data_range = 4.0;
  Trace<double> tr;
  ValueId ia = tr.constant(a);
  ValueId ib = tr.constant(b);
  LossWeights w;
  w.mse = 1.0;
  w.ssim = 0.0;
  w.mae = 0.0;
  CHECK(tr.value(mixed_loss(tr, ia, ib, w, cfg))[0] ==
        doctest::Approx(metric_mse(a, b)).epsilon(1e-12));
}

TEST_CASE("ssim rejects invalid configuration") {
  RealGrid<double> a = RealGrid<double>::constant(8, 8, 1, 0.5);
  Trace<double> tr;
  ValueId ia = tr.constant(a);
  SsimConfig bad;
  bad.data_range = 0.0;
  CHECK_THROWS(ssim(tr, ia, ia, bad));
  SsimConfig too_big;
  too_big.window = 9;
  RealGrid<double> tiny = RealGrid<double>::constant(4, 4, 1, 0.5);
  ValueId it = tr.constant(tiny);
  CHECK_THROWS(ssim(tr, it, it, too_big));
}
