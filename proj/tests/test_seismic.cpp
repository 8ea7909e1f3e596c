#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "orthoseis/fft.hpp"
#include "orthoseis/seismic.hpp"

using namespace orthoseis;

TEST_CASE("ricker wavelet peaks at one, is symmetric, and changes sign at the lobe") {
  const double f = 30.0, dt = 0.001;
  Wavelet<double> w = ricker_wavelet<double>(f, dt, 81);
  CHECK(w.length() == 81);
  CHECK(w.samples[w.center()] == doctest::Approx(1.0).epsilon(1e-15));
  for (int i = 0; i < w.length(); ++i) {
    CHECK(w.samples[i] == doctest::Approx(w.samples[w.length() - 1 - i]).epsilon(1e-15));
  }
  // The zero crossing sits at t0 = 1/(pi*f*sqrt(2)); samples bracketing it
  // must straddle zero, with the main lobe positive and side lobes negative.
  const double t0 = 1.0 / (3.14159265358979323846 * f * std::sqrt(2.0));
  const int before = w.center() + static_cast<int>(std::floor(t0 / dt));
  CHECK(w.samples[before] > 0.0);
  CHECK(w.samples[before + 1] < 0.0);
  CHECK(w.samples[w.center() + 10] < 0.0);
  CHECK_THROWS(ricker_wavelet<double>(f, dt, 80));
  CHECK_THROWS(ricker_wavelet<double>(-1.0, dt, 81));
}

TEST_CASE("ricker spectrum peaks at the nominal frequency") {
  const double f = 30.0, dt = 0.001;
  Wavelet<double> w = ricker_wavelet<double>(f, dt, 81);
  const int n = 1024;
  RealGrid<double> padded(n, 1, 1);
  for (int i = 0; i < w.length(); ++i) padded.at(i, 0, 0) = w.samples[i];
  ComplexGrid<double> spectrum = fft2(padded);
  int best = 1;
  for (int k = 1; k < n / 2; ++k) {
    if (std::abs(spectrum.at(k, 0, 0)) > std::abs(spectrum.at(best, 0, 0))) best = k;
  }
  const double peak_hz = static_cast<double>(best) / (n * dt);
  CHECK(std::abs(peak_hz - f) < 1.0 / (n * dt) + 1e-9);
}

TEST_CASE("impedance from velocity and density is the elementwise product") {
  RealGrid<double> v = RealGrid<double>::constant(4, 3, 1, 2000.0);
  RealGrid<double> rho = RealGrid<double>::constant(4, 3, 1, 2.3);
  ImpedanceSection<double> ip = impedance_from_v_rho(v, rho, 0.002);
  CHECK(ip.dt == 0.002);
  for (std::int64_t i = 0; i < ip.data.size(); ++i) {
    CHECK(ip.data[i] == doctest::Approx(4600.0).epsilon(1e-14));
  }
  RealGrid<double> bad = RealGrid<double>::constant(4, 3, 1, -1.0);
  CHECK_THROWS(impedance_from_v_rho(v, bad, 0.002));
}

TEST_CASE("reflectivity matches half log-impedance differences") {
  RealGrid<double> ip_grid(4, 1, 1);
  ip_grid.at(0, 0, 0) = 3000.0;
  ip_grid.at(1, 0, 0) = 4500.0;
  ip_grid.at(2, 0, 0) = 4500.0;
  ip_grid.at(3, 0, 0) = 2800.0;
  ImpedanceSection<double> ip;
  ip.data = ip_grid;
  ReflectivitySection<double> r = reflectivity_from_impedance(ip);
  CHECK(r.data.at(0, 0, 0) == doctest::Approx(0.5 * std::log(4500.0 / 3000.0)).epsilon(1e-14));
  CHECK(r.data.at(1, 0, 0) == 0.0);
  CHECK(r.data.at(2, 0, 0) == doctest::Approx(0.5 * std::log(2800.0 / 4500.0)).epsilon(1e-14));
  CHECK(r.data.at(3, 0, 0) == 0.0);
}

TEST_CASE("impedance reconstruction inverts the differencing exactly") {
  RngState rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    RealGrid<double> g(64, 8, 1);
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] = std::exp(rng.uniform(7.8, 9.2));
    ImpedanceSection<double> ip;
    ip.data = g;
    ReflectivitySection<double> r = reflectivity_from_impedance(ip);
    // Reconstruction takes one anchor per call, so invert column by column.
    for (int x = 0; x < 8; ++x) {
      ReflectivitySection<double> col;
      col.dt = r.dt;
      col.data = RealGrid<double>(64, 1, 1);
      for (int t = 0; t < 64; ++t) col.data.at(t, 0, 0) = r.data.at(t, x, 0);
      ImpedanceSection<double> back = impedance_from_reflectivity(col, g.at(0, x, 0));
      for (int t = 0; t < 64; ++t) {
        CHECK(back.data.at(t, 0, 0) == doctest::Approx(g.at(t, x, 0)).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("a reflectivity spike synthesizes into a centered wavelet copy") {
  Wavelet<double> w = ricker_wavelet<double>(30.0, 0.001, 41);
  const int n = 128;
  std::vector<double> r(n, 0.0);
  const int t0 = 50;
  const double amp = 0.35;
  r[t0] = amp;
  std::vector<double> s = synthesize_trace(r, w);
  for (int t = 0; t < n; ++t) {
    const int widx = w.center() + t - t0;
    const double expected = (widx >= 0 && widx < w.length()) ? amp * w.samples[widx] : 0.0;
    CHECK(s[t] == doctest::Approx(expected).epsilon(1e-14));
  }
  CHECK(s[t0] == doctest::Approx(amp).epsilon(1e-14));
}

TEST_CASE("synthesis is linear and truncates cleanly at the edges") {
  Wavelet<double> w = ricker_wavelet<double>(30.0, 0.001, 41);
  const int n = 96;
  RngState rng(11);
  std::vector<double> r1(n), r2(n), combo(n);
  for (int t = 0; t < n; ++t) {
    r1[t] = rng.normal() * 0.1;
    r2[t] = rng.normal() * 0.1;
    combo[t] = 2.0 * r1[t] - 0.5 * r2[t];
  }
  std::vector<double> s1 = synthesize_trace(r1, w);
  std::vector<double> s2 = synthesize_trace(r2, w);
  std::vector<double> sc = synthesize_trace(combo, w);
  for (int t = 0; t < n; ++t) {
    CHECK(sc[t] == doctest::Approx(2.0 * s1[t] - 0.5 * s2[t]).epsilon(1e-10));
  }
  // A spike at the first sample keeps only the causal half of the wavelet.
  std::vector<double> edge(n, 0.0);
  edge[0] = 1.0;
  std::vector<double> se = synthesize_trace(edge, w);
  for (int t = 0; t <= w.center(); ++t) {
    CHECK(se[t] == doctest::Approx(w.samples[w.center() + t]).epsilon(1e-14));
  }
}

TEST_CASE("noise injection hits the requested snr") {
  RngState rng(21);
  DatasetSpec spec;
  GeneratedSection<double> sec = generate_section<double>(spec, rng);
  for (double snr : {0.0, 10.0, 20.0, 30.0}) {
    CAPTURE(snr);
    RngState noise_rng(1000 + static_cast<std::uint64_t>(snr));
    RealGrid<double> noisy = add_noise_snr(sec.trace.data, snr, noise_rng);
    CHECK(std::abs(measured_snr_db(sec.trace.data, noisy) - snr) < 0.3);
  }
  CHECK_THROWS(measured_snr_db(sec.trace.data, sec.trace.data));
  RealGrid<double> silent(16, 16, 1);
  CHECK_THROWS(add_noise_snr(silent, 10.0, rng));
}

TEST_CASE("generated sections satisfy the layered-earth properties") {
  DatasetSpec spec;
  validate(spec);
  bool saw_pinch_out = false;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    CAPTURE(seed);
    RngState rng(seed);
    GeneratedSection<double> sec = generate_section<double>(spec, rng);

    CHECK(sec.impedance.data.shape() == GridShape{128, 128, 1});
    CHECK(sec.impedance.data.all_finite());
    CHECK((sec.impedance.data.data() >= spec.impedance_min * 0.999).all());
    CHECK((sec.impedance.data.data() <= spec.impedance_max * 1.001).all());

    // Sparsity: interfaces are rare rows, so well under 15% of samples carry
    // a reflection.
    std::int64_t nonzero = 0;
    for (std::int64_t i = 0; i < sec.reflectivity.data.size(); ++i) {
      if (sec.reflectivity.data[i] != 0.0) ++nonzero;
    }
    CHECK(nonzero > 0);
    CHECK(static_cast<double>(nonzero) / static_cast<double>(sec.reflectivity.data.size()) < 0.15);

    // Adjacent-layer contrasts are kept above the floor by construction;
    // clipped (pinched-out) interfaces may fall below it, so check the bulk.
    std::int64_t strong = 0;
    for (std::int64_t i = 0; i < sec.reflectivity.data.size(); ++i) {
      const double a = std::abs(sec.reflectivity.data[i]);
      if (a >= spec.min_reflection * 0.999) ++strong;
    }
    CHECK(static_cast<double>(strong) >= 0.5 * static_cast<double>(nonzero));

    // The trace is the exact forward model of the stored reflectivity.
    Wavelet<double> w = ricker_wavelet<double>(spec.wavelet_peak_hz, spec.dt_s, spec.wavelet_length);
    TraceSection<double> resynth = synthesize_section(sec.reflectivity, w);
    CHECK(max_abs_difference(resynth.data, sec.trace.data) < 1e-12);

    // Dips make the interface count vary across traces in at least one draw.
    int min_count = 1 << 30, max_count = 0;
    for (int x = 0; x < 128; ++x) {
      int count = 0;
      for (int t = 0; t < 128; ++t) {
        if (sec.reflectivity.data.at(t, x, 0) != 0.0) ++count;
      }
      min_count = std::min(min_count, count);
      max_count = std::max(max_count, count);
    }
    if (min_count < max_count) saw_pinch_out = true;
  }
  CHECK(saw_pinch_out);
}

TEST_CASE("generation is deterministic in the seed") {
  DatasetSpec spec;
  RngState a(99), b(99), c(100);
  GeneratedSection<double> sa = generate_section<double>(spec, a, 10.0);
  GeneratedSection<double> sb = generate_section<double>(spec, b, 10.0);
  GeneratedSection<double> sc = generate_section<double>(spec, c, 10.0);
  CHECK(max_abs_difference(sa.trace.data, sb.trace.data) == 0.0);
  CHECK(max_abs_difference(sa.impedance.data, sb.impedance.data) == 0.0);
  CHECK(max_abs_difference(sa.trace.data, sc.trace.data) > 0.0);
}

TEST_CASE("generated noisy sections carry approximately the requested snr") {
  DatasetSpec spec;
  RngState clean_rng(123), noisy_rng(123);
  GeneratedSection<double> clean = generate_section<double>(spec, clean_rng);
  GeneratedSection<double> noisy = generate_section<double>(spec, noisy_rng, 10.0);
  CHECK(max_abs_difference(clean.reflectivity.data, noisy.reflectivity.data) == 0.0);
  CHECK(std::abs(measured_snr_db(clean.trace.data, noisy.trace.data) - 10.0) < 0.3);
}

TEST_CASE("dataset spec validation rejects nonsense") {
  DatasetSpec bad;
  bad.layer_count_min = 1;
  CHECK_THROWS(validate(bad));
  DatasetSpec bad2;
  bad2.impedance_max = bad2.impedance_min;
  CHECK_THROWS(validate(bad2));
  DatasetSpec bad3;
  bad3.wavelet_length = 80;
  CHECK_THROWS(validate(bad3));
}
