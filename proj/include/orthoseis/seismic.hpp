#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "orthoseis/grid.hpp"
#include "orthoseis/rng.hpp"

namespace orthoseis {

// Zero-phase source signature sampled on the trace time axis.
template <class T>
struct Wavelet {
  std::vector<T> samples;
  double dt = 0.001;
  double peak_frequency = 30.0;

  int length() const { return static_cast<int>(samples.size()); }
  int center() const { return length() / 2; }
};

// Sections are (time_samples x traces) single-channel grids; rows are time.
template <class T>
struct ImpedanceSection {
  RealGrid<T> data;
  double dt = 0.001;
};

template <class T>
struct ReflectivitySection {
  RealGrid<T> data;
  double dt = 0.001;
};

template <class T>
struct TraceSection {
  RealGrid<T> data;
  double dt = 0.001;
};

// Ricker wavelet w(t) = (1 - 2*pi^2*f^2*t^2) * exp(-pi^2*f^2*t^2), sampled
// symmetrically about its peak; odd length keeps the peak exactly 1 on the
// center sample.
template <class T>
Wavelet<T> ricker_wavelet(double peak_frequency_hz, double dt_s, int length) {
  require(peak_frequency_hz > 0.0, "ricker_wavelet: peak frequency must be positive");
  require(dt_s > 0.0, "ricker_wavelet: dt must be positive");
  require(length >= 1 && length % 2 == 1, "ricker_wavelet: length must be odd and positive");
  Wavelet<T> w;
  w.dt = dt_s;
  w.peak_frequency = peak_frequency_hz;
  w.samples.resize(length);
  const int center = length / 2;
  const double pi = 3.14159265358979323846264338327950288;
  for (int i = 0; i < length; ++i) {
    const double t = (i - center) * dt_s;
    const double u = pi * pi * peak_frequency_hz * peak_frequency_hz * t * t;
    w.samples[i] = static_cast<T>((1.0 - 2.0 * u) * std::exp(-u));
  }
  return w;
}

// Acoustic impedance: elementwise velocity times density.
template <class T>
ImpedanceSection<T> impedance_from_v_rho(const RealGrid<T>& velocity, const RealGrid<T>& density,
                                         double dt) {
  require_same_shape(velocity, density, "impedance_from_v_rho");
  ImpedanceSection<T> ip;
  ip.dt = dt;
  ip.data = RealGrid<T>(velocity.shape());
  ip.data.data() = velocity.data() * density.data();
  require(ip.data.size() == 0 || (ip.data.data() > T(0)).all(),
          "impedance_from_v_rho: impedance must be positive");
  return ip;
}

// Per-trace log-impedance differencing: r[t] = (ln ip[t+1] - ln ip[t]) / 2,
// with the final sample set to zero.
template <class T>
ReflectivitySection<T> reflectivity_from_impedance(const ImpedanceSection<T>& ip) {
  const RealGrid<T>& g = ip.data;
  require(g.c() == 1, "reflectivity_from_impedance: sections are single-channel");
  require(g.size() == 0 || (g.data() > T(0)).all(),
          "reflectivity_from_impedance: impedance must be positive");
  ReflectivitySection<T> r;
  r.dt = ip.dt;
  r.data = RealGrid<T>(g.shape());
  for (int x = 0; x < g.w(); ++x) {
    for (int t = 0; t + 1 < g.h(); ++t) {
      r.data.at(t, x, 0) =
          static_cast<T>(0.5 * (std::log(static_cast<double>(g.at(t + 1, x, 0))) -
                                std::log(static_cast<double>(g.at(t, x, 0)))));
    }
    if (g.h() > 0) r.data.at(g.h() - 1, x, 0) = T(0);
  }
  return r;
}

// Inverse of the differencing: ip[t] = ip0 * exp(2 * sum_{k<t} r[k]) per
// trace, anchored at the first sample.
template <class T>
ImpedanceSection<T> impedance_from_reflectivity(const ReflectivitySection<T>& r, T first_impedance) {
  require(first_impedance > T(0), "impedance_from_reflectivity: anchor impedance must be positive");
  ImpedanceSection<T> ip;
  ip.dt = r.dt;
  ip.data = RealGrid<T>(r.data.shape());
  for (int x = 0; x < r.data.w(); ++x) {
    double acc = std::log(static_cast<double>(first_impedance));
    for (int t = 0; t < r.data.h(); ++t) {
      ip.data.at(t, x, 0) = static_cast<T>(std::exp(acc));
      acc += 2.0 * static_cast<double>(r.data.at(t, x, 0));
    }
  }
  return ip;
}

// Convolution with the wavelet, cropped so a reflectivity spike at t0 yields
// the wavelet peak at t0: S[t] = sum_k r[k] * w[center + t - k].
template <class T>
std::vector<T> synthesize_trace(const std::vector<T>& reflectivity, const Wavelet<T>& w) {
  const int n = static_cast<int>(reflectivity.size());
  const int c = w.center();
  std::vector<T> out(n, T(0));
  for (int t = 0; t < n; ++t) {
    T acc = T(0);
    const int k_lo = std::max(0, t + c - (w.length() - 1));
    const int k_hi = std::min(n - 1, t + c);
    for (int k = k_lo; k <= k_hi; ++k) acc += reflectivity[k] * w.samples[c + t - k];
    out[t] = acc;
  }
  return out;
}

template <class T>
TraceSection<T> synthesize_section(const ReflectivitySection<T>& r, const Wavelet<T>& w) {
  TraceSection<T> s;
  s.dt = r.dt;
  s.data = RealGrid<T>(r.data.shape());
  std::vector<T> column(r.data.h());
  for (int x = 0; x < r.data.w(); ++x) {
    for (int t = 0; t < r.data.h(); ++t) column[t] = r.data.at(t, x, 0);
    std::vector<T> trace = synthesize_trace(column, w);
    for (int t = 0; t < r.data.h(); ++t) s.data.at(t, x, 0) = trace[t];
  }
  return s;
}

// Additive white Gaussian noise calibrated against the section's mean power:
// SNR_dB = 10*log10(P_signal / P_noise).
template <class T>
RealGrid<T> add_noise_snr(const RealGrid<T>& clean, double snr_db, RngState& rng) {
  require(clean.size() > 0, "add_noise_snr: empty section");
  const double p_signal = clean.data().square().template cast<double>().mean();
  require(p_signal > 0.0, "add_noise_snr: signal power is zero, SNR undefined");
  const double p_noise = p_signal / std::pow(10.0, snr_db / 10.0);
  const double sigma = std::sqrt(p_noise);
  RealGrid<T> out = clean;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    out[i] += static_cast<T>(rng.normal(0.0, sigma));
  }
  return out;
}

template <class T>
double measured_snr_db(const RealGrid<T>& clean, const RealGrid<T>& noisy) {
  require_same_shape(clean, noisy, "measured_snr_db");
  const double p_signal = clean.data().square().template cast<double>().mean();
  const double p_noise = (noisy.data() - clean.data()).square().template cast<double>().mean();
  require(p_noise > 0.0, "measured_snr_db: sections are identical");
  return 10.0 * std::log10(p_signal / p_noise);
}

// Controls for the layered-earth generator.
struct DatasetSpec {
  int time_samples = 128;
  int traces = 128;
  int sample_count = 16;      // sections per dataset
  int layer_count_min = 4;
  int layer_count_max = 12;
  double thin_layer_fraction = 0.2;  // probability a layer is only 1-3 samples thick
  double impedance_min = 2500.0;
  double impedance_max = 9500.0;
  double min_reflection = 0.02;  // smallest |r| at an interface
  int dip_max = 6;               // largest vertical interface shift across the section
  double wavelet_peak_hz = 30.0;
  double dt_s = 0.001;
  int wavelet_length = 81;
};

inline void validate(const DatasetSpec& spec) {
  require(spec.time_samples >= 4 && spec.traces >= 1, "dataset: section dims too small");
  require(spec.sample_count >= 1, "dataset: sample_count must be positive");
  require(spec.layer_count_min >= 2 && spec.layer_count_max >= spec.layer_count_min,
          "dataset: layer counts must satisfy 2 <= min <= max");
  require(spec.thin_layer_fraction >= 0.0 && spec.thin_layer_fraction <= 1.0,
          "dataset: thin_layer_fraction must lie in [0, 1]");
  require(spec.impedance_min > 0.0 && spec.impedance_max > spec.impedance_min,
          "dataset: impedance range must be positive and increasing");
  require(spec.min_reflection >= 0.0, "dataset: min_reflection must be non-negative");
  require(spec.dip_max >= 0, "dataset: dip_max must be non-negative");
  require(spec.wavelet_length % 2 == 1, "dataset: wavelet_length must be odd");
}

template <class T>
struct GeneratedSection {
  TraceSection<T> trace;
  ReflectivitySection<T> reflectivity;
  ImpedanceSection<T> impedance;
};

// Draws one layered section: random layer thicknesses (occasionally thin),
// per-layer impedances separated by at least min_reflection in half-log
// units, linear interface dips, and pinch-outs where a dipping interface is
// clipped against the one above. The trace section is the exact forward
// model of the reflectivity; pass a finite snr_db to add calibrated noise.
template <class T>
GeneratedSection<T> generate_section(const DatasetSpec& spec, RngState& rng,
                                     double snr_db = std::numeric_limits<double>::infinity()) {
  validate(spec);
  const int h = spec.time_samples;
  const int w = spec.traces;
  const int n_layers =
      static_cast<int>(rng.uniform_int(spec.layer_count_min, spec.layer_count_max));

  // Base interface depths from sequential thickness draws.
  std::vector<int> base_depth;
  const int thick_max = std::max(6, 2 * h / n_layers);
  int d = 0;
  for (int i = 0; i + 1 < n_layers; ++i) {
    const bool thin = rng.uniform() < spec.thin_layer_fraction;
    const int thickness = thin ? static_cast<int>(rng.uniform_int(1, 3))
                               : static_cast<int>(rng.uniform_int(4, thick_max));
    d += thickness;
    if (d >= h - 1) break;
    base_depth.push_back(d);
  }
  const int n_interfaces = static_cast<int>(base_depth.size());

  // Per-layer impedances in log space, kept min_reflection apart.
  const double lo = std::log(spec.impedance_min);
  const double hi = std::log(spec.impedance_max);
  std::vector<double> log_ip(n_interfaces + 1);
  log_ip[0] = rng.uniform(lo, hi);
  for (int i = 1; i <= n_interfaces; ++i) {
    double v = rng.uniform(lo, hi);
    for (int attempt = 0; attempt < 64 && std::abs(v - log_ip[i - 1]) < 2.0 * spec.min_reflection;
         ++attempt) {
      v = rng.uniform(lo, hi);
    }
    if (std::abs(v - log_ip[i - 1]) < 2.0 * spec.min_reflection) {
      v = log_ip[i - 1] + (v >= log_ip[i - 1] ? 2.0 : -2.0) * spec.min_reflection;
      v = std::clamp(v, lo, hi);
    }
    log_ip[i] = v;
  }

  // Interface dips: total vertical shift across the full section width.
  std::vector<double> dip(n_interfaces);
  for (int i = 0; i < n_interfaces; ++i) {
    dip[i] = spec.dip_max > 0 ? rng.uniform(-double(spec.dip_max), double(spec.dip_max)) : 0.0;
  }

  GeneratedSection<T> out;
  out.impedance.dt = spec.dt_s;
  out.impedance.data = RealGrid<T>(h, w, 1);
  for (int x = 0; x < w; ++x) {
    const double frac = w > 1 ? static_cast<double>(x) / (w - 1) - 0.5 : 0.0;
    int previous = 0;
    std::vector<int> depth(n_interfaces);
    for (int i = 0; i < n_interfaces; ++i) {
      int di = base_depth[i] + static_cast<int>(std::lround(dip[i] * frac));
      di = std::clamp(di, previous, h);  // clipping creates wedge pinch-outs
      depth[i] = di;
      previous = di;
    }
    int layer = 0;
    for (int t = 0; t < h; ++t) {
      while (layer < n_interfaces && t >= depth[layer]) ++layer;
      out.impedance.data.at(t, x, 0) = static_cast<T>(std::exp(log_ip[layer]));
    }
  }

  out.reflectivity = reflectivity_from_impedance(out.impedance);
  const Wavelet<T> w_src = ricker_wavelet<T>(spec.wavelet_peak_hz, spec.dt_s, spec.wavelet_length);
  out.trace = synthesize_section(out.reflectivity, w_src);
  if (std::isfinite(snr_db)) {
    out.trace.data = add_noise_snr(out.trace.data, snr_db, rng);
  }
  return out;
}

}  // namespace orthoseis
