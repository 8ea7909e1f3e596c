#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "orthoseis/parallel.hpp"
#include "orthoseis/seismic.hpp"

namespace orthoseis {

// Linear forward operator of the convolutional model: G m convolves a
// reflectivity vector with the wavelet (same cropping as synthesize_trace),
// and the adjoint correlates with it.
template <class T>
class ConvOperator {
 public:
  explicit ConvOperator(Wavelet<T> w) : wavelet_(std::move(w)) {
    require(wavelet_.length() >= 1, "ConvOperator: empty wavelet");
  }

  const Wavelet<T>& wavelet() const { return wavelet_; }

  std::vector<T> apply(const std::vector<T>& m) const { return synthesize_trace(m, wavelet_); }

  std::vector<T> apply_adjoint(const std::vector<T>& y) const {
    const int n = static_cast<int>(y.size());
    const int c = wavelet_.center();
    std::vector<T> out(n, T(0));
    for (int k = 0; k < n; ++k) {
      T acc = T(0);
      const int t_lo = std::max(0, k - c);
      const int t_hi = std::min(n - 1, k - c + wavelet_.length() - 1);
      for (int t = t_lo; t <= t_hi; ++t) acc += y[t] * wavelet_.samples[c + t - k];
      out[k] = acc;
    }
    return out;
  }

  // Largest eigenvalue of G^T G estimated by power iteration from a fixed
  // starting vector, so step selection is deterministic.
  double operator_norm_squared(int length, int iterations = 20) const {
    require(length >= 1, "operator_norm_squared: length must be positive");
    std::vector<T> v(length, T(1));
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
      std::vector<T> gv = apply(v);
      std::vector<T> gtgv = apply_adjoint(gv);
      double norm = 0.0;
      for (T x : gtgv) norm += static_cast<double>(x) * static_cast<double>(x);
      norm = std::sqrt(norm);
      require(norm > 0.0, "operator_norm_squared: iteration collapsed to zero");
      double dot = 0.0;
      for (int i = 0; i < length; ++i) dot += static_cast<double>(v[i]) * static_cast<double>(gtgv[i]);
      double vv = 0.0;
      for (T x : v) vv += static_cast<double>(x) * static_cast<double>(x);
      lambda = dot / vv;
      for (int i = 0; i < length; ++i) v[i] = static_cast<T>(gtgv[i] / norm);
    }
    return lambda;
  }

 private:
  Wavelet<T> wavelet_;
};

enum class BpiMethod { kIsta, kFista };

// Settings for the l1-regularized inversion
//   phi(m) = ||d - G m||_2^2 + chi * ||m||_1.
// step = 0 requests the automatic choice 0.99 / lambda_max(G^T G).
struct BpiConfig {
  double chi = 0.05;
  double step = 0.0;
  int max_iters = 2000;
  double tol = 1e-10;  // relative objective decrease that counts as converged
  int power_iterations = 20;
  BpiMethod method = BpiMethod::kIsta;
  int threads = 1;
};

template <class T>
double objective(const ConvOperator<T>& G, const std::vector<T>& d, const std::vector<T>& m,
                 double chi) {
  require(d.size() == m.size(), "objective: dimension mismatch");
  const std::vector<T> gm = G.apply(m);
  double data_term = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = static_cast<double>(d[i]) - static_cast<double>(gm[i]);
    data_term += r * r;
  }
  double l1 = 0.0;
  for (T x : m) l1 += std::abs(static_cast<double>(x));
  return data_term + chi * l1;
}

template <class T>
void soft_threshold_inplace(std::vector<T>& v, double tau) {
  for (T& x : v) {
    const double a = std::abs(static_cast<double>(x));
    x = a <= tau ? T(0) : static_cast<T>((x > T(0) ? 1.0 : -1.0) * (a - tau));
  }
}

template <class T>
std::vector<T> soft_threshold(std::vector<T> v, double tau) {
  soft_threshold_inplace(v, tau);
  return v;
}

template <class T>
struct InversionResult {
  std::vector<T> m;
  std::vector<double> objective_history;  // objective after every iterate, starting from m = 0
  int iterations = 0;
  double step_used = 0.0;
};

namespace detail {

template <class T>
double resolve_step(const ConvOperator<T>& G, const BpiConfig& cfg, int length) {
  if (cfg.step > 0.0) return cfg.step;
  const double lambda = G.operator_norm_squared(length, cfg.power_iterations);
  require(lambda > 0.0, "bpi: operator norm estimate is zero");
  return 0.99 / lambda;
}

}  // namespace detail

// Iterative shrinkage-thresholding from m = 0:
//   m <- soft_threshold(m + step * G^T (d - G m), step * chi).
// With step * ||G||^2 <= 1 the objective history is non-increasing.
template <class T>
InversionResult<T> ista_solve(const ConvOperator<T>& G, const std::vector<T>& d,
                              const BpiConfig& cfg) {
  require(!d.empty(), "ista_solve: empty data");
  require(cfg.chi >= 0.0, "ista_solve: chi must be non-negative");
  require(cfg.max_iters >= 1, "ista_solve: max_iters must be positive");
  const int n = static_cast<int>(d.size());
  const double step = detail::resolve_step(G, cfg, n);

  InversionResult<T> res;
  res.step_used = step;
  res.m.assign(n, T(0));
  res.objective_history.push_back(objective(G, d, res.m, cfg.chi));
  for (int it = 0; it < cfg.max_iters; ++it) {
    std::vector<T> residual = G.apply(res.m);
    for (int i = 0; i < n; ++i) residual[i] = d[i] - residual[i];
    std::vector<T> grad_step = G.apply_adjoint(residual);
    for (int i = 0; i < n; ++i) res.m[i] += static_cast<T>(step * static_cast<double>(grad_step[i]));
    soft_threshold_inplace(res.m, step * cfg.chi);
    const double obj = objective(G, d, res.m, cfg.chi);
    const double previous = res.objective_history.back();
    res.objective_history.push_back(obj);
    res.iterations = it + 1;
    if (std::abs(previous - obj) <= cfg.tol * std::max(1.0, std::abs(previous))) break;
  }
  return res;
}

// Accelerated variant with Nesterov momentum. Objective values may wiggle;
// convergence is measured on the momentum-free iterate.
template <class T>
InversionResult<T> fista_solve(const ConvOperator<T>& G, const std::vector<T>& d,
                               const BpiConfig& cfg) {
  require(!d.empty(), "fista_solve: empty data");
  require(cfg.chi >= 0.0, "fista_solve: chi must be non-negative");
  require(cfg.max_iters >= 1, "fista_solve: max_iters must be positive");
  const int n = static_cast<int>(d.size());
  const double step = detail::resolve_step(G, cfg, n);

  InversionResult<T> res;
  res.step_used = step;
  res.m.assign(n, T(0));
  std::vector<T> y = res.m;
  double t = 1.0;
  res.objective_history.push_back(objective(G, d, res.m, cfg.chi));
  for (int it = 0; it < cfg.max_iters; ++it) {
    std::vector<T> residual = G.apply(y);
    for (int i = 0; i < n; ++i) residual[i] = d[i] - residual[i];
    std::vector<T> grad_step = G.apply_adjoint(residual);
    std::vector<T> m_next(n);
    for (int i = 0; i < n; ++i) {
      m_next[i] = y[i] + static_cast<T>(step * static_cast<double>(grad_step[i]));
    }
    soft_threshold_inplace(m_next, step * cfg.chi);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    for (int i = 0; i < n; ++i) {
      y[i] = m_next[i] + static_cast<T>(beta * (static_cast<double>(m_next[i]) -
                                                static_cast<double>(res.m[i])));
    }
    t = t_next;
    res.m = std::move(m_next);
    const double obj = objective(G, d, res.m, cfg.chi);
    const double previous = res.objective_history.back();
    res.objective_history.push_back(obj);
    res.iterations = it + 1;
    if (std::abs(previous - obj) <= cfg.tol * std::max(1.0, std::abs(previous))) break;
  }
  return res;
}

// Trace-by-trace inversion of a section; traces are independent, so the loop
// parallelizes without changing results. Pass a histories pointer to collect
// each trace's objective curve (indexed by trace).
template <class T>
ReflectivitySection<T> invert_section(const TraceSection<T>& section, const Wavelet<T>& w,
                                      const BpiConfig& cfg,
                                      std::vector<std::vector<double>>* histories = nullptr) {
  const RealGrid<T>& g = section.data;
  require(g.c() == 1, "invert_section: sections are single-channel");
  ConvOperator<T> G(w);
  ReflectivitySection<T> out;
  out.dt = section.dt;
  out.data = RealGrid<T>(g.shape());
  RealGrid<T>* target = &out.data;
  if (histories) histories->assign(static_cast<std::size_t>(g.w()), {});
  parallel_for(g.w(), cfg.threads, [&](int x) {
    std::vector<T> d(g.h());
    for (int t = 0; t < g.h(); ++t) d[t] = g.at(t, x, 0);
    InversionResult<T> r =
        cfg.method == BpiMethod::kIsta ? ista_solve(G, d, cfg) : fista_solve(G, d, cfg);
    for (int t = 0; t < g.h(); ++t) target->at(t, x, 0) = r.m[t];
    if (histories) (*histories)[static_cast<std::size_t>(x)] = std::move(r.objective_history);
  });
  return out;
}

}  // namespace orthoseis
