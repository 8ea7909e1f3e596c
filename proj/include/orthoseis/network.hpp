#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "orthoseis/autodiff.hpp"
#include "orthoseis/fft.hpp"
#include "orthoseis/ops.hpp"
#include "orthoseis/rng.hpp"
#include "orthoseis/spectral.hpp"

namespace orthoseis {

// Architecture description. Encoder stage i (0-based) convolves at
// resolution H/2^i with base_filters*2^i output channels, pools, then mixes
// retained Fourier modes. The bottleneck convolves at H/2^depth. Decoder
// stage j mirrors encoder stage depth-1-j through a stride-2 transposed
// convolution and a skip concatenation. Every spectral block ends in an
// elementwise magnitude; setting spectral_enabled = false replaces the
// spectral blocks with identities, which yields a plain U-Net with strictly
// fewer parameters.
struct NetworkConfig {
  int input_h = 32;
  int input_w = 32;
  int input_channels = 1;
  int output_channels = 1;
  int base_filters = 16;
  int depth = 4;
  int bottleneck_filters = 256;
  double mode_fraction = 0.5;
  double dropout_rate = 0.1;
  int norm_groups = 8;
  double norm_eps = 1e-5;
  bool spectral_enabled = true;
  bool final_softmax = false;
};

inline void validate(const NetworkConfig& cfg) {
  require(is_power_of_two(cfg.input_h) && is_power_of_two(cfg.input_w),
          "network: input dims must be powers of two");
  require(cfg.depth >= 1 && cfg.depth <= 8, "network: depth must lie in [1, 8]");
  require(cfg.input_h >> cfg.depth >= 2 && cfg.input_w >> cfg.depth >= 2,
          "network: input dims must stay >= 2 after depth poolings");
  require(cfg.input_channels >= 1 && cfg.output_channels >= 1, "network: channel counts must be positive");
  require(cfg.base_filters >= 1, "network: base_filters must be positive");
  require(cfg.bottleneck_filters >= 1, "network: bottleneck_filters must be positive");
  require(cfg.mode_fraction > 0.0 && cfg.mode_fraction <= 1.0,
          "network: mode_fraction must lie in (0, 1]");
  require(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0,
          "network: dropout_rate must lie in [0, 1)");
  require(cfg.norm_groups >= 1, "network: norm_groups must be positive");
}

// Largest divisor of channels that does not exceed the configured group
// count, so group normalization always partitions the channels evenly.
inline int norm_group_count(int channels, int configured) {
  int g = std::min(configured, channels);
  while (channels % g != 0) --g;
  return g;
}

template <class T>
struct ConvParams {
  Parameter<T> kernel;  // (kh, kw, cin*cout), flat channel index ci*cout + co
  Parameter<T> bias;    // (1, 1, cout)
  int kh = 0, kw = 0, cin = 0, cout = 0;

  static ConvParams make(const std::string& name, int kh, int kw, int cin, int cout) {
    ConvParams p;
    p.kh = kh;
    p.kw = kw;
    p.cin = cin;
    p.cout = cout;
    p.kernel = Parameter<T>::real(name + ".kernel", GridShape{kh, kw, cin * cout});
    p.bias = Parameter<T>::real(name + ".bias", GridShape{1, 1, cout});
    return p;
  }
};

template <class T>
struct NormParams {
  Parameter<T> gain;   // (1, 1, c)
  Parameter<T> shift;  // (1, 1, c)
  int channels = 0;
  int groups = 1;

  static NormParams make(const std::string& name, int channels, int groups) {
    NormParams p;
    p.channels = channels;
    p.groups = norm_group_count(channels, groups);
    p.gain = Parameter<T>::real(name + ".gain", GridShape{1, 1, channels});
    p.shift = Parameter<T>::real(name + ".shift", GridShape{1, 1, channels});
    return p;
  }
};

// Retained-mode mixing weights for one spectral block. kh/kw hold the total
// number of retained rows/columns at the block's resolution; identity blocks
// (plain U-Net ablation) carry no weights.
template <class T>
struct SpectralWeights {
  Parameter<T> weights;  // complex (kh, kw, cin*cout), flat index j*cout + i
  int kh = 0, kw = 0, cin = 0, cout = 0;
  bool identity = false;

  static SpectralWeights make(const std::string& name, int res_h, int res_w, double mode_fraction,
                              int cin, int cout, bool enabled) {
    SpectralWeights s;
    s.cin = cin;
    s.cout = cout;
    if (!enabled) {
      s.identity = true;
      require(cin == cout, "spectral identity block requires cin == cout");
      return s;
    }
    s.kh = retained_mode_count(res_h, mode_fraction);
    s.kw = retained_mode_count(res_w, mode_fraction);
    s.weights = Parameter<T>::complex(name + ".weights", GridShape{s.kh, s.kw, cin * cout});
    return s;
  }
};

template <class T>
struct EncoderBlock {
  ConvParams<T> conv1, conv2;
  NormParams<T> norm1, norm2;
  SpectralWeights<T> spectral;
};

template <class T>
struct DecoderBlock {
  ConvParams<T> upconv, conv1, conv2;
  NormParams<T> norm;
  SpectralWeights<T> spectral;
};

template <class T>
struct ModelState {
  NetworkConfig config;
  std::vector<EncoderBlock<T>> encoders;
  ConvParams<T> bottleneck_conv;
  SpectralWeights<T> bottleneck_spectral;
  std::vector<DecoderBlock<T>> decoders;
  ConvParams<T> head;

  // Stable enumeration used by the optimizer, checkpoints, and counting.
  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    auto push_conv = [&out](ConvParams<T>& c) {
      out.push_back(&c.kernel);
      out.push_back(&c.bias);
    };
    auto push_norm = [&out](NormParams<T>& n) {
      out.push_back(&n.gain);
      out.push_back(&n.shift);
    };
    auto push_spectral = [&out](SpectralWeights<T>& s) {
      if (!s.identity) out.push_back(&s.weights);
    };
    for (auto& e : encoders) {
      push_conv(e.conv1);
      push_norm(e.norm1);
      push_conv(e.conv2);
      push_norm(e.norm2);
      push_spectral(e.spectral);
    }
    push_conv(bottleneck_conv);
    push_spectral(bottleneck_spectral);
    for (auto& d : decoders) {
      push_conv(d.upconv);
      push_conv(d.conv1);
      push_conv(d.conv2);
      push_norm(d.norm);
      push_spectral(d.spectral);
    }
    push_conv(head);
    return out;
  }

  std::int64_t scalar_count() {
    std::int64_t n = 0;
    for (Parameter<T>* p : parameters()) n += p->scalar_count();
    return n;
  }

  void zero_grad() {
    for (Parameter<T>* p : parameters()) p->zero_grad();
  }
};

// Builds all parameter containers (zero-valued) for the given architecture.
template <class T>
ModelState<T> build_model(const NetworkConfig& cfg) {
  validate(cfg);
  ModelState<T> m;
  m.config = cfg;
  int res_h = cfg.input_h;
  int res_w = cfg.input_w;
  int cin = cfg.input_channels;
  for (int i = 0; i < cfg.depth; ++i) {
    const int cout = cfg.base_filters << i;
    const std::string name = "enc" + std::to_string(i + 1);
    EncoderBlock<T> e;
    e.conv1 = ConvParams<T>::make(name + ".conv1", 3, 3, cin, cout);
    e.norm1 = NormParams<T>::make(name + ".norm1", cout, cfg.norm_groups);
    e.conv2 = ConvParams<T>::make(name + ".conv2", 3, 3, cout, cout);
    e.norm2 = NormParams<T>::make(name + ".norm2", cout, cfg.norm_groups);
    res_h /= 2;
    res_w /= 2;
    e.spectral = SpectralWeights<T>::make(name + ".spectral", res_h, res_w, cfg.mode_fraction,
                                          cout, cout, cfg.spectral_enabled);
    m.encoders.push_back(std::move(e));
    cin = cout;
  }
  m.bottleneck_conv = ConvParams<T>::make("bottleneck.conv", 3, 3, cin, cfg.bottleneck_filters);
  m.bottleneck_spectral =
      SpectralWeights<T>::make("bottleneck.spectral", res_h, res_w, cfg.mode_fraction,
                               cfg.bottleneck_filters, cfg.bottleneck_filters, cfg.spectral_enabled);
  cin = cfg.bottleneck_filters;
  for (int j = 0; j < cfg.depth; ++j) {
    const int cout = cfg.base_filters << (cfg.depth - 1 - j);
    const std::string name = "dec" + std::to_string(j + 1);
    DecoderBlock<T> d;
    d.upconv = ConvParams<T>::make(name + ".upconv", 2, 2, cin, cout);
    d.conv1 = ConvParams<T>::make(name + ".conv1", 3, 3, 2 * cout, cout);
    d.conv2 = ConvParams<T>::make(name + ".conv2", 3, 3, cout, cout);
    d.norm = NormParams<T>::make(name + ".norm", cout, cfg.norm_groups);
    res_h *= 2;
    res_w *= 2;
    d.spectral = SpectralWeights<T>::make(name + ".spectral", res_h, res_w, cfg.mode_fraction,
                                          cout, cout, cfg.spectral_enabled);
    m.decoders.push_back(std::move(d));
    cin = cout;
  }
  m.head = ConvParams<T>::make("head", 1, 1, cin, cfg.output_channels);
  return m;
}

// Closed-form count of stored real scalars for an architecture; complex
// weights count twice. Kept as explicit arithmetic so it cross-checks the
// enumerated model independently.
inline std::int64_t param_count(const NetworkConfig& cfg) {
  validate(cfg);
  auto conv = [](std::int64_t kh, std::int64_t kw, std::int64_t ci, std::int64_t co) {
    return kh * kw * ci * co + co;
  };
  auto spectral = [&cfg](int res_h, int res_w, std::int64_t ci, std::int64_t co) -> std::int64_t {
    if (!cfg.spectral_enabled) return 0;
    const std::int64_t kh = retained_mode_count(res_h, cfg.mode_fraction);
    const std::int64_t kw = retained_mode_count(res_w, cfg.mode_fraction);
    return 2 * kh * kw * ci * co;
  };
  std::int64_t total = 0;
  int res_h = cfg.input_h, res_w = cfg.input_w;
  std::int64_t cin = cfg.input_channels;
  for (int i = 0; i < cfg.depth; ++i) {
    const std::int64_t cout = static_cast<std::int64_t>(cfg.base_filters) << i;
    total += conv(3, 3, cin, cout) + 2 * cout;   // conv1 + norm1
    total += conv(3, 3, cout, cout) + 2 * cout;  // conv2 + norm2
    res_h /= 2;
    res_w /= 2;
    total += spectral(res_h, res_w, cout, cout);
    cin = cout;
  }
  total += conv(3, 3, cin, cfg.bottleneck_filters);
  total += spectral(res_h, res_w, cfg.bottleneck_filters, cfg.bottleneck_filters);
  cin = cfg.bottleneck_filters;
  for (int j = 0; j < cfg.depth; ++j) {
    const std::int64_t cout = static_cast<std::int64_t>(cfg.base_filters) << (cfg.depth - 1 - j);
    total += conv(2, 2, cin, cout);
    total += conv(3, 3, 2 * cout, cout);
    total += conv(3, 3, cout, cout) + 2 * cout;
    res_h *= 2;
    res_w *= 2;
    total += spectral(res_h, res_w, cout, cout);
    cin = cout;
  }
  total += conv(1, 1, cin, cfg.output_channels);
  return total;
}

// Fills parameter values in enumeration order from a single stream: conv
// kernels fan-in uniform U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with zero bias,
// norm gains 1 and shifts 0, spectral weights complex Gaussian with total
// standard deviation 1/(cin*sqrt(kh*kw)) split evenly between the real and
// imaginary parts.
template <class T>
void init_params(ModelState<T>& m, RngState& rng) {
  auto init_conv = [&rng](ConvParams<T>& cp) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cp.kh) * cp.kw * cp.cin);
    for (std::int64_t i = 0; i < cp.kernel.value.size(); ++i) {
      cp.kernel.value[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    cp.bias.value.set_zero();
  };
  auto init_norm = [](NormParams<T>& np) {
    np.gain.value.fill(T(1));
    np.shift.value.set_zero();
  };
  auto init_spectral = [&rng](SpectralWeights<T>& sp) {
    if (sp.identity) return;
    const double sigma =
        1.0 / (static_cast<double>(sp.cin) * std::sqrt(static_cast<double>(sp.kh) * sp.kw));
    const double comp = sigma / std::sqrt(2.0);
    for (std::int64_t i = 0; i < sp.weights.cvalue.size(); ++i) {
      const double re = rng.normal(0.0, comp);
      const double im = rng.normal(0.0, comp);
      sp.weights.cvalue[i] = std::complex<T>(static_cast<T>(re), static_cast<T>(im));
    }
  };
  for (auto& e : m.encoders) {
    init_conv(e.conv1);
    init_norm(e.norm1);
    init_conv(e.conv2);
    init_norm(e.norm2);
    init_spectral(e.spectral);
  }
  init_conv(m.bottleneck_conv);
  init_spectral(m.bottleneck_spectral);
  for (auto& d : m.decoders) {
    init_conv(d.upconv);
    init_conv(d.conv1);
    init_conv(d.conv2);
    init_norm(d.norm);
    init_spectral(d.spectral);
  }
  init_conv(m.head);
}

namespace detail {

template <class T>
ValueId apply_spectral(Trace<T>& tr, SpectralWeights<T>& s, ValueId x) {
  if (s.identity) return x;
  ValueId r = tr.param(s.weights);
  return spectral_layer(tr, x, r, s.cout);
}

}  // namespace detail

// conv -> tanh -> group norm -> dropout -> conv -> tanh -> group norm gives
// the skip tensor; pooling then spectral mixing gives the stage output.
template <class T>
std::pair<ValueId, ValueId> encoder_block_forward(Trace<T>& tr, EncoderBlock<T>& blk, ValueId x,
                                                  double dropout_rate, double eps, RngState& rng,
                                                  bool training) {
  ValueId a = conv2d(tr, x, tr.param(blk.conv1.kernel), tr.param(blk.conv1.bias), Padding::kSame);
  a = tanh_op(tr, a);
  a = group_norm(tr, a, tr.param(blk.norm1.gain), tr.param(blk.norm1.shift), blk.norm1.groups,
                 static_cast<T>(eps));
  a = dropout(tr, a, static_cast<T>(dropout_rate), rng, training);
  ValueId b = conv2d(tr, a, tr.param(blk.conv2.kernel), tr.param(blk.conv2.bias), Padding::kSame);
  b = tanh_op(tr, b);
  ValueId skip = group_norm(tr, b, tr.param(blk.norm2.gain), tr.param(blk.norm2.shift),
                            blk.norm2.groups, static_cast<T>(eps));
  ValueId pooled = maxpool2(tr, skip);
  ValueId out = detail::apply_spectral(tr, blk.spectral, pooled);
  return {out, skip};
}

// upconv -> concat skip -> conv -> ReLU -> dropout -> conv -> ReLU ->
// group norm -> spectral mixing.
template <class T>
ValueId decoder_block_forward(Trace<T>& tr, DecoderBlock<T>& blk, ValueId x, ValueId skip,
                              double dropout_rate, double eps, RngState& rng, bool training) {
  ValueId up =
      conv2d_transpose2x2(tr, x, tr.param(blk.upconv.kernel), tr.param(blk.upconv.bias));
  ValueId z = concat_channels(tr, up, skip);
  ValueId a = conv2d(tr, z, tr.param(blk.conv1.kernel), tr.param(blk.conv1.bias), Padding::kSame);
  a = relu_op(tr, a);
  a = dropout(tr, a, static_cast<T>(dropout_rate), rng, training);
  ValueId b = conv2d(tr, a, tr.param(blk.conv2.kernel), tr.param(blk.conv2.bias), Padding::kSame);
  b = relu_op(tr, b);
  b = group_norm(tr, b, tr.param(blk.norm.gain), tr.param(blk.norm.shift), blk.norm.groups,
                 static_cast<T>(eps));
  return detail::apply_spectral(tr, blk.spectral, b);
}

// Full forward pass over one (h, w, input_channels) grid.
template <class T>
ValueId forward(Trace<T>& tr, ModelState<T>& m, ValueId x, RngState& rng, bool training) {
  const NetworkConfig& cfg = m.config;
  const RealGrid<T>& xv = tr.value(x);
  require(xv.h() == cfg.input_h && xv.w() == cfg.input_w && xv.c() == cfg.input_channels,
          "forward: input shape " + xv.shape().str() + " does not match configuration");
  std::vector<ValueId> skips;
  ValueId cur = x;
  for (auto& e : m.encoders) {
    auto [out, skip] = encoder_block_forward(tr, e, cur, cfg.dropout_rate, cfg.norm_eps, rng, training);
    skips.push_back(skip);
    cur = out;
  }
  cur = conv2d(tr, cur, tr.param(m.bottleneck_conv.kernel), tr.param(m.bottleneck_conv.bias),
               Padding::kSame);
  cur = tanh_op(tr, cur);
  cur = detail::apply_spectral(tr, m.bottleneck_spectral, cur);
  for (int j = 0; j < cfg.depth; ++j) {
    cur = decoder_block_forward(tr, m.decoders[j], cur, skips[cfg.depth - 1 - j], cfg.dropout_rate,
                                cfg.norm_eps, rng, training);
  }
  cur = conv2d(tr, cur, tr.param(m.head.kernel), tr.param(m.head.bias), Padding::kSame);
  if (cfg.final_softmax) cur = softmax_channels(tr, cur);
  return cur;
}

// Value-only copies for best-state tracking during training.
template <class T>
std::vector<std::vector<T>> clone_values(ModelState<T>& m) {
  std::vector<std::vector<T>> out;
  for (Parameter<T>* p : m.parameters()) {
    if (p->is_complex) {
      auto view = p->cvalue.real_view();
      out.emplace_back(view.data(), view.data() + view.size());
    } else {
      out.emplace_back(p->value.raw(), p->value.raw() + p->value.size());
    }
  }
  return out;
}

template <class T>
void assign_values(ModelState<T>& m, const std::vector<std::vector<T>>& values) {
  auto params = m.parameters();
  require(params.size() == values.size(), "assign_values: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>* p = params[i];
    if (p->is_complex) {
      auto view = p->cvalue.real_view();
      require(static_cast<std::size_t>(view.size()) == values[i].size(),
              "assign_values: size mismatch for " + p->name);
      for (Eigen::Index k = 0; k < view.size(); ++k) view[k] = values[i][k];
    } else {
      require(static_cast<std::size_t>(p->value.size()) == values[i].size(),
              "assign_values: size mismatch for " + p->name);
      for (std::int64_t k = 0; k < p->value.size(); ++k) p->value[k] = values[i][k];
    }
  }
}

}  // namespace orthoseis
