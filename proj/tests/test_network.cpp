#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "orthoseis/checkpoint.hpp"
#include "orthoseis/network.hpp"
#include "orthoseis/rng.hpp"

using namespace orthoseis;

namespace {

RealGrid<double> random_grid(int h, int w, int c, RngState& rng) {
  RealGrid<double> g(h, w, c);
  for (std::int64_t i = 0; i < g.size(); ++i) g[i] = rng.normal();
  return g;
}

double rms(const RealGrid<double>& g) {
  double s = 0.0;
  for (std::int64_t i = 0; i < g.size(); ++i) s += g[i] * g[i];
  return std::sqrt(s / static_cast<double>(g.size()));
}

NetworkConfig small_config() {
  NetworkConfig cfg;
  cfg.input_h = 16;
  cfg.input_w = 16;
  cfg.base_filters = 4;
  cfg.depth = 2;
  cfg.bottleneck_filters = 8;
  cfg.norm_groups = 4;
  return cfg;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(static_cast<bool>(is));
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config validation rejects malformed architectures") {
  NetworkConfig cfg = small_config();
  CHECK_NOTHROW(validate(cfg));

  NetworkConfig bad = cfg;
  bad.input_w = 24;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = cfg;
  bad.depth = 0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = cfg;
  bad.depth = 4;  // 16 >> 4 = 1, too small
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = cfg;
  bad.input_channels = 0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = cfg;
  bad.base_filters = 0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = cfg;
  bad.mode_fraction = 0.0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = cfg;
  bad.mode_fraction = 1.5;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = cfg;
  bad.dropout_rate = 1.0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = cfg;
  bad.norm_groups = 0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}

TEST_CASE("group count is the largest divisor within the configured cap") {
  CHECK(norm_group_count(16, 8) == 8);
  CHECK(norm_group_count(16, 5) == 4);
  CHECK(norm_group_count(7, 8) == 7);
  CHECK(norm_group_count(7, 4) == 1);
  CHECK(norm_group_count(12, 8) == 6);
  CHECK(norm_group_count(1, 8) == 1);
}

TEST_CASE("parameter enumeration is stable, named, and unique") {
  NetworkConfig cfg;  // depth 4 defaults
  ModelState<double> m = build_model<double>(cfg);
  auto params = m.parameters();
  // 9 per encoder block, 3 for the bottleneck, 9 per decoder block, 2 for the head
  CHECK(params.size() == 4 * 9 + 3 + 4 * 9 + 2);
  std::set<std::string> names;
  for (Parameter<double>* p : params) {
    CHECK(!p->name.empty());
    names.insert(p->name);
  }
  CHECK(names.size() == params.size());

  NetworkConfig plain = cfg;
  plain.spectral_enabled = false;
  ModelState<double> pm = build_model<double>(plain);
  CHECK(pm.parameters().size() == params.size() - 9);
}

TEST_CASE("closed-form parameter count matches hand arithmetic") {
  NetworkConfig cfg;
  cfg.input_h = 8;
  cfg.input_w = 8;
  cfg.base_filters = 2;
  cfg.depth = 1;
  cfg.bottleneck_filters = 3;
  cfg.norm_groups = 2;
  cfg.spectral_enabled = false;
  // enc: 20 + 4 + 38 + 4; bottleneck: 57; dec: 26 + 74 + 38 + 4; head: 3
  CHECK(param_count(cfg) == 268);

  cfg.spectral_enabled = true;
  cfg.mode_fraction = 1.0;
  // spectral adds 2*4*4*2*2 + 2*4*4*3*3 + 2*8*8*2*2 = 128 + 288 + 512
  CHECK(param_count(cfg) == 268 + 928);

  // First conv of the reference architecture: 3*3*1*16 + 16 kernels and
  // biases, and its group norm holds 2*16 scalars.
  NetworkConfig ref;
  ModelState<double> rm = build_model<double>(ref);
  CHECK(rm.encoders[0].conv1.kernel.value.size() + rm.encoders[0].conv1.bias.value.size() == 160);
  CHECK(rm.encoders[0].norm1.gain.value.size() + rm.encoders[0].norm1.shift.value.size() == 32);
}

TEST_CASE("closed-form parameter count equals enumeration on random configs") {
  RngState rng(404);
  for (int trial = 0; trial < 10; ++trial) {
    CAPTURE(trial);
    NetworkConfig cfg;
    cfg.input_h = 8 << rng.below(3);
    cfg.input_w = 8 << rng.below(3);
    const int max_depth = std::min(3, static_cast<int>(std::log2(std::min(cfg.input_h, cfg.input_w))) - 1);
    cfg.depth = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_depth)));
    cfg.base_filters = 1 + static_cast<int>(rng.below(6));
    cfg.bottleneck_filters = 1 + static_cast<int>(rng.below(24));
    cfg.input_channels = 1 + static_cast<int>(rng.below(3));
    cfg.output_channels = 1 + static_cast<int>(rng.below(2));
    cfg.mode_fraction = rng.uniform(0.05, 1.0);
    cfg.norm_groups = 1 + static_cast<int>(rng.below(8));
    cfg.spectral_enabled = rng.below(2) == 0;
    ModelState<double> m = build_model<double>(cfg);
    CHECK(param_count(cfg) == m.scalar_count());
  }
}

TEST_CASE("spectral ablation strictly reduces the parameter count") {
  NetworkConfig cfg;
  NetworkConfig plain = cfg;
  plain.spectral_enabled = false;
  CHECK(param_count(plain) < param_count(cfg));

  // The ablated model still runs the same forward path.
  NetworkConfig small = small_config();
  small.spectral_enabled = false;
  ModelState<double> m = build_model<double>(small);
  RngState rng(11);
  init_params(m, rng);
  Trace<double> tr;
  RngState xr(3);
  ValueId x = tr.variable(random_grid(16, 16, 1, xr));
  RngState drop(1);
  ValueId out = forward(tr, m, x, drop, false);
  CHECK(tr.value(out).shape() == GridShape{16, 16, 1});
  CHECK(tr.value(out).all_finite());
}

TEST_CASE("initialization is seed-deterministic with unit gains") {
  NetworkConfig cfg = small_config();
  ModelState<double> a = build_model<double>(cfg);
  ModelState<double> b = build_model<double>(cfg);
  ModelState<double> c = build_model<double>(cfg);
  RngState r1(9), r2(9), r3(10);
  init_params(a, r1);
  init_params(b, r2);
  init_params(c, r3);

  auto va = clone_values(a);
  auto vb = clone_values(b);
  auto vc = clone_values(c);
  CHECK(va == vb);
  CHECK(va != vc);

  for (auto& e : a.encoders) {
    for (std::int64_t i = 0; i < e.norm1.gain.value.size(); ++i) {
      CHECK(e.norm1.gain.value[i] == 1.0);
      CHECK(e.norm1.shift.value[i] == 0.0);
    }
  }
  // Conv kernels stay inside the fan-in bound; biases start at zero.
  const auto& k = a.encoders[0].conv2.kernel;
  const double bound = 1.0 / std::sqrt(9.0 * a.encoders[0].conv2.cin);
  for (std::int64_t i = 0; i < k.value.size(); ++i) CHECK(std::abs(k.value[i]) <= bound);
  for (std::int64_t i = 0; i < a.head.bias.value.size(); ++i) CHECK(a.head.bias.value[i] == 0.0);
  // Spectral weights are actually randomized.
  CHECK(a.encoders[0].spectral.weights.cvalue.real_view().abs().maxCoeff() > 0.0);
}

TEST_CASE("forward keeps the input shape and is deterministic in eval mode") {
  NetworkConfig cfg = small_config();
  ModelState<double> m = build_model<double>(cfg);
  RngState rng(21);
  init_params(m, rng);
  RngState xr(8);
  RealGrid<double> input = random_grid(16, 16, 1, xr);

  Trace<double> t1;
  RngState d1(100);
  ValueId o1 = forward(t1, m, t1.variable(input), d1, false);
  CHECK(t1.value(o1).shape() == GridShape{16, 16, 1});
  CHECK(t1.value(o1).all_finite());
  CHECK(rms(t1.value(o1)) < 1e3);

  Trace<double> t2;
  RngState d2(777);  // eval mode must ignore the stochastic stream
  ValueId o2 = forward(t2, m, t2.variable(input), d2, false);
  CHECK(max_abs_difference(t1.value(o1), t2.value(o2)) == 0.0);

  Trace<double> t3, t4;
  RngState d3(100), d4(777);
  ValueId o3 = forward(t3, m, t3.variable(input), d3, true);
  ValueId o4 = forward(t4, m, t4.variable(input), d4, true);
  CHECK(max_abs_difference(t3.value(o3), t4.value(o4)) > 0.0);
}

TEST_CASE("forward rejects inputs that do not match the configuration") {
  NetworkConfig cfg = small_config();
  ModelState<double> m = build_model<double>(cfg);
  Trace<double> tr;
  RngState xr(4);
  ValueId x = tr.variable(random_grid(8, 16, 1, xr));
  RngState drop(0);
  CHECK_THROWS_AS(forward(tr, m, x, drop, false), std::invalid_argument);
}

TEST_CASE("encoder blocks halve resolution and emit nonnegative outputs") {
  NetworkConfig cfg = small_config();
  ModelState<double> m = build_model<double>(cfg);
  RngState rng(33);
  init_params(m, rng);
  Trace<double> tr;
  RngState xr(6);
  ValueId x = tr.variable(random_grid(16, 16, 1, xr));
  RngState drop(5);
  auto [out, skip] = encoder_block_forward(tr, m.encoders[0], x, cfg.dropout_rate, cfg.norm_eps,
                                           drop, false);
  CHECK(tr.value(skip).shape() == GridShape{16, 16, 4});
  CHECK(tr.value(out).shape() == GridShape{8, 8, 4});
  const RealGrid<double>& ov = tr.value(out);
  for (std::int64_t i = 0; i < ov.size(); ++i) CHECK(ov[i] >= 0.0);
}

TEST_CASE("decoder blocks upsample to the skip resolution") {
  NetworkConfig cfg = small_config();
  ModelState<double> m = build_model<double>(cfg);
  RngState rng(34);
  init_params(m, rng);
  DecoderBlock<double>& dec = m.decoders[0];  // 8 bottleneck channels in, 8 out

  Trace<double> tr;
  RngState xr(61);
  ValueId x = tr.variable(random_grid(4, 4, 8, xr));
  ValueId skip = tr.variable(random_grid(8, 8, 8, xr));
  RngState drop(5);
  ValueId out = decoder_block_forward(tr, dec, x, skip, cfg.dropout_rate, cfg.norm_eps, drop, false);
  CHECK(tr.value(out).shape() == GridShape{8, 8, 8});

  // Gradients reach both the upsample path and the skip path.
  ValueId loss = sum_all(tr, mul(tr, out, out));
  DirectGradSink<double> sink;
  tr.backward(loss, &sink);
  double gx = 0.0, gs = 0.0;
  const RealGrid<double>& xg = tr.grad_ref(x);
  const RealGrid<double>& sg = tr.grad_ref(skip);
  for (std::int64_t i = 0; i < xg.size(); ++i) gx = std::max(gx, std::abs(xg[i]));
  for (std::int64_t i = 0; i < sg.size(); ++i) gs = std::max(gs, std::abs(sg[i]));
  CHECK(gx > 0.0);
  CHECK(gs > 0.0);
}

TEST_CASE("zero inputs propagate to a zero decoder output") {
  NetworkConfig cfg = small_config();
  ModelState<double> m = build_model<double>(cfg);
  RngState rng(35);
  init_params(m, rng);  // biases and norm shifts stay zero
  Trace<double> tr;
  RealGrid<double> zx(4, 4, 8);
  RealGrid<double> zs(8, 8, 8);
  RngState drop(1);
  ValueId out = decoder_block_forward(tr, m.decoders[0], tr.variable(zx), tr.variable(zs),
                                      cfg.dropout_rate, cfg.norm_eps, drop, false);
  const RealGrid<double>& ov = tr.value(out);
  for (std::int64_t i = 0; i < ov.size(); ++i) CHECK(ov[i] == 0.0);
}

TEST_CASE("freshly initialized activations sit in a healthy band") {
  NetworkConfig cfg;  // full-size defaults, 32x32 depth 4
  ModelState<double> m = build_model<double>(cfg);
  RngState rng(42);
  init_params(m, rng);

  Trace<double> tr;
  RngState xr(5);
  ValueId cur = tr.variable(random_grid(32, 32, 1, xr));
  RngState drop(99);
  for (int i = 0; i < cfg.depth; ++i) {
    auto [out, skip] =
        encoder_block_forward(tr, m.encoders[i], cur, cfg.dropout_rate, cfg.norm_eps, drop, false);
    const double skip_rms = rms(tr.value(skip));
    CAPTURE(i);
    CHECK(tr.value(skip).all_finite());
    CHECK(skip_rms >= 0.1);
    CHECK(skip_rms <= 10.0);
    const double out_rms = rms(tr.value(out));
    CHECK(tr.value(out).all_finite());
    CHECK(out_rms > 0.0);
    CHECK(out_rms <= 100.0);
    cur = out;
  }
}

TEST_CASE("checkpoint roundtrip restores every value bit-exactly") {
  NetworkConfig cfg = small_config();
  ModelState<float> m = build_model<float>(cfg);
  RngState rng(77);
  init_params(m, rng);
  const std::string path = "ckpt_roundtrip.osn";
  save_checkpoint(m, path);

  ModelState<float> loaded = load_checkpoint<float>(path);
  CHECK(config_to_json(loaded.config) == config_to_json(cfg));
  CHECK(clone_values(loaded) == clone_values(m));

  const std::string again = "ckpt_roundtrip2.osn";
  save_checkpoint(loaded, again);
  CHECK(read_file_bytes(path) == read_file_bytes(again));
  std::remove(path.c_str());
  std::remove(again.c_str());
}

TEST_CASE("double-precision checkpoints stabilize after one save") {
  NetworkConfig cfg = small_config();
  ModelState<double> m = build_model<double>(cfg);
  RngState rng(78);
  init_params(m, rng);
  const std::string first = "ckpt_double1.osn";
  const std::string second = "ckpt_double2.osn";
  save_checkpoint(m, first);
  ModelState<double> loaded = load_checkpoint<double>(first);
  save_checkpoint(loaded, second);
  CHECK(read_file_bytes(first) == read_file_bytes(second));
  std::remove(first.c_str());
  std::remove(second.c_str());
}

TEST_CASE("checkpoint loading rejects corruption") {
  NetworkConfig cfg = small_config();
  ModelState<float> m = build_model<float>(cfg);
  RngState rng(79);
  init_params(m, rng);
  const std::string path = "ckpt_bad.osn";
  save_checkpoint(m, path);

  SUBCASE("tampered config bytes fail the fingerprint check") {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(4 + 4 + 8 + 8 + 3);  // inside the config JSON
    char b;
    f.seekg(4 + 4 + 8 + 8 + 3);
    f.get(b);
    b ^= 0x01;
    f.seekp(4 + 4 + 8 + 8 + 3);
    f.put(b);
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint<float>(path), doctest::Contains("fingerprint"),
                         std::invalid_argument);
  }

  SUBCASE("truncated payloads are reported") {
    std::string bytes = read_file_bytes(path);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 20));
    os.close();
    CHECK_THROWS_WITH_AS(load_checkpoint<float>(path), doctest::Contains("truncated"),
                         std::invalid_argument);
  }

  SUBCASE("foreign files are rejected on magic") {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "definitely not a checkpoint";
    os.close();
    CHECK_THROWS_WITH_AS(load_checkpoint<float>(path), doctest::Contains("magic"),
                         std::invalid_argument);
  }
  std::remove(path.c_str());
}

TEST_CASE("config fingerprints track every field") {
  NetworkConfig cfg = small_config();
  const std::uint64_t base = config_fingerprint(cfg);
  NetworkConfig same = small_config();
  CHECK(config_fingerprint(same) == base);

  NetworkConfig parsed = config_from_json(nlohmann::json::parse(config_to_json(cfg)));
  CHECK(config_fingerprint(parsed) == base);

  NetworkConfig other = cfg;
  other.depth = 3;
  CHECK(config_fingerprint(other) != base);
  other = cfg;
  other.mode_fraction = 0.25;
  CHECK(config_fingerprint(other) != base);
  other = cfg;
  other.spectral_enabled = false;
  CHECK(config_fingerprint(other) != base);
}
