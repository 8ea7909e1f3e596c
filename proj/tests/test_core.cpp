#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <set>
#include <vector>

#include "orthoseis/fft.hpp"
#include "orthoseis/grid.hpp"
#include "orthoseis/rng.hpp"

using namespace orthoseis;

namespace {

// Independent O((HW)^2) reference transform with the same convention as
// fft2: forward normalized by 1/(H*W).
template <class T>
ComplexGrid<double> dft2_reference(const RealGrid<T>& x) {
  const int h = x.h(), w = x.w(), c = x.c();
  ComplexGrid<double> out(h, w, c);
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      for (int ch = 0; ch < c; ++ch) {
        std::complex<double> acc(0.0, 0.0);
        for (int y = 0; y < h; ++y) {
          for (int xx = 0; xx < w; ++xx) {
            const double angle = -two_pi * (static_cast<double>(u) * y / h +
                                            static_cast<double>(v) * xx / w);
            acc += static_cast<double>(x.at(y, xx, ch)) *
                   std::complex<double>(std::cos(angle), std::sin(angle));
          }
        }
        out.at(u, v, ch) = acc / static_cast<double>(h * w);
      }
    }
  }
  return out;
}

template <class T>
RealGrid<T> random_grid(int h, int w, int c, RngState& rng) {
  RealGrid<T> g(h, w, c);
  for (std::int64_t i = 0; i < g.size(); ++i) g[i] = static_cast<T>(rng.normal());
  return g;
}

}  // namespace

TEST_CASE("rng streams are reproducible and seed-sensitive") {
  RngState a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t va = a.next_u64();
    CHECK(va == b.next_u64());
  }
  bool any_diff = false;
  RngState a2(42);
  for (int i = 0; i < 100; ++i) any_diff |= (a2.next_u64() != c.next_u64());
  CHECK(any_diff);
}

TEST_CASE("rng uniform stays in [0, 1) and has a sane mean") {
  RngState rng(7);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.005);
}

TEST_CASE("rng normal moments") {
  RngState rng(11);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng split produces decorrelated child streams") {
  RngState root(123);
  RngState c0 = root.split(0);
  RngState c1 = root.split(1);
  int agree = 0;
  for (int i = 0; i < 64; ++i) agree += (c0.next_u64() == c1.next_u64());
  CHECK(agree == 0);
  RngState c0_again = root.split(0);
  RngState c0_ref = RngState(123).split(0);
  for (int i = 0; i < 16; ++i) CHECK(c0_again.next_u64() == c0_ref.next_u64());
}

TEST_CASE("rng below is in range and shuffle permutes") {
  RngState rng(5);
  for (int i = 0; i < 1000; ++i) CHECK(rng.below(7) < 7);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  rng.shuffle(v.begin(), v.end());
  std::set<int> s(v.begin(), v.end());
  CHECK(s.size() == 10);
}

TEST_CASE("grid layout is channel-fastest row-major") {
  RealGrid<float> g(3, 4, 2);
  g.at(1, 2, 1) = 5.0f;
  CHECK(g[(1 * 4 + 2) * 2 + 1] == 5.0f);
  CHECK(g.index(2, 3, 0) == (2 * 4 + 3) * 2);
  CHECK(g.size() == 24);
  CHECK_THROWS(RealGrid<float>(-1, 2, 2));
}

TEST_CASE("fft2 matches the naive reference transform (64-bit)") {
  RngState rng(1001);
  RealGrid<double> x = random_grid<double>(16, 8, 2, rng);
  ComplexGrid<double> fast = fft2(x);
  ComplexGrid<double> slow = dft2_reference(x);
  CHECK(max_abs_difference(fast, slow) < 1e-12);
}

TEST_CASE("fft2 matches the naive reference transform (32-bit)") {
  RngState rng(1002);
  RealGrid<float> x = random_grid<float>(16, 16, 1, rng);
  ComplexGrid<float> fast = fft2(x);
  ComplexGrid<double> slow = dft2_reference(x);
  double worst = 0.0;
  for (std::int64_t i = 0; i < fast.size(); ++i) {
    worst = std::max(worst, std::abs(std::complex<double>(fast[i].real(), fast[i].imag()) - slow[i]));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("ifft2(fft2(x)) returns x exactly up to roundoff") {
  RngState rng(1003);
  SUBCASE("64-bit") {
    RealGrid<double> x = random_grid<double>(32, 16, 3, rng);
    ComplexGrid<double> back = ifft2(fft2(x));
    double worst = 0.0;
    for (std::int64_t i = 0; i < back.size(); ++i) {
      worst = std::max(worst, std::abs(back[i] - std::complex<double>(x[i], 0.0)));
    }
    CHECK(worst < 1e-10);
  }
  SUBCASE("32-bit") {
    RealGrid<float> x = random_grid<float>(64, 64, 1, rng);
    ComplexGrid<float> back = ifft2(fft2(x));
    double worst = 0.0;
    for (std::int64_t i = 0; i < back.size(); ++i) {
      worst = std::max(worst,
                       static_cast<double>(std::abs(back[i] - std::complex<float>(x[i], 0.0f))));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("fft2 is linear") {
  RngState rng(1004);
  RealGrid<double> x = random_grid<double>(8, 8, 1, rng);
  RealGrid<double> y = random_grid<double>(8, 8, 1, rng);
  const double alpha = 1.7, beta = -0.3;
  RealGrid<double> combo(8, 8, 1);
  combo.data() = alpha * x.data() + beta * y.data();
  ComplexGrid<double> lhs = fft2(combo);
  ComplexGrid<double> fx = fft2(x);
  ComplexGrid<double> fy = fft2(y);
  double worst = 0.0;
  for (std::int64_t i = 0; i < lhs.size(); ++i) {
    worst = std::max(worst, std::abs(lhs[i] - (alpha * fx[i] + beta * fy[i])));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("fft2 satisfies Parseval under the 1/(HW) convention") {
  RngState rng(1005);
  RealGrid<double> x = random_grid<double>(16, 16, 1, rng);
  ComplexGrid<double> f = fft2(x);
  double spectral = 0.0;
  for (std::int64_t i = 0; i < f.size(); ++i) spectral += std::norm(f[i]);
  const double spatial = x.data().square().sum() / (16.0 * 16.0);
  CHECK(spectral == doctest::Approx(spatial).epsilon(1e-12));
}

TEST_CASE("fft2 rejects non-power-of-two dims") {
  RealGrid<double> x(12, 8, 1);
  CHECK_THROWS_WITH_AS(fft2(x), doctest::Contains("powers of two"), std::invalid_argument);
  RealGrid<double> y(8, 10, 1);
  CHECK_THROWS(fft2(y));
}

TEST_CASE("fft2 of a constant grid concentrates energy at DC") {
  RealGrid<double> x = RealGrid<double>::constant(8, 8, 1, 3.25);
  ComplexGrid<double> f = fft2(x);
  CHECK(std::abs(f.at(0, 0, 0) - std::complex<double>(3.25, 0.0)) < 1e-12);
  double off_dc = 0.0;
  for (std::int64_t i = 1; i < f.size(); ++i) off_dc = std::max(off_dc, std::abs(f[i]));
  CHECK(off_dc < 1e-12);
}
