#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <complex>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace orthoseis {

// Dense (height, width, channel) layout with the channel index fastest, so a
// pixel's channels are contiguous and spatial neighbours at fixed channel are
// strided by the channel count.
struct GridShape {
  int h = 0;
  int w = 0;
  int c = 0;

  std::int64_t count() const {
    return static_cast<std::int64_t>(h) * static_cast<std::int64_t>(w) * static_cast<std::int64_t>(c);
  }
  bool operator==(const GridShape& o) const { return h == o.h && w == o.w && c == o.c; }
  bool operator!=(const GridShape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "(" << h << ", " << w << ", " << c << ")";
    return os.str();
  }
};

inline void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

namespace detail {

template <class Scalar>
class GridBase {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  GridBase() = default;

  GridBase(int h, int w, int c) : shape_{h, w, c} {
    require(h >= 0 && w >= 0 && c >= 0, "grid dimensions must be non-negative");
    data_ = Storage::Zero(shape_.count());
  }

  explicit GridBase(GridShape s) : GridBase(s.h, s.w, s.c) {}

  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  int c() const { return shape_.c; }
  const GridShape& shape() const { return shape_; }
  std::int64_t size() const { return shape_.count(); }
  bool empty() const { return size() == 0; }

  Scalar& at(int y, int x, int ch) { return data_[index(y, x, ch)]; }
  const Scalar& at(int y, int x, int ch) const { return data_[index(y, x, ch)]; }

  Scalar& operator[](std::int64_t i) { return data_[i]; }
  const Scalar& operator[](std::int64_t i) const { return data_[i]; }

  std::int64_t index(int y, int x, int ch) const {
    return (static_cast<std::int64_t>(y) * shape_.w + x) * shape_.c + ch;
  }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  Scalar* raw() { return data_.data(); }
  const Scalar* raw() const { return data_.data(); }

  void set_zero() { data_.setZero(); }

  void fill(Scalar v) { data_.setConstant(v); }

 protected:
  GridShape shape_{};
  Storage data_;
};

}  // namespace detail

template <class T>
class RealGrid : public detail::GridBase<T> {
 public:
  using Base = detail::GridBase<T>;
  using Base::Base;

  static RealGrid constant(int h, int w, int c, T v) {
    RealGrid g(h, w, c);
    g.fill(v);
    return g;
  }

  static RealGrid scalar(T v) { return constant(1, 1, 1, v); }

  bool all_finite() const { return this->data_.isFinite().all(); }
};

template <class T>
class ComplexGrid : public detail::GridBase<std::complex<T>> {
 public:
  using Base = detail::GridBase<std::complex<T>>;
  using Base::Base;

  bool all_finite() const {
    for (std::int64_t i = 0; i < this->size(); ++i) {
      if (!std::isfinite(this->data_[i].real()) || !std::isfinite(this->data_[i].imag())) return false;
    }
    return true;
  }

  // View of the interleaved (re, im) pairs as a flat real array. Guaranteed
  // layout-compatible by the std::complex array-access rules.
  Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> real_view() {
    return {reinterpret_cast<T*>(this->raw()), 2 * this->size()};
  }
  Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> real_view() const {
    return {reinterpret_cast<const T*>(this->raw()), 2 * this->size()};
  }
};

template <class T>
void require_same_shape(const RealGrid<T>& a, const RealGrid<T>& b, const char* what) {
  require(a.shape() == b.shape(),
          std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

template <class T>
void require_same_shape(const ComplexGrid<T>& a, const ComplexGrid<T>& b, const char* what) {
  require(a.shape() == b.shape(),
          std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

template <class T>
T max_abs_difference(const RealGrid<T>& a, const RealGrid<T>& b) {
  require_same_shape(a, b, "max_abs_difference");
  if (a.empty()) return T(0);
  return (a.data() - b.data()).abs().maxCoeff();
}

template <class T>
T max_abs_difference(const ComplexGrid<T>& a, const ComplexGrid<T>& b) {
  require_same_shape(a, b, "max_abs_difference");
  T best = T(0);
  for (std::int64_t i = 0; i < a.size(); ++i) best = std::max(best, std::abs(a[i] - b[i]));
  return best;
}

}  // namespace orthoseis
