#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "elunet/rng.hpp"

namespace elunet {

// All activations and weights live in rank-4 NCHW tensors. Flat index of
// (n, c, h, w) is ((n*C + c)*H + h)*W + w.
struct Shape4 {
  std::int64_t n = 0, c = 0, h = 0, w = 0;

  std::int64_t count() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

inline std::int64_t checked_count(Shape4 s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
    throw std::invalid_argument("negative tensor extent " + s.str());
  __int128 total = static_cast<__int128>(s.n) * s.c;
  total *= s.h;
  total *= s.w;
  if (total > (std::int64_t{1} << 46))
    throw std::overflow_error("tensor extent overflow " + s.str());
  return static_cast<std::int64_t>(total);
}

template <typename T>
class Tensor4 {
  static_assert(std::is_floating_point_v<T>);

 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape)
      : shape_(shape), count_(checked_count(shape)), data_(new T[count_]) {
    std::fill_n(data_.get(), count_, T(0));
  }

  Tensor4(const Tensor4& other)
      : shape_(other.shape_), count_(other.count_),
        data_(other.count_ ? new T[other.count_] : nullptr) {
    std::copy_n(other.data_.get(), count_, data_.get());
  }
  Tensor4& operator=(const Tensor4& other) {
    if (this != &other) *this = Tensor4(other);
    return *this;
  }
  Tensor4(Tensor4&&) noexcept = default;
  Tensor4& operator=(Tensor4&&) noexcept = default;

  static Tensor4 zeros(Shape4 shape) { return Tensor4(shape); }

  // Contents unspecified; for outputs that are fully overwritten.
  static Tensor4 uninitialized(Shape4 shape) {
    Tensor4 t;
    t.shape_ = shape;
    t.count_ = checked_count(shape);
    t.data_.reset(new T[t.count_]);
    return t;
  }

  const Shape4& shape() const { return shape_; }
  std::int64_t size() const { return count_; }
  bool empty() const { return count_ == 0; }

  T* data() { return data_.get(); }
  const T* data() const { return data_.get(); }
  std::span<T> values() { return {data_.get(), static_cast<std::size_t>(count_)}; }
  std::span<const T> values() const {
    return {data_.get(), static_cast<std::size_t>(count_)};
  }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[index(n, c, h, w)];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[index(n, c, h, w)];
  }

  T& operator[](std::int64_t i) { return data_[i]; }
  const T& operator[](std::int64_t i) const { return data_[i]; }

 private:
  Shape4 shape_;
  std::int64_t count_ = 0;
  std::unique_ptr<T[]> data_;
};

template <typename T>
Tensor4<T> zeros(Shape4 shape) {
  return Tensor4<T>(shape);
}

// I.i.d. Gaussian samples; consumes exactly size() draws from rng.
template <typename T>
Tensor4<T> randn(Shape4 shape, double mean, double stddev, Rng& rng) {
  if (stddev < 0) throw std::invalid_argument("randn: negative stddev");
  Tensor4<T> out = Tensor4<T>::uninitialized(shape);
  for (std::int64_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(rng.normal(mean, stddev));
  return out;
}

namespace detail {
template <typename T>
void require_same_shape(const Tensor4<T>& a, const Tensor4<T>& b, const char* op) {
  if (!(a.shape() == b.shape()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape().str() + " vs " + b.shape().str());
}
}  // namespace detail

template <typename T, typename F>
Tensor4<T> map(const Tensor4<T>& a, F&& fn) {
  Tensor4<T> out = Tensor4<T>::uninitialized(a.shape());
  const T* __restrict__ src = a.data();
  T* __restrict__ dst = out.data();
  const std::int64_t count = a.size();
  for (std::int64_t i = 0; i < count; ++i) dst[i] = fn(src[i]);
  return out;
}

template <typename T, typename F>
Tensor4<T> zip(const Tensor4<T>& a, const Tensor4<T>& b, F&& fn) {
  detail::require_same_shape(a, b, "zip");
  Tensor4<T> out = Tensor4<T>::uninitialized(a.shape());
  const T* __restrict__ sa = a.data();
  const T* __restrict__ sb = b.data();
  T* __restrict__ dst = out.data();
  const std::int64_t count = a.size();
  for (std::int64_t i = 0; i < count; ++i) dst[i] = fn(sa[i], sb[i]);
  return out;
}

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
  return zip(a, b, [](T x, T y) { return x + y; });
}

template <typename T>
Tensor4<T> sub(const Tensor4<T>& a, const Tensor4<T>& b) {
  return zip(a, b, [](T x, T y) { return x - y; });
}

template <typename T>
Tensor4<T> hadamard(const Tensor4<T>& a, const Tensor4<T>& b) {
  return zip(a, b, [](T x, T y) { return x * y; });
}

template <typename T>
Tensor4<T> scale(const Tensor4<T>& a, T s) {
  return map(a, [s](T x) { return x * s; });
}

// Fixed left-to-right reduction, accumulated in double.
template <typename T>
T sum(const Tensor4<T>& a) {
  double acc = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]);
  return static_cast<T>(acc);
}

template <typename T>
T max_value(const Tensor4<T>& a) {
  if (a.empty()) throw std::invalid_argument("max_value: empty tensor");
  T m = a[0];
  for (std::int64_t i = 1; i < a.size(); ++i) m = a[i] > m ? a[i] : m;
  return m;
}

template <typename T>
bool all_finite(const Tensor4<T>& a) {
  for (std::int64_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

template <typename T>
bool all_finite(std::span<const T> v) {
  for (T x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace elunet
