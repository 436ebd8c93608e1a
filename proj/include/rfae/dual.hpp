#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>

#include "rfae/autodiff.hpp"

namespace rfae::ad {

/// Forward-mode scalar carrying first derivatives along up to `k` seeded
/// directions and second derivatives for direction pairs among the first
/// `k2 <= k` directions (upper triangle, symmetric by construction:
/// d2(a,b) and d2(b,a) read the same slot). With k==0 the value channel is
/// untouched extra work, so evaluation reproduces plain arithmetic exactly.
///
/// T is the underlying scalar: double for closed forms and oracles, Var when
/// reverse mode over parameters wraps the whole forward evaluation.
template <class T>
struct Dual {
  static constexpr int MAXK = 5;
  static constexpr int MAXT = MAXK * (MAXK + 1) / 2;

  std::int8_t k = 0;
  std::int8_t k2 = 0;
  T v{};
  std::array<T, MAXK> d1{};
  std::array<T, MAXT> d2{};

  Dual() = default;

  static int tri(int i, int j) {  // i,j < k2, order-free
    if (i > j) std::swap(i, j);
    return j * (j + 1) / 2 + i;
  }
  int ntri() const { return int(k2) * (int(k2) + 1) / 2; }

  const T& d2at(int i, int j) const { return d2[std::size_t(tri(i, j))]; }
};

// Scalar-zero / scalar-one helpers: for Var these must be tape constants.
template <class T>
T tzero();
template <class T>
T tone();
template <>
inline double tzero<double>() {
  return 0.0;
}
template <>
inline double tone<double>() {
  return 1.0;
}
template <>
inline Var tzero<Var>() {
  return konst(0.0);
}
template <>
inline Var tone<Var>() {
  return konst(1.0);
}

/// Constant with matching seed shape (all derivative channels zero).
template <class T>
Dual<T> dual_const(const T& v, int k, int k2) {
  Dual<T> r;
  r.k = std::int8_t(k);
  r.k2 = std::int8_t(k2);
  r.v = v;
  for (int i = 0; i < k; ++i) r.d1[std::size_t(i)] = tzero<T>();
  for (int i = 0; i < r.ntri(); ++i) r.d2[std::size_t(i)] = tzero<T>();
  return r;
}

/// Seeded input: unit first derivative along direction `dir`.
template <class T>
Dual<T> dual_seed(const T& v, int dir, int k, int k2) {
  Dual<T> r = dual_const<T>(v, k, k2);
  r.d1[std::size_t(dir)] = tone<T>();
  return r;
}

namespace detail {
inline void check_shape(std::int8_t ak, std::int8_t a2, std::int8_t bk, std::int8_t b2) {
  if (ak != bk || a2 != b2) throw std::logic_error("dual shape mismatch");
}
}  // namespace detail

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  detail::check_shape(a.k, a.k2, b.k, b.k2);
  Dual<T> r;
  r.k = a.k;
  r.k2 = a.k2;
  r.v = a.v + b.v;
  for (int i = 0; i < r.k; ++i) r.d1[i] = a.d1[i] + b.d1[i];
  for (int i = 0; i < r.ntri(); ++i) r.d2[i] = a.d2[i] + b.d2[i];
  return r;
}

template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  detail::check_shape(a.k, a.k2, b.k, b.k2);
  Dual<T> r;
  r.k = a.k;
  r.k2 = a.k2;
  r.v = a.v - b.v;
  for (int i = 0; i < r.k; ++i) r.d1[i] = a.d1[i] - b.d1[i];
  for (int i = 0; i < r.ntri(); ++i) r.d2[i] = a.d2[i] - b.d2[i];
  return r;
}

template <class T>
Dual<T> operator-(const Dual<T>& a) {
  Dual<T> r;
  r.k = a.k;
  r.k2 = a.k2;
  r.v = -a.v;
  for (int i = 0; i < r.k; ++i) r.d1[i] = -a.d1[i];
  for (int i = 0; i < r.ntri(); ++i) r.d2[i] = -a.d2[i];
  return r;
}

template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  detail::check_shape(a.k, a.k2, b.k, b.k2);
  Dual<T> r;
  r.k = a.k;
  r.k2 = a.k2;
  r.v = a.v * b.v;
  for (int i = 0; i < r.k; ++i) r.d1[i] = a.d1[i] * b.v + a.v * b.d1[i];
  for (int j = 0; j < int(r.k2); ++j)
    for (int i = 0; i <= j; ++i) {
      const int t = Dual<T>::tri(i, j);
      r.d2[t] = a.d2[t] * b.v + a.d1[i] * b.d1[j] + a.d1[j] * b.d1[i] + a.v * b.d2[t];
    }
  return r;
}

template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  detail::check_shape(a.k, a.k2, b.k, b.k2);
  Dual<T> r;
  r.k = a.k;
  r.k2 = a.k2;
  r.v = a.v / b.v;
  for (int i = 0; i < r.k; ++i) r.d1[i] = (a.d1[i] - r.v * b.d1[i]) / b.v;
  for (int j = 0; j < int(r.k2); ++j)
    for (int i = 0; i <= j; ++i) {
      const int t = Dual<T>::tri(i, j);
      r.d2[t] = (a.d2[t] - r.v * b.d2[t] - r.d1[i] * b.d1[j] - r.d1[j] * b.d1[i]) / b.v;
    }
  return r;
}

// Mixed scalar/dual forms (the scalar is a constant in all directions).
template <class T>
Dual<T> operator+(const Dual<T>& a, double c) {
  Dual<T> r = a;
  r.v = a.v + c;
  return r;
}
template <class T>
Dual<T> operator+(double c, const Dual<T>& a) {
  return a + c;
}
template <class T>
Dual<T> operator-(const Dual<T>& a, double c) {
  return a + (-c);
}
template <class T>
Dual<T> operator-(double c, const Dual<T>& a) {
  return (-a) + c;
}
template <class T>
Dual<T> operator*(const Dual<T>& a, double c) {
  Dual<T> r;
  r.k = a.k;
  r.k2 = a.k2;
  r.v = a.v * c;
  for (int i = 0; i < r.k; ++i) r.d1[i] = a.d1[i] * c;
  for (int i = 0; i < r.ntri(); ++i) r.d2[i] = a.d2[i] * c;
  return r;
}
template <class T>
Dual<T> operator*(double c, const Dual<T>& a) {
  return a * c;
}
template <class T>
Dual<T> operator/(const Dual<T>& a, double c) {
  return a * (1.0 / c);
}
template <class T>
Dual<T> operator/(double c, const Dual<T>& a) {
  T f0 = c / a.v;
  T f1 = -f0 / a.v;
  T f2 = -2.0 * (f1 / a.v);
  return chain(a, f0, f1, f2);
}

template <class T>
double val(const Dual<T>& d) {
  return val(d.v);
}

/// Scale by a direction-free scalar of type T (e.g. a parameter Var).
template <class T>
Dual<T> scale(const Dual<T>& a, const T& c) {
  Dual<T> r;
  r.k = a.k;
  r.k2 = a.k2;
  r.v = a.v * c;
  for (int i = 0; i < r.k; ++i) r.d1[i] = a.d1[i] * c;
  for (int i = 0; i < r.ntri(); ++i) r.d2[i] = a.d2[i] * c;
  return r;
}

template <class T>
Dual<T> shift(const Dual<T>& a, const T& c) {
  Dual<T> r = a;
  r.v = a.v + c;
  return r;
}

/// Chain rule for y=f(x) given f(x), f'(x), f''(x) as T-expressions.
template <class T>
Dual<T> chain(const Dual<T>& a, const T& f0, const T& f1, const T& f2) {
  Dual<T> r;
  r.k = a.k;
  r.k2 = a.k2;
  r.v = f0;
  for (int i = 0; i < r.k; ++i) r.d1[i] = f1 * a.d1[i];
  for (int j = 0; j < int(r.k2); ++j)
    for (int i = 0; i <= j; ++i) {
      const int t = Dual<T>::tri(i, j);
      r.d2[t] = f2 * (a.d1[i] * a.d1[j]) + f1 * a.d2[t];
    }
  return r;
}

template <class T>
Dual<T> exp(const Dual<T>& a) {
  T y = exp(a.v);
  return chain(a, y, y, y);
}

template <class T>
Dual<T> log(const Dual<T>& a) {
  T y = log(a.v);
  T f1 = 1.0 / a.v;
  T f2 = -f1 * f1;
  return chain(a, y, f1, f2);
}

template <class T>
Dual<T> sin(const Dual<T>& a) {
  T s = sin(a.v);
  T c = cos(a.v);
  return chain(a, s, c, -s);
}

template <class T>
Dual<T> cos(const Dual<T>& a) {
  T c = cos(a.v);
  T s = sin(a.v);
  return chain(a, c, -s, -c);
}

template <class T>
Dual<T> tanh(const Dual<T>& a) {
  T y = tanh(a.v);
  T s = 1.0 - y * y;  // f'
  T f2 = -2.0 * (y * s);
  return chain(a, y, s, f2);
}

template <class T>
Dual<T> erf(const Dual<T>& a) {
  T y = erf(a.v);
  T f1 = 1.1283791670955126 * exp(-(a.v * a.v));
  T f2 = -2.0 * (a.v * f1);
  return chain(a, y, f1, f2);
}

template <class T>
Dual<T> sqrt(const Dual<T>& a) {
  T y = sqrt(a.v);
  T f1 = 0.5 / y;
  T f2 = -0.5 * (f1 / a.v);
  return chain(a, y, f1, f2);
}

template <class T>
Dual<T> pow(const Dual<T>& a, double c) {
  T y = pow(a.v, c);
  T f1 = c * pow(a.v, c - 1.0);
  T f2 = (c * (c - 1.0)) * pow(a.v, c - 2.0);
  return chain(a, y, f1, f2);
}

template <class T>
Dual<T> sqr(const Dual<T>& a) {
  return a * a;
}

}  // namespace rfae::ad
