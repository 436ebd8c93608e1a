#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "rfae/autodiff.hpp"

namespace rfae::geom {

struct SingularMetricError : std::runtime_error {
  explicit SingularMetricError(double cond)
      : std::runtime_error("metric is singular or ill-conditioned (cond estimate " +
                           std::to_string(cond) + ")"),
        cond_estimate(cond) {}
  double cond_estimate;
};

constexpr int kMaxDim = 4;

/// Dense m x m matrix, m <= 4, generic over the scalar type (double, Var, or
/// Dual<...>). Row-major fixed storage; no heap.
template <class T>
struct SmallMat {
  int m = 0;
  std::array<T, kMaxDim * kMaxDim> a{};

  SmallMat() = default;
  explicit SmallMat(int dim) : m(dim) {}

  T& operator()(int i, int j) { return a[std::size_t(i * m + j)]; }
  const T& operator()(int i, int j) const { return a[std::size_t(i * m + j)]; }

  static SmallMat identity(int dim) {
    SmallMat r(dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) r(i, j) = ad::tcon<T>(i == j ? 1.0 : 0.0);
    return r;
  }
};

template <class T>
SmallMat<T> operator+(const SmallMat<T>& x, const SmallMat<T>& y) {
  SmallMat<T> r(x.m);
  for (int i = 0; i < x.m * x.m; ++i) r.a[std::size_t(i)] = x.a[std::size_t(i)] + y.a[std::size_t(i)];
  return r;
}

template <class T>
SmallMat<T> operator-(const SmallMat<T>& x, const SmallMat<T>& y) {
  SmallMat<T> r(x.m);
  for (int i = 0; i < x.m * x.m; ++i) r.a[std::size_t(i)] = x.a[std::size_t(i)] - y.a[std::size_t(i)];
  return r;
}

template <class T>
SmallMat<T> operator*(const SmallMat<T>& x, double c) {
  SmallMat<T> r(x.m);
  for (int i = 0; i < x.m * x.m; ++i) r.a[std::size_t(i)] = x.a[std::size_t(i)] * c;
  return r;
}

template <class T>
SmallMat<T> matmul(const SmallMat<T>& x, const SmallMat<T>& y) {
  SmallMat<T> r(x.m);
  for (int i = 0; i < x.m; ++i)
    for (int j = 0; j < x.m; ++j) {
      T acc = x(i, 0) * y(0, j);
      for (int k = 1; k < x.m; ++k) acc = acc + x(i, k) * y(k, j);
      r(i, j) = acc;
    }
  return r;
}

template <class T>
SmallMat<T> transpose(const SmallMat<T>& x) {
  SmallMat<T> r(x.m);
  for (int i = 0; i < x.m; ++i)
    for (int j = 0; j < x.m; ++j) r(i, j) = x(j, i);
  return r;
}

template <class T>
SmallMat<T> symmetrize(const SmallMat<T>& x) {
  SmallMat<T> r(x.m);
  for (int i = 0; i < x.m; ++i)
    for (int j = 0; j < x.m; ++j) r(i, j) = (x(i, j) + x(j, i)) * 0.5;
  return r;
}

template <class T>
double frobenius_sq_val(const SmallMat<T>& x) {
  double s = 0.0;
  for (int i = 0; i < x.m * x.m; ++i) {
    const double v = ad::val(x.a[std::size_t(i)]);
    s += v * v;
  }
  return s;
}

template <class T>
T frobenius_sq(const SmallMat<T>& x) {
  T acc = x.a[0] * x.a[0];
  for (int i = 1; i < x.m * x.m; ++i) acc = acc + x.a[std::size_t(i)] * x.a[std::size_t(i)];
  return acc;
}

template <class T>
T trace(const SmallMat<T>& x) {
  T acc = x(0, 0);
  for (int i = 1; i < x.m; ++i) acc = acc + x(i, i);
  return acc;
}

namespace detail {

// Closed-form inverses for m<=3, partial-pivot elimination for m=4. Pivot
// selection branches on values only, so the expression graph stays smooth.
template <class T>
SmallMat<T> inverse_impl(const SmallMat<T>& g) {
  const int m = g.m;
  SmallMat<T> inv(m);
  if (m == 1) {
    inv(0, 0) = 1.0 / g(0, 0);
    return inv;
  }
  if (m == 2) {
    T det = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0);
    inv(0, 0) = g(1, 1) / det;
    inv(1, 1) = g(0, 0) / det;
    inv(0, 1) = -g(0, 1) / det;
    inv(1, 0) = -g(1, 0) / det;
    return inv;
  }
  if (m == 3) {
    T c00 = g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1);
    T c01 = g(1, 2) * g(2, 0) - g(1, 0) * g(2, 2);
    T c02 = g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0);
    T det = g(0, 0) * c00 + g(0, 1) * c01 + g(0, 2) * c02;
    inv(0, 0) = c00 / det;
    inv(1, 0) = c01 / det;
    inv(2, 0) = c02 / det;
    inv(0, 1) = (g(0, 2) * g(2, 1) - g(0, 1) * g(2, 2)) / det;
    inv(1, 1) = (g(0, 0) * g(2, 2) - g(0, 2) * g(2, 0)) / det;
    inv(2, 1) = (g(0, 1) * g(2, 0) - g(0, 0) * g(2, 1)) / det;
    inv(0, 2) = (g(0, 1) * g(1, 2) - g(0, 2) * g(1, 1)) / det;
    inv(1, 2) = (g(0, 2) * g(1, 0) - g(0, 0) * g(1, 2)) / det;
    inv(2, 2) = (g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0)) / det;
    return inv;
  }
  // m == 4: Gauss-Jordan with partial pivoting on values.
  std::array<std::array<T, 8>, 4> w{};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      w[i][std::size_t(j)] = g(i, j);
      w[i][std::size_t(4 + j)] = ad::tcon<T>(i == j ? 1.0 : 0.0);
    }
  }
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    double best = std::abs(ad::val(w[col][std::size_t(col)]));
    for (int r = col + 1; r < 4; ++r) {
      const double c = std::abs(ad::val(w[r][std::size_t(col)]));
      if (c > best) {
        best = c;
        piv = r;
      }
    }
    if (best == 0.0) throw SingularMetricError(std::numeric_limits<double>::infinity());
    std::swap(w[col], w[std::size_t(piv)]);
    T d = w[col][std::size_t(col)];
    for (int j = 0; j < 8; ++j) w[col][std::size_t(j)] = w[col][std::size_t(j)] / d;
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      T f = w[r][std::size_t(col)];
      for (int j = 0; j < 8; ++j)
        w[r][std::size_t(j)] = w[r][std::size_t(j)] - f * w[col][std::size_t(j)];
    }
  }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) inv(i, j) = w[i][std::size_t(4 + j)];
  return inv;
}

}  // namespace detail

/// Inverse guarded by a Frobenius condition-number estimate
/// (|A|_F * |A^-1|_F >= kappa_2). Throws SingularMetricError above the
/// threshold or on non-finite entries.
template <class T>
SmallMat<T> inverse_guarded(const SmallMat<T>& g, double cond_threshold = 1e8) {
  SmallMat<T> inv = detail::inverse_impl(g);
  const double cond = std::sqrt(frobenius_sq_val(g) * frobenius_sq_val(inv));
  if (!std::isfinite(cond) || cond > cond_threshold) throw SingularMetricError(cond);
  return inv;
}

template <class T>
SmallMat<double> value_of(const SmallMat<T>& x) {
  SmallMat<double> r(x.m);
  for (int i = 0; i < x.m * x.m; ++i) r.a[std::size_t(i)] = ad::val(x.a[std::size_t(i)]);
  return r;
}

}  // namespace rfae::geom
