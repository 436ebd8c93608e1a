#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfae/dual.hpp"
#include "rfae/geometry.hpp"
#include "rfae/smallmat.hpp"

namespace rfae::cf {

struct ExtinctionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateProfileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Cigar soliton metric g(u,t) = I2 / (e^{4t} + |u|^2); satisfies the flow
/// exactly for all times.
template <class S>
geom::SmallMat<S> cigar_metric(const S& u0, const S& u1, const S& t) {
  using namespace ad;
  S denom = exp(t * 4.0) + u0 * u0 + u1 * u1;
  geom::SmallMat<S> g(2);
  g(0, 0) = 1.0 / denom;
  g(1, 1) = g(0, 0);
  g(0, 1) = g(0, 0) * 0.0;
  g(1, 0) = g(0, 1);
  return g;
}

/// Torus metric diag((b + a cos u^2)^2, a^2) on [0,2pi]^2; time-independent.
template <class S>
geom::SmallMat<S> torus_metric(const S& u1, double a, double b) {
  using namespace ad;
  S w = cos(u1) * a + b;
  geom::SmallMat<S> g(2);
  g(0, 0) = w * w;
  g(1, 1) = (w - w) + a * a;
  g(0, 1) = w * 0.0;
  g(1, 0) = g(0, 1);
  return g;
}

/// Shrinking-sphere radius law r(t) = sqrt(R^2 - 2(d-2)t).
double sphere_radius(double R, int d, double t);

/// Extinction time R^2 / (2(d-2)) (infinite for d=2).
double sphere_extinction_time(double R, int d);

/// (d-1)-sphere chart embedding into R^d at radius r(t), optionally displaced
/// by `shift`. u has d-1 angles.
template <class S>
std::vector<S> sphere_embed(std::span<const S> u, const S& t, double R, int d,
                            std::span<const S> shift = {}) {
  using namespace ad;
  const double r2c = 2.0 * double(d - 2);
  S rad2 = R * R - t * r2c;
  if (ad::val(rad2) <= 0.0)
    throw ExtinctionError("sphere radius extinct: R^2 - 2(d-2)t <= 0 at t=" +
                          std::to_string(ad::val(t)));
  S r = sqrt(rad2);
  std::vector<S> e(static_cast<std::size_t>(d));
  S prod = r;  // r * prod_{j<i} sin u_j, built incrementally
  for (int i = 0; i < d - 1; ++i) {
    e[std::size_t(i)] = prod * cos(u[std::size_t(i)]);
    prod = prod * sin(u[std::size_t(i)]);
  }
  e[std::size_t(d - 1)] = prod;
  if (!shift.empty()) {
    for (int i = 0; i < d; ++i) e[std::size_t(i)] = e[std::size_t(i)] + shift[std::size_t(i)];
  }
  return e;
}

/// Diagonal (d-1)-sphere metric g = r^2 du1 (x) du1 + r^2 sum_i prod_{j<i}
/// sin^2 u_j du_i (x) du_i.
template <class S>
geom::SmallMat<S> sphere_metric(std::span<const S> u, const S& t, double R, int d) {
  using namespace ad;
  const double r2c = 2.0 * double(d - 2);
  S rad2 = R * R - t * r2c;
  if (ad::val(rad2) <= 0.0)
    throw ExtinctionError("sphere radius extinct at t=" + std::to_string(ad::val(t)));
  const int m = d - 1;
  geom::SmallMat<S> g(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) g(i, j) = rad2 * 0.0;
  S acc = rad2;
  g(0, 0) = acc;
  for (int i = 1; i < m; ++i) {
    S s = sin(u[std::size_t(i - 1)]);
    acc = acc * (s * s);
    g(i, i) = acc;
  }
  return g;
}

/// Time-dependent surface-of-revolution profile (r,z) with the derivatives
/// the closed-form geometry needs. Subscripts: u = d/du1, t = d/dt.
template <class S>
struct SorProfile {
  S r, r_u, r_uu, r_t, r_ut;
  S z, z_u, z_uu, z_t, z_ut;
};

template <class S>
SorProfile<S> sor_profile_from_duals(const ad::Dual<S>& r, const ad::Dual<S>& z) {
  // expects seeds (u1, t) with k = k2 = 2
  SorProfile<S> p;
  p.r = r.v;
  p.r_u = r.d1[0];
  p.r_t = r.d1[1];
  p.r_uu = r.d2at(0, 0);
  p.r_ut = r.d2at(0, 1);
  p.z = z.v;
  p.z_u = z.d1[0];
  p.z_t = z.d1[1];
  p.z_uu = z.d2at(0, 0);
  p.z_ut = z.d2at(0, 1);
  return p;
}

/// Metric diag((d_u r)^2 + (d_u z)^2, r^2).
template <class S>
geom::SmallMat<S> sor_metric(const SorProfile<S>& p) {
  if (ad::val(p.r) <= 0.0) throw DegenerateProfileError("surface-of-revolution radius r <= 0");
  geom::SmallMat<S> g(2);
  g(0, 0) = p.r_u * p.r_u + p.z_u * p.z_u;
  g(1, 1) = p.r * p.r;
  g(0, 1) = p.r * 0.0;
  g(1, 0) = g(0, 1);
  return g;
}

/// Closed-form Christoffel symbols of the surface-of-revolution metric:
/// Gamma_11^1 = (r_u r_uu + z_u z_uu)/f, Gamma_22^1 = -r r_u/f,
/// Gamma_12^2 = Gamma_21^2 = r_u/r, all others zero, f = r_u^2 + z_u^2.
template <class S>
geom::Ten3<S> sor_christoffel(const SorProfile<S>& p) {
  if (ad::val(p.r) <= 0.0) throw DegenerateProfileError("surface-of-revolution radius r <= 0");
  S f = p.r_u * p.r_u + p.z_u * p.z_u;
  geom::Ten3<S> gamma(2);
  S zero = f * 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int l = 0; l < 2; ++l) gamma(i, j, l) = zero;
  gamma(0, 0, 0) = (p.r_u * p.r_uu + p.z_u * p.z_uu) / f;
  gamma(1, 1, 0) = -(p.r * p.r_u) / f;
  gamma(0, 1, 1) = p.r_u / p.r;
  gamma(1, 0, 1) = gamma(0, 1, 1);
  return gamma;
}

/// Ricci tensor of the surface-of-revolution metric, assembled from profile
/// derivatives up to second order only (diagonal; Ric_12 = 0 identically):
///   Ric_11 = -r_uu/r + r_u (r_u r_uu + z_u z_uu) / (r f)
///   Ric_22 = K r^2 with K = Ric_11 / f   (2-d: Ric = K g)
template <class S>
geom::SmallMat<S> sor_ricci(const SorProfile<S>& p) {
  if (ad::val(p.r) <= 0.0) throw DegenerateProfileError("surface-of-revolution radius r <= 0");
  S f = p.r_u * p.r_u + p.z_u * p.z_u;
  S ric11 = -(p.r_uu / p.r) + (p.r_u * (p.r_u * p.r_uu + p.z_u * p.z_uu)) / (p.r * f);
  geom::SmallMat<S> ric(2);
  ric(0, 0) = ric11;
  ric(1, 1) = ric11 * ((p.r * p.r) / f);
  ric(0, 1) = ric11 * 0.0;
  ric(1, 0) = ric(0, 1);
  return ric;
}

/// Profile map (u1,t) -> value, lifted to forward duals so exact derivatives
/// flow through.
using ProfileFn =
    std::function<ad::Dual<double>(const ad::Dual<double>&, const ad::Dual<double>&)>;

/// Doubles-path convenience: evaluates profile callables with forward duals
/// and returns metric, Christoffels and Ricci. Used by oracles and verify.
struct SorEval {
  geom::SmallMat<double> g;
  geom::Ten3<double> gamma;
  geom::SmallMat<double> ricci;
};
SorEval sor_eval(const ProfileFn& r_fn, const ProfileFn& z_fn, double u1, double t);

/// MetricField wrappers for the oracle suite. The surface-of-revolution field
/// additionally needs the analytic u-derivatives of the profiles, so the
/// generic pipeline can differentiate the metric entries one more time.
geom::MetricField cigar_field();
geom::MetricField torus_field(double a, double b);
geom::MetricField sphere_field(double R, int d);
geom::MetricField sor_field(const ProfileFn& r_fn, const ProfileFn& r_u_fn, const ProfileFn& z_fn,
                            const ProfileFn& z_u_fn);

}  // namespace rfae::cf
