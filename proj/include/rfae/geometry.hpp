#pragma once

#include <array>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "rfae/dual.hpp"
#include "rfae/smallmat.hpp"

namespace rfae::geom {

struct RankError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T>
struct Ten3 {
  int m = 0;
  std::array<T, kMaxDim * kMaxDim * kMaxDim> a{};
  explicit Ten3(int dim = 0) : m(dim) {}
  T& operator()(int i, int j, int k) { return a[std::size_t((i * m + j) * m + k)]; }
  const T& operator()(int i, int j, int k) const { return a[std::size_t((i * m + j) * m + k)]; }
};

template <class T>
struct Ten4 {
  int m = 0;
  std::array<T, kMaxDim * kMaxDim * kMaxDim * kMaxDim> a{};
  explicit Ten4(int dim = 0) : m(dim) {}
  T& operator()(int i, int j, int k, int l) {
    return a[std::size_t(((i * m + j) * m + k) * m + l)];
  }
  const T& operator()(int i, int j, int k, int l) const {
    return a[std::size_t(((i * m + j) * m + k) * m + l)];
  }
};

/// Metric evaluated at one (u,t) together with every derivative the Ricci
/// pipeline consumes: dg(l,i,j) = d_l g_ij, d2g(l1,l2,i,j) = d_l1 d_l2 g_ij,
/// dt(i,j) = d_t g_ij.
template <class T>
struct MetricDerivs {
  int m = 0;
  SmallMat<T> g;
  Ten3<T> dg;
  Ten4<T> d2g;
  SmallMat<T> dt;
};

template <class T>
using MetricFn =
    std::function<SmallMat<ad::Dual<T>>(std::span<const ad::Dual<T>>, const ad::Dual<T>&)>;

template <class T>
using EmbedFn =
    std::function<std::vector<ad::Dual<T>>(std::span<const ad::Dual<T>>, const ad::Dual<T>&)>;

/// Callable metric field over (u,t); `source` names a closed form or the
/// metric network behind the evaluator.
struct MetricField {
  int m = 0;
  MetricFn<double> eval;
  std::string source;
};

/// Seeds (u_0..u_{m-1}, t), evaluates the metric with second derivatives in u
/// and first in t, symmetrizes ((M+M^T)/2), and unpacks the channels.
template <class T>
MetricDerivs<T> eval_metric_derivs(const MetricFn<T>& f, std::span<const T> u, const T& t) {
  const int m = int(u.size());
  const int k = m + 1;  // trailing direction is t
  std::vector<ad::Dual<T>> ud(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) ud[std::size_t(i)] = ad::dual_seed<T>(u[std::size_t(i)], i, k, m);
  ad::Dual<T> td = ad::dual_seed<T>(t, m, k, m);
  SmallMat<ad::Dual<T>> gd = symmetrize(f(std::span<const ad::Dual<T>>(ud), td));

  MetricDerivs<T> md;
  md.m = m;
  md.g = SmallMat<T>(m);
  md.dg = Ten3<T>(m);
  md.d2g = Ten4<T>(m);
  md.dt = SmallMat<T>(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const ad::Dual<T>& e = gd(i, j);
      md.g(i, j) = e.v;
      md.dt(i, j) = e.d1[std::size_t(m)];
      for (int l = 0; l < m; ++l) md.dg(l, i, j) = e.d1[std::size_t(l)];
      for (int l1 = 0; l1 < m; ++l1)
        for (int l2 = 0; l2 < m; ++l2) md.d2g(l1, l2, i, j) = e.d2at(l1, l2);
    }
  return md;
}

template <class T>
struct ChristoffelResult {
  SmallMat<T> ginv;
  Ten3<T> gamma;  // gamma(i,j,l) = Gamma_ij^l, symmetric in (i,j)
};

/// Gamma_ij^l = 1/2 sum_k g^{kl} (d_j g_ik - d_k g_ij + d_i g_kj).
template <class T>
ChristoffelResult<T> christoffel(const MetricDerivs<T>& md, double cond_threshold = 1e8) {
  const int m = md.m;
  ChristoffelResult<T> r{inverse_guarded(md.g, cond_threshold), Ten3<T>(m)};
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int l = 0; l < m; ++l) {
        T acc = r.ginv(0, l) * (md.dg(j, i, 0) - md.dg(0, i, j) + md.dg(i, 0, j));
        for (int k = 1; k < m; ++k)
          acc = acc + r.ginv(k, l) * (md.dg(j, i, k) - md.dg(k, i, j) + md.dg(i, k, j));
        r.gamma(i, j, l) = acc * 0.5;
      }
  return r;
}

/// d_j Gamma_ik^l assembled from first/second metric derivatives by the
/// product rule, never by differentiating the assembled symbols:
///   d_j Gamma_ik^l = 1/2 sum_p ( d_j g^{pl} (d_k g_ip - d_p g_ik + d_i g_pk)
///                              + g^{pl} (d_kj g_ip - d_pj g_ik + d_ij g_pk) )
/// with d_j g^{pl} = - sum_{a,b} g^{pa} (d_j g_ab) g^{bl}.
/// Returned as dgamma(j,i,k,l).
template <class T>
Ten4<T> christoffel_derivatives(const MetricDerivs<T>& md, const ChristoffelResult<T>& chr) {
  const int m = md.m;
  // dginv(j,p,l) = d_j g^{pl}
  Ten3<T> dginv(m);
  for (int j = 0; j < m; ++j)
    for (int p = 0; p < m; ++p)
      for (int l = 0; l < m; ++l) {
        bool first = true;
        T acc{};
        for (int a = 0; a < m; ++a)
          for (int b = 0; b < m; ++b) {
            T term = chr.ginv(p, a) * md.dg(j, a, b) * chr.ginv(b, l);
            acc = first ? term : acc + term;
            first = false;
          }
        dginv(j, p, l) = -acc;
      }

  Ten4<T> dgamma(m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l) {
          bool first = true;
          T acc{};
          for (int p = 0; p < m; ++p) {
            T t1 = dginv(j, p, l) * (md.dg(k, i, p) - md.dg(p, i, k) + md.dg(i, p, k));
            T t2 = chr.ginv(p, l) *
                   (md.d2g(k, j, i, p) - md.d2g(p, j, i, k) + md.d2g(i, j, p, k));
            T term = t1 + t2;
            acc = first ? term : acc + term;
            first = false;
          }
          dgamma(j, i, k, l) = acc * 0.5;
        }
  return dgamma;
}

/// R_i^l_jk = d_j Gamma_ik^l - d_k Gamma_ij^l
///          + sum_p (Gamma_ik^p Gamma_pj^l - Gamma_ij^p Gamma_pk^l),
/// stored as riem(i,l,j,k); antisymmetric in (j,k).
template <class T>
Ten4<T> riemann(const Ten3<T>& gamma, const Ten4<T>& dgamma) {
  const int m = gamma.m;
  Ten4<T> riem(m);
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < m; ++l)
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k) {
          T acc = dgamma(j, i, k, l) - dgamma(k, i, j, l);
          for (int p = 0; p < m; ++p)
            acc = acc + (gamma(i, k, p) * gamma(p, j, l) - gamma(i, j, p) * gamma(p, k, l));
          riem(i, l, j, k) = acc;
        }
  return riem;
}

/// Ric_ik = sum_l R_i^l_lk (contraction of the Riemann tensor).
template <class T>
SmallMat<T> ricci(const Ten4<T>& riem) {
  const int m = riem.m;
  SmallMat<T> ric(m);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < m; ++k) {
      T acc = riem(i, 0, 0, k);
      for (int l = 1; l < m; ++l) acc = acc + riem(i, l, l, k);
      ric(i, k) = acc;
    }
  return ric;
}

template <class T>
SmallMat<T> ricci_of_metric(const MetricDerivs<T>& md, double cond_threshold = 1e8) {
  ChristoffelResult<T> chr = christoffel(md, cond_threshold);
  Ten4<T> dg = christoffel_derivatives(md, chr);
  return ricci(riemann(chr.gamma, dg));
}

/// Ricci-flow residual d_t g + 2 Ric at one (u,t).
template <class T>
SmallMat<T> ricci_flow_residual(const MetricDerivs<T>& md, double cond_threshold = 1e8) {
  return md.dt + ricci_of_metric(md, cond_threshold) * 2.0;
}

/// g~ = J^T g J for a coordinate change with jac(i,alpha) = du^i/dv^alpha.
template <class T>
SmallMat<T> transform_metric(const SmallMat<T>& g, const SmallMat<T>& jac) {
  // invertibility check on values only
  inverse_guarded(jac, 1e12);
  return matmul(transpose(jac), matmul(g, jac));
}

/// Ric~_{alpha gamma} = sum_{i,k} Ric_ik du^i/dv^alpha du^k/dv^gamma:
/// same covariant-2-tensor rule as the metric.
template <class T>
SmallMat<T> transform_ricci(const SmallMat<T>& ric, const SmallMat<T>& jac) {
  inverse_guarded(jac, 1e12);
  return matmul(transpose(jac), matmul(ric, jac));
}

/// Gram matrix (JE)^T (JE) of an embedding at (u,t); entries are the tangent
/// inner products <d_i E, d_j E>.
template <class T>
SmallMat<T> metric_from_jacobian(const EmbedFn<T>& E, std::span<const T> u, const T& t) {
  const int m = int(u.size());
  std::vector<ad::Dual<T>> ud(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) ud[std::size_t(i)] = ad::dual_seed<T>(u[std::size_t(i)], i, m, 0);
  ad::Dual<T> td = ad::dual_const<T>(t, m, 0);
  std::vector<ad::Dual<T>> e = E(std::span<const ad::Dual<T>>(ud), td);
  SmallMat<T> g(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      T acc = e[0].d1[std::size_t(i)] * e[0].d1[std::size_t(j)];
      for (std::size_t a = 1; a < e.size(); ++a)
        acc = acc + e[a].d1[std::size_t(i)] * e[a].d1[std::size_t(j)];
      g(i, j) = acc;
    }
  return g;
}

/// Second-fundamental-form route for an embedded surface (m=2 in R^3):
/// L_ij = <d^2_ij E, n>, n = d1 E x d2 E normalized,
/// L^l_k = sum_i L_ik g^{il}, R_i^l_jk = L_ik L^l_j - L_ij L^l_k,
/// residual_ij = d_t <d_i E, d_j E> + 2 sum_l (L_ij L^l_l - L_il L^l_j).
template <class T>
struct SffReport {
  SmallMat<T> g;
  SmallMat<T> dt_g;
  std::array<T, 3> n;
  SmallMat<T> L;
  SmallMat<T> L_mixed;  // L_mixed(l,k) = L^l_k
  Ten4<T> riemann_sff;
  SmallMat<T> residual_sff;
};

template <class T>
SffReport<T> second_fundamental_form(const EmbedFn<T>& E, std::span<const T> u, const T& t,
                                     double cond_threshold = 1e8) {
  if (u.size() != 2) throw std::invalid_argument("second_fundamental_form requires m=2");
  const int m = 2;
  const int k = 3;  // u1, u2, t
  std::vector<ad::Dual<T>> ud(2);
  for (int i = 0; i < m; ++i) ud[std::size_t(i)] = ad::dual_seed<T>(u[std::size_t(i)], i, k, k);
  ad::Dual<T> td = ad::dual_seed<T>(t, 2, k, k);
  std::vector<ad::Dual<T>> e = E(std::span<const ad::Dual<T>>(ud), td);
  if (e.size() != 3) throw std::invalid_argument("second_fundamental_form requires embedding in R^3");

  SffReport<T> rep{SmallMat<T>(m), SmallMat<T>(m), {}, SmallMat<T>(m), SmallMat<T>(m),
                   Ten4<T>(m),     SmallMat<T>(m)};
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      T acc = e[0].d1[std::size_t(i)] * e[0].d1[std::size_t(j)];
      T accT = e[0].d2at(i, 2) * e[0].d1[std::size_t(j)] + e[0].d1[std::size_t(i)] * e[0].d2at(j, 2);
      for (std::size_t a = 1; a < 3; ++a) {
        acc = acc + e[a].d1[std::size_t(i)] * e[a].d1[std::size_t(j)];
        accT = accT + e[a].d2at(i, 2) * e[a].d1[std::size_t(j)] +
               e[a].d1[std::size_t(i)] * e[a].d2at(j, 2);
      }
      rep.g(i, j) = acc;
      rep.dt_g(i, j) = accT;
    }

  // unit normal from the tangent cross product
  T p0 = e[0].d1[0], p1 = e[1].d1[0], p2 = e[2].d1[0];
  T q0 = e[0].d1[1], q1 = e[1].d1[1], q2 = e[2].d1[1];
  T c0 = p1 * q2 - p2 * q1;
  T c1 = p2 * q0 - p0 * q2;
  T c2 = p0 * q1 - p1 * q0;
  T csq = c0 * c0 + c1 * c1 + c2 * c2;
  if (ad::val(csq) < 1e-24) throw RankError("degenerate tangent plane (cross product ~ 0)");
  T cn = sqrt(csq);
  rep.n = {c0 / cn, c1 / cn, c2 / cn};

  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      T acc = e[0].d2at(i, j) * rep.n[0];
      acc = acc + e[1].d2at(i, j) * rep.n[1];
      acc = acc + e[2].d2at(i, j) * rep.n[2];
      rep.L(i, j) = acc;
    }

  SmallMat<T> ginv = inverse_guarded(rep.g, cond_threshold);
  for (int l = 0; l < m; ++l)
    for (int kk = 0; kk < m; ++kk) {
      T acc = rep.L(0, kk) * ginv(0, l);
      for (int i = 1; i < m; ++i) acc = acc + rep.L(i, kk) * ginv(i, l);
      rep.L_mixed(l, kk) = acc;
    }

  for (int i = 0; i < m; ++i)
    for (int l = 0; l < m; ++l)
      for (int j = 0; j < m; ++j)
        for (int kk = 0; kk < m; ++kk)
          rep.riemann_sff(i, l, j, kk) =
              rep.L(i, kk) * rep.L_mixed(l, j) - rep.L(i, j) * rep.L_mixed(l, kk);

  T trL = rep.L_mixed(0, 0) + rep.L_mixed(1, 1);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      T acc = rep.L(i, j) * trL - (rep.L(i, 0) * rep.L_mixed(0, j) + rep.L(i, 1) * rep.L_mixed(1, j));
      rep.residual_sff(i, j) = rep.dt_g(i, j) + acc * 2.0;
    }
  return rep;
}

bool is_positive_definite(const SmallMat<double>& g);

/// Everything the pipeline produces at one (u,t), in doubles, for reporting
/// and the oracle suite.
struct GeometryReport {
  int m = 0;
  SmallMat<double> g, g_inv;
  Ten3<double> dg;
  Ten4<double> d2g;
  Ten3<double> gamma;
  Ten4<double> dgamma;
  Ten4<double> riemann;
  SmallMat<double> ricci, dt_g, residual;
  double residual_norm = 0.0;
  bool indefinite = false;
};

GeometryReport geometry_report(const MetricField& mf, std::span<const double> u, double t,
                               double cond_threshold = 1e8);

}  // namespace rfae::geom
