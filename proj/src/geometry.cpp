#include "rfae/geometry.hpp"

#include <cmath>

namespace rfae::geom {

bool is_positive_definite(const SmallMat<double>& g) {
  // leading principal minors
  const int m = g.m;
  if (m >= 1 && g(0, 0) <= 0.0) return false;
  if (m >= 2 && g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0) <= 0.0) return false;
  if (m >= 3) {
    double d3 = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) -
                g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0)) +
                g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
    if (d3 <= 0.0) return false;
  }
  if (m >= 4) {
    // expansion along the last row of the 4x4 determinant
    SmallMat<double> sub(3);
    double det = 0.0;
    for (int c = 0; c < 4; ++c) {
      int cc = 0;
      for (int j = 0; j < 4; ++j) {
        if (j == c) continue;
        for (int i = 0; i < 3; ++i) sub(i, cc) = g(i, j);
        ++cc;
      }
      double d3 = sub(0, 0) * (sub(1, 1) * sub(2, 2) - sub(1, 2) * sub(2, 1)) -
                  sub(0, 1) * (sub(1, 0) * sub(2, 2) - sub(1, 2) * sub(2, 0)) +
                  sub(0, 2) * (sub(1, 0) * sub(2, 1) - sub(1, 1) * sub(2, 0));
      det += ((3 + c) % 2 == 0 ? 1.0 : -1.0) * g(3, c) * d3;
    }
    if (det <= 0.0) return false;
  }
  return true;
}

GeometryReport geometry_report(const MetricField& mf, std::span<const double> u, double t,
                               double cond_threshold) {
  MetricDerivs<double> md = eval_metric_derivs<double>(mf.eval, u, t);
  GeometryReport rep;
  rep.m = md.m;
  rep.g = md.g;
  rep.dg = md.dg;
  rep.d2g = md.d2g;
  rep.dt_g = md.dt;
  rep.indefinite = !is_positive_definite(md.g);

  ChristoffelResult<double> chr = christoffel(md, cond_threshold);
  rep.g_inv = chr.ginv;
  rep.gamma = chr.gamma;
  rep.dgamma = christoffel_derivatives(md, chr);
  rep.riemann = riemann(chr.gamma, rep.dgamma);
  rep.ricci = ricci(rep.riemann);
  rep.residual = rep.dt_g + rep.ricci * 2.0;
  rep.residual_norm = std::sqrt(frobenius_sq_val(rep.residual));
  return rep;
}

}  // namespace rfae::geom
