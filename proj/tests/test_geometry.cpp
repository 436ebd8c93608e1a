#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "rfae/closed_forms.hpp"
#include "rfae/geometry.hpp"
#include "rfae/rng.hpp"

using namespace rfae;
using ad::Dual;
using geom::MetricField;
using geom::SmallMat;
using D = Dual<double>;

namespace {

constexpr double pi = std::numbers::pi;

/// Random smooth positive-definite 2-d metric field B^T B + 0.4 I with
/// trig/polynomial entries in (u,t).
MetricField random_smooth_metric(Rng& rng) {
  std::array<double, 12> c{};
  for (auto& v : c) v = rng.uniform(-0.5, 0.5);
  MetricField mf;
  mf.m = 2;
  mf.source = "random-smooth";
  mf.eval = [c](std::span<const D> u, const D& t) {
    SmallMat<D> B(2);
    B(0, 0) = 1.0 + c[0] * sin(u[0]) + c[1] * (u[1] * u[1]) + c[2] * t;
    B(0, 1) = c[3] * cos(u[1]) + c[4] * (u[0] * t);
    B(1, 0) = c[5] * sin(u[0] * u[1]) + c[6] * t;
    B(1, 1) = 1.0 + c[7] * cos(u[0]) + c[8] * (u[0] * u[0]) + c[9] * (t * t);
    SmallMat<D> g = matmul(transpose(B), B);
    g(0, 0) = g(0, 0) + 0.4;
    g(1, 1) = g(1, 1) + 0.4;
    return g;
  };
  return mf;
}

/// Graph surface E = (u1, u2, h(u,t)) with hand-differentiated slope, so the
/// induced metric is expressible without nested duals.
struct GraphSurface {
  std::array<double, 6> c{};
  template <class S>
  S height(const S& u0, const S& u1, const S& t) const {
    return c[0] * (u0 * u0) + c[1] * (u0 * u1) + c[2] * (u1 * u1) +
           c[3] * (sin(u0) * cos(u1)) * (1.0 + c[4] * t) + c[5] * (u0 * u0) * u1;
  }
  template <class S>
  S h_u0(const S& u0, const S& u1, const S& t) const {
    return 2.0 * c[0] * u0 + c[1] * u1 + c[3] * (cos(u0) * cos(u1)) * (1.0 + c[4] * t) +
           2.0 * c[5] * (u0 * u1);
  }
  template <class S>
  S h_u1(const S& u0, const S& u1, const S& t) const {
    return c[1] * u0 + 2.0 * c[2] * u1 - c[3] * (sin(u0) * sin(u1)) * (1.0 + c[4] * t) +
           c[5] * (u0 * u0);
  }
  geom::EmbedFn<double> embedding() const {
    return [this](std::span<const D> u, const D& t) {
      return std::vector<D>{u[0], u[1], height(u[0], u[1], t)};
    };
  }
  MetricField gram_field() const {
    MetricField mf;
    mf.m = 2;
    mf.source = "graph-surface-gram";
    mf.eval = [this](std::span<const D> u, const D& t) {
      D h0 = h_u0(u[0], u[1], t);
      D h1 = h_u1(u[0], u[1], t);
      SmallMat<D> g(2);
      g(0, 0) = 1.0 + h0 * h0;
      g(0, 1) = h0 * h1;
      g(1, 0) = g(0, 1);
      g(1, 1) = 1.0 + h1 * h1;
      return g;
    };
    return mf;
  }
};

double max_abs(const SmallMat<double>& x) {
  double m = 0;
  for (int i = 0; i < x.m; ++i)
    for (int j = 0; j < x.m; ++j) m = std::max(m, std::abs(x(i, j)));
  return m;
}

/// Plain metric values via a zero-seed dual evaluation.
SmallMat<double> metric_values(const MetricField& mf, std::array<double, 2> u, double t) {
  std::vector<D> ud = {ad::dual_const<double>(u[0], 0, 0), ad::dual_const<double>(u[1], 0, 0)};
  D td = ad::dual_const<double>(t, 0, 0);
  return geom::value_of(mf.eval(ud, td));
}

geom::Ten3<double> christoffel_at(const MetricField& mf, std::array<double, 2> u, double t) {
  auto md = geom::eval_metric_derivs<double>(mf.eval, std::span<const double>(u), t);
  return geom::christoffel(md).gamma;
}

MetricField sphere_chart_field(double r) {
  MetricField mf;
  mf.m = 2;
  mf.source = "round-sphere";
  mf.eval = [r](std::span<const D> u, const D& t) {
    (void)t;
    SmallMat<D> g(2);
    D s = sin(u[0]);
    g(0, 0) = (s - s) + r * r;
    g(1, 1) = (s * s) * (r * r);
    g(0, 1) = s * 0.0;
    g(1, 0) = g(0, 1);
    return g;
  };
  return mf;
}

}  // namespace

TEST_CASE("metric_from_jacobian: plane, linear map, sphere chart") {
  geom::EmbedFn<double> plane = [](std::span<const D> u, const D& t) {
    (void)t;
    return std::vector<D>{u[0], u[1], u[0] * 0.0};
  };
  std::array<double, 2> u0 = {0.3, -0.7};
  auto g = geom::metric_from_jacobian<double>(plane, u0, 0.0);
  CHECK(g(0, 0) == doctest::Approx(1.0));
  CHECK(g(1, 1) == doctest::Approx(1.0));
  CHECK(g(0, 1) == doctest::Approx(0.0));

  // E = A u for a constant 3x2 A gives A^T A
  const double A[3][2] = {{1.0, 2.0}, {-0.5, 0.3}, {0.8, -1.1}};
  geom::EmbedFn<double> lin = [&A](std::span<const D> u, const D& t) {
    (void)t;
    std::vector<D> e;
    for (int r = 0; r < 3; ++r) e.push_back(u[0] * A[r][0] + u[1] * A[r][1]);
    return e;
  };
  auto gl = geom::metric_from_jacobian<double>(lin, u0, 0.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double want = 0;
      for (int r = 0; r < 3; ++r) want += A[r][i] * A[r][j];
      CHECK(gl(i, j) == doctest::Approx(want).epsilon(1e-12));
    }

  geom::EmbedFn<double> sphere = [](std::span<const D> u, const D& t) {
    (void)t;
    return std::vector<D>{sin(u[0]) * cos(u[1]), sin(u[0]) * sin(u[1]), cos(u[0])};
  };
  std::array<double, 2> us = {pi / 3.0, 0.8};
  auto gs = geom::metric_from_jacobian<double>(sphere, us, 0.0);
  CHECK(gs(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(gs(1, 1) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(std::abs(gs(0, 1)) < 1e-12);
}

TEST_CASE("christoffel: constant metric, round sphere, cigar origin") {
  MetricField constant;
  constant.m = 2;
  constant.eval = [](std::span<const D> u, const D& t) {
    (void)t;
    SmallMat<D> g(2);
    g(0, 0) = u[0] * 0.0 + 2.0;
    g(0, 1) = u[0] * 0.0 + 0.3;
    g(1, 0) = g(0, 1);
    g(1, 1) = u[0] * 0.0 + 1.5;
    return g;
  };
  auto gamma_c = christoffel_at(constant, {0.4, -1.0}, 0.2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int l = 0; l < 2; ++l) CHECK(std::abs(gamma_c(i, j, l)) < 1e-14);

  auto gamma_s = christoffel_at(sphere_chart_field(1.0), {pi / 4.0, 0.3}, 0.0);
  CHECK(gamma_s(1, 1, 0) == doctest::Approx(-0.5).epsilon(1e-10));         // Gamma_22^1
  CHECK(gamma_s(0, 1, 1) == doctest::Approx(1.0).epsilon(1e-10));          // Gamma_12^2 = cot(pi/4)
  CHECK(gamma_s(1, 0, 1) == doctest::Approx(gamma_s(0, 1, 1)).epsilon(1e-12));
  CHECK(std::abs(gamma_s(0, 0, 0)) < 1e-12);
  CHECK(std::abs(gamma_s(0, 0, 1)) < 1e-12);
  CHECK(std::abs(gamma_s(0, 1, 0)) < 1e-12);
  CHECK(std::abs(gamma_s(1, 1, 1)) < 1e-12);

  auto gamma_cigar = christoffel_at(cf::cigar_field(), {0.0, 0.0}, 0.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int l = 0; l < 2; ++l) CHECK(std::abs(gamma_cigar(i, j, l)) < 1e-14);
}

TEST_CASE("christoffel derivatives: sphere analytic value and FD cross-check") {
  MetricField sphere = sphere_chart_field(1.0);
  std::array<double, 2> u0 = {pi / 4.0, 0.3};
  auto md = geom::eval_metric_derivs<double>(sphere.eval, std::span<const double>(u0), 0.0);
  auto chr = geom::christoffel(md);
  auto dg = geom::christoffel_derivatives(md, chr);
  // d_1 Gamma_22^1 = -cos(2 u1) = 0 at pi/4
  CHECK(std::abs(dg(0, 1, 1, 0)) < 1e-10);

  Rng rng(3);
  for (int trial = 0; trial < 4; ++trial) {
    MetricField mf = random_smooth_metric(rng);
    std::array<double, 2> u = {rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)};
    double t = rng.uniform(0.0, 0.5);
    auto mdr = geom::eval_metric_derivs<double>(mf.eval, std::span<const double>(u), t);
    auto chrr = geom::christoffel(mdr);
    auto dgr = geom::christoffel_derivatives(mdr, chrr);
    const double h = 1e-4;
    for (int dir = 0; dir < 2; ++dir) {
      auto up = u, um = u;
      up[std::size_t(dir)] += h;
      um[std::size_t(dir)] -= h;
      auto gp = christoffel_at(mf, {up[0], up[1]}, t);
      auto gm = christoffel_at(mf, {um[0], um[1]}, t);
      for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 2; ++k)
          for (int l = 0; l < 2; ++l) {
            double fd = (gp(i, k, l) - gm(i, k, l)) / (2 * h);
            CHECK(oracles::rel_err(dgr(dir, i, k, l), fd, 1e-5) < 1e-6);
          }
    }
  }
}

TEST_CASE("riemann: zero inputs, flat polar chart, unit sphere curvature") {
  geom::Ten3<double> zg(2);
  geom::Ten4<double> zdg(2);
  auto zr = geom::riemann(zg, zdg);
  for (double v : zr.a) CHECK(v == 0.0);

  // flat metric in polar coordinates: nonzero Gamma but identically flat
  MetricField polar;
  polar.m = 2;
  polar.eval = [](std::span<const D> u, const D& t) {
    (void)t;
    SmallMat<D> g(2);
    g(0, 0) = u[0] * 0.0 + 1.0;
    g(1, 1) = u[0] * u[0];
    g(0, 1) = u[0] * 0.0;
    g(1, 0) = g(0, 1);
    return g;
  };
  std::array<double, 2> up = {1.7, 0.6};
  auto mdp = geom::eval_metric_derivs<double>(polar.eval, std::span<const double>(up), 0.0);
  auto chp = geom::christoffel(mdp);
  CHECK(std::abs(chp.gamma(1, 1, 0) + 1.7) < 1e-12);  // Gamma_22^1 = -rho
  auto rp = geom::riemann(chp.gamma, geom::christoffel_derivatives(mdp, chp));
  for (double v : rp.a) CHECK(std::abs(v) < 1e-9);

  // unit sphere: sectional curvature K = 1 from the lowered Riemann tensor
  MetricField sph = sphere_chart_field(1.0);
  std::array<double, 2> us = {1.1, 0.4};
  auto mds = geom::eval_metric_derivs<double>(sph.eval, std::span<const double>(us), 0.0);
  auto chs = geom::christoffel(mds);
  auto rs = geom::riemann(chs.gamma, geom::christoffel_derivatives(mds, chs));
  const double det = mds.g(0, 0) * mds.g(1, 1) - mds.g(0, 1) * mds.g(1, 0);
  // lower the upper index: R_{1 2 2 1} = g_{2l} R_1^l_21
  double r1221 = mds.g(1, 0) * rs(0, 0, 1, 0) + mds.g(1, 1) * rs(0, 1, 1, 0);
  CHECK(r1221 / det == doctest::Approx(1.0).epsilon(1e-9));
  // antisymmetry in the last index pair
  for (int i = 0; i < 2; ++i)
    for (int l = 0; l < 2; ++l)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
          CHECK(rs(i, l, j, k) == doctest::Approx(-rs(i, l, k, j)).epsilon(1e-12));
}

TEST_CASE("ricci: unit sphere, radius independence, cigar origin") {
  for (double r : {1.0, 2.0}) {
    MetricField sph = sphere_chart_field(r);
    std::array<double, 2> u = {0.9, 1.3};
    auto md = geom::eval_metric_derivs<double>(sph.eval, std::span<const double>(u), 0.0);
    auto ric = geom::ricci_of_metric(md);
    CHECK(ric(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(ric(1, 1) == doctest::Approx(std::sin(0.9) * std::sin(0.9)).epsilon(1e-9));
    CHECK(std::abs(ric(0, 1)) < 1e-10);
  }

  std::array<double, 2> u0 = {0.0, 0.0};
  auto mdc = geom::eval_metric_derivs<double>(cf::cigar_field().eval, std::span<const double>(u0), 0.0);
  auto ricc = geom::ricci_of_metric(mdc);
  CHECK(ricc(0, 0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(ricc(1, 1) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(std::abs(ricc(0, 1)) < 1e-12);
}

TEST_CASE("ricci_flow_residual: cigar soliton, static flat, linear-in-t scaling") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    std::array<double, 2> u = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    double t = rng.uniform(0, 1);
    auto md = geom::eval_metric_derivs<double>(cf::cigar_field().eval, std::span<const double>(u), t);
    auto res = geom::ricci_flow_residual(md);
    CHECK(std::sqrt(geom::frobenius_sq_val(res)) < 1e-8);
  }

  MetricField flat;
  flat.m = 2;
  flat.eval = [](std::span<const D> u, const D& t) {
    (void)t;
    SmallMat<D> g(2);
    g(0, 0) = u[0] * 0.0 + 1.0;
    g(1, 1) = u[0] * 0.0 + 1.0;
    g(0, 1) = u[0] * 0.0;
    g(1, 0) = g(0, 1);
    return g;
  };
  std::array<double, 2> uf = {0.2, 0.4};
  auto mdf = geom::eval_metric_derivs<double>(flat.eval, std::span<const double>(uf), 0.7);
  CHECK(geom::frobenius_sq_val(geom::ricci_flow_residual(mdf)) == doctest::Approx(0.0));

  MetricField grow;
  grow.m = 2;
  grow.eval = [](std::span<const D> u, const D& t) {
    SmallMat<D> g(2);
    g(0, 0) = 1.0 + t + u[0] * 0.0;
    g(1, 1) = 1.0 + t + u[0] * 0.0;
    g(0, 1) = u[0] * 0.0;
    g(1, 0) = g(0, 1);
    return g;
  };
  auto mdg = geom::eval_metric_derivs<double>(grow.eval, std::span<const double>(uf), 0.3);
  auto resg = geom::ricci_flow_residual(mdg);
  CHECK(resg(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(resg(1, 1) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::sqrt(geom::frobenius_sq_val(resg)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-10));
}

TEST_CASE("transform_metric: identity, polar, composed linear maps") {
  SmallMat<double> g = SmallMat<double>::identity(2);
  auto same = geom::transform_metric(g, SmallMat<double>::identity(2));
  CHECK(max_abs(same - g) == 0.0);

  // flat Cartesian to polar at rho=2: J(i,alpha) = du^i/dv^alpha
  SmallMat<double> J(2);
  const double rho = 2.0, phi = 0.7;
  J(0, 0) = std::cos(phi);
  J(0, 1) = -rho * std::sin(phi);
  J(1, 0) = std::sin(phi);
  J(1, 1) = rho * std::cos(phi);
  auto gp = geom::transform_metric(g, J);
  CHECK(gp(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(gp(1, 1) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(std::abs(gp(0, 1)) < 1e-12);

  // random g, random invertible J: pullback matches the Gram of the composed map
  Rng rng(21);
  const double A[3][2] = {{rng.uniform(-1, 1), rng.uniform(-1, 1)},
                          {rng.uniform(-1, 1), rng.uniform(-1, 1)},
                          {rng.uniform(-1, 1), rng.uniform(-1, 1)}};
  SmallMat<double> Jr(2);
  Jr(0, 0) = 1.3;
  Jr(0, 1) = 0.4;
  Jr(1, 0) = -0.2;
  Jr(1, 1) = 0.9;
  geom::EmbedFn<double> composed = [&](std::span<const D> v, const D& t) {
    (void)t;
    D u0 = v[0] * Jr(0, 0) + v[1] * Jr(0, 1);
    D u1 = v[0] * Jr(1, 0) + v[1] * Jr(1, 1);
    std::vector<D> e;
    for (int r = 0; r < 3; ++r) e.push_back(u0 * A[r][0] + u1 * A[r][1]);
    return e;
  };
  SmallMat<double> gA(2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      gA(i, j) = 0;
      for (int r = 0; r < 3; ++r) gA(i, j) += A[r][i] * A[r][j];
    }
  std::array<double, 2> v0 = {0.3, 0.8};
  auto direct = geom::metric_from_jacobian<double>(composed, v0, 0.0);
  auto pulled = geom::transform_metric(gA, Jr);
  CHECK(max_abs(direct - pulled) < 1e-12);

  SmallMat<double> sing(2);  // rank 1
  sing(0, 0) = 1;
  sing(0, 1) = 2;
  sing(1, 0) = 2;
  sing(1, 1) = 4;
  CHECK_THROWS_AS(geom::transform_metric(g, sing), geom::SingularMetricError);
}

TEST_CASE("transform_ricci: tensor rule matches full pipeline in the new chart") {
  Rng rng(33);
  MetricField mf = random_smooth_metric(rng);

  // nonlinear chart u = psi(v) with hand Jacobian
  auto psi0 = [](double v0, double v1) { return v0 + 0.1 * v1 * v1; };
  auto psi1 = [](double v0, double v1) { return v1 + 0.1 * v0 * v1; };
  std::array<double, 2> v0 = {0.4, -0.3};
  const double t0 = 0.2;
  std::array<double, 2> u0 = {psi0(v0[0], v0[1]), psi1(v0[0], v0[1])};

  SmallMat<double> J(2);  // J(i,alpha) = du^i/dv^alpha at v0
  J(0, 0) = 1.0;
  J(0, 1) = 0.2 * v0[1];
  J(1, 0) = 0.1 * v0[1];
  J(1, 1) = 1.0 + 0.1 * v0[0];

  // transformed metric field evaluated through the chart
  MetricField tf;
  tf.m = 2;
  tf.eval = [&](std::span<const D> v, const D& t) {
    std::vector<D> u = {v[0] + 0.1 * (v[1] * v[1]), v[1] + 0.1 * (v[0] * v[1])};
    SmallMat<D> Jd(2);
    Jd(0, 0) = v[0] * 0.0 + 1.0;
    Jd(0, 1) = 0.2 * v[1];
    Jd(1, 0) = 0.1 * v[1];
    Jd(1, 1) = 1.0 + 0.1 * v[0];
    SmallMat<D> gu = mf.eval(u, t);
    return matmul(transpose(Jd), matmul(gu, Jd));
  };

  auto md_u = geom::eval_metric_derivs<double>(mf.eval, std::span<const double>(u0), t0);
  auto ric_u = geom::ricci_of_metric(md_u);
  auto md_v = geom::eval_metric_derivs<double>(tf.eval, std::span<const double>(v0), t0);
  auto ric_v = geom::ricci_of_metric(md_v);
  auto ric_pulled = geom::transform_ricci(ric_u, J);
  CHECK(max_abs(ric_v - ric_pulled) / std::max(max_abs(ric_v), 1e-9) < 1e-9);

  // zero and identity cases
  SmallMat<double> zero(2);
  auto z2 = geom::transform_ricci(zero, J);
  CHECK(max_abs(z2) == 0.0);
  auto samer = geom::transform_ricci(ric_u, SmallMat<double>::identity(2));
  CHECK(max_abs(samer - ric_u) == 0.0);
}

TEST_CASE("second fundamental form: plane, unit sphere, Gauss equation") {
  geom::EmbedFn<double> plane = [](std::span<const D> u, const D& t) {
    (void)t;
    return std::vector<D>{u[0], u[1], u[0] * 0.0};
  };
  std::array<double, 2> u0 = {0.3, 0.6};
  auto repp = geom::second_fundamental_form<double>(plane, u0, 0.0);
  CHECK(max_abs(repp.L) < 1e-14);
  CHECK(max_abs(repp.residual_sff) < 1e-14);
  for (double v : repp.riemann_sff.a) CHECK(std::abs(v) < 1e-14);

  geom::EmbedFn<double> sphere = [](std::span<const D> u, const D& t) {
    (void)t;
    return std::vector<D>{sin(u[0]) * cos(u[1]), sin(u[0]) * sin(u[1]), cos(u[0])};
  };
  std::array<double, 2> us = {1.0, 0.5};
  auto reps = geom::second_fundamental_form<double>(sphere, us, 0.0);
  // L = +-g depending on normal orientation; curvature is sign-free
  const double sgn = reps.L(0, 0) > 0 ? 1.0 : -1.0;
  CHECK(max_abs(reps.L * sgn - reps.g) < 1e-10);
  const double det = reps.g(0, 0) * reps.g(1, 1) - reps.g(0, 1) * reps.g(1, 0);
  const double Lijdet = reps.L(0, 0) * reps.L(1, 1) - reps.L(0, 1) * reps.L(1, 0);
  CHECK(Lijdet / det == doctest::Approx(1.0).epsilon(1e-9));  // K = det L / det g

  // degenerate tangent plane
  geom::EmbedFn<double> degenerate = [](std::span<const D> u, const D& t) {
    (void)t;
    return std::vector<D>{u[0] + u[1], u[0] + u[1], (u[0] + u[1]) * 0.5};
  };
  CHECK_THROWS_AS(geom::second_fundamental_form<double>(degenerate, u0, 0.0), geom::RankError);

  // random embedded graph surfaces: SFF Riemann equals pipeline Riemann
  Rng rng(55);
  for (int trial = 0; trial < 5; ++trial) {
    GraphSurface gs;
    for (auto& v : gs.c) v = rng.uniform(-0.4, 0.4);
    std::array<double, 2> u = {rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7)};
    double t = rng.uniform(0.0, 0.8);

    // hand slopes match autodiff of the height (sanity of the test itself)
    auto emb = gs.embedding();
    auto gj = geom::metric_from_jacobian<double>(emb, u, t);
    auto gf = metric_values(gs.gram_field(), {u[0], u[1]}, t);
    CHECK(max_abs(gj - gf) < 1e-12);

    auto sff = geom::second_fundamental_form<double>(emb, u, t);
    auto md = geom::eval_metric_derivs<double>(gs.gram_field().eval, std::span<const double>(u), t);
    auto chr = geom::christoffel(md);
    auto riem = geom::riemann(chr.gamma, geom::christoffel_derivatives(md, chr));
    double scale = 0;
    for (double v : riem.a) scale = std::max(scale, std::abs(v));
    for (int idx = 0; idx < 16; ++idx)
      CHECK(std::abs(riem.a[std::size_t(idx)] - sff.riemann_sff.a[std::size_t(idx)]) <
            1e-8 * std::max(scale, 1e-3));

    // residuals agree too (same dt_g, Gauss-equal curvature)
    auto res = geom::ricci_flow_residual(md);
    CHECK(max_abs(res - sff.residual_sff) < 1e-8 * std::max(1.0, max_abs(res)));
  }
}

TEST_CASE("pipeline invariants on random smooth metrics") {
  Rng rng(101);
  for (int trial = 0; trial < 8; ++trial) {
    MetricField mf = random_smooth_metric(rng);
    std::array<double, 2> u = {rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
    double t = rng.uniform(0, 0.6);
    auto md = geom::eval_metric_derivs<double>(mf.eval, std::span<const double>(u), t);
    auto chr = geom::christoffel(md);
    auto dgm = geom::christoffel_derivatives(md, chr);
    auto riem = geom::riemann(chr.gamma, dgm);
    auto ric = geom::ricci(riem);

    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int l = 0; l < 2; ++l)
          CHECK(chr.gamma(i, j, l) == doctest::Approx(chr.gamma(j, i, l)).epsilon(1e-12));

    for (int i = 0; i < 2; ++i)
      for (int l = 0; l < 2; ++l)
        for (int j = 0; j < 2; ++j)
          for (int k = 0; k < 2; ++k)
            CHECK(std::abs(riem(i, l, j, k) + riem(i, l, k, j)) < 1e-12 * std::max(1.0, std::abs(riem(i, l, j, k))));

    CHECK(std::abs(ric(0, 1) - ric(1, 0)) < 1e-12 * std::max(1.0, std::abs(ric(0, 1))));

    // 2-d identity: Ric = (R/2) g with R = tr(g^-1 Ric)
    auto ginv = geom::inverse_guarded(md.g);
    double R = 0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) R += ginv(i, j) * ric(j, i);
    auto dev = ric - md.g * (R / 2.0);
    CHECK(std::sqrt(geom::frobenius_sq_val(dev)) < 1e-9 * std::max(1.0, max_abs(ric)));
  }

  // flatness: constant J^T J metrics have zero Riemann
  Rng rng2(7);
  SmallMat<double> B(2);
  B(0, 0) = rng2.uniform(0.5, 1.5);
  B(0, 1) = rng2.uniform(-0.5, 0.5);
  B(1, 0) = rng2.uniform(-0.5, 0.5);
  B(1, 1) = rng2.uniform(0.5, 1.5);
  auto gflat = matmul(transpose(B), B);
  MetricField mff;
  mff.m = 2;
  mff.eval = [gflat](std::span<const D> u, const D& t) {
    (void)t;
    SmallMat<D> g(2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) g(i, j) = u[0] * 0.0 + gflat(i, j);
    return g;
  };
  std::array<double, 2> uf = {0.1, 0.2};
  auto mdf = geom::eval_metric_derivs<double>(mff.eval, std::span<const double>(uf), 0.0);
  auto chrf = geom::christoffel(mdf);
  auto riemf = geom::riemann(chrf.gamma, geom::christoffel_derivatives(mdf, chrf));
  for (double v : riemf.a) CHECK(std::abs(v) < 1e-13);
}

TEST_CASE("singular metric raises the condition-number error") {
  MetricField nearly;
  nearly.m = 2;
  nearly.eval = [](std::span<const D> u, const D& t) {
    (void)t;
    SmallMat<D> g(2);
    g(0, 0) = u[0] * 0.0 + 1.0;
    g(0, 1) = u[0] * 0.0 + 1.0;
    g(1, 0) = u[0] * 0.0 + 1.0;
    g(1, 1) = u[0] * 0.0 + 1.0 + 1e-12;
    return g;
  };
  std::array<double, 2> u = {0.0, 0.0};
  auto md = geom::eval_metric_derivs<double>(nearly.eval, std::span<const double>(u), 0.0);
  CHECK_THROWS_AS(geom::christoffel(md), geom::SingularMetricError);
}

TEST_CASE("geometry_report bundles the full pipeline") {
  auto rep = geom::geometry_report(cf::cigar_field(), std::array<double, 2>{0.5, -0.3}, 0.2);
  CHECK(rep.m == 2);
  CHECK(rep.residual_norm < 1e-8);
  CHECK_FALSE(rep.indefinite);
  CHECK(rep.g(0, 0) > 0);
  // report Ricci is proportional to g (2-d conformal metric)
  const double K = rep.ricci(0, 0) / rep.g(0, 0);
  CHECK(rep.ricci(1, 1) == doctest::Approx(K * rep.g(1, 1)).epsilon(1e-9));
}
