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
using geom::SmallMat;
using D = Dual<double>;

namespace {
constexpr double pi = std::numbers::pi;

double max_abs(const SmallMat<double>& x) {
  double m = 0;
  for (int i = 0; i < x.m; ++i)
    for (int j = 0; j < x.m; ++j) m = std::max(m, std::abs(x(i, j)));
  return m;
}
}  // namespace

TEST_CASE("cigar metric values") {
  auto g0 = cf::cigar_metric<double>(0.0, 0.0, 0.0);
  CHECK(g0(0, 0) == doctest::Approx(1.0));
  CHECK(g0(1, 1) == doctest::Approx(1.0));
  CHECK(g0(0, 1) == 0.0);

  auto g1 = cf::cigar_metric<double>(1.0, 1.0, 0.0);
  CHECK(g1(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(g1(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  auto g2 = cf::cigar_metric<double>(0.0, 0.0, 0.25);
  CHECK(g2(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("torus metric values at b=2, a=-1") {
  auto at = [&](double u2) { return cf::torus_metric<double>(u2, -1.0, 2.0); };
  CHECK(at(0.0)(0, 0) == doctest::Approx(1.0));
  CHECK(at(0.0)(1, 1) == doctest::Approx(1.0));
  CHECK(at(pi)(0, 0) == doctest::Approx(9.0));
  CHECK(at(pi)(1, 1) == doctest::Approx(1.0));
  CHECK(at(pi / 2)(0, 0) == doctest::Approx(4.0));
  CHECK(at(pi / 2)(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("sphere radius law and extinction") {
  CHECK(cf::sphere_radius(1.0, 3, 0.0) == doctest::Approx(1.0));
  CHECK(cf::sphere_radius(1.0, 3, 0.25) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  CHECK(cf::sphere_radius(2.0, 4, 0.5) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(cf::sphere_radius(1.0, 3, 0.5), cf::ExtinctionError);
  CHECK(cf::sphere_extinction_time(1.0, 3) == doctest::Approx(0.5));
}

TEST_CASE("sphere embedding: coordinates, norm identity, shift") {
  std::vector<double> u = {pi / 2, 0.0};
  auto e = cf::sphere_embed<double>(u, 0.0, 1.0, 3);
  CHECK(e[0] == doctest::Approx(0.0));
  CHECK(e[1] == doctest::Approx(1.0));
  CHECK(e[2] == doctest::Approx(0.0));

  Rng rng(4);
  for (int d : {3, 4, 5}) {
    std::vector<double> uu;
    for (int i = 0; i < d - 1; ++i) uu.push_back(rng.uniform(0.1, pi - 0.1));
    double t = rng.uniform(0.0, 0.3 / (d - 2));
    auto ee = cf::sphere_embed<double>(uu, t, 1.0, d);
    double n2 = 0;
    for (double v : ee) n2 += v * v;
    CHECK(std::abs(std::sqrt(n2) - cf::sphere_radius(1.0, d, t)) < 1e-12);
  }

  std::vector<double> shift = {1.0, 0.0, 0.0};
  std::vector<double> u0 = {0.0, 0.0};
  auto es = cf::sphere_embed<double>(u0, 0.0, 1.0, 3, shift);
  CHECK(es[0] == doctest::Approx(2.0));
  CHECK(es[1] == doctest::Approx(0.0));
  CHECK(es[2] == doctest::Approx(0.0));

  CHECK_THROWS_AS(cf::sphere_embed<double>(u0, 0.9, 1.0, 3), cf::ExtinctionError);
}

TEST_CASE("sphere metric values and Jacobian-Gram consistency") {
  std::vector<double> u1 = {pi / 2};
  {
    std::vector<double> uu = {pi / 2, 0.3};
    auto g = cf::sphere_metric<double>(uu, 0.0, 1.0, 3);
    CHECK(g(0, 0) == doctest::Approx(1.0));
    CHECK(g(1, 1) == doctest::Approx(1.0));
  }
  {
    std::vector<double> uu = {pi / 6, 0.3};
    auto g = cf::sphere_metric<double>(uu, 0.0, 1.0, 3);
    CHECK(g(1, 1) == doctest::Approx(0.25).epsilon(1e-14));
  }

  Rng rng(8);
  for (int d : {3, 4}) {
    std::vector<double> uu;
    for (int i = 0; i < d - 1; ++i) uu.push_back(rng.uniform(0.2, pi - 0.2));
    const double t = 0.05;
    const double R = 1.2;
    geom::EmbedFn<double> emb = [R, d](std::span<const D> ud, const D& td) {
      return cf::sphere_embed<D>(ud, td, R, d);
    };
    auto g_jac = geom::metric_from_jacobian<double>(emb, uu, t);
    auto g_cf = cf::sphere_metric<double>(uu, t, R, d);
    CHECK(max_abs(g_jac - g_cf) < 1e-10);
  }
}

TEST_CASE("sphere flow law: d_t g = -2 Ric for d in {3,4,5}") {
  Rng rng(12);
  for (int d : {3, 4, 5}) {
    geom::MetricField mf = cf::sphere_field(1.0, d);
    const double textinct = cf::sphere_extinction_time(1.0, d);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> u;
      for (int i = 0; i < d - 1; ++i) u.push_back(rng.uniform(0.35, pi - 0.35));
      double t = rng.uniform(0.0, 0.9 * textinct);
      auto md = geom::eval_metric_derivs<double>(mf.eval, u, t);
      auto res = geom::ricci_flow_residual(md);
      CHECK(std::sqrt(geom::frobenius_sq_val(res)) < 1e-7);
    }
  }
}

TEST_CASE("torus curvature: pipeline Ricci = K g with K = cos u2 / (a(b+a cos u2))") {
  const double a = -1.0, b = 2.0;
  geom::MetricField mf = cf::torus_field(a, b);
  Rng rng(19);
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<double> u = {rng.uniform(0.0, 2 * pi), rng.uniform(0.0, 2 * pi)};
    auto md = geom::eval_metric_derivs<double>(mf.eval, u, 0.0);
    auto ric = geom::ricci_of_metric(md);
    const double K = std::cos(u[1]) / (a * (b + a * std::cos(u[1])));
    auto dev = ric - md.g * K;
    CHECK(max_abs(dev) < 1e-9 * std::max(1.0, max_abs(ric)));
  }
}

TEST_CASE("surface of revolution: cylinder, cone, sphere profile") {
  // cylinder r=1, z=u1
  cf::ProfileFn r_cyl = [](const D& u, const D& t) {
    (void)t;
    return u * 0.0 + 1.0;
  };
  cf::ProfileFn z_cyl = [](const D& u, const D& t) {
    (void)t;
    return u;
  };
  auto cyl = cf::sor_eval(r_cyl, z_cyl, 0.7, 0.0);
  CHECK(cyl.g(0, 0) == doctest::Approx(1.0));
  CHECK(cyl.g(1, 1) == doctest::Approx(1.0));
  for (double v : cyl.gamma.a) CHECK(std::abs(v) < 1e-14);
  CHECK(max_abs(cyl.ricci) < 1e-14);

  // cone r=u1, z=u1: Gamma_22^1 = -u1/2, Gamma_12^2 = 1/u1
  cf::ProfileFn ident = [](const D& u, const D& t) {
    (void)t;
    return u;
  };
  const double u1 = 0.8;
  auto cone = cf::sor_eval(ident, ident, u1, 0.0);
  CHECK(cone.gamma(1, 1, 0) == doctest::Approx(-u1 / 2.0).epsilon(1e-12));
  CHECK(cone.gamma(0, 1, 1) == doctest::Approx(1.0 / u1).epsilon(1e-12));
  CHECK(cone.gamma(1, 0, 1) == doctest::Approx(1.0 / u1).epsilon(1e-12));
  CHECK(std::abs(cone.gamma(0, 0, 0)) < 1e-14);

  // unit sphere profile r=sin u1, z=cos u1 reproduces the d=3 sphere metric
  cf::ProfileFn r_sph = [](const D& u, const D& t) {
    (void)t;
    return sin(u);
  };
  cf::ProfileFn z_sph = [](const D& u, const D& t) {
    (void)t;
    return cos(u);
  };
  auto sph = cf::sor_eval(r_sph, z_sph, 1.1, 0.0);
  std::vector<double> uu = {1.1, 0.4};
  auto g_ref = cf::sphere_metric<double>(uu, 0.0, 1.0, 3);
  CHECK(max_abs(sph.g - g_ref) < 1e-12);
  // and its Ricci equals the metric (unit sphere)
  CHECK(max_abs(sph.ricci - sph.g) < 1e-12);

  // degenerate profile
  cf::ProfileFn r_neg = [](const D& u, const D& t) {
    (void)t;
    return u * 0.0 - 0.5;
  };
  CHECK_THROWS_AS(cf::sor_eval(r_neg, z_cyl, 0.3, 0.0), cf::DegenerateProfileError);
}

TEST_CASE("surface of revolution agrees with the generic pipeline") {
  // random smooth profile with analytic u-derivatives
  Rng rng(27);
  const double a0 = rng.uniform(1.2, 1.8), a1 = rng.uniform(0.1, 0.3), a2 = rng.uniform(0.1, 0.4);
  cf::ProfileFn r_fn = [=](const D& u, const D& t) { return a0 + a1 * sin(u) * (1.0 + a2 * t); };
  cf::ProfileFn r_u = [=](const D& u, const D& t) { return a1 * cos(u) * (1.0 + a2 * t); };
  cf::ProfileFn z_fn = [=](const D& u, const D& t) { return u + 0.2 * cos(u) * t; };
  cf::ProfileFn z_u = [=](const D& u, const D& t) { return 1.0 - 0.2 * sin(u) * t; };

  geom::MetricField mf = cf::sor_field(r_fn, r_u, z_fn, z_u);
  for (int trial = 0; trial < 5; ++trial) {
    const double u1 = rng.uniform(-1.0, 1.0), u2 = rng.uniform(0.0, 2 * pi),
                 t = rng.uniform(0.0, 0.5);
    std::vector<double> u = {u1, u2};
    auto md = geom::eval_metric_derivs<double>(mf.eval, u, t);
    auto chr = geom::christoffel(md);
    auto ric_pipeline = geom::ricci_of_metric(md);
    auto closed = cf::sor_eval(r_fn, z_fn, u1, t);

    CHECK(max_abs(md.g - closed.g) < 1e-12);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int l = 0; l < 2; ++l)
          CHECK(std::abs(chr.gamma(i, j, l) - closed.gamma(i, j, l)) < 1e-9);
    CHECK(max_abs(ric_pipeline - closed.ricci) < 1e-9 * std::max(1.0, max_abs(ric_pipeline)));

    // metric equals the Jacobian Gram of the explicit embedding
    geom::EmbedFn<double> emb = [&](std::span<const D> ud, const D& td) {
      D r = r_fn(ud[0], td);
      D z = z_fn(ud[0], td);
      return std::vector<D>{r * cos(ud[1]), r * sin(ud[1]), z};
    };
    auto g_jac = geom::metric_from_jacobian<double>(emb, u, t);
    CHECK(max_abs(g_jac - closed.g) < 1e-12);
  }
}

TEST_CASE("shrinking sphere profile satisfies the surface-of-revolution flow") {
  // r(u,t) = rho(t) sin u, z = rho(t) cos u with rho = sqrt(R^2 - 2t): the
  // d=3 radius law; residual terms vanish
  const double R = 1.0;
  cf::ProfileFn r_fn = [=](const D& u, const D& t) { return sqrt(R * R - 2.0 * t) * sin(u); };
  cf::ProfileFn z_fn = [=](const D& u, const D& t) { return sqrt(R * R - 2.0 * t) * cos(u); };
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const double u1 = rng.uniform(0.3, pi - 0.3), t = rng.uniform(0.0, 0.35);
    D ud = ad::dual_seed<double>(u1, 0, 2, 2);
    D td = ad::dual_seed<double>(t, 1, 2, 2);
    auto p = cf::sor_profile_from_duals(r_fn(ud, td), z_fn(ud, td));
    auto ric = cf::sor_ricci(p);
    // d_t[(d_u r)^2 + (d_u z)^2] + 2 Ric_11 and d_t r^2 + 2 Ric_22
    const double res11 = 2 * (p.r_u * p.r_ut + p.z_u * p.z_ut) + 2 * ric(0, 0);
    const double res22 = 2 * p.r * p.r_t + 2 * ric(1, 1);
    CHECK(std::abs(res11) < 1e-9);
    CHECK(std::abs(res22) < 1e-9);
  }
}
