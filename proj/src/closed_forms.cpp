#include "rfae/closed_forms.hpp"

#include <cmath>
#include <limits>

namespace rfae::cf {

double sphere_radius(double R, int d, double t) {
  const double rad2 = R * R - 2.0 * double(d - 2) * t;
  if (rad2 <= 0.0)
    throw ExtinctionError("sphere radius extinct: R^2 - 2(d-2)t = " + std::to_string(rad2) +
                          " at t=" + std::to_string(t));
  return std::sqrt(rad2);
}

double sphere_extinction_time(double R, int d) {
  if (d <= 2) return std::numeric_limits<double>::infinity();
  return R * R / (2.0 * double(d - 2));
}

SorEval sor_eval(const ProfileFn& r_fn, const ProfileFn& z_fn, double u1, double t) {
  using D = ad::Dual<double>;
  D ud = ad::dual_seed<double>(u1, 0, 2, 2);
  D td = ad::dual_seed<double>(t, 1, 2, 2);
  SorProfile<double> p = sor_profile_from_duals(r_fn(ud, td), z_fn(ud, td));
  return SorEval{sor_metric(p), sor_christoffel(p), sor_ricci(p)};
}

geom::MetricField cigar_field() {
  geom::MetricField mf;
  mf.m = 2;
  mf.source = "cigar";
  mf.eval = [](std::span<const ad::Dual<double>> u, const ad::Dual<double>& t) {
    return cigar_metric<ad::Dual<double>>(u[0], u[1], t);
  };
  return mf;
}

geom::MetricField torus_field(double a, double b) {
  geom::MetricField mf;
  mf.m = 2;
  mf.source = "torus";
  mf.eval = [a, b](std::span<const ad::Dual<double>> u, const ad::Dual<double>& t) {
    (void)t;
    return torus_metric<ad::Dual<double>>(u[1], a, b);
  };
  return mf;
}

geom::MetricField sphere_field(double R, int d) {
  geom::MetricField mf;
  mf.m = d - 1;
  mf.source = "sphere";
  mf.eval = [R, d](std::span<const ad::Dual<double>> u, const ad::Dual<double>& t) {
    return sphere_metric<ad::Dual<double>>(u, t, R, d);
  };
  return mf;
}

geom::MetricField sor_field(const ProfileFn& r_fn, const ProfileFn& r_u_fn, const ProfileFn& z_fn,
                            const ProfileFn& z_u_fn) {
  geom::MetricField mf;
  mf.m = 2;
  mf.source = "surface_of_revolution";
  mf.eval = [=](std::span<const ad::Dual<double>> u, const ad::Dual<double>& t) {
    using D = ad::Dual<double>;
    D r = r_fn(u[0], t);
    D ru = r_u_fn(u[0], t);
    D zu = z_u_fn(u[0], t);
    (void)z_fn;
    geom::SmallMat<D> g(2);
    g(0, 0) = ru * ru + zu * zu;
    g(1, 1) = r * r;
    g(0, 1) = r * 0.0;
    g(1, 0) = g(0, 1);
    return g;
  };
  return mf;
}

}  // namespace rfae::cf
