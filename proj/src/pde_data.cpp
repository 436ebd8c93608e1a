#include "rfae/pde_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "rfae/parallel.hpp"

namespace rfae::pde {

using json = nlohmann::json;

namespace {
constexpr double kPi = std::numbers::pi;

double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

/// Godunov flux for f(phi) = phi^2/2.
double godunov_flux(double a, double b) {
  if (a <= b) {
    if (a > 0.0) return 0.5 * a * a;
    if (b < 0.0) return 0.5 * b * b;
    return 0.0;
  }
  return 0.5 * std::max(a * a, b * b);
}

/// Tridiagonal solve (Thomas) with constant off-diagonals.
void thomas_const(double lo, double diag, double up, std::vector<double>& rhs,
                  std::vector<double>& work) {
  const std::size_t n = rhs.size();
  work.resize(n);
  double beta = diag;
  rhs[0] /= beta;
  for (std::size_t i = 1; i < n; ++i) {
    work[i] = up / beta;
    beta = diag - lo * work[i];
    rhs[i] = (rhs[i] - lo * rhs[i - 1]) / beta;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= work[i + 1] * rhs[i + 1];
}

/// Cyclic tridiagonal solve via Sherman-Morrison (constant coefficients).
/// Corners: A[0][n-1] = lo (wrap of the lower diagonal), A[n-1][0] = up.
void cyclic_thomas_const(double lo, double diag, double up, std::vector<double>& rhs,
                         std::vector<double>& w1, std::vector<double>& w2) {
  const std::size_t n = rhs.size();
  const double gamma = -diag;
  std::vector<double>& u = w1;
  u.assign(n, 0.0);
  u[0] = gamma;
  u[n - 1] = up;  // v = (1, 0, ..., lo/gamma)
  std::vector<double> x = rhs;
  auto solve_mod = [&](std::vector<double>& b) {
    const std::size_t m = b.size();
    w2.resize(m);
    double d0 = diag - gamma;
    double dl = diag - up * lo / gamma;
    double beta = d0;
    b[0] /= beta;
    for (std::size_t i = 1; i < m; ++i) {
      w2[i] = up / beta;
      const double di = (i == m - 1) ? dl : diag;
      beta = di - lo * w2[i];
      b[i] = (b[i] - lo * b[i - 1]) / beta;
    }
    for (std::size_t i = m - 1; i-- > 0;) b[i] -= w2[i + 1] * b[i + 1];
  };
  solve_mod(x);
  std::vector<double> z = u;
  solve_mod(z);
  const double vx = x[0] + (lo / gamma) * x[n - 1];
  const double vz = z[0] + (lo / gamma) * z[n - 1];
  const double fact = vx / (1.0 + vz);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = x[i] - fact * z[i];
}

}  // namespace

IcFamily parse_family(const std::string& s) {
  if (s == "A1") return IcFamily::A1;
  if (s == "A1_new") return IcFamily::A1New;
  if (s == "A2") return IcFamily::A2;
  if (s == "A2_new1") return IcFamily::A2New1;
  if (s == "A2_new2") return IcFamily::A2New2;
  if (s == "A2_new3") return IcFamily::A2New3;
  if (s == "gauss_impulse") return IcFamily::GaussImpulse;
  throw FormatError("unknown initial-condition family '" + s + "'");
}

std::string to_string(IcFamily f) {
  switch (f) {
    case IcFamily::A1: return "A1";
    case IcFamily::A1New: return "A1_new";
    case IcFamily::A2: return "A2";
    case IcFamily::A2New1: return "A2_new1";
    case IcFamily::A2New2: return "A2_new2";
    case IcFamily::A2New3: return "A2_new3";
    case IcFamily::GaussImpulse: return "gauss_impulse";
  }
  return "?";
}

double ic_value(IcFamily f, const std::map<std::string, double>& p, double x) {
  auto at = [&](const char* k) { return p.at(k); };
  switch (f) {
    case IcFamily::A1:
    case IcFamily::A1New: {
      const double c = std::cos(2 * kPi * x);
      return at("alpha") * std::sin(2 * kPi * x) + at("beta") * c * c * c;
    }
    case IcFamily::A2:
      return at("alpha") * std::sin(2 * kPi * x) +
             (at("alpha") + 0.5) / 2.0 * std::cos(4 * kPi * x) +
             at("beta") / 3.0 * std::sin(4 * kPi * x);
    case IcFamily::A2New1:
      return at("alpha") * std::sin(2 * kPi * x) + (at("gamma") + 0.5) * std::cos(4 * kPi * x) +
             at("beta") * std::sin(4 * kPi * x);
    case IcFamily::A2New2:
      return at("alpha") * std::sin(2 * kPi * x) +
             (at("alpha") + 0.5) / 2.0 * std::cos(3.5 * kPi * x) +
             at("beta") / 3.0 * std::sin(3.5 * kPi * x);
    case IcFamily::A2New3:
      return at("alpha") * std::sin(2 * kPi * x) +
             (at("alpha") + 1.0) / 2.0 * std::cos(4.5 * kPi * x) +
             at("beta") / 3.0 * std::sin(4.5 * kPi * x);
    case IcFamily::GaussImpulse:
      throw FormatError("gauss_impulse is a 2-d family");
  }
  return 0.0;
}

double ic_value_2d(const std::map<std::string, double>& p, double x, double y) {
  const double dx = x - p.at("mu1");
  const double dy = y - p.at("mu2");
  return 10.0 * std::exp(-dx * dx / 0.1 - dy * dy / 0.1);
}

IcSample sample_ic(IcFamily f, const Mesh1D& mesh, Rng& rng) {
  IcSample s;
  switch (f) {
    case IcFamily::A1:
      s.params["alpha"] = rng.uniform(-1.0, 1.0);
      s.params["beta"] = rng.uniform(-1.0, 1.0);
      break;
    case IcFamily::A1New: {
      // out-of-distribution box [-1.5,-1] u [1,1.5] per coefficient
      auto draw = [&]() {
        const double m = rng.uniform(1.0, 1.5);
        return rng.uniform() < 0.5 ? -m : m;
      };
      s.params["alpha"] = draw();
      s.params["beta"] = draw();
      break;
    }
    case IcFamily::A2:
      s.params["alpha"] = rng.uniform(-1.0, 1.0);
      s.params["beta"] = rng.uniform(-1.0, 1.0);
      break;
    case IcFamily::A2New1:
      s.params["alpha"] = rng.uniform(-1.75, 1.75);
      s.params["beta"] = rng.uniform(-1.75, 1.75);
      s.params["gamma"] = rng.uniform(-1.0, 1.0);
      break;
    case IcFamily::A2New2:
    case IcFamily::A2New3:
      s.params["alpha"] = rng.uniform(0.0, 1.0);
      s.params["beta"] = rng.uniform(0.0, 1.0);
      break;
    case IcFamily::GaussImpulse:
      throw FormatError("gauss_impulse requires a 2-d mesh");
  }
  s.phi0.resize(std::size_t(mesh.n));
  for (int j = 0; j < mesh.n; ++j) s.phi0[std::size_t(j)] = ic_value(f, s.params, mesh.node(j));
  return s;
}

IcSample sample_ic_2d(IcFamily f, const Mesh2D& mesh, Rng& rng) {
  if (f != IcFamily::GaussImpulse) throw FormatError("2-d sampling needs gauss_impulse");
  IcSample s;
  s.params["mu1"] = rng.uniform(1.0, 4.0);
  s.params["mu2"] = rng.uniform(1.0, 4.0);
  s.phi0.resize(std::size_t(mesh.nx * mesh.ny));
  for (int j = 0; j < mesh.ny; ++j)
    for (int i = 0; i < mesh.nx; ++i)
      s.phi0[std::size_t(j * mesh.nx + i)] = ic_value_2d(s.params, mesh.xnode(i), mesh.ynode(j));
  return s;
}

// ---- Burgers ----------------------------------------------------------------

namespace {

/// -(F_{j+1/2} - F_{j-1/2})/h with MUSCL-minmod reconstruction, periodic.
void burgers_advection(const std::vector<double>& phi, double h, std::vector<double>& slope,
                       std::vector<double>& flux, std::vector<double>& out) {
  const int n = int(phi.size());
  slope.resize(std::size_t(n));
  flux.resize(std::size_t(n));
  out.resize(std::size_t(n));
  auto idx = [n](int j) { return std::size_t((j % n + n) % n); };
  for (int j = 0; j < n; ++j)
    slope[std::size_t(j)] = minmod(phi[idx(j + 1)] - phi[idx(j)], phi[idx(j)] - phi[idx(j - 1)]);
  for (int j = 0; j < n; ++j) {
    const double left = phi[std::size_t(j)] + 0.5 * slope[std::size_t(j)];
    const double right = phi[idx(j + 1)] - 0.5 * slope[idx(j + 1)];
    flux[std::size_t(j)] = godunov_flux(left, right);  // interface j+1/2
  }
  for (int j = 0; j < n; ++j) out[std::size_t(j)] = -(flux[std::size_t(j)] - flux[idx(j - 1)]) / h;
}

void periodic_lap(const std::vector<double>& phi, double h, std::vector<double>& out) {
  const int n = int(phi.size());
  out.resize(std::size_t(n));
  auto idx = [n](int j) { return std::size_t((j % n + n) % n); };
  for (int j = 0; j < n; ++j)
    out[std::size_t(j)] = (phi[idx(j - 1)] - 2.0 * phi[std::size_t(j)] + phi[idx(j + 1)]) / (h * h);
}

struct BurgersWork {
  std::vector<double> slope, flux, a0, a1, lap, rhs, tmp1, tmp2, pred;
};

void burgers_substep(std::vector<double>& phi, double dt, double nu, double h, BurgersWork& w) {
  const std::size_t n = phi.size();
  // predictor: backward-Euler diffusion around an explicit advection step
  burgers_advection(phi, h, w.slope, w.flux, w.a0);
  w.rhs.resize(n);
  for (std::size_t j = 0; j < n; ++j) w.rhs[j] = phi[j] + dt * w.a0[j];
  const double c1 = nu * dt / (h * h);
  cyclic_thomas_const(-c1, 1.0 + 2.0 * c1, -c1, w.rhs, w.tmp1, w.tmp2);
  w.pred = w.rhs;
  // corrector: trapezoidal in both terms
  burgers_advection(w.pred, h, w.slope, w.flux, w.a1);
  periodic_lap(phi, h, w.lap);
  w.rhs.resize(n);
  for (std::size_t j = 0; j < n; ++j)
    w.rhs[j] = phi[j] + 0.5 * dt * (w.a0[j] + w.a1[j]) + 0.5 * dt * nu * w.lap[j];
  const double c2 = 0.5 * nu * dt / (h * h);
  cyclic_thomas_const(-c2, 1.0 + 2.0 * c2, -c2, w.rhs, w.tmp1, w.tmp2);
  phi = w.rhs;
}

}  // namespace

std::vector<std::vector<double>> solve_burgers(const std::vector<double>& phi0, double nu,
                                               const Mesh1D& mesh, const TimeGrid& grid,
                                               std::span<const double> snap_times) {
  if (nu <= 0.0) throw SolverError("Burgers solver requires nu > 0");
  if (!mesh.periodic) throw SolverError("Burgers solver requires a periodic mesh");
  if (int(phi0.size()) != mesh.n) throw SolverError("phi0 length does not match mesh");
  const double h = mesh.h();
  double max0 = 0.0;
  for (double v : phi0) max0 = std::max(max0, std::abs(v));

  for (double cfl = 0.4; cfl > 0.02; cfl *= 0.5) {
    std::vector<std::vector<double>> snaps;
    std::vector<double> phi = phi0;
    BurgersWork w;
    double t = grid.t0;
    bool ok = true;
    for (double target : snap_times) {
      if (target < t - 1e-12) throw SolverError("snapshot times must be ascending");
      while (t < target - 1e-12 && ok) {
        double maxv = 0.0;
        for (double v : phi) maxv = std::max(maxv, std::abs(v));
        const double dt_cfl = cfl * h / std::max(maxv, 1e-8);
        double dt = std::min({grid.ht(), dt_cfl, target - t});
        burgers_substep(phi, dt, nu, h, w);
        t += dt;
        double maxn = 0.0;
        for (double v : phi) maxn = std::max(maxn, std::abs(v));
        if (maxn > max0 * (1.0 + 1e-3) + 1e-12) ok = false;  // max principle violated
      }
      if (!ok) break;
      snaps.push_back(phi);
    }
    if (ok) return snaps;
  }
  throw SolverError("Burgers time-step refinement failed to stabilize");
}

// ---- diffusion-reaction -------------------------------------------------------

std::vector<std::vector<double>> solve_diffusion_reaction(const std::vector<double>& phi0,
                                                          const std::vector<double>& f, double D,
                                                          double lambda, const Mesh1D& mesh,
                                                          const TimeGrid& grid,
                                                          std::span<const double> snap_times) {
  if (D <= 0.0) throw SolverError("diffusion-reaction requires D > 0");
  if (mesh.periodic) throw SolverError("diffusion-reaction uses a zero-Dirichlet mesh");
  if (int(phi0.size()) != mesh.n || int(f.size()) != mesh.n)
    throw SolverError("array length does not match mesh");
  const double h = mesh.h();
  const std::size_t n = std::size_t(mesh.n);
  const std::size_t ni = n - 2;  // interior

  std::vector<double> phi = phi0;
  phi[0] = 0.0;
  phi[n - 1] = 0.0;
  std::vector<double> lap(n), pred(n), rhs(ni), work;
  auto reaction = [&](const std::vector<double>& p, std::vector<double>& out) {
    for (std::size_t j = 0; j < n; ++j) out[j] = lambda * p[j] * p[j] + f[j];
  };
  auto laplacian = [&](const std::vector<double>& p, std::vector<double>& out) {
    out[0] = out[n - 1] = 0.0;
    for (std::size_t j = 1; j + 1 < n; ++j) out[j] = (p[j - 1] - 2.0 * p[j] + p[j + 1]) / (h * h);
  };
  auto check = [&](const std::vector<double>& p) {
    for (double v : p)
      if (!std::isfinite(v) || std::abs(v) > 1e6)
        throw SolverError("reaction blow-up: |phi| exceeded 1e6");
  };

  std::vector<std::vector<double>> snaps;
  double t = grid.t0;
  std::vector<double> r0(n), r1(n);
  for (double target : snap_times) {
    if (target < t - 1e-12) throw SolverError("snapshot times must be ascending");
    while (t < target - 1e-12) {
      const double dt = std::min(grid.ht(), target - t);
      reaction(phi, r0);
      const double c1 = D * dt / (h * h);
      for (std::size_t j = 0; j < ni; ++j) rhs[j] = phi[j + 1] + dt * r0[j + 1];
      thomas_const(-c1, 1.0 + 2.0 * c1, -c1, rhs, work);
      pred[0] = pred[n - 1] = 0.0;
      for (std::size_t j = 0; j < ni; ++j) pred[j + 1] = rhs[j];
      reaction(pred, r1);
      laplacian(phi, lap);
      const double c2 = 0.5 * D * dt / (h * h);
      for (std::size_t j = 0; j < ni; ++j)
        rhs[j] = phi[j + 1] + 0.5 * dt * (r0[j + 1] + r1[j + 1]) + 0.5 * dt * D * lap[j + 1];
      thomas_const(-c2, 1.0 + 2.0 * c2, -c2, rhs, work);
      for (std::size_t j = 0; j < ni; ++j) phi[j + 1] = rhs[j];
      phi[0] = phi[n - 1] = 0.0;
      t += dt;
      check(phi);
    }
    snaps.push_back(phi);
  }
  return snaps;
}

// ---- wave -------------------------------------------------------------------

double wave_energy(const std::vector<double>& prev, const std::vector<double>& cur, double dt,
                   double c, const Mesh2D& mesh) {
  const int nx = mesh.nx, ny = mesh.ny;
  const double hx = mesh.hx(), hy = mesh.hy();
  double kin = 0.0;
  for (std::size_t i = 0; i < cur.size(); ++i) {
    const double v = (cur[i] - prev[i]) / dt;
    kin += v * v;
  }
  kin *= 0.5 * hx * hy;
  double pot = 0.0;
  auto at = [&](const std::vector<double>& p, int i, int j) { return p[std::size_t(j * nx + i)]; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      const double da = (at(cur, i + 1, j) - at(cur, i, j)) / hx;
      const double db = (at(prev, i + 1, j) - at(prev, i, j)) / hx;
      pot += da * db;
    }
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double da = (at(cur, i, j + 1) - at(cur, i, j)) / hy;
      const double db = (at(prev, i, j + 1) - at(prev, i, j)) / hy;
      pot += da * db;
    }
  pot *= 0.5 * c * c * hx * hy;
  return kin + pot;
}

std::vector<std::vector<double>> solve_wave2d(const std::vector<double>& phi0, double c,
                                              const Mesh2D& mesh, const TimeGrid& grid,
                                              std::span<const double> snap_times, double dt) {
  const int nx = mesh.nx, ny = mesh.ny;
  if (int(phi0.size()) != nx * ny) throw SolverError("phi0 length does not match mesh");
  const double h = std::min(mesh.hx(), mesh.hy());
  const double dt_max = h / (c * std::sqrt(2.0));
  if (dt > 0.0 && dt > dt_max)
    throw SolverError("CFL violation: c*dt/h must stay <= 1/sqrt(2); use dt <= " +
                      std::to_string(dt_max));
  double step = dt > 0.0 ? dt : 0.5 * dt_max;
  const int sub = std::max(1, int(std::ceil(grid.ht() / step - 1e-12)));
  step = grid.ht() / sub;

  // Neumann Laplacian in conservative face form: sum over existing faces of
  // (u_nb - u_c)/h^2. The leapfrog scheme then conserves the staggered
  // kinetic+gradient energy exactly.
  auto lap = [&](const std::vector<double>& p, std::vector<double>& out) {
    auto at = [&](int i, int j) { return p[std::size_t(j * nx + i)]; };
    const double hx2 = mesh.hx() * mesh.hx(), hy2 = mesh.hy() * mesh.hy();
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        double acc = 0.0;
        if (i > 0) acc += (at(i - 1, j) - at(i, j)) / hx2;
        if (i + 1 < nx) acc += (at(i + 1, j) - at(i, j)) / hx2;
        if (j > 0) acc += (at(i, j - 1) - at(i, j)) / hy2;
        if (j + 1 < ny) acc += (at(i, j + 1) - at(i, j)) / hy2;
        out[std::size_t(j * nx + i)] = acc;
      }
  };

  std::vector<double> prev = phi0, cur(phi0.size()), lapv(phi0.size()), next(phi0.size());
  lap(prev, lapv);
  const double cc = c * c * step * step;
  for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = prev[i] + 0.5 * cc * lapv[i];

  std::vector<std::vector<double>> snaps;
  std::size_t si = 0;
  auto maybe_snap = [&](double time, const std::vector<double>& state) {
    while (si < snap_times.size() && std::abs(snap_times[si] - time) < 1e-9) {
      snaps.push_back(state);
      ++si;
    }
  };
  maybe_snap(grid.t0, prev);
  const long total_steps = std::lround((grid.t1 - grid.t0) / step);
  for (long s = 1; s <= total_steps && si < snap_times.size(); ++s) {
    maybe_snap(grid.t0 + s * step, cur);
    lap(cur, lapv);
    for (std::size_t i = 0; i < cur.size(); ++i)
      next[i] = 2.0 * cur[i] - prev[i] + cc * lapv[i];
    prev.swap(cur);
    cur.swap(next);
  }
  if (si < snap_times.size())
    throw SolverError("snapshot time not reachable on the integration grid");
  return snaps;
}

// ---- dataset generation -------------------------------------------------------

PdeKind parse_pde(const std::string& s) {
  if (s == "burgers") return PdeKind::Burgers;
  if (s == "diffusion_reaction") return PdeKind::DiffusionReaction;
  if (s == "wave2d") return PdeKind::Wave2d;
  throw FormatError("unknown pde '" + s + "'");
}

std::string to_string(PdeKind k) {
  switch (k) {
    case PdeKind::Burgers: return "burgers";
    case PdeKind::DiffusionReaction: return "diffusion_reaction";
    case PdeKind::Wave2d: return "wave2d";
  }
  return "?";
}

PdeDataset generate_dataset(PdeKind pde, IcFamily family, int n, int nt, std::uint64_t seed,
                            const GenParams& gp, bool serial) {
  PdeDataset ds;
  ds.pde = pde;
  ds.family = family;
  switch (pde) {
    case PdeKind::Burgers:
      ds.mesh1 = Mesh1D{0.0, 1.0, 100, true};
      ds.tgrid = TimeGrid{0.0, 1.0, 101};
      break;
    case PdeKind::DiffusionReaction:
      ds.mesh1 = Mesh1D{0.0, 1.0, 101, false};
      ds.tgrid = TimeGrid{0.0, 1.0, 101};
      break;
    case PdeKind::Wave2d:
      ds.is2d = true;
      ds.mesh2 = Mesh2D{0.0, 5.0, 0.0, 5.0, 80, 80};
      ds.tgrid = TimeGrid{0.0, 4.0, 101};
      break;
  }
  if (pde == PdeKind::Wave2d && family != IcFamily::GaussImpulse)
    throw FormatError("wave2d pairs with the gauss_impulse family");
  if (pde != PdeKind::Wave2d && family == IcFamily::GaussImpulse)
    throw FormatError("gauss_impulse pairs with wave2d");

  const int nsnap = std::min(nt, ds.tgrid.nt);
  ds.sample_params.resize(std::size_t(n));
  ds.phi0.resize(std::size_t(n));
  ds.snap_times.resize(std::size_t(n));
  ds.snapshots.resize(std::size_t(n));
  ds.norm_constants.assign(std::size_t(n), 1.0);

  Rng master(seed);
  auto one = [&](std::size_t i) {
    Rng rng = master.fork(i);
    std::vector<int> pool(std::size_t(ds.tgrid.nt));
    for (int k = 0; k < ds.tgrid.nt; ++k) pool[std::size_t(k)] = k;
    for (int k = 0; k < nsnap; ++k) {
      int pick = k + rng.uniform_int(ds.tgrid.nt - k);
      std::swap(pool[std::size_t(k)], pool[std::size_t(pick)]);
    }
    pool.resize(std::size_t(nsnap));
    std::sort(pool.begin(), pool.end());
    std::vector<double> times;
    for (int k : pool) times.push_back(ds.tgrid.node(k));

    std::vector<std::vector<double>> snaps;
    if (pde == PdeKind::Burgers) {
      IcSample s = sample_ic(family, ds.mesh1, rng);
      snaps = solve_burgers(s.phi0, gp.nu, ds.mesh1, ds.tgrid, times);
      ds.sample_params[i] = std::move(s.params);
      ds.phi0[i] = std::move(s.phi0);
    } else if (pde == PdeKind::DiffusionReaction) {
      IcSample s = sample_ic(family, ds.mesh1, rng);
      // initial data equals the source draw: phi(x,0) = f(x)
      snaps = solve_diffusion_reaction(s.phi0, s.phi0, gp.D, gp.lambda, ds.mesh1, ds.tgrid, times);
      ds.sample_params[i] = std::move(s.params);
      ds.phi0[i] = std::move(s.phi0);
    } else {
      IcSample s = sample_ic_2d(family, ds.mesh2, rng);
      snaps = solve_wave2d(s.phi0, gp.wave_c, ds.mesh2, ds.tgrid, times);
      ds.sample_params[i] = std::move(s.params);
      ds.phi0[i] = std::move(s.phi0);
    }
    ds.snap_times[i] = std::move(times);
    auto& flat = ds.snapshots[i];
    flat.reserve(snaps.size() * snaps[0].size());
    for (const auto& snap : snaps) flat.insert(flat.end(), snap.begin(), snap.end());
  };
  if (serial)
    serial_for(std::size_t(n), one);
  else
    parallel_for(std::size_t(n), one);
  return ds;
}

NormMode parse_norm(const std::string& s) {
  if (s == "none") return NormMode::None;
  if (s == "integral") return NormMode::Integral;
  if (s == "l1") return NormMode::L1;
  throw FormatError("unknown normalization mode '" + s + "'");
}

void normalize_dataset(PdeDataset& ds, NormMode mode) {
  const double h = ds.node_measure();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double c = 1.0;
    if (mode == NormMode::Integral) {
      double s = 0.0;
      for (double v : ds.phi0[i]) s += v;
      c = s * h;
      if (std::abs(c) <= 1e-3)
        throw NormalizationError("sample " + std::to_string(i) + ": integral of phi0 is " +
                                 std::to_string(c) +
                                 ", too close to zero for integral normalization");
    } else if (mode == NormMode::L1) {
      double s = 0.0;
      for (double v : ds.phi0[i]) s += std::abs(v);
      c = s * h;
      if (c <= 1e-12)
        throw NormalizationError("sample " + std::to_string(i) + ": |phi0| integrates to zero");
    }
    ds.norm_constants[i] = c;
    if (c != 1.0) {
      for (double& v : ds.phi0[i]) v /= c;
      for (double& v : ds.snapshots[i]) v /= c;
    }
  }
}

// ---- serialization ------------------------------------------------------------

void write_dataset(const PdeDataset& ds, const std::string& prefix) {
  json meta;
  meta["magic"] = "RFAE-DS";
  meta["version"] = 1;
  meta["pde"] = to_string(ds.pde);
  meta["family"] = to_string(ds.family);
  if (ds.is2d)
    meta["mesh"] = json{{"kind", "2d"}, {"x0", ds.mesh2.x0}, {"x1", ds.mesh2.x1},
                        {"y0", ds.mesh2.y0}, {"y1", ds.mesh2.y1}, {"nx", ds.mesh2.nx},
                        {"ny", ds.mesh2.ny}};
  else
    meta["mesh"] = json{{"kind", "1d"}, {"x0", ds.mesh1.x0}, {"x1", ds.mesh1.x1},
                        {"n", ds.mesh1.n}, {"periodic", ds.mesh1.periodic}};
  meta["time_grid"] = json{{"t0", ds.tgrid.t0}, {"t1", ds.tgrid.t1}, {"nt", ds.tgrid.nt}};
  meta["samples"] = ds.size();
  meta["sample_params"] = ds.sample_params;
  meta["norm_constants"] = ds.norm_constants;

  json manifest = json::array();
  std::uint64_t offset = 0;
  auto entry = [&](const std::string& name, std::uint64_t count) {
    manifest.push_back(json{{"name", name}, {"offset", offset}, {"count", count}});
    offset += count;
  };
  for (std::size_t i = 0; i < ds.size(); ++i) {
    entry("sample" + std::to_string(i) + "/phi0", ds.phi0[i].size());
    entry("sample" + std::to_string(i) + "/times", ds.snap_times[i].size());
    entry("sample" + std::to_string(i) + "/snapshots", ds.snapshots[i].size());
  }
  meta["manifest"] = manifest;
  meta["element_count"] = offset;

  std::ofstream mf(prefix + ".meta.json");
  if (!mf) throw FormatError("cannot write " + prefix + ".meta.json");
  mf << meta.dump(2) << "\n";

  std::ofstream pf(prefix + ".f64", std::ios::binary);
  if (!pf) throw FormatError("cannot write " + prefix + ".f64");
  auto put = [&](const std::vector<double>& v) {
    pf.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
  };
  for (std::size_t i = 0; i < ds.size(); ++i) {
    put(ds.phi0[i]);
    put(ds.snap_times[i]);
    put(ds.snapshots[i]);
  }
  if (!pf) throw FormatError("payload write failed for " + prefix + ".f64");
}

PdeDataset read_dataset(const std::string& prefix) {
  std::ifstream mf(prefix + ".meta.json");
  if (!mf) throw FormatError("cannot open " + prefix + ".meta.json");
  json meta = json::parse(mf, nullptr, true);
  if (meta.value("magic", "") != std::string("RFAE-DS"))
    throw FormatError("bad dataset magic in " + prefix + ".meta.json");
  if (meta.at("version").get<int>() != 1) throw FormatError("unsupported dataset version");

  PdeDataset ds;
  ds.pde = parse_pde(meta.at("pde").get<std::string>());
  ds.family = parse_family(meta.at("family").get<std::string>());
  const json& jm = meta.at("mesh");
  if (jm.at("kind") == "2d") {
    ds.is2d = true;
    ds.mesh2 = Mesh2D{jm.at("x0"), jm.at("x1"), jm.at("y0"), jm.at("y1"), jm.at("nx"), jm.at("ny")};
  } else {
    ds.mesh1 = Mesh1D{jm.at("x0"), jm.at("x1"), jm.at("n"), jm.at("periodic")};
  }
  const json& jt = meta.at("time_grid");
  ds.tgrid = TimeGrid{jt.at("t0"), jt.at("t1"), jt.at("nt")};
  ds.sample_params = meta.at("sample_params").get<std::vector<std::map<std::string, double>>>();
  ds.norm_constants = meta.at("norm_constants").get<std::vector<double>>();
  const std::size_t n = meta.at("samples").get<std::size_t>();

  const std::uint64_t expect = meta.at("element_count").get<std::uint64_t>();
  const std::string payload = prefix + ".f64";
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(payload, ec);
  if (ec) throw FormatError("missing payload file " + payload);
  if (bytes != expect * sizeof(double))
    throw FormatError("payload truncated or padded: " + std::to_string(bytes) + " bytes vs " +
                      std::to_string(expect * sizeof(double)) + " declared");

  std::ifstream pf(payload, std::ios::binary);
  ds.phi0.resize(n);
  ds.snap_times.resize(n);
  ds.snapshots.resize(n);
  auto take = [&](std::vector<double>& v, std::uint64_t count) {
    v.resize(count);
    pf.read(reinterpret_cast<char*>(v.data()), std::streamsize(count * sizeof(double)));
    if (!pf) throw FormatError("payload read failed");
  };
  const json& manifest = meta.at("manifest");
  if (manifest.size() != 3 * n) throw FormatError("manifest entry count mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    take(ds.phi0[i], manifest[3 * i].at("count").get<std::uint64_t>());
    take(ds.snap_times[i], manifest[3 * i + 1].at("count").get<std::uint64_t>());
    take(ds.snapshots[i], manifest[3 * i + 2].at("count").get<std::uint64_t>());
  }
  return ds;
}

}  // namespace rfae::pde
