#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfae/rng.hpp"

namespace rfae::pde {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NormalizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Mesh1D {
  double x0 = 0.0, x1 = 1.0;
  int n = 0;
  bool periodic = false;
  double h() const { return periodic ? (x1 - x0) / n : (x1 - x0) / (n - 1); }
  double node(int j) const { return x0 + j * h(); }
};

struct Mesh2D {
  double x0 = 0.0, x1 = 5.0, y0 = 0.0, y1 = 5.0;
  int nx = 0, ny = 0;
  double hx() const { return (x1 - x0) / (nx - 1); }
  double hy() const { return (y1 - y0) / (ny - 1); }
  double xnode(int i) const { return x0 + i * hx(); }
  double ynode(int j) const { return y0 + j * hy(); }
};

struct TimeGrid {
  double t0 = 0.0, t1 = 1.0;
  int nt = 101;
  double ht() const { return (t1 - t0) / (nt - 1); }
  double node(int i) const { return t0 + i * ht(); }
};

enum class IcFamily { A1, A1New, A2, A2New1, A2New2, A2New3, GaussImpulse };

IcFamily parse_family(const std::string& s);
std::string to_string(IcFamily f);

/// Formula value of a 1-d family member at x given its drawn coefficients.
double ic_value(IcFamily f, const std::map<std::string, double>& params, double x);
double ic_value_2d(const std::map<std::string, double>& params, double x, double y);

struct IcSample {
  std::map<std::string, double> params;
  std::vector<double> phi0;
};

/// Draws family coefficients uniformly from the defining box and evaluates
/// the formula on the mesh.
IcSample sample_ic(IcFamily f, const Mesh1D& mesh, Rng& rng);
IcSample sample_ic_2d(IcFamily f, const Mesh2D& mesh, Rng& rng);

// ---- solvers ----------------------------------------------------------------

/// Viscous Burgers with periodic boundary: conservative MUSCL-Godunov
/// advection (explicit, substepped to CFL) and Crank-Nicolson diffusion.
/// Returns one snapshot per requested time (sorted, within [t0,t1]).
std::vector<std::vector<double>> solve_burgers(const std::vector<double>& phi0, double nu,
                                               const Mesh1D& mesh, const TimeGrid& grid,
                                               std::span<const double> snap_times);

/// 1-d diffusion-reaction d_t phi = D d_xx phi + lambda phi^2 + f(x) with
/// zero-Dirichlet boundaries; Crank-Nicolson diffusion, Heun reaction.
std::vector<std::vector<double>> solve_diffusion_reaction(const std::vector<double>& phi0,
                                                          const std::vector<double>& f, double D,
                                                          double lambda, const Mesh1D& mesh,
                                                          const TimeGrid& grid,
                                                          std::span<const double> snap_times);

/// 2-d wave equation with Neumann boundaries and zero initial velocity;
/// leapfrog with mirrored ghosts. dt=0 picks a stable step automatically;
/// an explicit dt violating c*dt/h <= 1/sqrt(2) raises SolverError with a
/// suggestion.
std::vector<std::vector<double>> solve_wave2d(const std::vector<double>& phi0, double c,
                                              const Mesh2D& mesh, const TimeGrid& grid,
                                              std::span<const double> snap_times, double dt = 0.0);

/// Discrete leapfrog energy (kinetic at the half step plus the mixed-time
/// gradient form); exactly conserved by the scheme up to roundoff.
double wave_energy(const std::vector<double>& prev, const std::vector<double>& cur, double dt,
                   double c, const Mesh2D& mesh);

// ---- datasets ---------------------------------------------------------------

enum class PdeKind { Burgers, DiffusionReaction, Wave2d };
PdeKind parse_pde(const std::string& s);
std::string to_string(PdeKind k);

struct PdeDataset {
  PdeKind pde = PdeKind::Burgers;
  IcFamily family = IcFamily::A1;
  Mesh1D mesh1;
  Mesh2D mesh2;
  bool is2d = false;
  TimeGrid tgrid;
  std::vector<std::map<std::string, double>> sample_params;
  std::vector<std::vector<double>> phi0;        // [sample][node]
  std::vector<std::vector<double>> snap_times;  // [sample][k]
  std::vector<std::vector<double>> snapshots;   // [sample][k * n_nodes], time-major
  std::vector<double> norm_constants;           // recorded even when 1

  int n_nodes() const { return is2d ? mesh2.nx * mesh2.ny : mesh1.n; }
  std::size_t size() const { return phi0.size(); }
  double node_measure() const { return is2d ? mesh2.hx() * mesh2.hy() : mesh1.h(); }
};

struct GenParams {
  double nu = 0.01;      // Burgers viscosity
  double D = 0.01;       // diffusion coefficient
  double lambda = 0.01;  // reaction rate
  double wave_c = 1.0;   // wave speed
};

/// Generates n samples with nt snapshots each. Sample generation is
/// embarrassingly parallel; a per-sample seed stream keeps the output
/// independent of thread count. `serial` forces the reference path.
PdeDataset generate_dataset(PdeKind pde, IcFamily family, int n, int nt, std::uint64_t seed,
                            const GenParams& gp = {}, bool serial = false);

enum class NormMode { None, Integral, L1 };
NormMode parse_norm(const std::string& s);

/// One constant per sample scales phi0 and all snapshots identically;
/// the constant is recorded (1 for mode none).
void normalize_dataset(PdeDataset& ds, NormMode mode);

/// <prefix>.meta.json + <prefix>.f64 (little-endian float64, manifest order).
/// Round trips are bit-exact.
void write_dataset(const PdeDataset& ds, const std::string& prefix);
PdeDataset read_dataset(const std::string& prefix);

}  // namespace rfae::pde
