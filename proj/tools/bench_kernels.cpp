// Benchmark of the OpenMP batch kernels against their serial reference
// implementations, plus the raw geometry pipeline throughput.

#include <chrono>
#include <cstdio>

#include "rfae/closed_forms.hpp"
#include "rfae/geometry.hpp"
#include "rfae/parallel.hpp"
#include "rfae/pde_data.hpp"
#include "rfae/training.hpp"

using namespace rfae;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

}  // namespace

int main() {
  configure_threads();
  std::printf("worker threads: %d\n\n", worker_threads());

  // --- batch loss+gradient kernel -------------------------------------------
  {
    auto ds = pde::generate_dataset(pde::PdeKind::Burgers, pde::IcFamily::A1, 16, 20, 1);
    train::TrainConfig cfg;
    cfg.mode = train::Mode::FullRicci;
    cfg.width = 64;
    cfg.depth = 3;
    cfg.batch_size = 16;
    Rng rng(1);
    auto bundle = train::make_bundle(cfg, ds.n_nodes(), rng);

    Rng draw_rng(2);
    std::vector<train::SlotDraw> draws(std::size_t(cfg.batch_size));
    for (auto& d : draws) {
      d.sample = std::size_t(draw_rng.uniform_int(int(ds.size())));
      d.snap = draw_rng.uniform_int(int(ds.snap_times[d.sample].size()));
      d.t_phys = ds.snap_times[d.sample][std::size_t(d.snap)];
      d.tau_hat = cfg.time_scale * d.t_phys;
      d.tau_til = d.tau_hat;
      d.noise_seed = draw_rng.next_u64();
    }

    std::vector<double> grads;
    const double t_ser =
        time_best_of(3, [&] { train::batch_step(cfg, bundle, ds, draws, grads, true); });
    const double t_par =
        time_best_of(3, [&] { train::batch_step(cfg, bundle, ds, draws, grads, false); });
    std::printf("batch_step (full_ricci, w=64, batch=16, %zu params)\n",
                bundle.params.data.size());
    std::printf("  serial reference: %8.2f ms\n", 1e3 * t_ser);
    std::printf("  openmp kernel:    %8.2f ms   speedup %.2fx\n\n", 1e3 * t_par, t_ser / t_par);
  }

  // --- dataset generation ----------------------------------------------------
  {
    const double t_ser = time_best_of(
        2, [&] { pde::generate_dataset(pde::PdeKind::Burgers, pde::IcFamily::A1, 24, 20, 7, {}, true); });
    const double t_par = time_best_of(
        2, [&] { pde::generate_dataset(pde::PdeKind::Burgers, pde::IcFamily::A1, 24, 20, 7, {}, false); });
    std::printf("generate_dataset (burgers, 24 samples)\n");
    std::printf("  serial reference: %8.2f ms\n", 1e3 * t_ser);
    std::printf("  openmp kernel:    %8.2f ms   speedup %.2fx\n\n", 1e3 * t_par, t_ser / t_par);
  }

  // --- geometry pipeline throughput -------------------------------------------
  {
    geom::MetricField mf = cf::cigar_field();
    Rng rng(3);
    const int npts = 20000;
    volatile double sink = 0.0;
    const double t = time_best_of(3, [&] {
      double acc = 0;
      for (int i = 0; i < npts; ++i) {
        std::array<double, 2> u = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
        auto md = geom::eval_metric_derivs<double>(mf.eval, std::span<const double>(u),
                                                   rng.uniform(0, 1));
        auto res = geom::ricci_flow_residual(md);
        acc += geom::frobenius_sq_val(res);
      }
      sink = acc;
    });
    (void)sink;
    std::printf("ricci pipeline (closed-form metric): %.2f us/point, %d points in %.1f ms\n",
                1e6 * t / npts, npts, 1e3 * t);
  }
  return 0;
}
