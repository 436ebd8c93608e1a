#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfae/pde_data.hpp"
#include "rfae/training.hpp"

namespace rfae::eval {

struct UndefinedMetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Relative L1 error |pred - truth|_L1 / |truth|_L1 with node-sum quadrature;
/// behaves as a percentage error and is exactly scale invariant.
double relative_l1(std::span<const double> pred, std::span<const double> truth, double h);

struct TimeStat {
  double time = 0.0;
  double mean = 0.0;
  double stddev = 0.0;  // population std over samples
  int count = 0;
  int excluded = 0;          // near-zero truth norm
  int nearest_warnings = 0;  // snapshot further than h_t/2 from the request
};

struct EvalReport {
  std::string mode;
  std::string dataset_id;
  int sample_count = 0;
  std::vector<TimeStat> per_time;
};

/// Mean +- std of the relative L1 error at each requested time over all
/// samples, matching each request to the nearest stored snapshot.
/// Deterministic: no dropout or noise on the evaluation path.
EvalReport evaluate(const train::TrainConfig& cfg, const nn::ModelBundle& bundle,
                    const pde::PdeDataset& ds, std::span<const double> times,
                    const std::string& dataset_id = "");

std::string report_json(const EvalReport& rep);
std::string report_table(const EvalReport& rep);

/// CSV of latent states: split,sample_id,time,u1..um,x1..xd,<family params>.
struct LatentSplit {
  std::string tag;  // train | test | extrapolation
  const pde::PdeDataset* ds = nullptr;
};
void export_latent(const train::TrainConfig& cfg, const nn::ModelBundle& bundle,
                   const std::vector<LatentSplit>& splits, std::span<const double> times,
                   const std::string& path);

}  // namespace rfae::eval
