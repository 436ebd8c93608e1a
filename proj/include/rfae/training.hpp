#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rfae/nn.hpp"
#include "rfae/pde_data.hpp"
#include "rfae/rng.hpp"

namespace rfae::train {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode {
  FullRicci,
  FixedMetricCigar,
  FixedMetricTorus,
  Sphere,
  SurfaceOfRevolution,
  SffResidual
};
Mode parse_mode(const std::string& s);
std::string to_string(Mode m);

enum class Pairing { Identity, Uniform };
enum class MetricSource { Network, Cigar };
enum class SphereRestore { None, Shift, MetricMatch };

struct LrDrop {
  long step = 0;
  double factor = 1.0;
};

struct TrainConfig {
  Mode mode = Mode::FullRicci;
  double lambda_dec = 1.0;
  double lambda_met = 1.0;
  double time_scale = 0.5;   // C_t in tau = C_t T
  double tau_horizon = 0.0;  // 0 -> C_t * T
  int batch_size = 64;
  long iterations = 1000;
  double learning_rate = 1e-4;
  std::vector<LrDrop> lr_drops;
  double weight_decay = 1e-4;
  long late_weight_decay_step = -1;  // <0 disables the late-phase override
  double late_weight_decay = 0.0;
  double clip_norm = 1.0;
  int width = 64;
  int depth = 3;
  nn::Activation activation = nn::Activation::Tanh;
  nn::Variant variant = nn::Variant::Vanilla;
  int latent_dim = 2;  // dim U
  int embed_dim = 3;   // ambient dimension d
  double noise_u = 0.0;
  double noise_manifold = 0.0;
  double dropout_early = 0.0;
  double dropout_late = 0.0;
  std::uint64_t seed = 0;
  bool deterministic = true;
  long checkpoint_interval = 0;  // 0 -> final checkpoint only
  Pairing pairing = Pairing::Identity;
  MetricSource metric_source = MetricSource::Network;
  double sphere_radius = 1.0;
  SphereRestore sphere_restore = SphereRestore::None;
  double torus_a = -1.0;
  double torus_b = 2.0;
  bool torus_symmetry = true;

  double horizon(double T) const { return tau_horizon > 0.0 ? tau_horizon : time_scale * T; }
  void validate(const pde::PdeDataset& ds) const;
};

TrainConfig config_from_json(const std::string& text);
std::string config_to_json(const TrainConfig& cfg);
TrainConfig load_config(const std::string& path);
std::string config_hash(const TrainConfig& cfg);

struct LossBreakdown {
  double l_ric = 0, l_dec = 0, l_met = 0, l_sym = 0, l_extra = 0, total = 0;
  int skipped = 0;     // singular-metric samples dropped from L_Ric this batch
  int indefinite = 0;  // diagnostic: samples whose metric value was not PD
};

struct TrainResult {
  nn::ModelBundle bundle;
  std::vector<LossBreakdown> history;
  bool aborted = false;
  std::string abort_reason;
  long final_iter = 0;
};

/// Networks for the configured mode, Glorot-initialized.
nn::ModelBundle make_bundle(const TrainConfig& cfg, int n_nodes, Rng& rng);

/// One collocation draw: which sample/snapshot a batch slot sees, the paired
/// flow times tau_hat = C_t t* and tau_til, and the slot noise stream.
struct SlotDraw {
  std::size_t sample = 0;
  int snap = 0;
  double t_phys = 0.0;
  double tau_hat = 0.0;
  double tau_til = 0.0;
  std::uint64_t noise_seed = 0;
};

struct SlotResult {
  double ric = 0, dec = 0, met = 0, sym = 0;
  bool ric_skipped = false;
  bool indefinite = false;
};

/// Per-sample loss (and optionally its parameter gradient, scaled by
/// `grad_scale`) on a fresh tape. Training-mode toggles dropout and noise.
SlotResult eval_slot(const TrainConfig& cfg, const nn::ModelBundle& bundle,
                     const pde::PdeDataset& ds, const SlotDraw& draw, bool training,
                     std::vector<double>* grad_out, double grad_scale);

/// Batch loss+gradient kernel. Slots evaluate concurrently (OpenMP); the
/// gradient reduction runs in slot order, so results do not depend on thread
/// count. `serial` forces the reference single-thread path.
LossBreakdown batch_step(const TrainConfig& cfg, const nn::ModelBundle& bundle,
                         const pde::PdeDataset& ds, const std::vector<SlotDraw>& draws,
                         std::vector<double>& grad_out, bool serial = false);

/// Algorithm: sample a batch, map initial data to U, encode, decode, assemble
/// the mode's losses, and update with the optimizer. Writes history.csv and
/// checkpoints under out_dir when given.
TrainResult train(const TrainConfig& cfg, const pde::PdeDataset& ds,
                  const std::string& out_dir = "");

/// Gaussian regularization noise: u + C u .* xi (element-scaled) and
/// x + C r(tau) xi (radius-scaled). Identity when C = 0.
std::vector<double> inject_noise_u(std::span<const double> u, double C, Rng& rng);
std::vector<double> inject_noise_manifold(std::span<const double> x, double C, double radius,
                                          Rng& rng);

/// Deterministic evaluation path (no dropout, no noise).
std::vector<double> latent_u(const TrainConfig& cfg, const nn::ModelBundle& bundle,
                             const std::vector<double>& phi0);
std::vector<double> embed_point(const TrainConfig& cfg, const nn::ModelBundle& bundle,
                                const std::vector<double>& u_wrapped, double tau);
std::vector<double> predict(const TrainConfig& cfg, const nn::ModelBundle& bundle,
                            const std::vector<double>& phi0, double t_phys);

/// Checkpoints carry the training config so evaluation is self-contained.
void save_model(const std::string& path, const nn::ModelBundle& bundle, const TrainConfig& cfg,
                long step, std::uint64_t rng_state);
struct LoadedModel {
  nn::ModelBundle bundle;
  TrainConfig cfg;
  long step = 0;
};
LoadedModel load_model(const std::string& path);

}  // namespace rfae::train
