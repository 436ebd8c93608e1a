#include "rfae/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "rfae/closed_forms.hpp"
#include "rfae/geometry.hpp"
#include "rfae/parallel.hpp"

namespace rfae::train {

using json = nlohmann::json;
using ad::Dual;
using ad::Var;
namespace cf = rfae::cf;

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

Mode parse_mode(const std::string& s) {
  if (s == "full_ricci") return Mode::FullRicci;
  if (s == "fixed_metric_cigar") return Mode::FixedMetricCigar;
  if (s == "fixed_metric_torus") return Mode::FixedMetricTorus;
  if (s == "sphere") return Mode::Sphere;
  if (s == "surface_of_revolution") return Mode::SurfaceOfRevolution;
  if (s == "sff_residual") return Mode::SffResidual;
  throw TrainError("unknown training mode '" + s + "'");
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::FullRicci: return "full_ricci";
    case Mode::FixedMetricCigar: return "fixed_metric_cigar";
    case Mode::FixedMetricTorus: return "fixed_metric_torus";
    case Mode::Sphere: return "sphere";
    case Mode::SurfaceOfRevolution: return "surface_of_revolution";
    case Mode::SffResidual: return "sff_residual";
  }
  return "?";
}

namespace {

Pairing parse_pairing(const std::string& s) {
  if (s == "identity") return Pairing::Identity;
  if (s == "uniform") return Pairing::Uniform;
  throw TrainError("unknown pairing '" + s + "'");
}
std::string to_string(Pairing p) { return p == Pairing::Identity ? "identity" : "uniform"; }

MetricSource parse_metric_source(const std::string& s) {
  if (s == "network") return MetricSource::Network;
  if (s == "cigar") return MetricSource::Cigar;
  throw TrainError("unknown metric_source '" + s + "'");
}
std::string to_string(MetricSource m) {
  return m == MetricSource::Network ? "network" : "cigar";
}

SphereRestore parse_restore(const std::string& s) {
  if (s == "none") return SphereRestore::None;
  if (s == "shift") return SphereRestore::Shift;
  if (s == "metric_match") return SphereRestore::MetricMatch;
  throw TrainError("unknown sphere_restore '" + s + "'");
}
std::string to_string(SphereRestore r) {
  switch (r) {
    case SphereRestore::None: return "none";
    case SphereRestore::Shift: return "shift";
    case SphereRestore::MetricMatch: return "metric_match";
  }
  return "?";
}

}  // namespace

void TrainConfig::validate(const pde::PdeDataset& ds) const {
  if (ds.size() == 0) throw TrainError("dataset is empty");
  if (batch_size < 1) throw TrainError("batch_size must be >= 1");
  if (iterations < 1) throw TrainError("iterations must be >= 1");
  if (lambda_dec < 0 || lambda_met < 0) throw TrainError("loss weights must be nonnegative");
  if (time_scale <= 0) throw TrainError("time_scale must be positive");
  if (dropout_early < 0 || dropout_early >= 1 || dropout_late < 0 || dropout_late >= 1)
    throw TrainError("dropout rates must lie in [0,1)");
  if (width < 1 || depth < 1) throw TrainError("width/depth must be positive");

  const double T = ds.tgrid.t1;
  switch (mode) {
    case Mode::FullRicci:
      if (latent_dim < 2 || latent_dim > 4)
        throw TrainError("full_ricci needs latent_dim in [2,4] (m=1 has no curvature)");
      if (embed_dim < latent_dim) throw TrainError("embed_dim must be >= latent_dim");
      break;
    case Mode::FixedMetricCigar:
    case Mode::FixedMetricTorus:
    case Mode::SffResidual:
      if (latent_dim != 2) throw TrainError(to_string(mode) + " requires latent_dim = 2");
      if (mode == Mode::SffResidual && embed_dim != 3)
        throw TrainError("sff_residual requires an embedding in R^3");
      break;
    case Mode::Sphere: {
      if (latent_dim != embed_dim - 1)
        throw TrainError("sphere mode requires latent_dim = embed_dim - 1");
      const double ext = cf::sphere_extinction_time(sphere_radius, embed_dim);
      if (horizon(T) >= ext)
        throw TrainError("tau horizon " + std::to_string(horizon(T)) +
                         " reaches sphere extinction at " + std::to_string(ext) +
                         "; lower time_scale or raise sphere_radius");
      break;
    }
    case Mode::SurfaceOfRevolution:
      if (latent_dim != 2 || embed_dim != 3)
        throw TrainError("surface_of_revolution requires latent_dim=2, embed_dim=3");
      break;
  }
  if (noise_manifold > 0 && mode != Mode::Sphere)
    throw TrainError("manifold noise scales with the sphere radius; enable it in sphere mode only");
  if (metric_source == MetricSource::Cigar && mode != Mode::FullRicci)
    throw TrainError("metric_source=cigar applies to full_ricci only");
}

// ---- config io ---------------------------------------------------------------

std::string config_to_json(const TrainConfig& c) {
  json j;
  j["mode"] = to_string(c.mode);
  j["lambda_dec"] = c.lambda_dec;
  j["lambda_met"] = c.lambda_met;
  j["time_scale"] = c.time_scale;
  j["tau_horizon"] = c.tau_horizon;
  j["batch_size"] = c.batch_size;
  j["iterations"] = c.iterations;
  j["learning_rate"] = c.learning_rate;
  json drops = json::array();
  for (const auto& d : c.lr_drops) drops.push_back(json{{"step", d.step}, {"factor", d.factor}});
  j["lr_drops"] = drops;
  j["weight_decay"] = c.weight_decay;
  j["late_weight_decay_step"] = c.late_weight_decay_step;
  j["late_weight_decay"] = c.late_weight_decay;
  j["clip_norm"] = c.clip_norm;
  j["width"] = c.width;
  j["depth"] = c.depth;
  j["activation"] = nn::to_string(c.activation);
  j["variant"] = nn::to_string(c.variant);
  j["latent_dim"] = c.latent_dim;
  j["embed_dim"] = c.embed_dim;
  j["noise_u"] = c.noise_u;
  j["noise_manifold"] = c.noise_manifold;
  j["dropout_early"] = c.dropout_early;
  j["dropout_late"] = c.dropout_late;
  j["seed"] = c.seed;
  j["deterministic"] = c.deterministic;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["pairing"] = to_string(c.pairing);
  j["metric_source"] = to_string(c.metric_source);
  j["sphere_radius"] = c.sphere_radius;
  j["sphere_restore"] = to_string(c.sphere_restore);
  j["torus_a"] = c.torus_a;
  j["torus_b"] = c.torus_b;
  j["torus_symmetry"] = c.torus_symmetry;
  return j.dump(2);
}

TrainConfig config_from_json(const std::string& text) {
  json j = json::parse(text);
  static const std::vector<std::string> known = {
      "mode",          "lambda_dec",    "lambda_met",     "time_scale",
      "tau_horizon",   "batch_size",    "iterations",     "learning_rate",
      "lr_drops",      "weight_decay",  "late_weight_decay_step", "late_weight_decay",
      "clip_norm",     "width",         "depth",          "activation",
      "variant",       "latent_dim",    "embed_dim",      "noise_u",
      "noise_manifold", "dropout_early", "dropout_late",  "seed",
      "deterministic", "checkpoint_interval", "pairing",  "metric_source",
      "sphere_radius", "sphere_restore", "torus_a",       "torus_b",
      "torus_symmetry"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw TrainError("unknown config key '" + it.key() + "'");
  }
  TrainConfig c;
  if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
  auto get = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j[k].get<std::decay_t<decltype(field)>>();
  };
  get("lambda_dec", c.lambda_dec);
  get("lambda_met", c.lambda_met);
  get("time_scale", c.time_scale);
  get("tau_horizon", c.tau_horizon);
  get("batch_size", c.batch_size);
  get("iterations", c.iterations);
  get("learning_rate", c.learning_rate);
  if (j.contains("lr_drops"))
    for (const auto& d : j["lr_drops"])
      c.lr_drops.push_back(LrDrop{d.at("step").get<long>(), d.at("factor").get<double>()});
  get("weight_decay", c.weight_decay);
  get("late_weight_decay_step", c.late_weight_decay_step);
  get("late_weight_decay", c.late_weight_decay);
  get("clip_norm", c.clip_norm);
  get("width", c.width);
  get("depth", c.depth);
  if (j.contains("activation")) c.activation = nn::parse_activation(j["activation"]);
  if (j.contains("variant")) c.variant = nn::parse_variant(j["variant"]);
  get("latent_dim", c.latent_dim);
  get("embed_dim", c.embed_dim);
  get("noise_u", c.noise_u);
  get("noise_manifold", c.noise_manifold);
  get("dropout_early", c.dropout_early);
  get("dropout_late", c.dropout_late);
  get("seed", c.seed);
  get("deterministic", c.deterministic);
  get("checkpoint_interval", c.checkpoint_interval);
  if (j.contains("pairing")) c.pairing = parse_pairing(j["pairing"]);
  if (j.contains("metric_source")) c.metric_source = parse_metric_source(j["metric_source"]);
  get("sphere_radius", c.sphere_radius);
  if (j.contains("sphere_restore")) c.sphere_restore = parse_restore(j["sphere_restore"]);
  get("torus_a", c.torus_a);
  get("torus_b", c.torus_b);
  get("torus_symmetry", c.torus_symmetry);
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw TrainError("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

std::string config_hash(const TrainConfig& cfg) {
  const std::string s = config_to_json(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- bundle ------------------------------------------------------------------

nn::ModelBundle make_bundle(const TrainConfig& cfg, int n_nodes, Rng& rng) {
  const int m = cfg.latent_dim;
  const int d = cfg.embed_dim;
  auto mk = [&](int in, int out) {
    nn::MlpSpec s;
    s.input_dim = in;
    s.output_dim = out;
    s.widths.assign(std::size_t(cfg.depth), cfg.width);
    s.activation = cfg.activation;
    s.variant = cfg.variant;
    return s;
  };

  nn::ModelBundle b;
  b.time_scale = cfg.time_scale;
  b.nets.emplace_back("P", mk(n_nodes, m));
  if (cfg.mode == Mode::FullRicci && cfg.metric_source == MetricSource::Network)
    b.nets.emplace_back("g", mk(m + 1, m * m));
  const bool has_E = cfg.mode == Mode::FullRicci || cfg.mode == Mode::FixedMetricCigar ||
                     cfg.mode == Mode::FixedMetricTorus || cfg.mode == Mode::SffResidual ||
                     (cfg.mode == Mode::Sphere && cfg.sphere_restore == SphereRestore::MetricMatch);
  if (has_E) b.nets.emplace_back("E", mk(m + 1, d));
  b.nets.emplace_back("D", mk(d, n_nodes));
  if (cfg.mode == Mode::Sphere && cfg.sphere_restore == SphereRestore::Shift)
    b.nets.emplace_back("S", mk(1, d));
  if (cfg.mode == Mode::SurfaceOfRevolution) {
    b.nets.emplace_back("r", mk(2, 1));
    b.nets.emplace_back("z", mk(2, 1));
  }
  nn::glorot_init(b, rng);
  return b;
}

// ---- noise -------------------------------------------------------------------

std::vector<double> inject_noise_u(std::span<const double> u, double C, Rng& rng) {
  std::vector<double> out(u.begin(), u.end());
  if (C == 0.0) return out;
  for (auto& v : out) v += C * v * rng.normal();
  return out;
}

std::vector<double> inject_noise_manifold(std::span<const double> x, double C, double radius,
                                          Rng& rng) {
  std::vector<double> out(x.begin(), x.end());
  if (C == 0.0) return out;
  for (auto& v : out) v += C * radius * rng.normal();
  return out;
}

// ---- generic forward helpers ---------------------------------------------------

namespace {

template <class T>
T sigmoid(const T& x) {
  // 0.5 (1 + tanh(x/2)): bounded for all inputs
  return 0.5 * (tanh(x * 0.5) + 1.0);
}

template <class T>
T softplus(const T& x) {
  return log(1.0 + exp(x));
}

/// Smooth map of raw parameterization outputs onto the mode's angle box.
template <class T>
void wrap_u(Mode mode, int embed_dim, std::vector<T>& u) {
  switch (mode) {
    case Mode::FixedMetricTorus:
      for (auto& v : u) v = sigmoid(v) * kTwoPi;
      break;
    case Mode::Sphere: {
      const int m = int(u.size());
      (void)embed_dim;
      for (int i = 0; i + 1 < m; ++i) u[std::size_t(i)] = sigmoid(u[std::size_t(i)]) * kPi;
      u[std::size_t(m - 1)] = sigmoid(u[std::size_t(m - 1)]) * kTwoPi;
      break;
    }
    case Mode::SurfaceOfRevolution:
      u[1] = sigmoid(u[1]) * kTwoPi;
      break;
    default:
      break;
  }
}

struct NetView {
  const nn::MlpSpec* spec = nullptr;
  std::size_t offset = 0, extent = 0;
};

NetView view(const nn::ModelBundle& b, const std::string& name) {
  auto [off, ext] = b.slice(name);
  return NetView{&b.spec(name), off, ext};
}

}  // namespace

// ---- slot evaluation -----------------------------------------------------------

SlotResult eval_slot(const TrainConfig& cfg, const nn::ModelBundle& bundle,
                     const pde::PdeDataset& ds, const SlotDraw& draw, bool training,
                     std::vector<double>* grad_out, double grad_scale) {
  thread_local ad::Tape tape;
  tape.clear();
  ad::TapeScope scope(tape);

  const int N = ds.n_nodes();
  const int m = cfg.latent_dim;
  const int d = cfg.embed_dim;
  const auto& phi0 = ds.phi0[draw.sample];
  const double* phit = ds.snapshots[draw.sample].data() + std::size_t(draw.snap) * std::size_t(N);

  thread_local std::vector<Var> pv;
  pv.clear();
  pv.reserve(bundle.params.data.size());
  for (double v : bundle.params.data) pv.push_back(tape.leaf(v));
  auto params_of = [&](const char* name) {
    auto nv = view(bundle, name);
    return std::span<const Var>(pv.data() + nv.offset, nv.extent);
  };

  Rng noise_rng(draw.noise_seed);

  // parameterization: u = P(phi0), optionally noised, wrapped onto the box
  std::vector<Var> xin;
  xin.reserve(phi0.size());
  for (double v : phi0) xin.push_back(ad::konst(v));
  std::vector<Var> u = nn::mlp_forward<Var>(bundle.spec("P"), params_of("P"), xin);
  if (training && cfg.noise_u > 0.0)
    for (auto& v : u) v = v * (1.0 + cfg.noise_u * noise_rng.normal());
  wrap_u(cfg.mode, d, u);

  const double tau_hat = draw.tau_hat;
  const double tau_til = draw.tau_til;

  SlotResult res;
  Var l_dec{}, l_met{}, l_ric{}, l_sym{};
  bool have_met = false, have_ric = false, have_sym = false;

  // first-order encoder evaluation (Jacobian Gram + point values)
  auto encode_gram = [&](const std::vector<Var>& uu, double tau, geom::SmallMat<Var>& gram,
                         std::vector<Var>& point) {
    std::vector<Dual<Var>> ein;
    for (int i = 0; i < m; ++i)
      ein.push_back(ad::dual_seed<Var>(uu[std::size_t(i)], i, m, 0));
    ein.push_back(ad::dual_const<Var>(ad::konst(tau), m, 0));
    auto evec = nn::mlp_forward_dual<Var>(bundle.spec("E"), params_of("E"), ein);
    gram = geom::SmallMat<Var>(m);
    for (int i = 0; i < m; ++i)
      for (int j = i; j < m; ++j) {
        Var acc = evec[0].d1[std::size_t(i)] * evec[0].d1[std::size_t(j)];
        for (std::size_t a = 1; a < evec.size(); ++a)
          acc = acc + evec[a].d1[std::size_t(i)] * evec[a].d1[std::size_t(j)];
        gram(i, j) = acc;
        gram(j, i) = acc;
      }
    point.clear();
    for (const auto& e : evec) point.push_back(e.v);
  };

  auto decode_loss = [&](const std::vector<Var>& point) {
    nn::DropoutCtx<Var> drop;
    drop.p_early = cfg.dropout_early;
    drop.p_late = cfg.dropout_late;
    drop.rng = training ? &noise_rng : nullptr;
    auto out = nn::mlp_forward<Var>(bundle.spec("D"), params_of("D"), point,
                                    (training && (cfg.dropout_early > 0 || cfg.dropout_late > 0))
                                        ? &drop
                                        : nullptr);
    std::vector<Var> sq;
    sq.reserve(out.size());
    for (int j = 0; j < N; ++j) sq.push_back(ad::sqr(out[std::size_t(j)] - phit[j]));
    return tape.sum(sq) * (1.0 / double(N));
  };

  switch (cfg.mode) {
    case Mode::FullRicci: {
      geom::SmallMat<Var> gram;
      std::vector<Var> point;
      encode_gram(u, tau_hat, gram, point);
      l_dec = decode_loss(point);

      geom::MetricFn<Var> mfn = [&](std::span<const Dual<Var>> uu,
                                    const Dual<Var>& tt) -> geom::SmallMat<Dual<Var>> {
        if (cfg.metric_source == MetricSource::Cigar)
          return cf::cigar_metric<Dual<Var>>(uu[0], uu[1], tt);
        std::vector<Dual<Var>> gin(uu.begin(), uu.end());
        gin.push_back(tt);
        auto gout = nn::mlp_forward_dual<Var>(bundle.spec("g"), params_of("g"), gin);
        geom::SmallMat<Dual<Var>> M(m);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j) M(i, j) = gout[std::size_t(i * m + j)];
        return M;
      };
      auto md =
          geom::eval_metric_derivs<Var>(mfn, std::span<const Var>(u), ad::konst(tau_til));
      res.indefinite = !geom::is_positive_definite(geom::value_of(md.g));
      try {
        auto residual = geom::ricci_flow_residual(md);
        l_ric = geom::frobenius_sq(residual) * (1.0 / double(m * m));
        have_ric = true;
      } catch (const geom::SingularMetricError&) {
        res.ric_skipped = true;
      }
      // metric constraint: g(u, tau_til) vs the encoder Gram at tau_hat
      std::vector<Var> sq;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) sq.push_back(ad::sqr(md.g(i, j) - gram(i, j)));
      l_met = tape.sum(sq) * (1.0 / double(m * m));
      have_met = true;
      break;
    }

    case Mode::FixedMetricCigar:
    case Mode::FixedMetricTorus: {
      geom::SmallMat<Var> gram;
      std::vector<Var> point;
      encode_gram(u, tau_hat, gram, point);
      l_dec = decode_loss(point);

      if (cfg.mode == Mode::FixedMetricCigar) {
        Var denom = (u[0] * u[0] + u[1] * u[1]) + std::exp(4.0 * tau_hat);
        Var target = 1.0 / denom;
        l_met = (ad::sqr(target - gram(0, 0)) + ad::sqr(target - gram(1, 1))) * 0.5 +
                ad::sqr(gram(0, 1));
      } else {
        Var w = cos(u[1]) * cfg.torus_a + cfg.torus_b;
        Var g00 = w * w;
        const double g11 = cfg.torus_a * cfg.torus_a;
        l_met = (ad::sqr(g00 - gram(0, 0)) + ad::sqr(gram(1, 1) - g11)) * 0.5 +
                ad::sqr(gram(0, 1));
      }
      have_met = true;

      if (cfg.mode == Mode::FixedMetricTorus && cfg.torus_symmetry) {
        const double delta = noise_rng.uniform(0.0, kTwoPi);
        geom::SmallMat<Var> gram_a, gram_b;
        std::vector<Var> tmp;
        std::vector<Var> ua = {u[0] + delta, u[1]};
        encode_gram(ua, tau_hat, gram_a, tmp);
        std::vector<Var> ub = {u[0], kTwoPi - u[1]};
        encode_gram(ub, tau_hat, gram_b, tmp);
        std::vector<Var> sq;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j) {
            sq.push_back(ad::sqr(gram(i, j) - gram_a(i, j)));
            sq.push_back(ad::sqr(gram(i, j) - gram_b(i, j)));
          }
        l_sym = tape.sum(sq);
        have_sym = true;
      }
      break;
    }

    case Mode::Sphere: {
      std::vector<Var> point;
      if (cfg.sphere_restore == SphereRestore::MetricMatch) {
        geom::SmallMat<Var> gram;
        encode_gram(u, tau_hat, gram, point);
        auto target = cf::sphere_metric<Var>(std::span<const Var>(u), ad::konst(tau_hat),
                                             cfg.sphere_radius, d);
        std::vector<Var> sq;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j) sq.push_back(ad::sqr(gram(i, j) - target(i, j)));
        l_met = tape.sum(sq) * (1.0 / double(m * m));
        have_met = true;
      } else {
        std::vector<Var> shift;
        if (cfg.sphere_restore == SphereRestore::Shift) {
          std::vector<Var> sin_ = {ad::konst(tau_hat)};
          shift = nn::mlp_forward<Var>(bundle.spec("S"), params_of("S"), sin_);
        }
        point = cf::sphere_embed<Var>(std::span<const Var>(u), ad::konst(tau_hat),
                                      cfg.sphere_radius, d, shift);
      }
      if (training && cfg.noise_manifold > 0.0) {
        const double r = cf::sphere_radius(cfg.sphere_radius, d, tau_hat);
        for (auto& v : point) v = v + cfg.noise_manifold * r * noise_rng.normal();
      }
      l_dec = decode_loss(point);
      break;
    }

    case Mode::SurfaceOfRevolution: {
      std::vector<Dual<Var>> pin = {ad::dual_seed<Var>(u[0], 0, 2, 2),
                                    ad::dual_seed<Var>(ad::konst(tau_hat), 1, 2, 2)};
      auto r_raw = nn::mlp_forward_dual<Var>(bundle.spec("r"), params_of("r"), pin)[0];
      auto z_dual = nn::mlp_forward_dual<Var>(bundle.spec("z"), params_of("z"), pin)[0];
      auto r_dual = softplus(r_raw);
      auto prof = cf::sor_profile_from_duals(r_dual, z_dual);
      auto ric = cf::sor_ricci(prof);
      Var dtf = (prof.r_u * prof.r_ut + prof.z_u * prof.z_ut) * 2.0;
      Var dtr2 = (prof.r * prof.r_t) * 2.0;
      l_ric = ad::sqr(dtf + 2.0 * ric(0, 0)) + ad::sqr(dtr2 + 2.0 * ric(1, 1)) +
              ad::sqr(2.0 * ric(0, 1)) + ad::sqr(2.0 * ric(1, 0));
      have_ric = true;
      std::vector<Var> point = {prof.r * cos(u[1]), prof.r * sin(u[1]), prof.z};
      l_dec = decode_loss(point);
      break;
    }

    case Mode::SffResidual: {
      geom::EmbedFn<Var> efn = [&](std::span<const Dual<Var>> uu, const Dual<Var>& tt) {
        std::vector<Dual<Var>> ein(uu.begin(), uu.end());
        ein.push_back(tt);
        return nn::mlp_forward_dual<Var>(bundle.spec("E"), params_of("E"), ein);
      };
      try {
        auto rep = geom::second_fundamental_form<Var>(efn, std::span<const Var>(u),
                                                      ad::konst(tau_til));
        l_ric = geom::frobenius_sq(rep.residual_sff) * (1.0 / double(m * m));
        have_ric = true;
      } catch (const geom::RankError&) {
        res.ric_skipped = true;
      } catch (const geom::SingularMetricError&) {
        res.ric_skipped = true;
      }
      std::vector<Var> din = u;
      din.push_back(ad::konst(tau_hat));
      auto point = nn::mlp_forward<Var>(bundle.spec("E"), params_of("E"), din);
      l_dec = decode_loss(point);
      break;
    }
  }

  res.dec = ad::val(l_dec);
  if (have_met) res.met = ad::val(l_met);
  if (have_ric) res.ric = ad::val(l_ric);
  if (have_sym) res.sym = ad::val(l_sym);

  if (grad_out) {
    Var slot_total = l_dec * cfg.lambda_dec;
    if (have_met) slot_total = slot_total + l_met * cfg.lambda_met;
    if (have_ric) slot_total = slot_total + l_ric;
    if (have_sym) slot_total = slot_total + l_sym;
    tape.backward(slot_total);
    const auto& adj = tape.adjoints();
    grad_out->resize(bundle.params.data.size());
    for (std::size_t i = 0; i < grad_out->size(); ++i) (*grad_out)[i] = adj[i] * grad_scale;
  }
  return res;
}

LossBreakdown batch_step(const TrainConfig& cfg, const nn::ModelBundle& bundle,
                         const pde::PdeDataset& ds, const std::vector<SlotDraw>& draws,
                         std::vector<double>& grad_out, bool serial) {
  const std::size_t n = draws.size();
  const std::size_t P = bundle.params.data.size();
  thread_local std::vector<std::vector<double>> slot_grads;
  thread_local std::vector<SlotResult> results;
  if (slot_grads.size() < n) slot_grads.resize(n);
  results.assign(n, SlotResult{});

  auto body = [&](std::size_t i) {
    results[i] = eval_slot(cfg, bundle, ds, draws[i], /*training=*/true, &slot_grads[i],
                           1.0 / double(n));
  };
  if (serial)
    serial_for(n, body);
  else
    parallel_for(n, body);

  grad_out.assign(P, 0.0);
  for (std::size_t i = 0; i < n; ++i)  // fixed slot order: thread-count independent
    for (std::size_t k = 0; k < P; ++k) grad_out[k] += slot_grads[i][k];

  LossBreakdown lb;
  for (const auto& r : results) {
    lb.l_dec += r.dec / double(n);
    lb.l_met += r.met / double(n);
    lb.l_sym += r.sym / double(n);
    if (!r.ric_skipped) lb.l_ric += r.ric / double(n);
    lb.skipped += r.ric_skipped ? 1 : 0;
    lb.indefinite += r.indefinite ? 1 : 0;
  }
  lb.total = lb.l_ric + cfg.lambda_dec * lb.l_dec + cfg.lambda_met * lb.l_met + lb.l_sym;
  return lb;
}

// ---- training loop -------------------------------------------------------------

TrainResult train(const TrainConfig& cfg, const pde::PdeDataset& ds, const std::string& out_dir) {
  cfg.validate(ds);
  Rng master(cfg.seed);
  TrainResult result;
  result.bundle = make_bundle(cfg, ds.n_nodes(), master);
  nn::ModelBundle& bundle = result.bundle;

  nn::OptimState opt;
  opt.lr = cfg.learning_rate;
  opt.weight_decay = cfg.weight_decay;
  opt.clip_norm = cfg.clip_norm;

  std::ofstream csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    csv.open(out_dir + "/history.csv");
    csv << "iter,l_ric,l_dec,l_met,l_sym,total,lr,wd\n";
  }
  const double T = ds.tgrid.t1;
  const double tau = cfg.horizon(T);
  const int cap = std::max(1, int(std::lround(0.01 * cfg.batch_size)));

  std::vector<double> grads;
  std::vector<SlotDraw> draws(std::size_t(cfg.batch_size));
  std::vector<double> last_good = bundle.params.data;
  long last_good_iter = 0;

  auto save_ckpt = [&](const std::string& name, long step) {
    if (out_dir.empty()) return;
    save_model(out_dir + "/" + name, bundle, cfg, step, master.state());
  };

  for (long iter = 1; iter <= cfg.iterations; ++iter) {
    for (const auto& drop : cfg.lr_drops)
      if (drop.step == iter) opt.lr *= drop.factor;
    if (cfg.late_weight_decay_step >= 0 && iter >= cfg.late_weight_decay_step)
      opt.weight_decay = cfg.late_weight_decay;

    for (int s = 0; s < cfg.batch_size; ++s) {
      SlotDraw& dr = draws[std::size_t(s)];
      dr.sample = std::size_t(master.uniform_int(int(ds.size())));
      dr.snap = master.uniform_int(int(ds.snap_times[dr.sample].size()));
      dr.t_phys = ds.snap_times[dr.sample][std::size_t(dr.snap)];
      dr.tau_hat = cfg.time_scale * dr.t_phys;
      dr.tau_til = cfg.pairing == Pairing::Identity ? dr.tau_hat : master.uniform(0.0, tau);
      dr.noise_seed = master.next_u64();
    }

    LossBreakdown lb;
    try {
      lb = batch_step(cfg, bundle, ds, draws, grads);
    } catch (const std::exception& e) {
      result.aborted = true;
      result.abort_reason = e.what();
      bundle.params.data = last_good;
      result.final_iter = last_good_iter;
      save_ckpt("final.ckpt", last_good_iter);
      return result;
    }

    if (!std::isfinite(lb.total)) {
      result.aborted = true;
      result.abort_reason = "non-finite total loss at iteration " + std::to_string(iter);
      bundle.params.data = last_good;
      result.final_iter = last_good_iter;
      save_ckpt("final.ckpt", last_good_iter);
      return result;
    }
    if (lb.skipped > cap) {
      result.aborted = true;
      result.abort_reason = "singular-metric skips exceeded 1% of the batch (" +
                            std::to_string(lb.skipped) + "/" + std::to_string(cfg.batch_size) +
                            ")";
      bundle.params.data = last_good;
      result.final_iter = last_good_iter;
      save_ckpt("final.ckpt", last_good_iter);
      return result;
    }

    last_good = bundle.params.data;
    last_good_iter = iter;
    result.history.push_back(lb);
    if (csv.is_open()) {
      char line[256];
      std::snprintf(line, sizeof line, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", iter,
                    lb.l_ric, lb.l_dec, lb.l_met, lb.l_sym, lb.total, opt.lr, opt.weight_decay);
      csv << line;
    }

    try {
      nn::optimizer_step(opt, bundle.params, grads);
    } catch (const nn::OptimError& e) {
      result.aborted = true;
      result.abort_reason = e.what();
      bundle.params.data = last_good;
      result.final_iter = last_good_iter;
      save_ckpt("final.ckpt", last_good_iter);
      return result;
    }

    if (cfg.checkpoint_interval > 0 && iter % cfg.checkpoint_interval == 0)
      save_ckpt("ckpt_" + std::to_string(iter) + ".bin", iter);
    result.final_iter = iter;
  }
  save_ckpt("final.ckpt", result.final_iter);
  return result;
}

// ---- evaluation path -------------------------------------------------------------

std::vector<double> latent_u(const TrainConfig& cfg, const nn::ModelBundle& bundle,
                             const std::vector<double>& phi0) {
  auto [off, ext] = bundle.slice("P");
  std::span<const double> params(bundle.params.data.data() + off, ext);
  std::vector<double> u = nn::mlp_forward<double>(bundle.spec("P"), params, phi0);
  wrap_u(cfg.mode, cfg.embed_dim, u);
  return u;
}

std::vector<double> embed_point(const TrainConfig& cfg, const nn::ModelBundle& bundle,
                                const std::vector<double>& u_wrapped, double tau) {
  auto run = [&](const char* name, const std::vector<double>& x) {
    auto [off, ext] = bundle.slice(name);
    std::span<const double> params(bundle.params.data.data() + off, ext);
    return nn::mlp_forward<double>(bundle.spec(name), params, x);
  };
  switch (cfg.mode) {
    case Mode::FullRicci:
    case Mode::FixedMetricCigar:
    case Mode::FixedMetricTorus:
    case Mode::SffResidual: {
      std::vector<double> xin = u_wrapped;
      xin.push_back(tau);
      return run("E", xin);
    }
    case Mode::Sphere: {
      if (cfg.sphere_restore == SphereRestore::MetricMatch) {
        std::vector<double> xin = u_wrapped;
        xin.push_back(tau);
        return run("E", xin);
      }
      std::vector<double> shift;
      if (cfg.sphere_restore == SphereRestore::Shift) shift = run("S", std::vector<double>{tau});
      return cf::sphere_embed<double>(u_wrapped, tau, cfg.sphere_radius, cfg.embed_dim, shift);
    }
    case Mode::SurfaceOfRevolution: {
      std::vector<double> pin = {u_wrapped[0], tau};
      const double r = softplus(run("r", pin)[0]);
      const double z = run("z", pin)[0];
      return {r * std::cos(u_wrapped[1]), r * std::sin(u_wrapped[1]), z};
    }
  }
  throw TrainError("unknown mode in embed_point");
}

std::vector<double> predict(const TrainConfig& cfg, const nn::ModelBundle& bundle,
                            const std::vector<double>& phi0, double t_phys) {
  std::vector<double> u = latent_u(cfg, bundle, phi0);
  std::vector<double> x = embed_point(cfg, bundle, u, cfg.time_scale * t_phys);
  auto [off, ext] = bundle.slice("D");
  std::span<const double> params(bundle.params.data.data() + off, ext);
  return nn::mlp_forward<double>(bundle.spec("D"), params, x);
}

void save_model(const std::string& path, const nn::ModelBundle& bundle, const TrainConfig& cfg,
                long step, std::uint64_t rng_state) {
  nn::save_checkpoint(path, bundle, step, rng_state, config_hash(cfg), config_to_json(cfg));
}

LoadedModel load_model(const std::string& path) {
  nn::CheckpointData data = nn::load_checkpoint(path);
  if (data.meta_json.empty()) throw TrainError("checkpoint lacks the training config");
  LoadedModel lm;
  lm.bundle = std::move(data.bundle);
  lm.cfg = config_from_json(data.meta_json);
  lm.step = data.step;
  return lm;
}

}  // namespace rfae::train
