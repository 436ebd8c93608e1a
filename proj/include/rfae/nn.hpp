#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfae/dual.hpp"
#include "rfae/rng.hpp"

namespace rfae::nn {

enum class Activation { Tanh, Gelu };
enum class Variant { Vanilla, Modified };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Twice continuously differentiable activations only: the Ricci residual
/// takes second derivatives through every network. (ReLU has second
/// derivative zero almost everywhere and is rejected at parse time.)
Activation parse_activation(const std::string& s);
Variant parse_variant(const std::string& s);
std::string to_string(Activation a);
std::string to_string(Variant v);

struct MlpSpec {
  int input_dim = 0;
  int output_dim = 0;
  std::vector<int> widths;  // hidden widths
  Activation activation = Activation::Tanh;
  Variant variant = Variant::Vanilla;

  void validate() const;
  std::size_t param_count() const;
};

struct BlockInfo {
  std::string net;
  int layer = 0;
  std::string role;  // "w" or "b" (plus "w_hat"/"w_til" gates for the modified MLP)
  std::size_t offset = 0;
  std::size_t extent = 0;
};

struct ParamLayout {
  std::vector<BlockInfo> blocks;
  std::size_t total = 0;

  /// Exact cover: blocks are contiguous, non-overlapping, and sum to total.
  void validate() const;
  const BlockInfo& block_of_index(std::size_t idx) const;
};

struct ParamVector {
  std::vector<double> data;
  ParamLayout layout;
};

/// Parameters and hyperparameters of the model networks, checkpointable.
/// Canonical network names: P (parameterization), g (metric PINN),
/// E (encoder), D (decoder), S (sphere shift), r/z (revolution profiles).
struct ModelBundle {
  std::vector<std::pair<std::string, MlpSpec>> nets;  // canonical order
  ParamVector params;
  double time_scale = 0.5;  // C_t in tau = C_t * T

  bool has(const std::string& name) const;
  const MlpSpec& spec(const std::string& name) const;
  /// [offset, extent) of one network's slice in the flat parameter array.
  std::pair<std::size_t, std::size_t> slice(const std::string& name) const;
};

ParamLayout build_layout(const std::vector<std::pair<std::string, MlpSpec>>& nets);

/// Uniform Glorot weights, zero biases.
void glorot_init(ModelBundle& bundle, Rng& rng);

// ---- forward passes ---------------------------------------------------------

template <class T>
struct DropoutCtx {
  double p_early = 0.0;  // hidden layers before the last
  double p_late = 0.0;   // last hidden layer
  Rng* rng = nullptr;    // absent => evaluation mode, dropout disabled
};

namespace detail {

inline double dot_span(std::span<const double> a, std::span<const double> b, const double* bias) {
  double acc = bias ? *bias : 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline ad::Var dot_span(std::span<const ad::Var> a, std::span<const ad::Var> b,
                        const ad::Var* bias) {
  return ad::tape().dot(a, b, bias);
}

template <class T>
T activate(Activation act, const T& x) {
  return act == Activation::Tanh ? tanh(x) : ad::gelu(x);
}

template <class T>
ad::Dual<T> activate(Activation act, const ad::Dual<T>& x) {
  return act == Activation::Tanh ? tanh(x) : ad::gelu(x);
}

}  // namespace detail

/// Plain forward (no input derivatives). T is double or Var; dropout applies
/// only when ctx.rng is set (inverted dropout, scaled at train time).
template <class T>
std::vector<T> mlp_forward(const MlpSpec& spec, std::span<const T> params, std::span<const T> x,
                           const DropoutCtx<T>* dropout = nullptr) {
  spec.validate();
  if (int(x.size()) != spec.input_dim) throw ConfigError("mlp_forward: input dimension mismatch");
  const int L = int(spec.widths.size());
  std::vector<T> cur(x.begin(), x.end());
  std::size_t p = 0;
  auto affine = [&](std::span<const T> in, int out_dim, std::vector<T>& out) {
    const int n = int(in.size());
    out.resize(static_cast<std::size_t>(out_dim));
    std::span<const T> W = params.subspan(p, std::size_t(out_dim * n));
    std::span<const T> b = params.subspan(p + std::size_t(out_dim * n), std::size_t(out_dim));
    for (int i = 0; i < out_dim; ++i)
      out[std::size_t(i)] = detail::dot_span(W.subspan(std::size_t(i * n), std::size_t(n)), in,
                                             &b[std::size_t(i)]);
    p += std::size_t(out_dim * n + out_dim);
  };

  if (spec.variant == Variant::Vanilla) {
    std::vector<T> next;
    for (int l = 0; l < L; ++l) {
      affine(cur, spec.widths[std::size_t(l)], next);
      for (auto& h : next) h = detail::activate(spec.activation, h);
      if (dropout && dropout->rng) {
        const double prob = (l == L - 1) ? dropout->p_late : dropout->p_early;
        if (prob > 0.0) {
          for (auto& h : next) {
            const double mask = dropout->rng->uniform() < prob ? 0.0 : 1.0 / (1.0 - prob);
            h = h * mask;
          }
        }
      }
      cur.swap(next);
    }
    std::vector<T> out;
    affine(cur, spec.output_dim, out);
    return out;
  }

  // Modified MLP: two gate streams blended into every hidden update.
  const int w = spec.widths[0];
  std::vector<T> zhat, ztil, z, gate, nz;
  affine(cur, w, zhat);
  for (auto& h : zhat) h = detail::activate(spec.activation, h);
  affine(cur, w, ztil);
  for (auto& h : ztil) h = detail::activate(spec.activation, h);
  affine(cur, w, z);
  for (auto& h : z) h = detail::activate(spec.activation, h);
  for (int l = 1; l < L; ++l) {
    affine(z, w, gate);
    for (auto& h : gate) h = detail::activate(spec.activation, h);
    nz.resize(static_cast<std::size_t>(w));
    for (int i = 0; i < w; ++i)
      nz[std::size_t(i)] = (1.0 - gate[std::size_t(i)]) * zhat[std::size_t(i)] +
                           gate[std::size_t(i)] * ztil[std::size_t(i)];
    z.swap(nz);
  }
  if (dropout && dropout->rng && dropout->p_late > 0.0) {
    for (auto& h : z) {
      const double mask = dropout->rng->uniform() < dropout->p_late ? 0.0 : 1.0 / (1.0 - dropout->p_late);
      h = h * mask;
    }
  }
  std::vector<T> out;
  affine(z, spec.output_dim, out);
  return out;
}

/// Forward through seeded duals; channel-major so each affine row is one
/// fused dot per derivative channel.
template <class T>
std::vector<ad::Dual<T>> mlp_forward_dual(const MlpSpec& spec, std::span<const T> params,
                                          std::span<const ad::Dual<T>> x) {
  spec.validate();
  if (int(x.size()) != spec.input_dim)
    throw ConfigError("mlp_forward_dual: input dimension mismatch");
  const int k = x.empty() ? 0 : x[0].k;
  const int nt = x.empty() ? 0 : x[0].ntri();
  const int nch = 1 + k + nt;

  thread_local std::vector<std::vector<T>> chan;
  if (int(chan.size()) < nch) chan.resize(std::size_t(nch));

  std::size_t p = 0;
  auto affine = [&](const std::vector<ad::Dual<T>>& in, int out_dim,
                    std::vector<ad::Dual<T>>& out) {
    const int n = int(in.size());
    for (int c = 0; c < nch; ++c) {
      auto& col = chan[std::size_t(c)];
      col.resize(std::size_t(n));
      for (int j = 0; j < n; ++j) {
        const ad::Dual<T>& d = in[std::size_t(j)];
        col[std::size_t(j)] = c == 0 ? d.v : (c <= k ? d.d1[std::size_t(c - 1)] : d.d2[std::size_t(c - 1 - k)]);
      }
    }
    std::span<const T> W = params.subspan(p, std::size_t(out_dim * n));
    std::span<const T> b = params.subspan(p + std::size_t(out_dim * n), std::size_t(out_dim));
    out.resize(static_cast<std::size_t>(out_dim));
    for (int i = 0; i < out_dim; ++i) {
      std::span<const T> row = W.subspan(std::size_t(i * n), std::size_t(n));
      ad::Dual<T>& o = out[std::size_t(i)];
      o.k = std::int8_t(k);
      o.k2 = x[0].k2;
      o.v = detail::dot_span(row, chan[0], &b[std::size_t(i)]);
      for (int c = 1; c <= k; ++c) o.d1[std::size_t(c - 1)] = detail::dot_span(row, chan[std::size_t(c)], nullptr);
      for (int c = 0; c < nt; ++c) o.d2[std::size_t(c)] = detail::dot_span(row, chan[std::size_t(k + 1 + c)], nullptr);
    }
    p += std::size_t(out_dim * n + out_dim);
  };

  const int L = int(spec.widths.size());
  std::vector<ad::Dual<T>> cur(x.begin(), x.end()), next;

  if (spec.variant == Variant::Vanilla) {
    for (int l = 0; l < L; ++l) {
      affine(cur, spec.widths[std::size_t(l)], next);
      for (auto& h : next) h = detail::activate(spec.activation, h);
      cur.swap(next);
    }
    std::vector<ad::Dual<T>> out;
    affine(cur, spec.output_dim, out);
    return out;
  }

  const int w = spec.widths[0];
  std::vector<ad::Dual<T>> zhat, ztil, z, gate, nz;
  affine(cur, w, zhat);
  for (auto& h : zhat) h = detail::activate(spec.activation, h);
  affine(cur, w, ztil);
  for (auto& h : ztil) h = detail::activate(spec.activation, h);
  affine(cur, w, z);
  for (auto& h : z) h = detail::activate(spec.activation, h);
  for (int l = 1; l < L; ++l) {
    affine(z, w, gate);
    for (auto& h : gate) h = detail::activate(spec.activation, h);
    nz.resize(static_cast<std::size_t>(w));
    for (int i = 0; i < w; ++i) {
      const auto& gi = gate[std::size_t(i)];
      nz[std::size_t(i)] = (1.0 - gi) * zhat[std::size_t(i)] + gi * ztil[std::size_t(i)];
    }
    z.swap(nz);
  }
  std::vector<ad::Dual<T>> out;
  affine(z, spec.output_dim, out);
  return out;
}

/// Trace of modified-MLP intermediates (doubles path, for the recursion
/// property test).
struct MmlpTrace {
  std::vector<double> zhat, ztil;
  std::vector<std::vector<double>> z;      // z^1..z^L
  std::vector<std::vector<double>> gates;  // sigma(W^i z^i + b^i)
  std::vector<double> out;
};
MmlpTrace mmlp_forward_trace(const MlpSpec& spec, std::span<const double> params,
                             std::span<const double> x);

// ---- optimizer --------------------------------------------------------------

/// Adam with decoupled weight decay; global-norm gradient clipping happens
/// before the moment updates.
struct OptimState {
  std::vector<double> m, v;
  long step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;  // <=0 disables clipping
};

void optimizer_step(OptimState& state, ParamVector& params, std::span<const double> grads);

// ---- checkpoint io ----------------------------------------------------------

/// Checkpoint file: 8-byte magic "RFAECKPT", little-endian u64 header length,
/// JSON header text, then the raw little-endian float64 parameter payload in
/// layout order.
void save_checkpoint(const std::string& path, const ModelBundle& bundle, long step,
                     std::uint64_t rng_state, const std::string& config_hash,
                     const std::string& meta_json = "");

struct CheckpointData {
  ModelBundle bundle;
  long step = 0;
  std::uint64_t rng_state = 0;
  std::string config_hash;
  std::string meta_json;  // caller-owned payload (e.g. the training config)
};
CheckpointData load_checkpoint(const std::string& path);
std::string checkpoint_header_json(const std::string& path);

}  // namespace rfae::nn
