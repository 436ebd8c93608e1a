#include "rfae/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace rfae::nn {

using json = nlohmann::json;

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "gelu") return Activation::Gelu;
  throw ConfigError("activation '" + s + "' not supported (need a C^2 activation: tanh, gelu)");
}

Variant parse_variant(const std::string& s) {
  if (s == "vanilla") return Variant::Vanilla;
  if (s == "modified") return Variant::Modified;
  throw ConfigError("unknown MLP variant '" + s + "'");
}

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "gelu"; }
std::string to_string(Variant v) { return v == Variant::Vanilla ? "vanilla" : "modified"; }

void MlpSpec::validate() const {
  if (input_dim <= 0 || output_dim <= 0) throw ConfigError("MlpSpec: dimensions must be positive");
  if (widths.empty()) throw ConfigError("MlpSpec: widths must be nonempty");
  for (int w : widths)
    if (w <= 0) throw ConfigError("MlpSpec: widths must be positive");
  if (variant == Variant::Modified) {
    for (int w : widths)
      if (w != widths[0])
        throw ConfigError("modified MLP requires equal hidden widths (element-wise gating)");
  }
}

std::size_t MlpSpec::param_count() const {
  validate();
  std::size_t n = 0;
  const std::size_t in = std::size_t(input_dim), out = std::size_t(output_dim);
  const std::size_t L = widths.size();
  if (variant == Variant::Vanilla) {
    std::size_t prev = in;
    for (std::size_t l = 0; l < L; ++l) {
      n += prev * std::size_t(widths[l]) + std::size_t(widths[l]);
      prev = std::size_t(widths[l]);
    }
    n += prev * out + out;
  } else {
    const std::size_t w = std::size_t(widths[0]);
    n += 3 * (in * w + w);       // hat, tilde, z1
    n += (L - 1) * (w * w + w);  // gate layers
    n += w * out + out;
  }
  return n;
}

namespace {
void push_block(std::vector<BlockInfo>& blocks, const std::string& net, int layer,
                const std::string& role, std::size_t& off, std::size_t extent) {
  blocks.push_back(BlockInfo{net, layer, role, off, extent});
  off += extent;
}
}  // namespace

ParamLayout build_layout(const std::vector<std::pair<std::string, MlpSpec>>& nets) {
  ParamLayout layout;
  std::size_t off = 0;
  for (const auto& [name, spec] : nets) {
    spec.validate();
    const std::size_t in = std::size_t(spec.input_dim), out = std::size_t(spec.output_dim);
    const std::size_t L = spec.widths.size();
    if (spec.variant == Variant::Vanilla) {
      std::size_t prev = in;
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t w = std::size_t(spec.widths[l]);
        push_block(layout.blocks, name, int(l), "w", off, prev * w);
        push_block(layout.blocks, name, int(l), "b", off, w);
        prev = w;
      }
      push_block(layout.blocks, name, int(L), "w", off, prev * out);
      push_block(layout.blocks, name, int(L), "b", off, out);
    } else {
      const std::size_t w = std::size_t(spec.widths[0]);
      push_block(layout.blocks, name, 0, "w_hat", off, in * w);
      push_block(layout.blocks, name, 0, "b_hat", off, w);
      push_block(layout.blocks, name, 0, "w_til", off, in * w);
      push_block(layout.blocks, name, 0, "b_til", off, w);
      push_block(layout.blocks, name, 0, "w", off, in * w);
      push_block(layout.blocks, name, 0, "b", off, w);
      for (std::size_t l = 1; l < L; ++l) {
        push_block(layout.blocks, name, int(l), "w", off, w * w);
        push_block(layout.blocks, name, int(l), "b", off, w);
      }
      push_block(layout.blocks, name, int(L), "w", off, w * out);
      push_block(layout.blocks, name, int(L), "b", off, out);
    }
  }
  layout.total = off;
  layout.validate();
  return layout;
}

void ParamLayout::validate() const {
  std::size_t expect = 0;
  for (const auto& b : blocks) {
    if (b.offset != expect) throw ConfigError("parameter layout has a gap or overlap");
    expect += b.extent;
  }
  if (expect != total) throw ConfigError("parameter layout does not cover the array");
}

const BlockInfo& ParamLayout::block_of_index(std::size_t idx) const {
  for (const auto& b : blocks)
    if (idx >= b.offset && idx < b.offset + b.extent) return b;
  throw std::out_of_range("parameter index outside layout");
}

bool ModelBundle::has(const std::string& name) const {
  for (const auto& [n, s] : nets)
    if (n == name) return true;
  return false;
}

const MlpSpec& ModelBundle::spec(const std::string& name) const {
  for (const auto& [n, s] : nets)
    if (n == name) return s;
  throw ConfigError("bundle has no network '" + name + "'");
}

std::pair<std::size_t, std::size_t> ModelBundle::slice(const std::string& name) const {
  std::size_t off = 0;
  for (const auto& [n, s] : nets) {
    const std::size_t cnt = s.param_count();
    if (n == name) return {off, cnt};
    off += cnt;
  }
  throw ConfigError("bundle has no network '" + name + "'");
}

void glorot_init(ModelBundle& bundle, Rng& rng) {
  bundle.params.layout = build_layout(bundle.nets);
  bundle.params.data.assign(bundle.params.layout.total, 0.0);
  for (const auto& b : bundle.params.layout.blocks) {
    if (b.role[0] != 'w') continue;
    const MlpSpec& spec = bundle.spec(b.net);
    std::size_t fan_out;
    if (std::size_t(b.layer) < spec.widths.size())
      fan_out = spec.variant == Variant::Vanilla ? std::size_t(spec.widths[std::size_t(b.layer)])
                                                 : std::size_t(spec.widths[0]);
    else
      fan_out = std::size_t(spec.output_dim);
    const std::size_t fan_in = b.extent / fan_out;
    const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
    for (std::size_t i = 0; i < b.extent; ++i)
      bundle.params.data[b.offset + i] = rng.uniform(-limit, limit);
  }
}

MmlpTrace mmlp_forward_trace(const MlpSpec& spec, std::span<const double> params,
                             std::span<const double> x) {
  spec.validate();
  if (spec.variant != Variant::Modified) throw ConfigError("trace requires the modified variant");
  const int w = spec.widths[0];
  const int L = int(spec.widths.size());
  MmlpTrace tr;
  std::size_t p = 0;
  auto affine = [&](std::span<const double> in, int out_dim) {
    std::vector<double> out(static_cast<std::size_t>(out_dim));
    const int n = int(in.size());
    for (int i = 0; i < out_dim; ++i) {
      double acc = params[p + std::size_t(out_dim * n + i)];
      for (int j = 0; j < n; ++j) acc += params[p + std::size_t(i * n + j)] * in[std::size_t(j)];
      out[std::size_t(i)] = acc;
    }
    p += std::size_t(out_dim * n + out_dim);
    return out;
  };
  auto act = [&](std::vector<double> v) {
    for (auto& h : v) h = spec.activation == Activation::Tanh ? std::tanh(h) : ad::gelu(h);
    return v;
  };
  tr.zhat = act(affine(x, w));
  tr.ztil = act(affine(x, w));
  tr.z.push_back(act(affine(x, w)));
  for (int l = 1; l < L; ++l) {
    tr.gates.push_back(act(affine(tr.z.back(), w)));
    std::vector<double> nz(static_cast<std::size_t>(w));
    for (int i = 0; i < w; ++i)
      nz[std::size_t(i)] = (1.0 - tr.gates.back()[std::size_t(i)]) * tr.zhat[std::size_t(i)] +
                           tr.gates.back()[std::size_t(i)] * tr.ztil[std::size_t(i)];
    tr.z.push_back(nz);
  }
  tr.out = affine(tr.z.back(), spec.output_dim);
  return tr;
}

void optimizer_step(OptimState& state, ParamVector& params, std::span<const double> grads) {
  const std::size_t n = params.data.size();
  if (grads.size() != n) throw OptimError("gradient length does not match parameters");
  if (state.m.size() != n) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grads[i])) {
      const BlockInfo& b = params.layout.block_of_index(i);
      throw OptimError("non-finite gradient in network '" + b.net + "' layer " +
                       std::to_string(b.layer) + " role '" + b.role + "' (training instability)");
    }
    norm_sq += grads[i] * grads[i];
  }
  double scale = 1.0;
  const double norm = std::sqrt(norm_sq);
  if (state.clip_norm > 0.0 && norm > state.clip_norm) scale = state.clip_norm / norm;

  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, double(state.step));
  const double bc2 = 1.0 - std::pow(b2, double(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i] * scale;
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params.data[i] -= state.lr * (mhat / (std::sqrt(vhat) + state.eps));
    params.data[i] -= state.lr * state.weight_decay * params.data[i];
  }
}

namespace {

json spec_to_json(const MlpSpec& s) {
  return json{{"input_dim", s.input_dim},
              {"output_dim", s.output_dim},
              {"widths", s.widths},
              {"activation", to_string(s.activation)},
              {"variant", to_string(s.variant)}};
}

MlpSpec spec_from_json(const json& j) {
  MlpSpec s;
  s.input_dim = j.at("input_dim").get<int>();
  s.output_dim = j.at("output_dim").get<int>();
  s.widths = j.at("widths").get<std::vector<int>>();
  s.activation = parse_activation(j.at("activation").get<std::string>());
  s.variant = parse_variant(j.at("variant").get<std::string>());
  return s;
}

constexpr char kMagic[9] = "RFAECKPT";

}  // namespace

void save_checkpoint(const std::string& path, const ModelBundle& bundle, long step,
                     std::uint64_t rng_state, const std::string& config_hash,
                     const std::string& meta_json) {
  json header;
  header["magic"] = "RFAE-CK";
  header["version"] = 1;
  header["step"] = step;
  header["rng_state"] = rng_state;
  header["config_hash"] = config_hash;
  header["time_scale"] = bundle.time_scale;
  header["param_count"] = bundle.params.data.size();
  json nets = json::array();
  for (const auto& [name, spec] : bundle.nets)
    nets.push_back(json{{"name", name}, {"spec", spec_to_json(spec)}});
  header["networks"] = nets;
  if (!meta_json.empty()) header["meta"] = json::parse(meta_json);

  const std::string htext = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(kMagic, 8);
  const std::uint64_t hlen = htext.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(htext.data(), std::streamsize(htext.size()));
  f.write(reinterpret_cast<const char*>(bundle.params.data.data()),
          std::streamsize(bundle.params.data.size() * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

std::string checkpoint_header_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  std::string htext(hlen, '\0');
  f.read(htext.data(), std::streamsize(hlen));
  if (!f) throw std::runtime_error("truncated checkpoint header: " + path);
  return htext;
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  std::string htext(hlen, '\0');
  f.read(htext.data(), std::streamsize(hlen));
  if (!f) throw std::runtime_error("truncated checkpoint header: " + path);
  json header = json::parse(htext);
  if (header.at("version").get<int>() != 1)
    throw std::runtime_error("unsupported checkpoint version");

  CheckpointData out;
  out.step = header.at("step").get<long>();
  out.rng_state = header.at("rng_state").get<std::uint64_t>();
  out.config_hash = header.at("config_hash").get<std::string>();
  if (header.contains("meta")) out.meta_json = header.at("meta").dump();
  out.bundle.time_scale = header.at("time_scale").get<double>();
  for (const auto& jn : header.at("networks"))
    out.bundle.nets.emplace_back(jn.at("name").get<std::string>(), spec_from_json(jn.at("spec")));
  out.bundle.params.layout = build_layout(out.bundle.nets);
  const std::size_t count = header.at("param_count").get<std::size_t>();
  if (count != out.bundle.params.layout.total)
    throw std::runtime_error("checkpoint parameter count does not match layout");
  out.bundle.params.data.resize(count);
  f.read(reinterpret_cast<char*>(out.bundle.params.data.data()),
         std::streamsize(count * sizeof(double)));
  if (!f) throw std::runtime_error("truncated checkpoint payload: " + path);
  char extra;
  if (f.read(&extra, 1)) throw std::runtime_error("trailing bytes after checkpoint payload");
  return out;
}

}  // namespace rfae::nn
