// rfae: data generation, geometry verification, training, evaluation, and
// latent export for the Ricci-flow-guided autoencoder.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rfae/eval_export.hpp"
#include "rfae/parallel.hpp"
#include "rfae/pde_data.hpp"
#include "rfae/training.hpp"
#include "rfae/verify.hpp"

namespace fs = std::filesystem;
using namespace rfae;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::string dataset_prefix(const std::string& path) {
  if (fs::is_directory(path)) return (fs::path(path) / "dataset").string();
  return path;
}

std::string checkpoint_path(const std::string& path) {
  if (fs::exists(path)) return path;
  if (fs::exists(path + ".ckpt")) return path + ".ckpt";
  return path;
}

std::vector<double> parse_times(const std::string& csv) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    std::size_t comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    out.push_back(std::stod(csv.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

/// Timestamps live only here, never in data outputs, so reruns stay
/// byte-identical.
void write_run_log(const std::string& dir, const std::string& what) {
  std::ofstream log(fs::path(dir) / "run.log", std::ios::app);
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  log << what << " finished_at=" << now << "\n";
}

int cmd_gen_data(const std::string& pde_s, const std::string& family_s, int n, int nt,
                 std::uint64_t seed, const std::string& out, const std::string& norm_s) {
  const auto pde_kind = pde::parse_pde(pde_s);
  const auto family = pde::parse_family(family_s);
  const auto norm = pde::parse_norm(norm_s);
  fs::create_directories(out);
  pde::PdeDataset ds = pde::generate_dataset(pde_kind, family, n, nt, seed);
  pde::normalize_dataset(ds, norm);
  pde::write_dataset(ds, (fs::path(out) / "dataset").string());
  write_run_log(out, "gen-data");
  std::cout << "wrote " << n << " samples (" << nt << " snapshots each) to " << out << "\n";
  return kExitOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& out) {
  auto report = verify::run_geometry_verification(suite, seed);
  const std::string js = verify::verify_report_json(report);
  if (!out.empty()) {
    std::ofstream f(out);
    f << js << "\n";
  }
  for (const auto& r : report.results)
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << "  max_err=" << r.max_err
              << " tol=" << r.tol << " (" << r.seconds << " s)\n";
  std::cout << (report.all_pass ? "all oracles passed" : "oracle failures present") << "\n";
  return report.all_pass ? kExitOk : kExitRuntime;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out,
              const std::string& mode_override, long seed_override, bool deterministic) {
  train::TrainConfig cfg = train::load_config(config_path);
  if (!mode_override.empty()) cfg.mode = train::parse_mode(mode_override);
  if (seed_override >= 0) cfg.seed = std::uint64_t(seed_override);
  if (deterministic) cfg.deterministic = true;
  pde::PdeDataset ds = pde::read_dataset(dataset_prefix(data));
  cfg.validate(ds);

  auto result = train::train(cfg, ds, out);
  write_run_log(out, "train");
  if (result.aborted) {
    std::cerr << "training aborted: " << result.abort_reason << "\n";
    return kExitRuntime;
  }
  const auto& last = result.history.back();
  std::cout << "trained " << result.final_iter << " iterations; final total loss " << last.total
            << " (ric " << last.l_ric << ", dec " << last.l_dec << ", met " << last.l_met
            << ")\n";
  std::cout << "checkpoint: " << (fs::path(out) / "final.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& times_s,
             const std::string& out) {
  auto lm = train::load_model(checkpoint_path(ckpt));
  pde::PdeDataset ds = pde::read_dataset(dataset_prefix(data));
  auto times = parse_times(times_s);
  auto rep = eval::evaluate(lm.cfg, lm.bundle, ds, times, data);
  std::cout << eval::report_table(rep);
  if (!out.empty()) {
    std::ofstream f(out);
    f << eval::report_json(rep) << "\n";
  }
  return kExitOk;
}

int cmd_export_latent(const std::string& ckpt, const std::vector<std::string>& data_specs,
                      const std::string& times_s, const std::string& out) {
  auto lm = train::load_model(checkpoint_path(ckpt));
  std::vector<pde::PdeDataset> datasets;
  datasets.reserve(data_specs.size());
  std::vector<eval::LatentSplit> splits;
  for (const auto& spec : data_specs) {
    std::string tag = "train", path = spec;
    const auto eq = spec.find('=');
    if (eq != std::string::npos) {
      tag = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    }
    datasets.push_back(pde::read_dataset(dataset_prefix(path)));
    splits.push_back({tag, nullptr});
  }
  for (std::size_t i = 0; i < datasets.size(); ++i) splits[i].ds = &datasets[i];
  auto times = parse_times(times_s);
  eval::export_latent(lm.cfg, lm.bundle, splits, times, out);
  std::cout << "wrote latent cloud to " << out << "\n";
  return kExitOk;
}

int cmd_inspect(const std::string& ckpt) {
  std::cout << nn::checkpoint_header_json(checkpoint_path(ckpt)) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads();
  CLI::App app{"Ricci-flow-guided autoencoder toolkit"};
  app.require_subcommand(1);

  // gen-data
  std::string pde_s = "burgers", family_s = "A1", out, norm_s = "none";
  int n = 100, nt = 100;
  long seed = 0;
  auto* gen = app.add_subcommand("gen-data", "generate a PDE dataset");
  gen->add_option("--pde", pde_s, "burgers | diffusion_reaction | wave2d");
  gen->add_option("--family", family_s,
                  "A1 | A1_new | A2 | A2_new1 | A2_new2 | A2_new3 | gauss_impulse");
  gen->add_option("--n", n, "number of initial conditions");
  gen->add_option("--nt", nt, "snapshots per initial condition (default 100)");
  gen->add_option("--seed", seed, "rng seed");
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--norm", norm_s, "normalization: none | integral | l1");

  // verify-geometry
  std::string suite = "all", report_out;
  long vseed = 20240613;
  auto* ver = app.add_subcommand("verify-geometry", "run the geometry oracle suite");
  ver->add_option("--suite", suite, "oracle name or 'all'");
  ver->add_option("--seed", vseed, "rng seed");
  ver->add_option("--out", report_out, "JSON conformance report path");

  // train
  std::string config_path, data_path, run_out, mode_override;
  long tseed = -1;
  bool det = false;
  auto* tr = app.add_subcommand("train", "train a model from a config and dataset");
  tr->add_option("--config", config_path, "JSON training config")->required();
  tr->add_option("--data", data_path, "dataset directory or prefix")->required();
  tr->add_option("--out", run_out, "run output directory")->required();
  tr->add_option("--mode", mode_override, "training mode override");
  tr->add_option("--seed", tseed, "seed override");
  tr->add_flag("--deterministic", det, "force the deterministic path");

  // eval
  std::string ckpt, etimes = "0,0.5,1", eval_out;
  auto* ev = app.add_subcommand("eval", "relative-L1 evaluation of a checkpoint");
  ev->add_option("--ckpt", ckpt, "checkpoint path")->required();
  ev->add_option("--data", data_path, "dataset directory or prefix")->required();
  ev->add_option("--times", etimes, "comma-separated evaluation times");
  ev->add_option("--out", eval_out, "JSON report path");

  // export-latent
  std::vector<std::string> data_specs;
  std::string latent_out = "latent.csv";
  auto* ex = app.add_subcommand("export-latent", "export latent states as CSV");
  ex->add_option("--ckpt", ckpt, "checkpoint path")->required();
  ex->add_option("--data", data_specs, "dataset as tag=path (repeatable)")->required();
  ex->add_option("--times", etimes, "comma-separated times");
  ex->add_option("--out", latent_out, "CSV output path");

  // inspect-checkpoint
  auto* ins = app.add_subcommand("inspect-checkpoint", "print a checkpoint header");
  ins->add_option("--ckpt", ckpt, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints usage/help text
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(pde_s, family_s, n, nt, std::uint64_t(seed), out, norm_s);
    if (ver->parsed()) return cmd_verify(suite, std::uint64_t(vseed), report_out);
    if (tr->parsed()) return cmd_train(config_path, data_path, run_out, mode_override, tseed, det);
    if (ev->parsed()) return cmd_eval(ckpt, data_path, etimes, eval_out);
    if (ex->parsed()) return cmd_export_latent(ckpt, data_specs, etimes, latent_out);
    if (ins->parsed()) return cmd_inspect(ckpt);
  } catch (const train::TrainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const pde::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nn::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
