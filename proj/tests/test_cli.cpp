// End-to-end checks of the rfae command line. The binary path arrives as
// argv[1] from ctest.

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rfae/training.hpp"

namespace fs = std::filesystem;

namespace {
std::string g_bin;

int run(const std::string& args) {
  const int rc = std::system((g_bin + " " + args + " > cli_out.txt 2> cli_err.txt").c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}
}  // namespace

TEST_CASE("gen-data writes datasets; identical seeds give identical bytes") {
  fs::remove_all("cli_ds_a");
  fs::remove_all("cli_ds_b");
  CHECK(run("gen-data --pde burgers --family A1 --n 5 --nt 8 --seed 7 --out cli_ds_a") == 0);
  CHECK(fs::exists("cli_ds_a/dataset.meta.json"));
  CHECK(fs::exists("cli_ds_a/dataset.f64"));
  auto meta = nlohmann::json::parse(slurp("cli_ds_a/dataset.meta.json"));
  CHECK(meta.at("samples").get<int>() == 5);
  CHECK(meta.at("magic") == "RFAE-DS");

  CHECK(run("gen-data --pde burgers --family A1 --n 5 --nt 8 --seed 7 --out cli_ds_b") == 0);
  CHECK(slurp("cli_ds_a/dataset.meta.json") == slurp("cli_ds_b/dataset.meta.json"));
  CHECK(slurp("cli_ds_a/dataset.f64") == slurp("cli_ds_b/dataset.f64"));
  fs::remove_all("cli_ds_b");
}

TEST_CASE("verify-geometry emits a JSON conformance report") {
  CHECK(run("verify-geometry --suite cigar_grid --out cli_report.json") == 0);
  auto rep = nlohmann::json::parse(slurp("cli_report.json"));
  CHECK(rep.at("all_pass").get<bool>());
  CHECK(rep.at("oracles").size() == 1);
  fs::remove("cli_report.json");
}

TEST_CASE("train, eval, export-latent, inspect-checkpoint round trip") {
  rfae::train::TrainConfig cfg;
  cfg.mode = rfae::train::Mode::Sphere;
  cfg.latent_dim = 2;
  cfg.embed_dim = 3;
  cfg.time_scale = 0.4;
  cfg.width = 6;
  cfg.depth = 2;
  cfg.batch_size = 4;
  cfg.iterations = 15;
  cfg.learning_rate = 1e-3;
  {
    std::ofstream f("cli_cfg.json");
    f << rfae::train::config_to_json(cfg);
  }
  CHECK(run("train --config cli_cfg.json --data cli_ds_a --out cli_run --seed 3 "
            "--deterministic") == 0);
  CHECK(fs::exists("cli_run/final.ckpt"));
  CHECK(fs::exists("cli_run/history.csv"));
  const std::string hist = slurp("cli_run/history.csv");
  CHECK(hist.rfind("iter,l_ric,l_dec,l_met,l_sym,total,lr,wd", 0) == 0);

  CHECK(run("eval --ckpt cli_run/final --data cli_ds_a --times 0,0.5,1 --out cli_eval.json") ==
        0);
  auto rep = nlohmann::json::parse(slurp("cli_eval.json"));
  CHECK(rep.at("relative_l1").size() == 3);

  CHECK(run("export-latent --ckpt cli_run/final.ckpt --data train=cli_ds_a --times 0.5 "
            "--out cli_latent.csv") == 0);
  const std::string latent = slurp("cli_latent.csv");
  CHECK(latent.rfind("split,sample_id,time", 0) == 0);
  CHECK(std::count(latent.begin(), latent.end(), '\n') == 6);  // header + 5 samples

  CHECK(run("inspect-checkpoint --ckpt cli_run/final.ckpt") == 0);
  auto header = nlohmann::json::parse(slurp("cli_out.txt"));
  CHECK(header.at("magic") == "RFAE-CK");
  CHECK(header.at("meta").contains("mode"));
}

TEST_CASE("usage errors exit 1; help on every subcommand lists its flags") {
  CHECK(run("gen-data --bogus-flag 1 --out x") == 1);
  CHECK(run("definitely-not-a-subcommand") == 1);
  CHECK(run("train --config missing.json --data cli_ds_a --out cli_run2") != 0);

  for (const std::string sub :
       {"gen-data", "verify-geometry", "train", "eval", "export-latent", "inspect-checkpoint"}) {
    CHECK(run(sub + " --help") == 0);
    const std::string help = slurp("cli_out.txt");
    CHECK(help.find("--") != std::string::npos);
    if (sub == "train") {
      for (const std::string flag : {"--config", "--data", "--out", "--mode", "--seed",
                                     "--deterministic"})
        CHECK(help.find(flag) != std::string::npos);
    }
  }
  fs::remove_all("cli_ds_a");
  fs::remove_all("cli_run");
  fs::remove("cli_cfg.json");
  fs::remove("cli_out.txt");
  fs::remove("cli_err.txt");
  fs::remove("cli_eval.json");
  fs::remove("cli_latent.csv");
}

int main(int argc, char** argv) {
  if (argc > 1) g_bin = argv[1];
  doctest::Context ctx;
  return ctx.run();
}
