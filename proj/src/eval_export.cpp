#include "rfae/eval_export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

namespace rfae::eval {

using json = nlohmann::json;

double relative_l1(std::span<const double> pred, std::span<const double> truth, double h) {
  if (pred.size() != truth.size()) throw std::invalid_argument("relative_l1: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += std::abs(pred[i] - truth[i]);
    den += std::abs(truth[i]);
  }
  num *= h;
  den *= h;
  if (den <= 1e-12)
    throw UndefinedMetricError("relative L1 undefined: truth L1 norm " + std::to_string(den));
  return num / den;
}

EvalReport evaluate(const train::TrainConfig& cfg, const nn::ModelBundle& bundle,
                    const pde::PdeDataset& ds, std::span<const double> times,
                    const std::string& dataset_id) {
  EvalReport rep;
  rep.mode = train::to_string(cfg.mode);
  rep.dataset_id = dataset_id;
  rep.sample_count = int(ds.size());
  const double h = ds.node_measure();
  const double half_ht = 0.5 * ds.tgrid.ht();
  const int N = ds.n_nodes();

  for (double t : times) {
    TimeStat st;
    st.time = t;
    std::vector<double> errs;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      // nearest stored snapshot to the requested time
      const auto& ts = ds.snap_times[i];
      std::size_t best = 0;
      for (std::size_t k = 1; k < ts.size(); ++k)
        if (std::abs(ts[k] - t) < std::abs(ts[best] - t)) best = k;
      if (std::abs(ts[best] - t) > half_ht + 1e-12) ++st.nearest_warnings;
      const double t_snap = ts[best];
      std::span<const double> truth(ds.snapshots[i].data() + best * std::size_t(N),
                                    std::size_t(N));
      std::vector<double> pred = train::predict(cfg, bundle, ds.phi0[i], t_snap);
      try {
        errs.push_back(relative_l1(pred, truth, h));
      } catch (const UndefinedMetricError&) {
        ++st.excluded;
      }
    }
    st.count = int(errs.size());
    if (!errs.empty()) {
      double mean = 0;
      for (double e : errs) mean += e;
      mean /= double(errs.size());
      double var = 0;
      for (double e : errs) var += (e - mean) * (e - mean);
      var /= double(errs.size());
      st.mean = mean;
      st.stddev = std::sqrt(var);
    }
    rep.per_time.push_back(st);
  }
  return rep;
}

std::string report_json(const EvalReport& rep) {
  json j;
  j["mode"] = rep.mode;
  j["dataset"] = rep.dataset_id;
  j["samples"] = rep.sample_count;
  json arr = json::array();
  for (const auto& st : rep.per_time)
    arr.push_back(json{{"time", st.time},
                       {"mean", st.mean},
                       {"std", st.stddev},
                       {"count", st.count},
                       {"excluded", st.excluded},
                       {"nearest_warnings", st.nearest_warnings}});
  j["relative_l1"] = arr;
  return j.dump(2);
}

std::string report_table(const EvalReport& rep) {
  std::string out;
  char buf[64];
  out += "method";
  for (const auto& st : rep.per_time) {
    std::snprintf(buf, sizeof buf, " | t=%-12.4g", st.time);
    out += buf;
  }
  out += "\n";
  out += rep.mode;
  if (rep.mode.size() < 6) out += std::string(6 - rep.mode.size(), ' ');
  for (const auto& st : rep.per_time) {
    std::snprintf(buf, sizeof buf, " | %.4g +- %.3g", st.mean, st.stddev);
    out += buf;
  }
  out += "\n";
  return out;
}

void export_latent(const train::TrainConfig& cfg, const nn::ModelBundle& bundle,
                   const std::vector<LatentSplit>& splits, std::span<const double> times,
                   const std::string& path) {
  // union of family parameter keys across splits, sorted for a stable header
  std::set<std::string> keys;
  for (const auto& sp : splits)
    for (const auto& p : sp.ds->sample_params)
      for (const auto& [k, v] : p) keys.insert(k);

  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write latent export: " + path);
  const int m = cfg.latent_dim;
  const int d = cfg.embed_dim;
  f << "split,sample_id,time";
  for (int i = 1; i <= m; ++i) f << ",u" << i;
  for (int i = 1; i <= d; ++i) f << ",x" << i;
  for (const auto& k : keys) f << "," << k;
  f << "\n";

  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& sp : splits) {
    for (std::size_t i = 0; i < sp.ds->size(); ++i) {
      std::vector<double> u = train::latent_u(cfg, bundle, sp.ds->phi0[i]);
      for (double t : times) {
        std::vector<double> x = train::embed_point(cfg, bundle, u, cfg.time_scale * t);
        f << sp.tag << "," << i << "," << num(t);
        for (double v : u) f << "," << num(v);
        for (double v : x) f << "," << num(v);
        for (const auto& k : keys) {
          auto it = sp.ds->sample_params[i].find(k);
          f << "," << (it == sp.ds->sample_params[i].end() ? "" : num(it->second));
        }
        f << "\n";
      }
    }
  }
}

}  // namespace rfae::eval
