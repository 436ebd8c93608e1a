#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rfae::verify {

struct OracleResult {
  std::string name;
  bool pass = false;
  double max_err = 0.0;
  double tol = 0.0;
  double seconds = 0.0;
  std::string detail;
};

struct VerifyReport {
  std::vector<OracleResult> results;
  bool all_pass = false;
};

/// Analytic-oracle conformance suite for the differential-geometry kernels:
/// cigar soliton, sphere flow law, finite-difference cross-checks, the
/// Gauss-equation equivalence, coordinate transforms, torus curvature, and
/// the surface-of-revolution closed forms. Suite names: "all" or a single
/// oracle name.
VerifyReport run_geometry_verification(const std::string& suite = "all",
                                       std::uint64_t seed = 20240613);

std::string verify_report_json(const VerifyReport& rep);

}  // namespace rfae::verify
