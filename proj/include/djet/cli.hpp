#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace djet {

/// Effective configuration of one CLI run; flags override config-file keys.
struct RunConfig {
  double domainLo = 0.0;
  double domainHi = 1.0;
  std::int64_t cells = 19683;
  std::string input = "sin";
  std::string system = "derivative-zero";
  int p = 1;
  double eps = 0.1;
  std::optional<double> lr;
  std::string outDir = ".";
  std::int64_t seed = 0;
  std::int64_t h0Cells = 0;  // 0 = auto
  double decay = 1.0 / 3.0;
  int steps = 3;
  int nuMax = 6;
  double rhoTol = 1e-3;
  double tau = 0.05;
  double tauInf = 0.05;
  double massBudget = -1.0;  // <0 = 1% of |Omega|
  double residualTol = 0.1;
  double convergenceTol = 0.05;
  int binsScalar = 64;
  int binsMulti = 9;
  int fatCantorJ = 64;
  int window = 0;
  bool overrideUnconverged = false;
  std::string cutoff = "smooth-exp";

  std::string provenanceJson(const std::string& command) const;
};

/// Entry point used by the `djet` binary and the tests. Returns the process
/// exit code: 0 success, 2 configuration error, 3 convergence or bound
/// failure, 4 residual failure.
int runCli(const std::vector<std::string>& args);

}  // namespace djet
