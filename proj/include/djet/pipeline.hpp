#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "djet/diffuse.hpp"
#include "djet/mollify.hpp"
#include "djet/systems.hpp"

namespace djet {

struct ResidualField {
  Field r;  // scalar residual per cell
  double tol = 0.0;
  CellSet offending;
  double offendingMeasure = 0.0;
  bool pass = false;
};

struct ResidualOptions {
  double tau = 0.05;           // reduced-support mass threshold
  double tol = 0.1;            // residual exceedance threshold
  double massBudget = -1.0;    // default: 0.01 * |Omega|
  bool overrideUnconverged = false;
  bool cornerSampling = false;  // also probe bin corners
};

/// Residual of the generalized-solution property: per cell the sup of
/// |F(x, u(x), X)| over the reduced-support representatives of the jet
/// estimate (zero when the reduced support is empty). Passes when the
/// offending measure stays within the budget.
ResidualField residual(const Field& u, const DiffuseJetEstimate& est,
                       const SystemF& F, const ResidualOptions& opts = {});

struct NuRecord {
  int nu = 0;
  double eps = 0.0;
  BoundReport bounds;
  bool mollifyFailed = false;
  std::string gap;  // failure note when the step could not be completed
  double rhoToEstimate = 0.0;
  double residualSupOffE = 0.0;
  double fieldL1 = 0.0;               // |f_nu|_L1
  double maxOnExceptional = 0.0;      // max |f_nu| on the estimate's inf cells
  double aeOffendingMeasure = 0.0;    // |{|f_nu| > tol}| off the inf cells
  std::vector<double> phiWeighted;    // offending measures, one per R in rGrid
  std::vector<double> ballRestricted; // same with sharp indicator cutoffs
  std::vector<double> tripleIntersection;  // one per eps in epsGrid
};

struct ApproximationRun {
  std::vector<NuRecord> records;
  std::vector<double> rGrid;
  std::vector<double> epsGrid;
  CellSet estInfCells;  // cells where the estimate charges infinity
  GridDomain dom;
  /// Mollifier outputs and residual fields per nu, aligned with records.
  std::vector<MollifierOutput> mollified;
  std::vector<Field> fnu;
  std::string toJson() const;
};

struct RunOptions {
  std::function<double(int)> epsRule;  // default 1/nu
  std::vector<double> rGrid = {1.0, 10.0};
  std::vector<double> epsGrid = {0.05, 0.1};
  double convergenceTol = 0.05;  // threshold for the a.e. trends
  double tauInf = 0.05;          // inf-mass threshold for the exceptional set
  std::optional<double> lr;
  CutoffSpec::Kind cutoffKind = CutoffSpec::Kind::SmoothExp;
};

/// The mollification pipeline: for each schedule step nu an eps_nu from the
/// rule, a mollifier output u_nu, the residual field f_nu(x) =
/// F(x, u_nu(x), jets of u_nu at x), and the convergence diagnostics.
/// Mollifier failures are recorded as gaps; the run continues.
ApproximationRun runApproximation(const Field& u, const SystemF& F,
                                  const Frame& frame,
                                  std::span<const StepMatrix> schedule,
                                  const DiffuseJetEstimate& est,
                                  const RunOptions& opts = {});

struct TrendReport {
  std::vector<double> values;
  bool decreasing = false;  // nonincreasing within 10% slack
  double last = 0.0;
  bool converged = false;   // decreasing and last <= tol
};

struct Corollary12Report {
  std::vector<TrendReport> ballRestricted;     // one per R
  std::vector<TrendReport> phiWeighted;        // one per R
  std::vector<TrendReport> tripleIntersection; // one per eps
  CellSet exceptionalEstimate;
  double exceptionalMeasure = 0.0;
  TrendReport offExceptional;  // f_nu -> 0 a.e. off the exceptional set
  bool modesAgree = false;     // phi-weighted and ball-restricted verdicts match
  std::string toJson() const;
};

/// Convergence-mode diagnostics over a completed run: per R the restricted
/// a.e. trends, per eps the triple-intersection measures, the estimated
/// exceptional set from the inf-mass threshold, and the off-set trend.
Corollary12Report corollary12Diagnostics(const ApproximationRun& run,
                                         const DiffuseJetEstimate& est,
                                         std::span<const double> epsGrid,
                                         std::span<const double> rGrid,
                                         double tauInf = 0.05,
                                         double convergenceTol = 0.05);

}  // namespace djet
