#pragma once

#include <optional>
#include <string>
#include <vector>

#include "djet/quotients.hpp"
#include "djet/young.hpp"

namespace djet {

/// One subsequential weak* limit candidate for a diffuse jet: the last Dirac
/// embedding along the schedule together with its distance trace. The
/// estimator samples finitely many schedules, so it is a necessary-condition
/// tool; reports always carry the schedule identity.
struct DiffuseJetEstimate {
  DiscreteYoungMeasure measure;
  std::vector<StepMatrix> schedule;
  std::vector<double> rhoTrace;  // distances between consecutive embeddings
  bool converged = false;
  double rhoTol = 1e-3;
  /// Distance between estimates from the even and odd sub-schedules; a value
  /// above 3 * rhoTol flags possible non-uniqueness.
  std::optional<double> subScheduleSplit;
  bool nonUniquenessSuspected = false;

  std::string traceJson() const;
};

struct DiffuseJetOptions {
  double rhoTol = 1e-3;
  int kmax = 4096;
  int spatialWindow = 0;  // optional histogram window radius, off by default
  std::optional<BinScheme> scheme;  // default: built from the coarsest step
  bool resample = false;
};

/// Embed the difference-quotient jets along the schedule and track the
/// weak* distances between consecutive embeddings. Converged when the last
/// gap is <= rhoTol and the trace tail is nonincreasing within 10% slack.
/// Requires at least 3 schedule steps.
DiffuseJetEstimate estimateDiffuseJet(const Field& u, const Frame& f,
                                      std::span<const StepMatrix> schedule,
                                      const DiffuseJetOptions& opts = {});

/// Smooth-map compatibility: at least `cellFraction` of the cells must put
/// mass >= 1 - tau into the bin containing the caller-supplied exact jet.
bool checkLemma8(const Field& u, const JetField& exactJet,
                 const DiffuseJetEstimate& est, double tau,
                 double cellFraction = 0.95);

}  // namespace djet
