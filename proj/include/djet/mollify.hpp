#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "djet/quotients.hpp"
#include "djet/tensor.hpp"

namespace djet {

/// Raised when a constraint of the patch-grid selection cannot be satisfied
/// at the current grid resolution; `inequality` names the violated one.
struct GridResolutionError : std::runtime_error {
  std::string inequality;
  GridResolutionError(std::string ineq, const std::string& msg)
      : std::runtime_error(msg), inequality(std::move(ineq)) {}
};

/// The map u stacked with its difference-quotient jet: component 0 is u
/// (order 0), components 1..p the jet orders.
struct StackedField {
  GridDomain dom;
  std::vector<Field> comps;

  static StackedField of(const Field& u, const JetField& jet);
  int orderCount() const { return int(comps.size()); }
  /// Per-cell Euclidean norm of the components from `from` on.
  Field normField(std::size_t from = 0) const;
};

struct TruncationParams {
  double R = 1.0;
  /// Doubling sequence tried: (R, exceedance measure).
  std::vector<std::pair<double, double>> trace;
  CellSet exceeding;  // cells altered by the truncation
};

/// Radial truncation at R: identity where the (selected) stack norm is < R,
/// else scaled back onto the sphere of radius R. With jetOnly the order-0
/// component is left untouched and the norm is taken over the jet part.
StackedField truncateStack(const StackedField& V, double R,
                           bool jetOnly = false);

/// Smallest R in {1, 2, 4, ...} whose exceedance set has measure <= eps/2.
TruncationParams selectTruncationRadius(const StackedField& V, double eps,
                                        bool jetOnly = false);

struct SmoothApproxResult {
  StackedField fields;
  CellSet egoroffSet;  // cells where the smoothed stack deviates by > eps
  double sigma = 0.0;  // final kernel support radius
  bool ok = true;
  double achievedMeasure = 0.0;
};

/// Convolve the truncated stack with a compactly supported smooth bump,
/// halving its width until the set where the result deviates from the input
/// by more than eps has measure <= eps/2. When lrOrder is given, the order-0
/// component must additionally approximate lrTarget within eps in L^r.
/// Failure at the one-cell kernel floor is flagged, not silent.
SmoothApproxResult smoothApprox(const StackedField& W, double eps,
                                std::optional<double> lrOrder = std::nullopt,
                                const Field* lrTarget = nullptr);

/// Grid modulus of continuity: max over cell pairs at distance <= t of the
/// summed component differences, on the ladder of realizable offset lengths,
/// monotone by running max, zero below the smallest positive distance.
class EmpiricalModulus {
 public:
  EmpiricalModulus() = default;
  EmpiricalModulus(const StackedField* U, std::size_t cellStride = 1);
  /// omega(t); extends the internal ladder on demand.
  double eval(double t) const;

 private:
  const StackedField* U_ = nullptr;
  std::size_t stride_ = 1;
  mutable std::int64_t computedRadius_ = 0;  // in cells, per axis
  mutable std::vector<double> ladderDist_;
  mutable std::vector<double> ladderVal_;
  void extendTo(double t) const;
};

/// Standalone ladder evaluation of the modulus up to tmax.
std::vector<std::pair<double, double>> empiricalModulusLadder(
    const StackedField& U, double tmax, std::size_t cellStride = 1);

struct CutoffSpec {
  enum class Kind { SmoothExp, PolySmoothstep };
  Kind kind = Kind::SmoothExp;
  double inner = 0.0;  // ramp starts (value 1 inside)
  double outer = 0.0;  // support ends (value 0 outside)
  int polyOrder = 3;   // smoothstep order when polynomial
};

/// k-th derivative of the one-axis cutoff ramp at offset t from the cube
/// center: 1 for |t| <= inner, 0 for |t| >= outer, smooth monotone between.
double cutoffDerivative(const CutoffSpec& spec, double t, int k);

struct PatchGridParams {
  double delta = 0.0;
  std::int64_t cellsPerCube = 1;
  double alpha = 1.0;
  CellSet omegaDelta;       // cells covered by kept cubes
  CellSet omegaAlphaDelta;  // cells whose centers lie in inner cubes
};

/// Select the cube side (halving from the box extent, floored at one cell)
/// and the shrink factor alpha = (max{1 - eps/(2|Omega|), 1/2})^{1/n}, so
/// that the Taylor tail at the in-cube reach, the modulus at the reach, and
/// the uncovered measure are all within budget. Throws GridResolutionError
/// when no cube placement covers the domain.
PatchGridParams selectPatchGrid(const EmpiricalModulus& omega,
                                const StackedField& U, double eps,
                                const GridDomain& dom, int p);

struct Patch {
  std::vector<double> center;
  std::vector<SymTensor> coeffs;  // orders 0..p at the cube center
};

struct BoundReport {
  double eps = 0.0;
  double supU = 0.0;
  double supJet = 0.0;
  double measureE = 0.0;
  std::optional<double> lrOrder;
  double lrValue = 0.0;
  bool pass = false;
  std::string note;
};

/// Smooth compactly supported patchwork representation: per kept cube a
/// polynomial of degree p in (x - center) times a smooth cutoff that is one
/// on the inner cube and vanishes outside the cube. Evaluation and exact
/// derivatives are closed-form.
class MollifierOutput {
 public:
  GridDomain dom;
  int p = 1;
  double delta = 0.0;
  double alpha = 1.0;
  double R = 1.0;
  CutoffSpec cutoff;
  std::vector<double> anchor;            // lower corner of the cube grid
  std::vector<std::int64_t> cubesPerAxis;
  std::vector<std::int64_t> patchOfCube;  // cube flat index -> patch id or -1
  std::vector<Patch> patches;
  CellSet exceptional;
  BoundReport bounds;

  /// Exact value (k = 0) or k-th derivative tensor of the patch sum at x.
  SymTensor evaluate(std::span<const double> x, int k) const;
  Field evaluateField(const GridDomain& grid, int k) const;
  JetField exactJet(const GridDomain& grid) const;

  std::string toJson() const;
  static MollifierOutput fromJson(const std::string& text);
};

struct MollifyOptions {
  std::optional<double> lr;
  CutoffSpec::Kind cutoffKind = CutoffSpec::Kind::SmoothExp;
  int maxRetries = 40;
};

/// Full construction: stack, truncate, smooth, pick the patch grid, build
/// patches and the exceptional set, and re-measure every bound on the grid.
/// The internal budget is eps / (3p) (and eps / 7 when an L^r bound is
/// requested) so the reported bounds are against the caller's eps. A failed
/// bound is reported with its measured value, never silently accepted.
MollifierOutput assemble(const Field& u, const Frame& f, const StepMatrix& H,
                         double eps, const MollifyOptions& opts = {});

}  // namespace djet
