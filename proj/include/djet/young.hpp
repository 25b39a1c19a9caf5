#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "djet/grid.hpp"
#include "djet/quotients.hpp"
#include "djet/tensor.hpp"

namespace djet {

/// Uniform binning of one compactified tensor component. Per flattened
/// coordinate the interval [-Rinf, Rinf] carries binsPerAxis + 1 bin centers
/// on the lattice k * (2 Rinf / binsPerAxis), so 0 and +-Rinf are exact
/// centers; a dedicated bin collects the point at infinity together with
/// every value whose max coordinate magnitude exceeds Rinf.
struct BinAxes {
  TensorShape shape;
  double Rinf = 1.0;
  int binsPerAxis = 64;

  std::int64_t centersPerAxis() const { return binsPerAxis + 1; }
  std::int64_t finiteCount() const {
    std::int64_t c = 1;
    for (std::size_t k = 0; k < shape.size(); ++k) c *= centersPerAxis();
    return c;
  }
  std::int64_t totalCount() const { return finiteCount() + 1; }
  std::int64_t infIndex() const { return finiteCount(); }

  /// Bin of a finite flattened value (the inf bin when any coordinate
  /// escapes the box).
  std::int64_t binOf(std::span<const double> value) const;
  /// Center of a finite bin as flattened coordinates.
  std::vector<double> centerOf(std::int64_t bin) const;
  CompactifiedValue representative(std::int64_t bin) const;
};

struct BinScheme {
  std::vector<BinAxes> comps;
  std::string toJson() const;
  bool compatibleWith(const BinScheme& other) const;
};

/// Default scheme from the coarsest-step jet: per order, Rinf is twice the
/// 0.999 quantile of observed finite coordinate magnitudes; 64 bins per axis
/// for scalar components, 9 otherwise. Cells in `exclude` (typically the
/// stencil-exit layer, where the zero extension contaminates the quotients)
/// are left out of the quantile.
BinScheme schemeFromJet(const JetField& coarsest, int binsScalar = 64,
                        int binsMulti = 9, double quantile = 0.999,
                        const CellSet* exclude = nullptr);

/// Test function: a spatial cell-block indicator times a product of value
/// factors, each either identically one or a hat charging a single bin of
/// one component (the hat at the inf bin is the bump at infinity).
struct TestFunction {
  std::vector<std::int64_t> blockLo, blockHi;       // per axis, [lo, hi)
  std::vector<std::optional<std::int64_t>> hats;    // per component

  bool containsCell(const GridDomain& d, std::size_t flat) const;
  /// Value factor at a representative value of component c. Hats evaluate to
  /// one at their own bin center and decay to zero at the nearest other
  /// center in the chordal metric.
  double valueFactor(const BinScheme& s, int comp,
                     const CompactifiedValue& v) const;
};

/// Discretized Young measure: per cell and per component a probability
/// histogram over the component's bins. The joint measure across components
/// is the product of the per-component marginals (fibre product); an
/// optional joint histogram mode stores correlations for diagnostics.
class DiscreteYoungMeasure {
 public:
  struct Entry {
    std::int64_t bin;
    double mass;
  };

  DiscreteYoungMeasure() = default;
  static DiscreteYoungMeasure diracEmbed(const JetField& jet,
                                         const BinScheme& scheme);
  /// Components given directly as tensor fields, one per scheme component.
  static DiscreteYoungMeasure diracEmbedFields(std::span<const Field> comps,
                                               const GridDomain& dom,
                                               const BinScheme& scheme,
                                               bool joint = false);
  /// Build from explicit per-cell histograms (testing / accumulation).
  static DiscreteYoungMeasure fromHistograms(
      const GridDomain& dom, const BinScheme& scheme,
      std::vector<std::vector<std::vector<Entry>>> marginals);

  const GridDomain& domain() const { return dom_; }
  const BinScheme& scheme() const { return scheme_; }
  int componentCount() const { return int(scheme_.comps.size()); }
  bool hasJoint() const { return !joint_.empty(); }

  double mass(int comp, std::size_t cell, std::int64_t bin) const;
  double infMass(int comp, std::size_t cell) const {
    return mass(comp, cell, scheme_.comps[std::size_t(comp)].infIndex());
  }
  std::span<const Entry> histogram(int comp, std::size_t cell) const;

  /// Sum-to-one within tol and nonnegativity on every domain cell; throws
  /// when violated. Called by every constructor and combinator.
  void validate(double tol = 1e-9) const;

  /// Convex combination with another measure (same scheme/domain).
  DiscreteYoungMeasure mix(const DiscreteYoungMeasure& other,
                           double lambdaThis) const;

  /// Average the per-cell histograms over an axis-aligned window of the
  /// given cell radius (0 = no-op).
  DiscreteYoungMeasure spatialWindowAverage(int radius) const;

  /// Fibre product: concatenates component lists.
  friend DiscreteYoungMeasure productMeasure(const DiscreteYoungMeasure& a,
                                             const DiscreteYoungMeasure& b);
  /// Single-component marginal.
  DiscreteYoungMeasure marginal(int comp) const;

  /// Dump as CSV rows `cell, order, bin_index, mass` (scheme header emitted
  /// separately as JSON).
  void writeCsv(const std::string& path) const;

  friend double pairMeasure(const DiscreteYoungMeasure& theta,
                            const TestFunction& phi);

 private:
  GridDomain dom_;
  BinScheme scheme_;
  // marginals_[comp][cell] -> sorted entries
  std::vector<std::vector<std::vector<Entry>>> marginals_;
  // joint_[cell] -> sorted entries over the mixed-radix joint bin key
  std::vector<std::vector<Entry>> joint_;
};

/// Duality pairing <theta, Phi> = sum_cells g^n phi(cell) sum_bins
/// psi(representative) mass.
double pairMeasure(const DiscreteYoungMeasure& theta, const TestFunction& phi);

/// Canonical enumerated test family: for dyadic level l = 0, 1, ... the
/// bounding box splits into 2^l blocks per axis; per block and per component
/// the bin hats are taken inf-bin first, then center outward. The order is
/// fixed so distances are reproducible bit for bit.
std::vector<TestFunction> canonicalTestFamily(const GridDomain& dom,
                                              const BinScheme& scheme,
                                              int kmax);

/// Truncated weak* pseudometric rho(a, b) = sum_k 2^-k |<a-b, Phi_k>| /
/// (1 + |<a-b, Phi_k>|) over the canonical family.
double weakStarDistance(const DiscreteYoungMeasure& a,
                        const DiscreteYoungMeasure& b, int kmax = 4096);
/// Same formula over an explicit test family.
double weakStarDistanceFamily(const DiscreteYoungMeasure& a,
                              const DiscreteYoungMeasure& b,
                              std::span<const TestFunction> fam);
/// Canonical singles interleaved with pair hats on the first two components;
/// separates joint measures from fibre products.
std::vector<TestFunction> jointTestFamily(const GridDomain& dom,
                                          const BinScheme& scheme, int kmax);

/// Finite bin centers carrying mass >= tau at the cell, for one component.
std::vector<CompactifiedValue> reducedSupport(const DiscreteYoungMeasure& theta,
                                              std::size_t cell, double tau,
                                              int comp = 0);
/// Cartesian product of per-component reduced supports; empty when any
/// component's reduced support is empty.
std::vector<std::vector<SymTensor>> reducedSupportJet(
    const DiscreteYoungMeasure& theta, std::size_t cell, double tau);

struct LemmaCheckReport {
  bool ok = false;
  bool preconditionOk = true;
  std::string note;
  std::vector<double> traceU, traceV;
  std::string toJson() const;
};

/// Convergence criterion used by the lemma checks on a distance trace:
/// the tail is nonincreasing within slack 0.1 * first value and the last
/// entry has decayed below max(floor, 0.2 * first).
bool traceConverges(std::span<const double> trace, double floor = 1e-9);

/// Both directions of the a.e. / weak* equivalence on a constructed
/// sequence: pointwise convergence of the maps against the vanishing of the
/// embedded distance trace.
LemmaCheckReport checkLemma2(std::span<const JetField> seq,
                             const JetField& limit, const BinScheme& scheme,
                             double aeTol, double massBudget, int kmax = 4096);

/// If |U_m - V_m| -> 0 a.e. (verified) and the embeddings of U_m converge to
/// theta, the embeddings of V_m must converge to theta as well. Violated
/// preconditions throw.
LemmaCheckReport checkLemma34(std::span<const JetField> U,
                              std::span<const JetField> V,
                              const DiscreteYoungMeasure& theta, double aeTol,
                              double massBudget, int kmax = 4096);

/// Joint embedding of (U_m, V_m) converges to delta_U x theta when
/// U_m -> U a.e. and the embeddings of V_m converge to theta. Uses a joint
/// test family with pair hats to see correlations.
LemmaCheckReport checkLemma35(std::span<const Field> Useq, const Field& Ulimit,
                              const BinScheme& uScheme,
                              std::span<const JetField> Vseq,
                              const DiscreteYoungMeasure& theta,
                              double aeTol, double massBudget, int kmax = 4096);

}  // namespace djet
