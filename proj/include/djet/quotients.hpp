#pragma once

#include <vector>

#include "djet/grid.hpp"
#include "djet/tensor.hpp"

namespace djet {

/// Lower-triangular matrix of steps: row q holds the q steps
/// (h_q^1, ..., h_q^q) used by the order-q quotient, innermost first. All
/// entries are nonzero reals; on a grid they must be integer multiples of the
/// cell size at least the cell size in magnitude.
struct StepMatrix {
  int p = 1;
  std::vector<std::vector<double>> rows;  // rows[q-1].size() == q

  static StepMatrix uniform(int p, double h);
  void validate(double g) const;
  /// Largest |entry|.
  double maxStep() const;
};

/// Single-indexed diagonal schedule: entry k has all matrix entries equal to
/// h0 * decay^k, k = 0..count-1, snapped to grid multiples. Throws when a
/// scheduled step falls below the grid resolution.
std::vector<StepMatrix> stepSchedule(int p, double h0, double decay, int count,
                                     double g);

/// Forward difference quotient (u(x + h a) - u(x)) / h along the unit vector
/// a, with zero extension outside the domain. The offset h*a must land on
/// integer cell offsets unless `resample` enables multilinear interpolation.
Field dq1(const Field& u, std::span<const double> a, double h,
          bool resample = false);

/// Iterated quotient: steps/dirs are applied first-entry first, so
/// dqIterated(u, {a1, a2}, {h1, h2}) applies (a1, h1) then (a2, h2).
Field dqIterated(const Field& u, const std::vector<std::vector<double>>& dirs,
                 const std::vector<double>& steps, bool resample = false);

/// Jet of difference quotients: per cell the tuple (X_1, ..., X_p) of
/// symmetric tensors assembled from frame-directional iterated quotients.
struct JetField {
  GridDomain dom;
  int p = 1;
  std::vector<Field> orders;  // orders[q-1] has shape (N, n, q)
  /// Max deviation between raw directional coefficients and their
  /// symmetrization, accumulated during assembly.
  double maxAsymmetry = 0.0;

  /// Per-cell Euclidean norm of the stacked tuple.
  Field stackedNormField() const;
};

JetField jetOfQuotients(const Field& u, const Frame& f, const StepMatrix& H,
                        bool resample = false);

/// Cells whose stencil for the given step matrix leaves the domain box, so
/// the zero extension participates in their quotients.
CellSet stencilExitSet(const GridDomain& d, const Frame& f, const StepMatrix& H);

}  // namespace djet
