#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "djet/tensor.hpp"

namespace djet {

/// Uniform cell grid over a bounding box. Cells are unit hypercubes of side g
/// (the same on every axis); a cell is identified by its multi-index within
/// the box, flattened row-major. The domain is the full box by default; a
/// membership mask restricts it to an arbitrary cell subset.
class GridDomain {
 public:
  GridDomain() = default;
  static GridDomain box(std::vector<double> lo, std::vector<double> hi,
                        std::vector<std::int64_t> cells);
  static GridDomain box1(double lo, double hi, std::int64_t cells);

  int dim() const { return n_; }
  double cellSize() const { return g_; }
  std::span<const double> lower() const { return lo_; }
  std::span<const std::int64_t> extents() const { return ext_; }
  std::size_t boxCellCount() const { return boxCells_; }
  /// Number of cells actually in the domain (<= boxCellCount()).
  std::size_t cellCount() const { return domainCells_; }
  double measure() const;

  bool inDomain(std::size_t flat) const {
    return mask_.empty() ? true : mask_[flat] != 0;
  }
  void restrictTo(const std::vector<std::uint8_t>& mask);

  std::size_t flatten(std::span<const std::int64_t> multi) const;
  std::vector<std::int64_t> unflatten(std::size_t flat) const;
  std::vector<double> cellCenter(std::size_t flat) const;
  /// Flat index of the cell containing the point, or nullopt when outside the
  /// box or outside the domain mask.
  std::optional<std::size_t> cellAt(std::span<const double> x) const;

  /// Shift a flat index by an integer cell offset; nullopt when the target
  /// leaves the box or the domain.
  std::optional<std::size_t> shifted(std::size_t flat,
                                     std::span<const std::int64_t> off) const;

  bool operator==(const GridDomain& other) const;

 private:
  int n_ = 1;
  double g_ = 1.0;
  std::vector<double> lo_;
  std::vector<std::int64_t> ext_;
  std::size_t boxCells_ = 0;
  std::size_t domainCells_ = 0;
  std::vector<std::uint8_t> mask_;  // empty = full box
};

/// Subset of domain cells, stored as a bitmap over the bounding box.
class CellSet {
 public:
  CellSet() = default;
  explicit CellSet(std::size_t boxCells) : bits_(boxCells, 0) {}
  static CellSet empty(const GridDomain& d) { return CellSet(d.boxCellCount()); }
  static CellSet full(const GridDomain& d);

  bool contains(std::size_t flat) const { return bits_[flat] != 0; }
  void insert(std::size_t flat) { bits_[flat] = 1; }
  void erase(std::size_t flat) { bits_[flat] = 0; }
  std::size_t count() const;
  std::size_t size() const { return bits_.size(); }

  CellSet& uniteWith(const CellSet& o);
  CellSet& intersectWith(const CellSet& o);
  CellSet& subtract(const CellSet& o);
  friend CellSet unite(CellSet a, const CellSet& b) { return a.uniteWith(b); }
  friend CellSet intersect(CellSet a, const CellSet& b) { return a.intersectWith(b); }
  friend CellSet difference(CellSet a, const CellSet& b) { return a.subtract(b); }
  CellSet symmetricDifference(const CellSet& o) const;

  std::vector<std::size_t> indices() const;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Lebesgue measure of a cell set: (#cells) * g^n. Exactly additive on
/// disjoint sets.
double measureOf(const GridDomain& d, const CellSet& s);

/// Grid-sampled map with one tensor value per cell, interpreted at the cell
/// center and extended by zero outside the domain. Values are validated
/// finite on construction.
class Field {
 public:
  Field() = default;
  static Field zeros(const GridDomain& d, const TensorShape& s);
  static Field fromFunction(
      const GridDomain& d, const TensorShape& s,
      const std::function<void(std::span<const double>, std::span<double>)>& fn);
  static Field fromData(const GridDomain& d, const TensorShape& s,
                        std::vector<double> data);

  const GridDomain& domain() const { return dom_; }
  const TensorShape& shape() const { return shape_; }
  std::size_t width() const { return shape_.size(); }
  std::span<const double> at(std::size_t flat) const {
    return std::span<const double>(data_).subspan(flat * width(), width());
  }
  std::span<double> at(std::size_t flat) {
    return std::span<double>(data_).subspan(flat * width(), width());
  }
  double scalarAt(std::size_t flat) const { return data_[flat]; }
  SymTensor tensorAt(std::size_t flat) const;
  std::span<const double> raw() const { return data_; }
  std::span<double> raw() { return data_; }

  /// Value at an arbitrary point of R^n: the containing cell's value inside
  /// the domain, zero everywhere else.
  std::vector<double> valueAt(std::span<const double> x) const;
  /// Multilinear interpolation of cell-center values, zero-extended.
  std::vector<double> valueAtInterpolated(std::span<const double> x) const;

  /// Per-cell Euclidean norm as a scalar field.
  Field normField() const;

  Field& operator+=(const Field& o);
  Field& operator-=(const Field& o);
  Field& operator*=(double s);
  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(double s, Field a) { return a *= s; }

 private:
  GridDomain dom_;
  TensorShape shape_;
  std::vector<double> data_;
};

/// Riemann-sum L^r norm over the domain; r = infinity gives the max over
/// cells. Throws for r < 1. Summation order is fixed (cell order), so results
/// are deterministic.
double lrNorm(const Field& u, double r);

/// Cells where a nonnegative scalar field exceeds t (strictly by default;
/// inclusive compares with >=).
CellSet exceedanceSet(const Field& u, double t, bool inclusive = false);

struct AeReport {
  bool ok = false;
  double measure = 0.0;           // offending measure of the last iterate
  std::vector<double> trend;      // offending measures over the checked tail
  std::vector<std::size_t> offendingCells;
  std::string toJson() const;
};

/// Discrete surrogate of almost-everywhere convergence: the last iterate may
/// deviate from the limit by more than tol only on a cell set of measure
/// <= massBudget, and that measure must be nonincreasing over the last three
/// iterates. Throws on an empty sequence.
AeReport aeConvergenceCheck(std::span<const Field> seq, const Field& limit,
                            double tol, double massBudget);

/// CSV I/O. Header line: `# n W g bbox` where W is the per-cell value count
/// and bbox lists the lower corner then the per-axis cell counts. Rows:
/// cell multi-index entries, then values.
void writeFieldCsv(const std::string& path, const Field& u);
Field readFieldCsv(const std::string& path);

}  // namespace djet
