#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace djet {

/// Shape of a symmetric tensor value: target dimension N, domain dimension n,
/// order q. q = 0 means a plain vector in R^N; q = 1 an N x n matrix; for
/// q >= 2 the entries are symmetric under permutation of the n-indices.
struct TensorShape {
  int N = 1;
  int n = 1;
  int q = 0;

  std::size_t size() const {
    std::size_t s = std::size_t(N);
    for (int k = 0; k < q; ++k) s *= std::size_t(n);
    return s;
  }
  bool operator==(const TensorShape&) const = default;
  std::string describe() const;
};

/// Dense symmetric tensor in R^{N n^q}. Entries are stored for all ordered
/// index tuples (alpha, i1..iq), row-major; symmetry in the i-indices is an
/// invariant checked on construction from external data.
class SymTensor {
 public:
  SymTensor() = default;
  static SymTensor zeros(const TensorShape& s);
  /// Validates symmetry: symmetrizes and compares with tolerance relative to
  /// the max entry. Throws std::invalid_argument when violated.
  static SymTensor fromData(const TensorShape& s, std::span<const double> a,
                            double symTol = 1e-10);
  /// Trusted constructor for internally generated (already symmetric) data.
  static SymTensor fromDataUnchecked(const TensorShape& s,
                                     std::vector<double> a);

  const TensorShape& shape() const { return shape_; }
  std::span<const double> data() const { return data_; }
  std::span<double> mutableData() { return data_; }

  double at(int alpha, std::span<const int> idx) const;
  double& at(int alpha, std::span<const int> idx);

  double norm() const;
  double dot(const SymTensor& other) const;

  SymTensor& operator+=(const SymTensor& other);
  SymTensor& operator-=(const SymTensor& other);
  SymTensor& operator*=(double s);
  friend SymTensor operator+(SymTensor a, const SymTensor& b) { return a += b; }
  friend SymTensor operator-(SymTensor a, const SymTensor& b) { return a -= b; }
  friend SymTensor operator*(double s, SymTensor a) { return a *= s; }

  /// Average over all permutations of the i-indices, in place.
  void symmetrize();
  /// Max abs difference between the tensor and its symmetrization.
  double asymmetry() const;

 private:
  TensorShape shape_;
  std::vector<double> data_;
};

/// a v b = (a (x) b + b (x) a) / 2, the symmetrised product of two vectors.
SymTensor symProduct(std::span<const double> a, std::span<const double> b);

/// Symmetrised product of q >= 1 vectors: the average of the q! tensor
/// products over all orderings. For q = 2 this matches symProduct.
SymTensor symPower(const std::vector<std::vector<double>>& vecs);

/// Orthonormal frames: one basis E^alpha of R^N and, per alpha, a basis
/// E^{(alpha)i} of R^n. The induced family E^{alpha i1..iq} =
/// E^alpha (x) (E^{(alpha)i1} v ... v E^{(alpha)iq}) spans the symmetric
/// tensor space and acts as a Parseval frame: expansion coefficients over all
/// ordered tuples reconstruct the tensor and preserve its norm.
class Frame {
 public:
  static Frame standard(int N, int n);
  /// Validates orthonormality of every listed basis to `tol`.
  static Frame fromBases(std::vector<std::vector<double>> target,
                         std::vector<std::vector<std::vector<double>>> domain,
                         double tol = 1e-12);

  int N() const { return N_; }
  int n() const { return n_; }
  std::span<const double> targetVec(int alpha) const { return target_[alpha]; }
  std::span<const double> domainVec(int alpha, int i) const {
    return domain_[alpha][i];
  }
  bool isStandard() const { return standard_; }

  /// The induced element for the tuple (alpha, idx). Symmetric by
  /// construction; unit norm when all i-indices coincide.
  SymTensor inducedElement(int alpha, std::span<const int> idx) const;

 private:
  int N_ = 1, n_ = 1;
  bool standard_ = true;
  std::vector<std::vector<double>> target_;
  std::vector<std::vector<std::vector<double>>> domain_;
};

/// Coefficients c_{alpha i1..iq} = E^{alpha i1..iq} : X over all ordered
/// tuples, row-major in (alpha, i1..iq). Size N * n^q.
std::vector<double> frameCoordinates(const SymTensor& X, const Frame& f);

/// Reconstruction sum c . E from frame coordinates; inverse of
/// frameCoordinates on symmetric tensors.
SymTensor tensorFromFrameCoordinates(std::span<const double> coords,
                                     const Frame& f, const TensorShape& shape);

/// A point of the one-point compactification of a symmetric tensor space.
struct CompactifiedValue {
  bool finite = true;
  SymTensor value;

  static CompactifiedValue of(SymTensor v) { return {true, std::move(v)}; }
  static CompactifiedValue infinity(const TensorShape& s) {
    return {false, SymTensor::zeros(s)};
  }
};

/// Chordal (sphere) metric obtained from stereographic projection onto the
/// unit sphere: d(x,y) = 2|x-y| / (sqrt(1+|x|^2) sqrt(1+|y|^2)),
/// d(x,inf) = 2/sqrt(1+|x|^2), d(inf,inf) = 0. Bounded by 2.
double chordalDistance(const CompactifiedValue& x, const CompactifiedValue& y);

/// Same metric on raw coordinate vectors (both finite).
double chordalDistanceFlat(std::span<const double> x, std::span<const double> y);
/// Distance from a finite coordinate vector to the point at infinity.
double chordalToInfinityFlat(std::span<const double> x);

namespace detail {
/// Enumerate ordered index tuples (i1..iq) in {0..n-1}^q, row-major.
/// Calls fn(tupleSpan) for each.
template <typename Fn>
void forEachTuple(int n, int q, Fn&& fn) {
  std::vector<int> idx(std::size_t(q), 0);
  if (q == 0) {
    fn(std::span<const int>(idx));
    return;
  }
  while (true) {
    fn(std::span<const int>(idx));
    int k = q - 1;
    while (k >= 0 && ++idx[std::size_t(k)] == n) idx[std::size_t(k--)] = 0;
    if (k < 0) break;
  }
}
}  // namespace detail

}  // namespace djet
