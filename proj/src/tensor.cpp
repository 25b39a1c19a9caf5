#include "djet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace djet {

std::string TensorShape::describe() const {
  return "(N=" + std::to_string(N) + ", n=" + std::to_string(n) +
         ", q=" + std::to_string(q) + ")";
}

SymTensor SymTensor::zeros(const TensorShape& s) {
  SymTensor t;
  t.shape_ = s;
  t.data_.assign(s.size(), 0.0);
  return t;
}

SymTensor SymTensor::fromDataUnchecked(const TensorShape& s,
                                       std::vector<double> a) {
  if (a.size() != s.size())
    throw std::invalid_argument("SymTensor: data size mismatch for shape " +
                                s.describe());
  SymTensor t;
  t.shape_ = s;
  t.data_ = std::move(a);
  return t;
}

SymTensor SymTensor::fromData(const TensorShape& s, std::span<const double> a,
                              double symTol) {
  SymTensor t = fromDataUnchecked(s, std::vector<double>(a.begin(), a.end()));
  for (double v : t.data_)
    if (!std::isfinite(v))
      throw std::invalid_argument("SymTensor: non-finite entry");
  double scale = 0.0;
  for (double v : t.data_) scale = std::max(scale, std::abs(v));
  if (t.asymmetry() > symTol * std::max(1.0, scale))
    throw std::invalid_argument("SymTensor: entries violate index symmetry");
  t.symmetrize();
  return t;
}

namespace {
std::size_t flatIndex(const TensorShape& s, int alpha,
                      std::span<const int> idx) {
  std::size_t f = std::size_t(alpha);
  for (int k = 0; k < s.q; ++k) f = f * std::size_t(s.n) + std::size_t(idx[std::size_t(k)]);
  return f;
}
}  // namespace

double SymTensor::at(int alpha, std::span<const int> idx) const {
  return data_[flatIndex(shape_, alpha, idx)];
}
double& SymTensor::at(int alpha, std::span<const int> idx) {
  return data_[flatIndex(shape_, alpha, idx)];
}

double SymTensor::norm() const { return std::sqrt(dot(*this)); }

double SymTensor::dot(const SymTensor& other) const {
  if (!(shape_ == other.shape_))
    throw std::invalid_argument("SymTensor::dot: shape mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < data_.size(); ++k) s += data_[k] * other.data_[k];
  return s;
}

SymTensor& SymTensor::operator+=(const SymTensor& other) {
  if (!(shape_ == other.shape_))
    throw std::invalid_argument("SymTensor: shape mismatch");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
  return *this;
}
SymTensor& SymTensor::operator-=(const SymTensor& other) {
  if (!(shape_ == other.shape_))
    throw std::invalid_argument("SymTensor: shape mismatch");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
  return *this;
}
SymTensor& SymTensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

namespace {
// Apply fn to every permutation of idx (in place, restores order).
void forEachPermutation(std::vector<int>& idx,
                        const std::function<void(std::span<const int>)>& fn) {
  std::sort(idx.begin(), idx.end());
  do {
    fn(idx);
  } while (std::next_permutation(idx.begin(), idx.end()));
}
}  // namespace

void SymTensor::symmetrize() {
  if (shape_.q < 2) return;
  std::vector<double> out(data_.size(), 0.0);
  std::vector<int> idx;
  for (int alpha = 0; alpha < shape_.N; ++alpha) {
    detail::forEachTuple(shape_.n, shape_.q, [&](std::span<const int> t) {
      idx.assign(t.begin(), t.end());
      double sum = 0.0;
      std::size_t count = 0;
      forEachPermutation(idx, [&](std::span<const int> pt) {
        sum += at(alpha, pt);
        ++count;
      });
      out[flatIndex(shape_, alpha, t)] = sum / double(count);
    });
  }
  data_ = std::move(out);
}

double SymTensor::asymmetry() const {
  if (shape_.q < 2) return 0.0;
  SymTensor s = *this;
  s.symmetrize();
  double m = 0.0;
  for (std::size_t k = 0; k < data_.size(); ++k)
    m = std::max(m, std::abs(data_[k] - s.data_[k]));
  return m;
}

SymTensor symProduct(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("symProduct: dimension mismatch");
  for (double v : a)
    if (!std::isfinite(v)) throw std::invalid_argument("symProduct: non-finite input");
  for (double v : b)
    if (!std::isfinite(v)) throw std::invalid_argument("symProduct: non-finite input");
  int n = int(a.size());
  TensorShape s{1, n, 2};
  SymTensor t = SymTensor::zeros(s);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      int idx[2] = {i, j};
      t.at(0, idx) = 0.5 * (a[std::size_t(i)] * b[std::size_t(j)] +
                            b[std::size_t(i)] * a[std::size_t(j)]);
    }
  return t;
}

SymTensor symPower(const std::vector<std::vector<double>>& vecs) {
  if (vecs.empty()) throw std::invalid_argument("symPower: empty input");
  int n = int(vecs[0].size());
  int q = int(vecs.size());
  for (const auto& v : vecs)
    if (int(v.size()) != n)
      throw std::invalid_argument("symPower: dimension mismatch");
  TensorShape s{1, n, q};
  SymTensor t = SymTensor::zeros(s);
  std::vector<int> perm(static_cast<std::size_t>(q));
  std::iota(perm.begin(), perm.end(), 0);
  double count = 0.0;
  do {
    count += 1.0;
    detail::forEachTuple(n, q, [&](std::span<const int> idx) {
      double prod = 1.0;
      for (int k = 0; k < q; ++k)
        prod *= vecs[std::size_t(perm[std::size_t(k)])][std::size_t(idx[std::size_t(k)])];
      t.at(0, idx) += prod;
    });
  } while (std::next_permutation(perm.begin(), perm.end()));
  t *= 1.0 / count;
  return t;
}

Frame Frame::standard(int N, int n) {
  Frame f;
  f.N_ = N;
  f.n_ = n;
  f.standard_ = true;
  f.target_.assign(std::size_t(N), std::vector<double>(std::size_t(N), 0.0));
  for (int a = 0; a < N; ++a) f.target_[std::size_t(a)][std::size_t(a)] = 1.0;
  f.domain_.assign(std::size_t(N),
                   std::vector<std::vector<double>>(
                       std::size_t(n), std::vector<double>(std::size_t(n), 0.0)));
  for (int a = 0; a < N; ++a)
    for (int i = 0; i < n; ++i) f.domain_[std::size_t(a)][std::size_t(i)][std::size_t(i)] = 1.0;
  return f;
}

namespace {
void checkOrthonormal(const std::vector<std::vector<double>>& basis,
                      double tol, const char* what) {
  std::size_t d = basis.size();
  for (std::size_t i = 0; i < d; ++i) {
    if (basis[i].size() != d)
      throw std::invalid_argument(std::string(what) + ": basis vector dimension mismatch");
    for (std::size_t j = i; j < d; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += basis[i][k] * basis[j][k];
      double want = (i == j) ? 1.0 : 0.0;
      if (std::abs(dot - want) > tol)
        throw std::invalid_argument(std::string(what) + ": basis not orthonormal");
    }
  }
}
}  // namespace

Frame Frame::fromBases(std::vector<std::vector<double>> target,
                       std::vector<std::vector<std::vector<double>>> domain,
                       double tol) {
  Frame f;
  f.N_ = int(target.size());
  if (domain.size() != target.size())
    throw std::invalid_argument("Frame: need one domain basis per target vector");
  if (domain.empty() || domain[0].empty())
    throw std::invalid_argument("Frame: empty bases");
  f.n_ = int(domain[0].size());
  checkOrthonormal(target, tol, "Frame target basis");
  for (const auto& b : domain) checkOrthonormal(b, tol, "Frame domain basis");
  f.target_ = std::move(target);
  f.domain_ = std::move(domain);
  f.standard_ = true;
  for (int a = 0; a < f.N_ && f.standard_; ++a) {
    for (int k = 0; k < f.N_; ++k)
      if (std::abs(f.target_[std::size_t(a)][std::size_t(k)] - (a == k ? 1.0 : 0.0)) > tol)
        f.standard_ = false;
    for (int i = 0; i < f.n_ && f.standard_; ++i)
      for (int k = 0; k < f.n_; ++k)
        if (std::abs(f.domain_[std::size_t(a)][std::size_t(i)][std::size_t(k)] -
                     (i == k ? 1.0 : 0.0)) > tol)
          f.standard_ = false;
  }
  return f;
}

SymTensor Frame::inducedElement(int alpha, std::span<const int> idx) const {
  int q = int(idx.size());
  TensorShape s{N_, n_, q};
  SymTensor out = SymTensor::zeros(s);
  if (q == 0) {
    for (int b = 0; b < N_; ++b) {
      out.mutableData()[std::size_t(b)] = target_[std::size_t(alpha)][std::size_t(b)];
    }
    return out;
  }
  std::vector<std::vector<double>> vecs;
  vecs.reserve(static_cast<std::size_t>(q));
  for (int k = 0; k < q; ++k)
    vecs.push_back(domain_[std::size_t(alpha)][std::size_t(idx[std::size_t(k)])]);
  SymTensor sym = symPower(vecs);  // shape (1, n, q)
  for (int b = 0; b < N_; ++b) {
    double w = target_[std::size_t(alpha)][std::size_t(b)];
    detail::forEachTuple(n_, q, [&](std::span<const int> t) {
      out.at(b, t) = w * sym.at(0, t);
    });
  }
  return out;
}

std::vector<double> frameCoordinates(const SymTensor& X, const Frame& f) {
  const TensorShape& s = X.shape();
  if (s.N != f.N() || (s.q > 0 && s.n != f.n()))
    throw std::invalid_argument("frameCoordinates: incompatible frame " +
                                s.describe());
  if (f.isStandard())
    return std::vector<double>(X.data().begin(), X.data().end());
  std::vector<double> coords(s.size(), 0.0);
  // c_{alpha i1..iq} = sum_beta E^alpha_beta * X_beta : (x)_k E^{(alpha)ik}.
  // Uses symmetry of X: contraction with the plain tensor product equals
  // contraction with the symmetrised one.
  std::size_t out = 0;
  for (int alpha = 0; alpha < s.N; ++alpha) {
    detail::forEachTuple(s.n, s.q, [&](std::span<const int> iTuple) {
      double c = 0.0;
      for (int beta = 0; beta < s.N; ++beta) {
        double wa = f.targetVec(alpha)[std::size_t(beta)];
        if (wa == 0.0) continue;
        double inner = 0.0;
        detail::forEachTuple(s.n, s.q, [&](std::span<const int> jTuple) {
          double prod = 1.0;
          for (int k = 0; k < s.q; ++k)
            prod *= f.domainVec(alpha, iTuple[std::size_t(k)])[std::size_t(jTuple[std::size_t(k)])];
          if (prod != 0.0) inner += prod * X.at(beta, jTuple);
        });
        c += wa * inner;
      }
      coords[out++] = c;
    });
  }
  return coords;
}

SymTensor tensorFromFrameCoordinates(std::span<const double> coords,
                                     const Frame& f, const TensorShape& shape) {
  if (coords.size() != shape.size())
    throw std::invalid_argument("tensorFromFrameCoordinates: size mismatch");
  if (f.isStandard()) {
    SymTensor t = SymTensor::fromDataUnchecked(
        shape, std::vector<double>(coords.begin(), coords.end()));
    t.symmetrize();
    return t;
  }
  SymTensor out = SymTensor::zeros(shape);
  std::size_t in = 0;
  for (int alpha = 0; alpha < shape.N; ++alpha) {
    detail::forEachTuple(shape.n, shape.q, [&](std::span<const int> iTuple) {
      double c = coords[in++];
      if (c == 0.0) return;
      for (int beta = 0; beta < shape.N; ++beta) {
        double wa = f.targetVec(alpha)[std::size_t(beta)];
        if (wa == 0.0) continue;
        detail::forEachTuple(shape.n, shape.q, [&](std::span<const int> jTuple) {
          double prod = 1.0;
          for (int k = 0; k < shape.q; ++k)
            prod *= f.domainVec(alpha, iTuple[std::size_t(k)])[std::size_t(jTuple[std::size_t(k)])];
          if (prod != 0.0) out.at(beta, jTuple) += c * wa * prod;
        });
      }
    });
  }
  out.symmetrize();
  return out;
}

double chordalDistanceFlat(std::span<const double> x,
                           std::span<const double> y) {
  if (x.size() != y.size())
    throw std::invalid_argument("chordalDistance: dimension mismatch");
  double d2 = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    double dk = x[k] - y[k];
    d2 += dk * dk;
    nx += x[k] * x[k];
    ny += y[k] * y[k];
  }
  return 2.0 * std::sqrt(d2) / (std::sqrt(1.0 + nx) * std::sqrt(1.0 + ny));
}

double chordalToInfinityFlat(std::span<const double> x) {
  double nx = 0.0;
  for (double v : x) nx += v * v;
  return 2.0 / std::sqrt(1.0 + nx);
}

double chordalDistance(const CompactifiedValue& x, const CompactifiedValue& y) {
  if (x.finite && y.finite) {
    if (!(x.value.shape() == y.value.shape()))
      throw std::invalid_argument("chordalDistance: shape mismatch");
    return chordalDistanceFlat(x.value.data(), y.value.data());
  }
  if (x.finite) return chordalToInfinityFlat(x.value.data());
  if (y.finite) return chordalToInfinityFlat(y.value.data());
  return 0.0;
}

}  // namespace djet
