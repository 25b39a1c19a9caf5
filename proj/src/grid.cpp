#include "djet/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace djet {

GridDomain GridDomain::box(std::vector<double> lo, std::vector<double> hi,
                           std::vector<std::int64_t> cells) {
  if (lo.empty() || lo.size() != hi.size() || lo.size() != cells.size())
    throw std::invalid_argument("GridDomain: inconsistent box description");
  GridDomain d;
  d.n_ = int(lo.size());
  double g = (hi[0] - lo[0]) / double(cells[0]);
  for (std::size_t a = 0; a < lo.size(); ++a) {
    if (cells[a] <= 0 || hi[a] <= lo[a])
      throw std::invalid_argument("GridDomain: empty box");
    double ga = (hi[a] - lo[a]) / double(cells[a]);
    if (std::abs(ga - g) > 1e-12 * std::max(1.0, std::abs(g)))
      throw std::invalid_argument("GridDomain: cell size must be uniform across axes");
  }
  d.g_ = g;
  d.lo_ = std::move(lo);
  d.ext_ = std::move(cells);
  d.boxCells_ = 1;
  for (auto e : d.ext_) d.boxCells_ *= std::size_t(e);
  d.domainCells_ = d.boxCells_;
  return d;
}

GridDomain GridDomain::box1(double lo, double hi, std::int64_t cells) {
  return box({lo}, {hi}, {cells});
}

double GridDomain::measure() const {
  double m = double(domainCells_);
  for (int a = 0; a < n_; ++a) m *= g_;
  return m;
}

void GridDomain::restrictTo(const std::vector<std::uint8_t>& mask) {
  if (mask.size() != boxCells_)
    throw std::invalid_argument("GridDomain: mask size mismatch");
  mask_ = mask;
  domainCells_ = 0;
  for (auto b : mask_)
    if (b) ++domainCells_;
  if (domainCells_ == 0)
    throw std::invalid_argument("GridDomain: domain must have positive measure");
}

std::size_t GridDomain::flatten(std::span<const std::int64_t> multi) const {
  std::size_t f = 0;
  for (int a = 0; a < n_; ++a) f = f * std::size_t(ext_[std::size_t(a)]) + std::size_t(multi[std::size_t(a)]);
  return f;
}

std::vector<std::int64_t> GridDomain::unflatten(std::size_t flat) const {
  std::vector<std::int64_t> m(static_cast<std::size_t>(n_));
  for (int a = n_ - 1; a >= 0; --a) {
    m[std::size_t(a)] = std::int64_t(flat % std::size_t(ext_[std::size_t(a)]));
    flat /= std::size_t(ext_[std::size_t(a)]);
  }
  return m;
}

std::vector<double> GridDomain::cellCenter(std::size_t flat) const {
  auto m = unflatten(flat);
  std::vector<double> c(static_cast<std::size_t>(n_));
  for (int a = 0; a < n_; ++a)
    c[std::size_t(a)] = lo_[std::size_t(a)] + (double(m[std::size_t(a)]) + 0.5) * g_;
  return c;
}

std::optional<std::size_t> GridDomain::cellAt(std::span<const double> x) const {
  std::vector<std::int64_t> m(static_cast<std::size_t>(n_));
  for (int a = 0; a < n_; ++a) {
    double t = (x[std::size_t(a)] - lo_[std::size_t(a)]) / g_;
    auto i = std::int64_t(std::floor(t));
    if (i < 0 || i >= ext_[std::size_t(a)]) return std::nullopt;
    m[std::size_t(a)] = i;
  }
  std::size_t f = flatten(m);
  if (!inDomain(f)) return std::nullopt;
  return f;
}

std::optional<std::size_t> GridDomain::shifted(
    std::size_t flat, std::span<const std::int64_t> off) const {
  auto m = unflatten(flat);
  for (int a = 0; a < n_; ++a) {
    m[std::size_t(a)] += off[std::size_t(a)];
    if (m[std::size_t(a)] < 0 || m[std::size_t(a)] >= ext_[std::size_t(a)]) return std::nullopt;
  }
  std::size_t f = flatten(m);
  if (!inDomain(f)) return std::nullopt;
  return f;
}

bool GridDomain::operator==(const GridDomain& other) const {
  return n_ == other.n_ && std::abs(g_ - other.g_) < 1e-15 &&
         lo_ == other.lo_ && ext_ == other.ext_ && mask_ == other.mask_;
}

CellSet CellSet::full(const GridDomain& d) {
  CellSet s(d.boxCellCount());
  for (std::size_t f = 0; f < d.boxCellCount(); ++f)
    if (d.inDomain(f)) s.insert(f);
  return s;
}

std::size_t CellSet::count() const {
  std::size_t c = 0;
  for (auto b : bits_)
    if (b) ++c;
  return c;
}

CellSet& CellSet::uniteWith(const CellSet& o) {
  if (bits_.size() != o.bits_.size())
    throw std::invalid_argument("CellSet: size mismatch");
  for (std::size_t k = 0; k < bits_.size(); ++k) bits_[k] |= o.bits_[k];
  return *this;
}
CellSet& CellSet::intersectWith(const CellSet& o) {
  if (bits_.size() != o.bits_.size())
    throw std::invalid_argument("CellSet: size mismatch");
  for (std::size_t k = 0; k < bits_.size(); ++k) bits_[k] &= o.bits_[k];
  return *this;
}
CellSet& CellSet::subtract(const CellSet& o) {
  if (bits_.size() != o.bits_.size())
    throw std::invalid_argument("CellSet: size mismatch");
  for (std::size_t k = 0; k < bits_.size(); ++k)
    bits_[k] = std::uint8_t(bits_[k] & ~o.bits_[k]);
  return *this;
}

CellSet CellSet::symmetricDifference(const CellSet& o) const {
  if (bits_.size() != o.bits_.size())
    throw std::invalid_argument("CellSet: size mismatch");
  CellSet r(bits_.size());
  for (std::size_t k = 0; k < bits_.size(); ++k)
    r.bits_[k] = std::uint8_t(bits_[k] ^ o.bits_[k]);
  return r;
}

std::vector<std::size_t> CellSet::indices() const {
  std::vector<std::size_t> v;
  for (std::size_t k = 0; k < bits_.size(); ++k)
    if (bits_[k]) v.push_back(k);
  return v;
}

double measureOf(const GridDomain& d, const CellSet& s) {
  double m = double(s.count());
  for (int a = 0; a < d.dim(); ++a) m *= d.cellSize();
  return m;
}

Field Field::zeros(const GridDomain& d, const TensorShape& s) {
  Field u;
  u.dom_ = d;
  u.shape_ = s;
  u.data_.assign(d.boxCellCount() * s.size(), 0.0);
  return u;
}

Field Field::fromData(const GridDomain& d, const TensorShape& s,
                      std::vector<double> data) {
  if (data.size() != d.boxCellCount() * s.size())
    throw std::invalid_argument("Field: data size mismatch");
  for (double v : data)
    if (!std::isfinite(v))
      throw std::invalid_argument("Field: non-finite value rejected");
  Field u;
  u.dom_ = d;
  u.shape_ = s;
  u.data_ = std::move(data);
  return u;
}

Field Field::fromFunction(
    const GridDomain& d, const TensorShape& s,
    const std::function<void(std::span<const double>, std::span<double>)>& fn) {
  Field u = zeros(d, s);
  for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
    if (!d.inDomain(f)) continue;
    auto c = d.cellCenter(f);
    fn(c, u.at(f));
  }
  for (double v : u.data_)
    if (!std::isfinite(v))
      throw std::invalid_argument("Field: non-finite value rejected");
  return u;
}

SymTensor Field::tensorAt(std::size_t flat) const {
  auto s = at(flat);
  return SymTensor::fromDataUnchecked(shape_,
                                      std::vector<double>(s.begin(), s.end()));
}

std::vector<double> Field::valueAt(std::span<const double> x) const {
  auto f = dom_.cellAt(x);
  if (!f) return std::vector<double>(width(), 0.0);
  auto s = at(*f);
  return std::vector<double>(s.begin(), s.end());
}

std::vector<double> Field::valueAtInterpolated(std::span<const double> x) const {
  int n = dom_.dim();
  double g = dom_.cellSize();
  // Base cell: the one whose center is the lower interpolation node.
  std::vector<std::int64_t> base(static_cast<std::size_t>(n));
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) {
    double t = (x[std::size_t(a)] - dom_.lower()[std::size_t(a)]) / g - 0.5;
    double fl = std::floor(t);
    base[std::size_t(a)] = std::int64_t(fl);
    w[std::size_t(a)] = t - fl;
  }
  std::vector<double> out(width(), 0.0);
  int corners = 1 << n;
  std::vector<std::int64_t> m(static_cast<std::size_t>(n));
  for (int c = 0; c < corners; ++c) {
    double weight = 1.0;
    bool inside = true;
    for (int a = 0; a < n; ++a) {
      int bit = (c >> a) & 1;
      weight *= bit ? w[std::size_t(a)] : (1.0 - w[std::size_t(a)]);
      m[std::size_t(a)] = base[std::size_t(a)] + bit;
      if (m[std::size_t(a)] < 0 || m[std::size_t(a)] >= dom_.extents()[std::size_t(a)])
        inside = false;
    }
    if (weight == 0.0 || !inside) continue;  // zero extension
    std::size_t f = dom_.flatten(m);
    if (!dom_.inDomain(f)) continue;
    auto s = at(f);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += weight * s[k];
  }
  return out;
}

Field Field::normField() const {
  Field r = zeros(dom_, TensorShape{1, dom_.dim(), 0});
  std::size_t W = width();
  for (std::size_t f = 0; f < dom_.boxCellCount(); ++f) {
    double s = 0.0;
    for (std::size_t k = 0; k < W; ++k) s += data_[f * W + k] * data_[f * W + k];
    r.data_[f] = std::sqrt(s);
  }
  return r;
}

Field& Field::operator+=(const Field& o) {
  if (!(dom_ == o.dom_) || !(shape_ == o.shape_))
    throw std::invalid_argument("Field: mismatch in +=");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
  return *this;
}
Field& Field::operator-=(const Field& o) {
  if (!(dom_ == o.dom_) || !(shape_ == o.shape_))
    throw std::invalid_argument("Field: mismatch in -=");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
  return *this;
}
Field& Field::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

double lrNorm(const Field& u, double r) {
  if (r < 1.0) throw std::invalid_argument("lrNorm: r must be >= 1");
  const GridDomain& d = u.domain();
  double cellVol = 1.0;
  for (int a = 0; a < d.dim(); ++a) cellVol *= d.cellSize();
  std::size_t W = u.width();
  if (std::isinf(r)) {
    double m = 0.0;
    for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
      if (!d.inDomain(f)) continue;
      double s = 0.0;
      auto v = u.at(f);
      for (std::size_t k = 0; k < W; ++k) s += v[k] * v[k];
      m = std::max(m, s);
    }
    return std::sqrt(m);
  }
  double acc = 0.0;
  for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
    if (!d.inDomain(f)) continue;
    double s = 0.0;
    auto v = u.at(f);
    for (std::size_t k = 0; k < W; ++k) s += v[k] * v[k];
    acc += std::pow(std::sqrt(s), r) * cellVol;
  }
  return std::pow(acc, 1.0 / r);
}

CellSet exceedanceSet(const Field& u, double t, bool inclusive) {
  if (u.width() != 1)
    throw std::invalid_argument("exceedanceSet: scalar field required");
  const GridDomain& d = u.domain();
  CellSet s = CellSet::empty(d);
  for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
    if (!d.inDomain(f)) continue;
    double v = u.scalarAt(f);
    if (inclusive ? (v >= t) : (v > t)) s.insert(f);
  }
  return s;
}

AeReport aeConvergenceCheck(std::span<const Field> seq, const Field& limit,
                            double tol, double massBudget) {
  if (seq.empty())
    throw std::invalid_argument("aeConvergenceCheck: empty sequence");
  const GridDomain& d = limit.domain();
  std::size_t tail = std::min<std::size_t>(3, seq.size());
  AeReport rep;
  CellSet lastOffending;
  for (std::size_t k = seq.size() - tail; k < seq.size(); ++k) {
    Field diff = seq[k];
    diff -= limit;
    CellSet off = exceedanceSet(diff.normField(), tol);
    double m = measureOf(d, off);
    rep.trend.push_back(m);
    if (k + 1 == seq.size()) lastOffending = off;
  }
  rep.measure = rep.trend.back();
  bool monotone = true;
  for (std::size_t k = 1; k < rep.trend.size(); ++k)
    if (rep.trend[k] > rep.trend[k - 1]) monotone = false;
  rep.ok = (rep.measure <= massBudget) && monotone;
  rep.offendingCells = lastOffending.indices();
  return rep;
}

std::string AeReport::toJson() const {
  nlohmann::json j;
  j["measure"] = measure;
  j["offending_cells"] = offendingCells;
  j["trend"] = trend;
  return j.dump();
}

void writeFieldCsv(const std::string& path, const Field& u) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("writeFieldCsv: cannot open " + path);
  const GridDomain& d = u.domain();
  out.precision(17);
  out << "# " << d.dim() << " " << u.width() << " " << d.cellSize();
  for (int a = 0; a < d.dim(); ++a) out << " " << d.lower()[std::size_t(a)];
  for (int a = 0; a < d.dim(); ++a) out << " " << d.extents()[std::size_t(a)];
  out << "\n";
  for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
    if (!d.inDomain(f)) continue;
    auto m = d.unflatten(f);
    for (int a = 0; a < d.dim(); ++a) out << m[std::size_t(a)] << ",";
    auto v = u.at(f);
    for (std::size_t k = 0; k < v.size(); ++k)
      out << v[k] << (k + 1 < v.size() ? "," : "");
    out << "\n";
  }
}

Field readFieldCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("readFieldCsv: cannot open " + path);
  std::string header;
  std::getline(in, header);
  if (header.size() < 2 || header[0] != '#')
    throw std::runtime_error("readFieldCsv: missing header");
  std::istringstream hs(header.substr(1));
  int n = 0;
  std::size_t W = 0;
  double g = 0.0;
  hs >> n >> W >> g;
  std::vector<double> lo(static_cast<std::size_t>(n));
  std::vector<std::int64_t> ext(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) hs >> lo[std::size_t(a)];
  for (int a = 0; a < n; ++a) hs >> ext[std::size_t(a)];
  std::vector<double> hi(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) hi[std::size_t(a)] = lo[std::size_t(a)] + g * double(ext[std::size_t(a)]);
  GridDomain d = GridDomain::box(lo, hi, ext);
  // Value width W is stored as the target dimension; tensor structure beyond
  // that is not part of the CSV contract.
  TensorShape shape{int(W), n, 0};
  std::vector<double> data(d.boxCellCount() * W, 0.0);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tok;
    std::vector<std::int64_t> m(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
      if (!std::getline(ls, tok, ',')) throw std::runtime_error("readFieldCsv: short row");
      m[std::size_t(a)] = std::stoll(tok);
    }
    std::size_t f = d.flatten(m);
    for (std::size_t k = 0; k < W; ++k) {
      if (!std::getline(ls, tok, ',')) throw std::runtime_error("readFieldCsv: short row");
      data[f * W + k] = std::stod(tok);
    }
  }
  return Field::fromData(d, shape, std::move(data));
}

}  // namespace djet
