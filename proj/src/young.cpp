#include "djet/young.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace djet {

std::int64_t BinAxes::binOf(std::span<const double> value) const {
  if (value.size() != shape.size())
    throw std::invalid_argument("BinAxes::binOf: value size mismatch");
  double width = 2.0 * Rinf / double(binsPerAxis);
  std::int64_t flat = 0;
  for (double v : value) {
    if (std::abs(v) > Rinf) return infIndex();
    auto i = std::int64_t(std::llround(v / width)) + binsPerAxis / 2;
    i = std::clamp<std::int64_t>(i, 0, centersPerAxis() - 1);
    flat = flat * centersPerAxis() + i;
  }
  return flat;
}

std::vector<double> BinAxes::centerOf(std::int64_t bin) const {
  if (bin < 0 || bin >= finiteCount())
    throw std::invalid_argument("BinAxes::centerOf: finite bin required");
  double width = 2.0 * Rinf / double(binsPerAxis);
  std::size_t dim = shape.size();
  std::vector<double> c(dim);
  for (std::size_t k = dim; k-- > 0;) {
    std::int64_t i = bin % centersPerAxis();
    bin /= centersPerAxis();
    c[k] = double(i - binsPerAxis / 2) * width;
  }
  return c;
}

CompactifiedValue BinAxes::representative(std::int64_t bin) const {
  if (bin == infIndex()) return CompactifiedValue::infinity(shape);
  return CompactifiedValue::of(
      SymTensor::fromDataUnchecked(shape, centerOf(bin)));
}

std::string BinScheme::toJson() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : comps) {
    j.push_back({{"N", c.shape.N},
                 {"n", c.shape.n},
                 {"q", c.shape.q},
                 {"Rinf", c.Rinf},
                 {"bins_per_axis", c.binsPerAxis}});
  }
  return j.dump();
}

bool BinScheme::compatibleWith(const BinScheme& other) const {
  if (comps.size() != other.comps.size()) return false;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (!(comps[k].shape == other.comps[k].shape)) return false;
    if (comps[k].binsPerAxis != other.comps[k].binsPerAxis) return false;
    if (std::abs(comps[k].Rinf - other.comps[k].Rinf) >
        1e-12 * std::max(1.0, comps[k].Rinf))
      return false;
  }
  return true;
}

BinScheme schemeFromJet(const JetField& coarsest, int binsScalar, int binsMulti,
                        double quantile) {
  BinScheme s;
  for (const auto& X : coarsest.orders) {
    BinAxes axes;
    axes.shape = X.shape();
    axes.binsPerAxis = X.shape().size() == 1 ? binsScalar : binsMulti;
    std::vector<double> mags;
    mags.reserve(coarsest.dom.cellCount());
    for (std::size_t f = 0; f < coarsest.dom.boxCellCount(); ++f) {
      if (!coarsest.dom.inDomain(f)) continue;
      double m = 0.0;
      for (double v : X.at(f)) m = std::max(m, std::abs(v));
      mags.push_back(m);
    }
    std::sort(mags.begin(), mags.end());
    double qv = mags.empty() ? 0.0
                             : mags[std::min(mags.size() - 1,
                                             std::size_t(quantile * double(mags.size())))];
    axes.Rinf = qv > 0.0 ? 2.0 * qv : 1.0;
    s.comps.push_back(axes);
  }
  return s;
}

bool TestFunction::containsCell(const GridDomain& d, std::size_t flat) const {
  auto m = d.unflatten(flat);
  for (int a = 0; a < d.dim(); ++a) {
    if (m[std::size_t(a)] < blockLo[std::size_t(a)] ||
        m[std::size_t(a)] >= blockHi[std::size_t(a)])
      return false;
  }
  return true;
}

double TestFunction::valueFactor(const BinScheme& s, int comp,
                                 const CompactifiedValue& v) const {
  const auto& hat = hats[std::size_t(comp)];
  if (!hat) return 1.0;
  const BinAxes& axes = s.comps[std::size_t(comp)];
  CompactifiedValue center = axes.representative(*hat);
  double d = chordalDistance(center, v);
  // Radius: chordal gap to the nearest neighbouring center along the last
  // coordinate (or to infinity for the inf bump).
  double radius;
  if (*hat == axes.infIndex()) {
    std::vector<double> corner(axes.shape.size(), axes.Rinf);
    radius = chordalToInfinityFlat(corner);
  } else {
    auto c = axes.centerOf(*hat);
    std::vector<double> c2 = c;
    double width = 2.0 * axes.Rinf / double(axes.binsPerAxis);
    c2.back() += (c2.back() + width <= axes.Rinf) ? width : -width;
    radius = chordalDistanceFlat(c, c2);
  }
  if (radius <= 0.0) return d == 0.0 ? 1.0 : 0.0;
  return std::max(0.0, 1.0 - d / radius);
}

DiscreteYoungMeasure DiscreteYoungMeasure::diracEmbed(const JetField& jet,
                                                      const BinScheme& scheme) {
  std::vector<Field> comps = jet.orders;
  return diracEmbedFields(comps, jet.dom, scheme, false);
}

DiscreteYoungMeasure DiscreteYoungMeasure::diracEmbedFields(
    std::span<const Field> comps, const GridDomain& dom,
    const BinScheme& scheme, bool joint) {
  if (comps.size() != scheme.comps.size())
    throw std::invalid_argument("diracEmbed: component count mismatch");
  DiscreteYoungMeasure m;
  m.dom_ = dom;
  m.scheme_ = scheme;
  m.marginals_.assign(comps.size(), {});
  std::vector<std::int64_t> bins(comps.size());
  for (std::size_t c = 0; c < comps.size(); ++c)
    m.marginals_[c].assign(dom.boxCellCount(), {});
  if (joint) m.joint_.assign(dom.boxCellCount(), {});
  for (std::size_t f = 0; f < dom.boxCellCount(); ++f) {
    if (!dom.inDomain(f)) continue;
    for (std::size_t c = 0; c < comps.size(); ++c) {
      bins[c] = scheme.comps[c].binOf(comps[c].at(f));
      m.marginals_[c][f] = {Entry{bins[c], 1.0}};
    }
    if (joint) {
      std::int64_t key = 0;
      for (std::size_t c = 0; c < comps.size(); ++c)
        key = key * scheme.comps[c].totalCount() + bins[c];
      m.joint_[f] = {Entry{key, 1.0}};
    }
  }
  m.validate();
  return m;
}

DiscreteYoungMeasure DiscreteYoungMeasure::fromHistograms(
    const GridDomain& dom, const BinScheme& scheme,
    std::vector<std::vector<std::vector<Entry>>> marginals) {
  DiscreteYoungMeasure m;
  m.dom_ = dom;
  m.scheme_ = scheme;
  m.marginals_ = std::move(marginals);
  if (m.marginals_.size() != scheme.comps.size())
    throw std::invalid_argument("fromHistograms: component count mismatch");
  for (auto& comp : m.marginals_) {
    if (comp.size() != dom.boxCellCount())
      throw std::invalid_argument("fromHistograms: cell count mismatch");
    for (auto& h : comp)
      std::sort(h.begin(), h.end(),
                [](const Entry& a, const Entry& b) { return a.bin < b.bin; });
  }
  m.validate();
  return m;
}

double DiscreteYoungMeasure::mass(int comp, std::size_t cell,
                                  std::int64_t bin) const {
  const auto& h = marginals_[std::size_t(comp)][cell];
  for (const auto& e : h)
    if (e.bin == bin) return e.mass;
  return 0.0;
}

std::span<const DiscreteYoungMeasure::Entry> DiscreteYoungMeasure::histogram(
    int comp, std::size_t cell) const {
  return marginals_[std::size_t(comp)][cell];
}

void DiscreteYoungMeasure::validate(double tol) const {
  for (std::size_t c = 0; c < marginals_.size(); ++c) {
    for (std::size_t f = 0; f < dom_.boxCellCount(); ++f) {
      if (!dom_.inDomain(f)) continue;
      double sum = 0.0;
      for (const auto& e : marginals_[c][f]) {
        if (e.mass < 0.0)
          throw std::logic_error("DiscreteYoungMeasure: negative mass");
        if (e.bin < 0 || e.bin >= scheme_.comps[c].totalCount())
          throw std::logic_error("DiscreteYoungMeasure: bin out of range");
        sum += e.mass;
      }
      if (std::abs(sum - 1.0) > tol)
        throw std::logic_error(
            "DiscreteYoungMeasure: histogram not normalized (sum = " +
            std::to_string(sum) + ")");
    }
  }
  if (!joint_.empty()) {
    for (std::size_t f = 0; f < dom_.boxCellCount(); ++f) {
      if (!dom_.inDomain(f)) continue;
      double sum = 0.0;
      for (const auto& e : joint_[f]) sum += e.mass;
      if (std::abs(sum - 1.0) > tol)
        throw std::logic_error("DiscreteYoungMeasure: joint histogram not normalized");
    }
  }
}

namespace {
void addMass(std::vector<DiscreteYoungMeasure::Entry>& h, std::int64_t bin,
             double mass) {
  for (auto& e : h)
    if (e.bin == bin) {
      e.mass += mass;
      return;
    }
  h.push_back({bin, mass});
}
}  // namespace

DiscreteYoungMeasure DiscreteYoungMeasure::mix(
    const DiscreteYoungMeasure& other, double lambdaThis) const {
  if (!scheme_.compatibleWith(other.scheme_) || !(dom_ == other.dom_))
    throw std::invalid_argument("mix: incompatible measures");
  DiscreteYoungMeasure m;
  m.dom_ = dom_;
  m.scheme_ = scheme_;
  m.marginals_.assign(marginals_.size(), {});
  for (std::size_t c = 0; c < marginals_.size(); ++c) {
    m.marginals_[c].assign(dom_.boxCellCount(), {});
    for (std::size_t f = 0; f < dom_.boxCellCount(); ++f) {
      if (!dom_.inDomain(f)) continue;
      auto& h = m.marginals_[c][f];
      for (const auto& e : marginals_[c][f]) addMass(h, e.bin, lambdaThis * e.mass);
      for (const auto& e : other.marginals_[c][f])
        addMass(h, e.bin, (1.0 - lambdaThis) * e.mass);
      std::sort(h.begin(), h.end(),
                [](const Entry& a, const Entry& b) { return a.bin < b.bin; });
    }
  }
  m.validate();
  return m;
}

DiscreteYoungMeasure DiscreteYoungMeasure::spatialWindowAverage(
    int radius) const {
  if (radius <= 0) return *this;
  DiscreteYoungMeasure m;
  m.dom_ = dom_;
  m.scheme_ = scheme_;
  m.marginals_.assign(marginals_.size(), {});
  std::vector<std::int64_t> off(std::size_t(dom_.dim()));
  for (std::size_t c = 0; c < marginals_.size(); ++c) {
    m.marginals_[c].assign(dom_.boxCellCount(), {});
    for (std::size_t f = 0; f < dom_.boxCellCount(); ++f) {
      if (!dom_.inDomain(f)) continue;
      auto& h = m.marginals_[c][f];
      std::size_t count = 0;
      // Window along the first axis only keeps the averaging cheap and
      // matches the 1D-centric diagnostics it supports.
      for (int dx = -radius; dx <= radius; ++dx) {
        std::fill(off.begin(), off.end(), 0);
        off[0] = dx;
        auto g = dom_.shifted(f, off);
        if (!g) continue;
        ++count;
        for (const auto& e : marginals_[c][*g]) addMass(h, e.bin, e.mass);
      }
      for (auto& e : h) e.mass /= double(count);
      std::sort(h.begin(), h.end(),
                [](const Entry& a, const Entry& b) { return a.bin < b.bin; });
    }
  }
  m.validate();
  return m;
}

DiscreteYoungMeasure productMeasure(const DiscreteYoungMeasure& a,
                                    const DiscreteYoungMeasure& b) {
  if (!(a.dom_ == b.dom_))
    throw std::invalid_argument("productMeasure: domain mismatch");
  DiscreteYoungMeasure m;
  m.dom_ = a.dom_;
  m.scheme_.comps = a.scheme_.comps;
  m.scheme_.comps.insert(m.scheme_.comps.end(), b.scheme_.comps.begin(),
                         b.scheme_.comps.end());
  m.marginals_ = a.marginals_;
  m.marginals_.insert(m.marginals_.end(), b.marginals_.begin(),
                      b.marginals_.end());
  m.validate();
  return m;
}

DiscreteYoungMeasure DiscreteYoungMeasure::marginal(int comp) const {
  DiscreteYoungMeasure m;
  m.dom_ = dom_;
  m.scheme_.comps = {scheme_.comps[std::size_t(comp)]};
  m.marginals_ = {marginals_[std::size_t(comp)]};
  m.validate();
  return m;
}

void DiscreteYoungMeasure::writeCsv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("writeCsv: cannot open " + path);
  out.precision(17);
  out << "cell,order,bin_index,mass\n";
  for (std::size_t f = 0; f < dom_.boxCellCount(); ++f) {
    if (!dom_.inDomain(f)) continue;
    for (std::size_t c = 0; c < marginals_.size(); ++c)
      for (const auto& e : marginals_[c][f])
        out << f << "," << (c + 1) << "," << e.bin << "," << e.mass << "\n";
  }
}

double pairMeasure(const DiscreteYoungMeasure& theta, const TestFunction& phi) {
  const GridDomain& d = theta.domain();
  double cellVol = 1.0;
  for (int a = 0; a < d.dim(); ++a) cellVol *= d.cellSize();
  double acc = 0.0;
  int C = theta.componentCount();
  bool anyHat = false;
  for (const auto& h : phi.hats)
    if (h) anyHat = true;
  for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
    if (!d.inDomain(f) || !phi.containsCell(d, f)) continue;
    double prod = 1.0;
    if (anyHat) {
      if (!theta.hasJoint()) {
        for (int c = 0; c < C; ++c) {
          const auto& hat = phi.hats[std::size_t(c)];
          if (!hat) continue;
          prod *= theta.mass(c, f, *hat);
          if (prod == 0.0) break;
        }
      } else {
        // Joint storage: sum the joint masses whose per-component bins match
        // every hat.
        double sum = 0.0;
        for (const auto& e : theta.joint_[f]) {
          std::int64_t key = e.bin;
          bool match = true;
          for (int c = C - 1; c >= 0; --c) {
            std::int64_t tc = theta.scheme().comps[std::size_t(c)].totalCount();
            std::int64_t bc = key % tc;
            key /= tc;
            const auto& hat = phi.hats[std::size_t(c)];
            if (hat && bc != *hat) {
              match = false;
              break;
            }
          }
          if (match) sum += e.mass;
        }
        prod = sum;
      }
    }
    acc += cellVol * prod;
  }
  return acc;
}

std::vector<TestFunction> canonicalTestFamily(const GridDomain& dom,
                                              const BinScheme& scheme,
                                              int kmax) {
  std::vector<TestFunction> fam;
  fam.reserve(static_cast<std::size_t>(kmax));
  int n = dom.dim();
  int C = int(scheme.comps.size());
  for (int level = 0; int(fam.size()) < kmax && level < 20; ++level) {
    std::int64_t parts = std::int64_t(1) << level;
    // Per-axis block boundaries (ceil split).
    std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> ranges(
        static_cast<std::size_t>(n));
    bool degenerate = false;
    for (int a = 0; a < n; ++a) {
      std::int64_t ext = dom.extents()[std::size_t(a)];
      if (parts > ext) degenerate = true;
      for (std::int64_t bblk = 0; bblk < std::min(parts, ext); ++bblk) {
        std::int64_t lo = bblk * ext / parts;
        std::int64_t hi = (bblk + 1) * ext / parts;
        if (hi > lo) ranges[std::size_t(a)].push_back({lo, hi});
      }
    }
    if (degenerate && level > 0) break;
    // Row-major over per-axis ranges.
    std::vector<std::size_t> sel(std::size_t(n), 0);
    while (true) {
      TestFunction base;
      base.blockLo.resize(static_cast<std::size_t>(n));
      base.blockHi.resize(static_cast<std::size_t>(n));
      for (int a = 0; a < n; ++a) {
        base.blockLo[std::size_t(a)] = ranges[std::size_t(a)][sel[std::size_t(a)]].first;
        base.blockHi[std::size_t(a)] = ranges[std::size_t(a)][sel[std::size_t(a)]].second;
      }
      for (int c = 0; c < C && int(fam.size()) < kmax; ++c) {
        const BinAxes& axes = scheme.comps[std::size_t(c)];
        std::int64_t total = axes.totalCount();
        std::int64_t mid = axes.finiteCount() / 2;
        // inf bin first, then center outward
        std::vector<std::int64_t> order;
        order.reserve(static_cast<std::size_t>(total));
        order.push_back(axes.infIndex());
        order.push_back(mid);
        for (std::int64_t dlt = 1; std::int64_t(order.size()) < total; ++dlt) {
          if (mid + dlt < axes.finiteCount()) order.push_back(mid + dlt);
          if (std::int64_t(order.size()) >= total) break;
          if (mid - dlt >= 0) order.push_back(mid - dlt);
          if (dlt > axes.finiteCount()) break;
        }
        for (std::int64_t b : order) {
          if (int(fam.size()) >= kmax) break;
          TestFunction phi = base;
          phi.hats.assign(std::size_t(C), std::nullopt);
          phi.hats[std::size_t(c)] = b;
          fam.push_back(std::move(phi));
        }
      }
      int a = n - 1;
      while (a >= 0 && ++sel[std::size_t(a)] == ranges[std::size_t(a)].size())
        sel[std::size_t(a--)] = 0;
      if (a < 0) break;
      if (int(fam.size()) >= kmax) break;
    }
  }
  return fam;
}

double weakStarDistanceFamily(const DiscreteYoungMeasure& a,
                              const DiscreteYoungMeasure& b,
                              std::span<const TestFunction> fam) {
  if (!a.scheme().compatibleWith(b.scheme()) || !(a.domain() == b.domain()))
    throw std::invalid_argument("weakStarDistance: scheme mismatch");
  double rho = 0.0;
  double w = 1.0;
  for (const auto& phi : fam) {
    w *= 0.5;
    if (w == 0.0) break;
    double d = std::abs(pairMeasure(a, phi) - pairMeasure(b, phi));
    if (d != 0.0) rho += w * d / (1.0 + d);
  }
  return rho;
}

double weakStarDistance(const DiscreteYoungMeasure& a,
                        const DiscreteYoungMeasure& b, int kmax) {
  auto fam = canonicalTestFamily(a.domain(), a.scheme(), kmax);
  return weakStarDistanceFamily(a, b, fam);
}

std::vector<TestFunction> jointTestFamily(const GridDomain& dom,
                                          const BinScheme& scheme, int kmax) {
  // Singles from the canonical family interleaved with pair hats on the
  // first two components, center-out; enough to separate joint measures
  // from fibre products on desk-scale bins.
  auto singles = canonicalTestFamily(dom, scheme, kmax);
  if (scheme.comps.size() < 2) return singles;
  std::vector<TestFunction> fam;
  fam.reserve(singles.size());
  const BinAxes& a0 = scheme.comps[0];
  const BinAxes& a1 = scheme.comps[1];
  auto centerOut = [](const BinAxes& a) {
    std::vector<std::int64_t> order;
    order.push_back(a.infIndex());
    std::int64_t mid = a.finiteCount() / 2;
    order.push_back(mid);
    for (std::int64_t d = 1; std::int64_t(order.size()) < a.totalCount(); ++d) {
      if (mid + d < a.finiteCount()) order.push_back(mid + d);
      if (std::int64_t(order.size()) >= a.totalCount()) break;
      if (mid - d >= 0) order.push_back(mid - d);
      if (d > a.finiteCount()) break;
    }
    return order;
  };
  auto o0 = centerOut(a0), o1 = centerOut(a1);
  std::size_t pairBudget = std::min<std::size_t>(o0.size(), 12);
  std::size_t si = 0, pi = 0, pj = 0;
  while (int(fam.size()) < kmax && (si < singles.size() || pi < pairBudget)) {
    if (si < singles.size()) fam.push_back(singles[si++]);
    if (pi < pairBudget && pj < std::min<std::size_t>(o1.size(), 12)) {
      TestFunction phi;
      phi.blockLo.assign(std::size_t(dom.dim()), 0);
      phi.blockHi.assign(dom.extents().begin(), dom.extents().end());
      phi.hats.assign(scheme.comps.size(), std::nullopt);
      phi.hats[0] = o0[pi];
      phi.hats[1] = o1[pj];
      fam.push_back(std::move(phi));
      if (++pj >= std::min<std::size_t>(o1.size(), 12)) {
        pj = 0;
        ++pi;
      }
    }
  }
  return fam;
}

std::vector<CompactifiedValue> reducedSupport(const DiscreteYoungMeasure& theta,
                                              std::size_t cell, double tau,
                                              int comp) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("reducedSupport: tau must lie in (0,1)");
  std::vector<CompactifiedValue> out;
  const BinAxes& axes = theta.scheme().comps[std::size_t(comp)];
  for (const auto& e : theta.histogram(comp, cell)) {
    if (e.bin == axes.infIndex()) continue;
    if (e.mass >= tau) out.push_back(axes.representative(e.bin));
  }
  return out;
}

std::vector<std::vector<SymTensor>> reducedSupportJet(
    const DiscreteYoungMeasure& theta, std::size_t cell, double tau) {
  int C = theta.componentCount();
  std::vector<std::vector<SymTensor>> per(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    auto vals = reducedSupport(theta, cell, tau, c);
    if (vals.empty()) return {};  // empty product
    for (auto& v : vals) per[std::size_t(c)].push_back(std::move(v.value));
  }
  // Cartesian product.
  std::vector<std::vector<SymTensor>> out;
  std::vector<std::size_t> sel(std::size_t(C), 0);
  while (true) {
    std::vector<SymTensor> tuple;
    tuple.reserve(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) tuple.push_back(per[std::size_t(c)][sel[std::size_t(c)]]);
    out.push_back(std::move(tuple));
    int c = C - 1;
    while (c >= 0 && ++sel[std::size_t(c)] == per[std::size_t(c)].size())
      sel[std::size_t(c--)] = 0;
    if (c < 0) break;
  }
  return out;
}

std::string LemmaCheckReport::toJson() const {
  nlohmann::json j;
  j["ok"] = ok;
  j["precondition_ok"] = preconditionOk;
  j["note"] = note;
  j["trace_u"] = traceU;
  j["trace_v"] = traceV;
  return j.dump();
}

bool traceConverges(std::span<const double> trace, double floor) {
  if (trace.empty()) return false;
  double first = trace.front();
  double slack = 0.1 * first;
  for (std::size_t k = 1; k < trace.size(); ++k)
    if (trace[k] > trace[k - 1] + slack) return false;
  return trace.back() <= std::max(floor, 0.2 * first);
}

LemmaCheckReport checkLemma2(std::span<const JetField> seq,
                             const JetField& limit, const BinScheme& scheme,
                             double aeTol, double massBudget, int kmax) {
  if (seq.empty()) throw std::invalid_argument("checkLemma2: empty sequence");
  LemmaCheckReport rep;
  // Pointwise side on the stacked jets.
  std::vector<Field> diffs;
  diffs.reserve(seq.size());
  for (const auto& jf : seq) {
    Field d = Field::zeros(jf.dom, TensorShape{1, jf.dom.dim(), 0});
    for (std::size_t f = 0; f < jf.dom.boxCellCount(); ++f) {
      double s = 0.0;
      for (std::size_t q = 0; q < jf.orders.size(); ++q) {
        auto a = jf.orders[q].at(f);
        auto b = limit.orders[q].at(f);
        for (std::size_t k = 0; k < a.size(); ++k)
          s += (a[k] - b[k]) * (a[k] - b[k]);
      }
      d.at(f)[0] = std::sqrt(s);
    }
    diffs.push_back(std::move(d));
  }
  Field zero = Field::zeros(limit.dom, TensorShape{1, limit.dom.dim(), 0});
  AeReport ae = aeConvergenceCheck(diffs, zero, aeTol, massBudget);
  auto thetaLim = DiscreteYoungMeasure::diracEmbed(limit, scheme);
  for (const auto& jf : seq) {
    auto th = DiscreteYoungMeasure::diracEmbed(jf, scheme);
    rep.traceU.push_back(weakStarDistance(th, thetaLim, kmax));
  }
  bool weak = traceConverges(rep.traceU);
  rep.ok = (ae.ok == weak);
  rep.note = ae.ok ? (weak ? "a.e. and weak* agree (both converge)"
                           : "a.e. converges but weak* trace does not")
                   : (weak ? "weak* converges but a.e. does not"
                           : "a.e. and weak* agree (neither converges)");
  return rep;
}

LemmaCheckReport checkLemma34(std::span<const JetField> U,
                              std::span<const JetField> V,
                              const DiscreteYoungMeasure& theta, double aeTol,
                              double massBudget, int kmax) {
  if (U.size() != V.size() || U.empty())
    throw std::invalid_argument("checkLemma34: sequences must match");
  // Precondition: |U_m - V_m| -> 0 a.e.
  std::vector<Field> diffs;
  for (std::size_t m = 0; m < U.size(); ++m) {
    Field d = Field::zeros(U[m].dom, TensorShape{1, U[m].dom.dim(), 0});
    for (std::size_t f = 0; f < U[m].dom.boxCellCount(); ++f) {
      double s = 0.0;
      for (std::size_t q = 0; q < U[m].orders.size(); ++q) {
        auto a = U[m].orders[q].at(f);
        auto b = V[m].orders[q].at(f);
        for (std::size_t k = 0; k < a.size(); ++k)
          s += (a[k] - b[k]) * (a[k] - b[k]);
      }
      d.at(f)[0] = std::sqrt(s);
    }
    diffs.push_back(std::move(d));
  }
  Field zero = Field::zeros(U[0].dom, TensorShape{1, U[0].dom.dim(), 0});
  AeReport ae = aeConvergenceCheck(diffs, zero, aeTol, massBudget);
  if (!ae.ok) {
    LemmaCheckReport rep;
    rep.preconditionOk = false;
    rep.note = "precondition violated: |U_m - V_m| does not vanish a.e.";
    throw std::invalid_argument("checkLemma34: " + rep.note);
  }
  LemmaCheckReport rep;
  for (std::size_t m = 0; m < U.size(); ++m) {
    rep.traceU.push_back(
        weakStarDistance(DiscreteYoungMeasure::diracEmbed(U[m], theta.scheme()),
                         theta, kmax));
    rep.traceV.push_back(
        weakStarDistance(DiscreteYoungMeasure::diracEmbed(V[m], theta.scheme()),
                         theta, kmax));
  }
  bool uConv = traceConverges(rep.traceU);
  bool vConv = traceConverges(rep.traceV);
  rep.ok = !uConv || vConv;
  rep.note = uConv ? (vConv ? "U converges and V follows" : "U converges but V does not")
                   : "U trace does not converge; conclusion vacuous";
  return rep;
}

LemmaCheckReport checkLemma35(std::span<const Field> Useq, const Field& Ulimit,
                              const BinScheme& uScheme,
                              std::span<const JetField> Vseq,
                              const DiscreteYoungMeasure& theta, double aeTol,
                              double massBudget, int kmax) {
  if (Useq.size() != Vseq.size() || Useq.empty())
    throw std::invalid_argument("checkLemma35: sequences must match");
  LemmaCheckReport rep;
  std::vector<Field> useqCopy(Useq.begin(), Useq.end());
  AeReport ae = aeConvergenceCheck(useqCopy, Ulimit, aeTol, massBudget);
  rep.preconditionOk = ae.ok;
  if (!ae.ok) {
    rep.note = "U_m does not converge a.e.; conclusion vacuous";
    rep.ok = true;
    return rep;
  }
  // Target: delta_U x theta (fibre product, marginal storage).
  std::vector<Field> uComp = {Ulimit};
  auto deltaU = DiscreteYoungMeasure::diracEmbedFields(
      uComp, Ulimit.domain(), uScheme, false);
  auto target = productMeasure(deltaU, theta);
  // Joint embeddings of the pairs, measured with a family that includes
  // pair hats so correlations are visible.
  BinScheme jointScheme = target.scheme();
  for (std::size_t m = 0; m < Useq.size(); ++m) {
    std::vector<Field> comps;
    comps.push_back(Useq[m]);
    for (const auto& X : Vseq[m].orders) comps.push_back(X);
    auto emb = DiscreteYoungMeasure::diracEmbedFields(
        comps, Ulimit.domain(), jointScheme, true);
    double d = weakStarDistanceFamily(
        emb, target, jointTestFamily(Ulimit.domain(), jointScheme, kmax));
    rep.traceV.push_back(d);
  }
  rep.ok = traceConverges(rep.traceV);
  rep.note = rep.ok ? "joint embeddings converge to the product"
                    : "joint embeddings do not reach the product";
  return rep;
}

}  // namespace djet
