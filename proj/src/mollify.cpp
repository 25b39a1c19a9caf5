#include "djet/mollify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "djet/taylor.hpp"

namespace djet {

StackedField StackedField::of(const Field& u, const JetField& jet) {
  StackedField s;
  s.dom = u.domain();
  s.comps.push_back(u);
  for (const auto& X : jet.orders) s.comps.push_back(X);
  return s;
}

Field StackedField::normField(std::size_t from) const {
  Field r = Field::zeros(dom, TensorShape{1, dom.dim(), 0});
  for (std::size_t f = 0; f < dom.boxCellCount(); ++f) {
    double s = 0.0;
    for (std::size_t c = from; c < comps.size(); ++c) {
      auto v = comps[c].at(f);
      for (double x : v) s += x * x;
    }
    r.at(f)[0] = std::sqrt(s);
  }
  return r;
}

StackedField truncateStack(const StackedField& V, double R, bool jetOnly) {
  if (R <= 0.0) throw std::invalid_argument("truncateStack: R must be positive");
  StackedField out = V;
  std::size_t from = jetOnly ? 1 : 0;
  Field norm = V.normField(from);
  for (std::size_t f = 0; f < V.dom.boxCellCount(); ++f) {
    double n = norm.scalarAt(f);
    if (n < R || n == 0.0) continue;
    double scale = R / n;
    for (std::size_t c = from; c < out.comps.size(); ++c) {
      auto v = out.comps[c].at(f);
      for (double& x : v) x *= scale;
    }
  }
  return out;
}

TruncationParams selectTruncationRadius(const StackedField& V, double eps,
                                        bool jetOnly) {
  if (eps <= 0.0)
    throw std::invalid_argument("selectTruncationRadius: eps must be positive");
  Field norm = V.normField(jetOnly ? 1 : 0);
  TruncationParams tp;
  double R = 1.0;
  for (;;) {
    CellSet ex = exceedanceSet(norm, R, /*inclusive=*/true);
    double m = measureOf(V.dom, ex);
    tp.trace.push_back({R, m});
    if (m <= eps / 2.0) {
      tp.R = R;
      tp.exceeding = std::move(ex);
      return tp;
    }
    R *= 2.0;
  }
}

namespace {

std::vector<double> bumpKernel(std::int64_t radius) {
  std::vector<double> w(std::size_t(2 * radius + 1));
  double sum = 0.0;
  for (std::int64_t j = -radius; j <= radius; ++j) {
    double t = double(j) / double(radius + 1);
    double v = std::exp(-1.0 / (1.0 - t * t));
    w[std::size_t(j + radius)] = v;
    sum += v;
  }
  for (double& v : w) v /= sum;
  return w;
}

Field convolveAxis(const Field& u, int axis, const std::vector<double>& kernel) {
  const GridDomain& d = u.domain();
  std::int64_t radius = std::int64_t(kernel.size() / 2);
  Field out = Field::zeros(d, u.shape());
  std::size_t W = u.width();
  std::vector<std::int64_t> off(std::size_t(d.dim()), 0);
  for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
    auto dst = out.at(f);
    for (std::int64_t j = -radius; j <= radius; ++j) {
      off[std::size_t(axis)] = j;
      auto src = d.shifted(f, off);
      if (!src) continue;  // zero extension
      double w = kernel[std::size_t(j + radius)];
      auto v = u.at(*src);
      for (std::size_t k = 0; k < W; ++k) dst[k] += w * v[k];
    }
  }
  return out;
}

StackedField convolveStack(const StackedField& W, std::int64_t radius) {
  auto kernel = bumpKernel(radius);
  StackedField out = W;
  for (auto& comp : out.comps)
    for (int a = 0; a < W.dom.dim(); ++a) comp = convolveAxis(comp, a, kernel);
  return out;
}

Field stackDeviation(const StackedField& A, const StackedField& B) {
  Field r = Field::zeros(A.dom, TensorShape{1, A.dom.dim(), 0});
  for (std::size_t f = 0; f < A.dom.boxCellCount(); ++f) {
    double s = 0.0;
    for (std::size_t c = 0; c < A.comps.size(); ++c) {
      auto x = A.comps[c].at(f);
      auto y = B.comps[c].at(f);
      for (std::size_t k = 0; k < x.size(); ++k)
        s += (x[k] - y[k]) * (x[k] - y[k]);
    }
    r.at(f)[0] = std::sqrt(s);
  }
  return r;
}

}  // namespace

SmoothApproxResult smoothApprox(const StackedField& W, double eps,
                                std::optional<double> lrOrder,
                                const Field* lrTarget) {
  const GridDomain& d = W.dom;
  std::int64_t maxExt = 0;
  for (int a = 0; a < d.dim(); ++a)
    maxExt = std::max(maxExt, d.extents()[std::size_t(a)]);
  std::int64_t radius = std::max<std::int64_t>(2, maxExt / 256);
  SmoothApproxResult best;
  for (;;) {
    StackedField U = convolveStack(W, radius);
    Field dev = stackDeviation(U, W);
    CellSet B = exceedanceSet(dev, eps);
    double m = measureOf(d, B);
    bool lrOk = true;
    if (lrOrder && lrTarget) {
      Field diff = U.comps[0];
      diff -= *lrTarget;
      lrOk = lrNorm(diff, *lrOrder) <= eps;
    }
    if (m <= eps / 2.0 && lrOk) {
      best.fields = std::move(U);
      best.egoroffSet = std::move(B);
      best.sigma = double(radius) * d.cellSize();
      best.ok = true;
      best.achievedMeasure = m;
      return best;
    }
    if (radius == 1) {
      best.fields = std::move(U);
      best.egoroffSet = std::move(B);
      best.sigma = double(radius) * d.cellSize();
      best.ok = false;
      best.achievedMeasure = m;
      return best;
    }
    radius /= 2;
  }
}

EmpiricalModulus::EmpiricalModulus(const StackedField* U, std::size_t stride)
    : U_(U), stride_(std::max<std::size_t>(1, stride)) {}

void EmpiricalModulus::extendTo(double t) const {
  const GridDomain& d = U_->dom;
  double g = d.cellSize();
  auto radius = std::int64_t(std::floor(t / g + 1e-9));
  std::int64_t maxR = 0;
  for (int a = 0; a < d.dim(); ++a)
    maxR = std::max(maxR, d.extents()[std::size_t(a)] - 1);
  radius = std::min(radius, maxR);
  if (radius <= computedRadius_) return;
  int n = d.dim();
  // Enumerate new integer offsets with sup-norm in (computedRadius_, radius];
  // take the canonical half (first nonzero component positive).
  std::vector<std::pair<double, std::vector<std::int64_t>>> offs;
  std::vector<std::int64_t> o(std::size_t(n), -radius);
  for (;;) {
    std::int64_t sup = 0;
    for (auto v : o) sup = std::max<std::int64_t>(sup, std::llabs(v));
    if (sup > computedRadius_ && sup <= radius) {
      bool canonical = false;
      for (auto v : o) {
        if (v > 0) {
          canonical = true;
          break;
        }
        if (v < 0) break;
      }
      double len = 0.0;
      for (auto v : o) len += double(v) * double(v);
      len = std::sqrt(len) * g;
      if (canonical && len <= t + 1e-12) offs.push_back({len, o});
    }
    int a = n - 1;
    while (a >= 0 && ++o[std::size_t(a)] > radius) o[std::size_t(a--)] = -radius;
    if (a < 0) break;
  }
  std::sort(offs.begin(), offs.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  for (const auto& [len, off] : offs) {
    double localMax = 0.0;
    for (std::size_t f = 0; f < d.boxCellCount(); f += stride_) {
      if (!d.inDomain(f)) continue;
      auto gcell = d.shifted(f, off);
      if (!gcell) continue;
      double s = 0.0;
      for (const auto& comp : U_->comps) {
        auto x = comp.at(f);
        auto y = comp.at(*gcell);
        double e2 = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k)
          e2 += (x[k] - y[k]) * (x[k] - y[k]);
        s += std::sqrt(e2);
      }
      localMax = std::max(localMax, s);
    }
    double running = ladderVal_.empty() ? 0.0 : ladderVal_.back();
    ladderDist_.push_back(len);
    ladderVal_.push_back(std::max(running, localMax));
  }
  computedRadius_ = radius;
}

double EmpiricalModulus::eval(double t) const {
  if (t <= 0.0 || U_ == nullptr) return 0.0;
  extendTo(t);
  // largest ladder distance <= t
  double val = 0.0;
  for (std::size_t k = 0; k < ladderDist_.size(); ++k) {
    if (ladderDist_[k] <= t + 1e-12)
      val = ladderVal_[k];
    else
      break;
  }
  return val;
}

std::vector<std::pair<double, double>> empiricalModulusLadder(
    const StackedField& U, double tmax, std::size_t cellStride) {
  EmpiricalModulus om(&U, cellStride);
  om.eval(tmax);
  std::vector<std::pair<double, double>> out;
  double g = U.dom.cellSize();
  for (double t = g; t <= tmax + 1e-12; t += g) out.push_back({t, om.eval(t)});
  return out;
}

namespace {

double taylorTail(const StackedField& U, int p, double reach) {
  // max_k sum_{q>k} |U^q|_inf reach^{q-k} / (q-k)!
  std::vector<double> supNorm(std::size_t(p) + 1, 0.0);
  for (int q = 0; q <= p; ++q) supNorm[std::size_t(q)] = lrNorm(U.comps[std::size_t(q)],
                                                   std::numeric_limits<double>::infinity());
  double worst = 0.0;
  for (int k = 0; k <= p; ++k) {
    double sum = 0.0;
    for (int q = k + 1; q <= p; ++q) {
      double fact = 1.0;
      for (int j = 2; j <= q - k; ++j) fact *= double(j);
      sum += supNorm[std::size_t(q)] * std::pow(reach, q - k) / fact;
    }
    worst = std::max(worst, sum);
  }
  return worst;
}

struct CubeLayout {
  std::int64_t m = 1;  // cells per cube per axis
  std::vector<std::int64_t> cubes;
  std::size_t cubeCount = 1;
};

CubeLayout layoutFor(const GridDomain& d, std::int64_t m) {
  CubeLayout L;
  L.m = m;
  L.cubeCount = 1;
  for (int a = 0; a < d.dim(); ++a) {
    L.cubes.push_back(d.extents()[std::size_t(a)] / m);
    L.cubeCount *= std::size_t(std::max<std::int64_t>(0, L.cubes.back()));
  }
  return L;
}

/// Visit every cell of the cube; fn(flatCell, inInner). Returns false when
/// the cube contains a cell outside the domain.
template <typename Fn>
bool visitCube(const GridDomain& d, const CubeLayout& L,
               std::span<const std::int64_t> cube, double alpha, Fn&& fn) {
  int n = d.dim();
  double g = d.cellSize();
  double innerHalf = alpha * double(L.m) * g / 2.0 + 1e-12 * g;
  std::vector<std::int64_t> lo(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) lo[std::size_t(a)] = cube[std::size_t(a)] * L.m;
  std::vector<std::int64_t> cell = lo;
  for (;;) {
    std::size_t flat = d.flatten(cell);
    if (!d.inDomain(flat)) return false;
    bool inner = true;
    for (int a = 0; a < n; ++a) {
      double cellCtr = (double(cell[std::size_t(a)]) + 0.5) * g;
      double cubeCtr = (double(lo[std::size_t(a)]) + double(L.m) / 2.0) * g;
      if (std::abs(cellCtr - cubeCtr) > innerHalf) {
        inner = false;
        break;
      }
    }
    fn(flat, inner);
    int a = n - 1;
    while (a >= 0 && ++cell[std::size_t(a)] == lo[std::size_t(a)] + L.m) {
      cell[std::size_t(a)] = lo[std::size_t(a)];
      --a;
    }
    if (a < 0) break;
  }
  return true;
}

}  // namespace

PatchGridParams selectPatchGrid(const EmpiricalModulus& omega,
                                const StackedField& U, double eps,
                                const GridDomain& dom, int p) {
  double g = dom.cellSize();
  double measure = dom.measure();
  double alpha =
      std::pow(std::max(1.0 - eps / (2.0 * measure), 0.5), 1.0 / dom.dim());
  std::int64_t m0 = 0;
  for (int a = 0; a < dom.dim(); ++a)
    m0 = std::max(m0, dom.extents()[std::size_t(a)]);
  std::string lastViolated = "coverage";
  for (std::int64_t m = m0; m >= 1; m = (m == 1 ? 0 : std::max<std::int64_t>(1, m / 2))) {
    double reach = std::sqrt(double(dom.dim())) * double(m - 1) * g / 2.0;
    if (taylorTail(U, p, reach) > eps) {
      lastViolated = "taylor_tail";
      continue;
    }
    CubeLayout L = layoutFor(dom, m);
    if (L.cubeCount == 0) {
      lastViolated = "coverage";
      continue;
    }
    // Build kept cubes and the covered cell set.
    PatchGridParams pg;
    pg.delta = double(m) * g;
    pg.cellsPerCube = m;
    pg.alpha = alpha;
    pg.omegaDelta = CellSet::empty(dom);
    pg.omegaAlphaDelta = CellSet::empty(dom);
    std::vector<std::int64_t> cube(std::size_t(dom.dim()), 0);
    for (;;) {
      CellSet covLocal = CellSet::empty(dom);
      CellSet innLocal = CellSet::empty(dom);
      bool keep = visitCube(dom, L, cube, alpha, [&](std::size_t f, bool inner) {
        covLocal.insert(f);
        if (inner) innLocal.insert(f);
      });
      if (keep) {
        pg.omegaDelta.uniteWith(covLocal);
        pg.omegaAlphaDelta.uniteWith(innLocal);
      }
      int a = dom.dim() - 1;
      while (a >= 0 && ++cube[std::size_t(a)] == L.cubes[std::size_t(a)])
        cube[std::size_t(a--)] = 0;
      if (a < 0) break;
    }
    double uncovered = measure - measureOf(dom, pg.omegaDelta);
    if (uncovered > eps / 2.0) {
      lastViolated = "coverage";
      continue;
    }
    if (omega.eval(reach) > eps) {
      lastViolated = "modulus";
      continue;
    }
    double outsideInner = measure - measureOf(dom, pg.omegaAlphaDelta);
    if (outsideInner > eps) {
      lastViolated = "inner_coverage";
      continue;
    }
    return pg;
  }
  throw GridResolutionError(
      lastViolated,
      "selectPatchGrid: constraint '" + lastViolated +
          "' unsatisfiable at this resolution (cube side reached one cell)");
}

namespace {

constexpr std::size_t kMaxDeriv = 6;

/// Per-axis cutoff ramp value and derivatives up to kMaxDeriv at offset t
/// from the cube center.
std::array<double, kMaxDeriv + 1> rampDerivatives(const CutoffSpec& spec,
                                                  double t) {
  std::array<double, kMaxDeriv + 1> out{};
  double at = std::abs(t);
  if (at <= spec.inner + 1e-14 * std::max(1.0, spec.inner)) {
    out[0] = 1.0;
    return out;
  }
  if (at >= spec.outer) return out;
  double width = spec.outer - spec.inner;
  double sign = t >= 0.0 ? 1.0 : -1.0;
  Taylor<kMaxDeriv> tv = Taylor<kMaxDeriv>::variable(t);
  // s(t) = (sign * t - inner) / width, in (0,1) on the annulus
  Taylor<kMaxDeriv> s = (1.0 / width) * (sign * tv - Taylor<kMaxDeriv>::constant(spec.inner));
  Taylor<kMaxDeriv> z;
  if (spec.kind == CutoffSpec::Kind::SmoothExp) {
    auto f = [](const Taylor<kMaxDeriv>& y) { return texp(-(y.reciprocal())); };
    Taylor<kMaxDeriv> one = Taylor<kMaxDeriv>::constant(1.0);
    Taylor<kMaxDeriv> fs = f(s);
    Taylor<kMaxDeriv> f1s = f(one - s);
    z = f1s / (fs + f1s);
  } else {
    // 1 - smoothstep of the configured order
    int N = spec.polyOrder;
    Taylor<kMaxDeriv> S = Taylor<kMaxDeriv>::constant(0.0);
    auto binom = [](int a, int b) {
      double r = 1.0;
      for (int i = 1; i <= b; ++i) r = r * double(a - b + i) / double(i);
      return r;
    };
    Taylor<kMaxDeriv> sPow = Taylor<kMaxDeriv>::constant(1.0);
    for (int i = 0; i < N + 1; ++i) sPow = sPow * s;
    for (int k = 0; k <= N; ++k) {
      double coef = binom(N + k, k) * binom(2 * N + 1, N - k) * ((k % 2) ? -1.0 : 1.0);
      Taylor<kMaxDeriv> term = coef * sPow;
      S = S + term;
      sPow = sPow * s;
    }
    z = Taylor<kMaxDeriv>::constant(1.0) - S;
  }
  for (std::size_t k = 0; k <= kMaxDeriv; ++k) out[k] = z.derivative(k);
  return out;
}

/// k'-th derivative tensor entries of the patch polynomial at offset dx,
/// restricted to the index tuple `idx` (length k'), for each alpha.
void polyPartial(const Patch& P, int p, std::span<const double> dx,
                 std::span<const int> idx, std::span<double> outPerAlpha) {
  int kp = int(idx.size());
  int N = P.coeffs[0].shape().N;
  int n = int(dx.size());
  for (int a = 0; a < N; ++a) outPerAlpha[std::size_t(a)] = 0.0;
  std::vector<int> full;
  for (int q = kp; q <= p; ++q) {
    double fact = 1.0;
    for (int j = 2; j <= q - kp; ++j) fact *= double(j);
    const SymTensor& U = P.coeffs[std::size_t(q)];
    detail::forEachTuple(n, q - kp, [&](std::span<const int> rest) {
      double w = 1.0;
      for (int r : rest) w *= dx[std::size_t(r)];
      if (w == 0.0 && q - kp > 0) return;
      full.assign(idx.begin(), idx.end());
      full.insert(full.end(), rest.begin(), rest.end());
      for (int a = 0; a < N; ++a)
        outPerAlpha[std::size_t(a)] += U.at(a, full) * w / fact;
    });
  }
}

}  // namespace

double cutoffDerivative(const CutoffSpec& spec, double t, int k) {
  if (k < 0 || std::size_t(k) > kMaxDeriv)
    throw std::invalid_argument("cutoffDerivative: order out of range");
  return rampDerivatives(spec, t)[std::size_t(k)];
}

SymTensor MollifierOutput::evaluate(std::span<const double> x, int k) const {
  if (k > p) throw std::invalid_argument("MollifierOutput::evaluate: k > p");
  int n = dom.dim();
  int N = patches.empty() ? 1 : patches[0].coeffs[0].shape().N;
  TensorShape outShape{N, n, k};
  SymTensor out = SymTensor::zeros(outShape);
  if (patches.empty()) return out;
  // Locate the cube containing x.
  std::vector<std::int64_t> cube(static_cast<std::size_t>(n));
  std::size_t cubeFlat = 0;
  for (int a = 0; a < n; ++a) {
    double t = (x[std::size_t(a)] - anchor[std::size_t(a)]) / delta;
    auto c = std::int64_t(std::floor(t));
    if (c < 0 || c >= cubesPerAxis[std::size_t(a)]) return out;
    cube[std::size_t(a)] = c;
    cubeFlat = cubeFlat * std::size_t(cubesPerAxis[std::size_t(a)]) + std::size_t(c);
  }
  std::int64_t pid = patchOfCube[cubeFlat];
  if (pid < 0) return out;
  const Patch& P = patches[std::size_t(pid)];
  std::vector<double> dx(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) dx[std::size_t(a)] = x[std::size_t(a)] - P.center[std::size_t(a)];
  // Ramp derivatives per axis.
  std::vector<std::array<double, kMaxDeriv + 1>> ramp(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) {
    ramp[std::size_t(a)] = rampDerivatives(cutoff, dx[std::size_t(a)]);
    // In the flat zero region every ramp derivative vanishes, so the whole
    // patch contribution does.
    if (std::abs(dx[std::size_t(a)]) >= cutoff.outer) return out;
  }
  std::vector<double> polyBuf(static_cast<std::size_t>(N));
  std::vector<int> sub;
  std::vector<int> axisCount(static_cast<std::size_t>(n));
  detail::forEachTuple(n, k, [&](std::span<const int> idx) {
    // product rule over subsets of the derivative indices
    for (int mask = 0; mask < (1 << k); ++mask) {
      std::fill(axisCount.begin(), axisCount.end(), 0);
      sub.clear();
      for (int b = 0; b < k; ++b) {
        if (mask & (1 << b))
          axisCount[std::size_t(idx[std::size_t(b)])]++;  // goes to the cutoff
        else
          sub.push_back(idx[std::size_t(b)]);  // goes to the polynomial
      }
      double zpart = 1.0;
      for (int a = 0; a < n; ++a) {
        zpart *= ramp[std::size_t(a)][std::size_t(axisCount[std::size_t(a)])];
        if (zpart == 0.0) break;
      }
      if (zpart == 0.0) continue;
      polyPartial(P, p, dx, sub, polyBuf);
      for (int a = 0; a < N; ++a) out.at(a, idx) += zpart * polyBuf[std::size_t(a)];
    }
  });
  if (k >= 2) out.symmetrize();
  return out;
}

Field MollifierOutput::evaluateField(const GridDomain& grid, int k) const {
  int N = patches.empty() ? 1 : patches[0].coeffs[0].shape().N;
  TensorShape shape{N, grid.dim(), k};
  Field out = Field::zeros(grid, shape);
  for (std::size_t f = 0; f < grid.boxCellCount(); ++f) {
    if (!grid.inDomain(f)) continue;
    auto c = grid.cellCenter(f);
    SymTensor v = evaluate(c, k);
    auto dst = out.at(f);
    auto src = v.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = src[j];
  }
  return out;
}

JetField MollifierOutput::exactJet(const GridDomain& grid) const {
  JetField jet;
  jet.dom = grid;
  jet.p = p;
  for (int k = 1; k <= p; ++k) jet.orders.push_back(evaluateField(grid, k));
  return jet;
}

MollifierOutput assemble(const Field& u, const Frame& f, const StepMatrix& H,
                         double eps, const MollifyOptions& opts) {
  if (eps <= 0.0) throw std::invalid_argument("assemble: eps must be positive");
  const GridDomain& dom = u.domain();
  int p = H.p;
  double eps2 = eps / double(3 * p);
  if (opts.lr) eps2 = std::min(eps2, eps / 7.0);

  JetField jet = jetOfQuotients(u, f, H);
  StackedField V = StackedField::of(u, jet);
  bool jetOnly = opts.lr.has_value();
  TruncationParams tp = selectTruncationRadius(V, eps2, jetOnly);
  StackedField W = truncateStack(V, tp.R, jetOnly);
  SmoothApproxResult sm =
      smoothApprox(W, eps2, opts.lr, opts.lr ? &u : nullptr);
  CellSet F = unite(tp.exceeding, sm.egoroffSet);

  std::size_t stride = std::max<std::size_t>(1, dom.cellCount() / 100000);
  EmpiricalModulus omega(&sm.fields, stride);

  MollifierOutput out;
  out.dom = dom;
  out.p = p;
  out.R = tp.R;
  out.cutoff.kind = opts.cutoffKind;
  out.cutoff.polyOrder = 2 * p + 1;
  out.anchor.assign(dom.lower().begin(), dom.lower().end());

  double alphaEps = eps2;
  std::int64_t capCells = std::numeric_limits<std::int64_t>::max();
  BoundReport best;
  bool haveBest = false;
  for (int attempt = 0; attempt < opts.maxRetries; ++attempt) {
    PatchGridParams pg = selectPatchGrid(omega, sm.fields, eps2, dom, p);
    // Apply the retry cap and the (possibly pushed) alpha.
    while (pg.cellsPerCube > capCells) {
      // re-derive at a smaller cube size by rebuilding the sets
      std::int64_t m = std::max<std::int64_t>(1, pg.cellsPerCube / 2);
      PatchGridParams smaller;
      smaller.cellsPerCube = m;
      smaller.delta = double(m) * dom.cellSize();
      smaller.alpha = pg.alpha;
      smaller.omegaDelta = CellSet::empty(dom);
      smaller.omegaAlphaDelta = CellSet::empty(dom);
      CubeLayout L = layoutFor(dom, m);
      std::vector<std::int64_t> cube(std::size_t(dom.dim()), 0);
      if (L.cubeCount > 0) {
        for (;;) {
          CellSet covLocal = CellSet::empty(dom);
          CellSet innLocal = CellSet::empty(dom);
          bool keep = visitCube(dom, L, cube, pg.alpha,
                                [&](std::size_t fl, bool inner) {
                                  covLocal.insert(fl);
                                  if (inner) innLocal.insert(fl);
                                });
          if (keep) {
            smaller.omegaDelta.uniteWith(covLocal);
            smaller.omegaAlphaDelta.uniteWith(innLocal);
          }
          int a = dom.dim() - 1;
          while (a >= 0 && ++cube[std::size_t(a)] == L.cubes[std::size_t(a)])
            cube[std::size_t(a--)] = 0;
          if (a < 0) break;
        }
      }
      pg = std::move(smaller);
      if (pg.cellsPerCube <= capCells) break;
    }
    double alpha =
        std::pow(std::max(1.0 - alphaEps / (2.0 * dom.measure()), 0.5),
                 1.0 / dom.dim());
    // rebuild inner set if alpha changed from selection default
    if (std::abs(alpha - pg.alpha) > 1e-15) {
      pg.alpha = alpha;
      pg.omegaAlphaDelta = CellSet::empty(dom);
      CubeLayout L = layoutFor(dom, pg.cellsPerCube);
      std::vector<std::int64_t> cube(std::size_t(dom.dim()), 0);
      for (;;) {
        CellSet innLocal = CellSet::empty(dom);
        bool keep = visitCube(dom, L, cube, alpha, [&](std::size_t fl, bool inner) {
          if (inner) innLocal.insert(fl);
        });
        if (keep) pg.omegaAlphaDelta.uniteWith(innLocal);
        int a = dom.dim() - 1;
        while (a >= 0 && ++cube[std::size_t(a)] == L.cubes[std::size_t(a)])
          cube[std::size_t(a--)] = 0;
        if (a < 0) break;
      }
    }

    out.delta = pg.delta;
    out.alpha = pg.alpha;
    // The ramp must not start inside the shell of outermost cell centers:
    // between that shell and the cube face the grid has no sample points, so
    // the steep part of the cutoff is never aliased onto cell values.
    double centerShell =
        double(pg.cellsPerCube - 1) / 2.0 * dom.cellSize() + dom.cellSize() / 4.0;
    out.cutoff.inner = std::max(pg.alpha * pg.delta / 2.0, centerShell);
    out.cutoff.outer = pg.delta / 2.0;
    out.cubesPerAxis.clear();
    CubeLayout L = layoutFor(dom, pg.cellsPerCube);
    out.cubesPerAxis = L.cubes;
    out.patches.clear();
    out.patchOfCube.assign(L.cubeCount, -1);
    std::vector<std::int64_t> cube(std::size_t(dom.dim()), 0);
    if (L.cubeCount > 0) {
      for (;;) {
        std::size_t cubeFlat = 0;
        for (int b = 0; b < dom.dim(); ++b)
          cubeFlat = cubeFlat * std::size_t(L.cubes[std::size_t(b)]) +
                     std::size_t(cube[std::size_t(b)]);
        bool keep = visitCube(dom, L, cube, pg.alpha, [](std::size_t, bool) {});
        if (keep) {
          Patch patch;
          patch.center.resize(std::size_t(dom.dim()));
          for (int a = 0; a < dom.dim(); ++a)
            patch.center[std::size_t(a)] =
                out.anchor[std::size_t(a)] +
                (double(cube[std::size_t(a)]) + 0.5) * pg.delta;
          auto src = dom.cellAt(patch.center);
          if (src) {
            for (int q = 0; q <= p; ++q)
              patch.coeffs.push_back(sm.fields.comps[std::size_t(q)].tensorAt(*src));
            out.patchOfCube[cubeFlat] = std::int64_t(out.patches.size());
            out.patches.push_back(std::move(patch));
          }
        }
        int a = dom.dim() - 1;
        while (a >= 0 && ++cube[std::size_t(a)] == L.cubes[std::size_t(a)])
          cube[std::size_t(a--)] = 0;
        if (a < 0) break;
      }
    }

    // Exceptional set and measured bounds. The effective inner region of the
    // as-built cutoff contains every covered cell center, so the shaved part
    // reduces to the cells left uncovered by kept cubes.
    CellSet uncovered = CellSet::full(dom);
    uncovered.subtract(pg.omegaDelta);
    out.exceptional = unite(F, uncovered);

    BoundReport rep;
    rep.eps = eps;
    rep.lrOrder = opts.lr;
    Field u0 = out.evaluateField(dom, 0);
    double supU = 0.0;
    for (std::size_t fl = 0; fl < dom.boxCellCount(); ++fl) {
      if (!dom.inDomain(fl) || out.exceptional.contains(fl)) continue;
      auto a = u.at(fl);
      auto b = u0.at(fl);
      double s = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
      supU = std::max(supU, std::sqrt(s));
    }
    rep.supU = supU;
    JetField mjet = out.exactJet(dom);
    double supJet = 0.0;
    for (std::size_t fl = 0; fl < dom.boxCellCount(); ++fl) {
      if (!dom.inDomain(fl) || out.exceptional.contains(fl)) continue;
      double s = 0.0;
      for (int q = 1; q <= p; ++q) {
        auto a = jet.orders[std::size_t(q - 1)].at(fl);
        auto b = mjet.orders[std::size_t(q - 1)].at(fl);
        for (std::size_t k = 0; k < a.size(); ++k)
          s += (a[k] - b[k]) * (a[k] - b[k]);
      }
      supJet = std::max(supJet, std::sqrt(s));
    }
    rep.supJet = supJet;
    rep.measureE = measureOf(dom, out.exceptional);
    bool lrOk = true;
    if (opts.lr) {
      Field diff = u0;
      diff -= u;
      rep.lrValue = lrNorm(diff, *opts.lr);
      lrOk = rep.lrValue <= eps;
    }
    rep.pass = rep.supU <= eps && rep.supJet <= eps && rep.measureE <= eps && lrOk;
    if (!sm.ok)
      rep.note = "smoothing floor reached; deviation set measure " +
                 std::to_string(sm.achievedMeasure);
    out.bounds = rep;
    if (rep.pass) return out;
    if (!haveBest || (rep.supU + rep.supJet + rep.measureE) <
                         (best.supU + best.supJet + best.measureE)) {
      best = rep;
      haveBest = true;
    }
    // Retry policy: shrink the cubes first; then push alpha for L^r.
    if (pg.cellsPerCube > 1) {
      capCells = pg.cellsPerCube / 2;
      continue;
    }
    if (opts.lr && !lrOk && alphaEps > 1e-12) {
      alphaEps /= 4.0;
      continue;
    }
    break;
  }
  out.bounds = haveBest ? best : out.bounds;
  out.bounds.pass = false;
  return out;
}

std::string MollifierOutput::toJson() const {
  nlohmann::json j;
  j["delta"] = delta;
  j["alpha"] = alpha;
  j["R"] = R;
  j["p"] = p;
  j["anchor"] = anchor;
  j["cubes_per_axis"] = cubesPerAxis;
  j["cutoff_kind"] =
      cutoff.kind == CutoffSpec::Kind::SmoothExp ? "smooth_exp" : "poly_smoothstep";
  j["cutoff_poly_order"] = cutoff.polyOrder;
  nlohmann::json dj;
  dj["lo"] = std::vector<double>(dom.lower().begin(), dom.lower().end());
  dj["cells"] = std::vector<std::int64_t>(dom.extents().begin(), dom.extents().end());
  dj["g"] = dom.cellSize();
  j["domain"] = dj;
  nlohmann::json parr = nlohmann::json::array();
  for (const auto& P : patches) {
    nlohmann::json pj;
    pj["center"] = P.center;
    nlohmann::json coeffs = nlohmann::json::array();
    for (const auto& C : P.coeffs) {
      nlohmann::json cj;
      cj["N"] = C.shape().N;
      cj["n"] = C.shape().n;
      cj["q"] = C.shape().q;
      cj["data"] = std::vector<double>(C.data().begin(), C.data().end());
      coeffs.push_back(cj);
    }
    pj["coeffs"] = coeffs;
    pj["cutoff"] = {{"inner", cutoff.inner}, {"outer", cutoff.outer}};
    parr.push_back(pj);
  }
  j["patches"] = parr;
  j["patch_of_cube"] = patchOfCube;
  j["exceptional_cells"] = exceptional.indices();
  nlohmann::json bj;
  bj["sup_u"] = bounds.supU;
  bj["sup_jet"] = bounds.supJet;
  bj["measure_E"] = bounds.measureE;
  if (bounds.lrOrder) {
    bj["lr"] = bounds.lrValue;
    bj["lr_order"] = *bounds.lrOrder;
  } else {
    bj["lr"] = nullptr;
  }
  bj["eps"] = bounds.eps;
  bj["pass"] = bounds.pass;
  j["bounds"] = bj;
  return j.dump();
}

MollifierOutput MollifierOutput::fromJson(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  MollifierOutput out;
  out.delta = j.at("delta").get<double>();
  out.alpha = j.at("alpha").get<double>();
  out.R = j.at("R").get<double>();
  out.p = j.at("p").get<int>();
  out.anchor = j.at("anchor").get<std::vector<double>>();
  out.cubesPerAxis = j.at("cubes_per_axis").get<std::vector<std::int64_t>>();
  out.cutoff.kind = j.at("cutoff_kind").get<std::string>() == "smooth_exp"
                        ? CutoffSpec::Kind::SmoothExp
                        : CutoffSpec::Kind::PolySmoothstep;
  out.cutoff.polyOrder = j.at("cutoff_poly_order").get<int>();
  auto dj = j.at("domain");
  auto lo = dj.at("lo").get<std::vector<double>>();
  auto cells = dj.at("cells").get<std::vector<std::int64_t>>();
  double g = dj.at("g").get<double>();
  std::vector<double> hi(lo.size());
  for (std::size_t a = 0; a < lo.size(); ++a) hi[a] = lo[a] + g * double(cells[a]);
  out.dom = GridDomain::box(lo, hi, cells);
  for (const auto& pj : j.at("patches")) {
    Patch P;
    P.center = pj.at("center").get<std::vector<double>>();
    for (const auto& cj : pj.at("coeffs")) {
      TensorShape s{cj.at("N").get<int>(), cj.at("n").get<int>(),
                    cj.at("q").get<int>()};
      P.coeffs.push_back(SymTensor::fromDataUnchecked(
          s, cj.at("data").get<std::vector<double>>()));
    }
    out.patches.push_back(std::move(P));
  }
  if (!out.patches.empty()) {
    out.cutoff.inner = j.at("patches")[0].at("cutoff").at("inner").get<double>();
    out.cutoff.outer = j.at("patches")[0].at("cutoff").at("outer").get<double>();
  }
  out.patchOfCube = j.at("patch_of_cube").get<std::vector<std::int64_t>>();
  out.exceptional = CellSet::empty(out.dom);
  for (auto f : j.at("exceptional_cells").get<std::vector<std::size_t>>())
    out.exceptional.insert(f);
  auto bj = j.at("bounds");
  out.bounds.supU = bj.at("sup_u").get<double>();
  out.bounds.supJet = bj.at("sup_jet").get<double>();
  out.bounds.measureE = bj.at("measure_E").get<double>();
  out.bounds.eps = bj.at("eps").get<double>();
  out.bounds.pass = bj.at("pass").get<bool>();
  if (bj.contains("lr_order")) {
    out.bounds.lrOrder = bj.at("lr_order").get<double>();
    out.bounds.lrValue = bj.at("lr").get<double>();
  }
  return out;
}

}  // namespace djet
