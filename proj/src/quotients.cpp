#include "djet/quotients.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace djet {

StepMatrix StepMatrix::uniform(int p, double h) {
  StepMatrix m;
  m.p = p;
  m.rows.resize(static_cast<std::size_t>(p));
  for (int q = 1; q <= p; ++q) m.rows[std::size_t(q - 1)].assign(std::size_t(q), h);
  return m;
}

void StepMatrix::validate(double g) const {
  if (p < 1 || int(rows.size()) != p)
    throw std::invalid_argument("StepMatrix: malformed rows");
  for (int q = 1; q <= p; ++q) {
    if (int(rows[std::size_t(q - 1)].size()) != q)
      throw std::invalid_argument("StepMatrix: row " + std::to_string(q) +
                                  " must have " + std::to_string(q) + " entries");
    for (double h : rows[std::size_t(q - 1)]) {
      if (h == 0.0 || !std::isfinite(h))
        throw std::invalid_argument("StepMatrix: steps must be nonzero");
      if (std::abs(h) < g * (1.0 - 1e-9))
        throw std::invalid_argument("StepMatrix: step below grid resolution");
      double m = std::abs(h) / g;
      if (std::abs(m - std::round(m)) > 1e-6)
        throw std::invalid_argument("StepMatrix: step is not a grid multiple");
    }
  }
}

double StepMatrix::maxStep() const {
  double m = 0.0;
  for (const auto& r : rows)
    for (double h : r) m = std::max(m, std::abs(h));
  return m;
}

std::vector<StepMatrix> stepSchedule(int p, double h0, double decay, int count,
                                     double g) {
  if (count < 1) throw std::invalid_argument("stepSchedule: count must be >= 1");
  if (!(decay > 0.0 && decay < 1.0))
    throw std::invalid_argument("stepSchedule: decay must lie in (0,1)");
  double m0 = h0 / g;
  if (std::abs(m0 - std::round(m0)) > 1e-6)
    throw std::invalid_argument("stepSchedule: h0 must be a grid multiple");
  std::vector<StepMatrix> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    double h = h0 * std::pow(decay, k);
    double cells = std::round(h / g);
    if (cells < 1.0)
      throw std::invalid_argument(
          "stepSchedule: scheduled step below grid resolution at index " +
          std::to_string(k));
    out.push_back(StepMatrix::uniform(p, cells * g));
  }
  return out;
}

namespace {

/// Integer cell offset for h*a, or nullopt when it is off-grid.
std::optional<std::vector<std::int64_t>> gridOffset(std::span<const double> a,
                                                    double h, double g) {
  std::vector<std::int64_t> off(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    double t = h * a[k] / g;
    double r = std::round(t);
    if (std::abs(t - r) > 1e-6 * std::max(1.0, std::abs(t))) return std::nullopt;
    off[k] = std::int64_t(r);
  }
  return off;
}

double unitCheck(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

}  // namespace

Field dq1(const Field& u, std::span<const double> a, double h, bool resample) {
  if (h == 0.0) throw std::invalid_argument("dq1: step must be nonzero");
  const GridDomain& d = u.domain();
  if (int(a.size()) != d.dim())
    throw std::invalid_argument("dq1: direction dimension mismatch");
  if (std::abs(unitCheck(a) - 1.0) > 1e-9)
    throw std::invalid_argument("dq1: direction must be a unit vector");
  Field out = Field::zeros(d, u.shape());
  std::size_t W = u.width();
  auto off = gridOffset(a, h, d.cellSize());
  if (off) {
    for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
      if (!d.inDomain(f)) continue;
      auto src = d.shifted(f, *off);
      auto here = u.at(f);
      auto dst = out.at(f);
      if (src) {
        auto there = u.at(*src);
        for (std::size_t k = 0; k < W; ++k) dst[k] = (there[k] - here[k]) / h;
      } else {
        // zero extension beyond the domain
        for (std::size_t k = 0; k < W; ++k) dst[k] = (0.0 - here[k]) / h;
      }
    }
    return out;
  }
  if (!resample)
    throw std::invalid_argument(
        "dq1: step does not land on grid offsets; enable resampling for "
        "non-axis frames");
  std::vector<double> x(std::size_t(d.dim()));
  for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
    if (!d.inDomain(f)) continue;
    auto c = d.cellCenter(f);
    for (int k = 0; k < d.dim(); ++k) x[std::size_t(k)] = c[std::size_t(k)] + h * a[std::size_t(k)];
    auto there = u.valueAtInterpolated(x);
    auto here = u.at(f);
    auto dst = out.at(f);
    for (std::size_t k = 0; k < W; ++k) dst[k] = (there[k] - here[k]) / h;
  }
  return out;
}

Field dqIterated(const Field& u, const std::vector<std::vector<double>>& dirs,
                 const std::vector<double>& steps, bool resample) {
  if (dirs.size() != steps.size() || dirs.empty())
    throw std::invalid_argument("dqIterated: dirs and steps must match");
  Field cur = u;
  for (std::size_t k = 0; k < dirs.size(); ++k)
    cur = dq1(cur, dirs[k], steps[k], resample);
  return cur;
}

JetField jetOfQuotients(const Field& u, const Frame& f, const StepMatrix& H,
                        bool resample) {
  const GridDomain& d = u.domain();
  H.validate(d.cellSize());
  if (u.shape().q != 0 || u.shape().N != f.N())
    throw std::invalid_argument("jetOfQuotients: field/frame mismatch");
  int N = f.N(), n = f.n();
  JetField jet;
  jet.dom = d;
  jet.p = H.p;
  jet.orders.reserve(std::size_t(H.p));

  // Scalar component fields E^alpha . u.
  std::vector<Field> comp;
  comp.reserve(static_cast<std::size_t>(N));
  for (int alpha = 0; alpha < N; ++alpha) {
    Field c = Field::zeros(d, TensorShape{1, n, 0});
    for (std::size_t cell = 0; cell < d.boxCellCount(); ++cell) {
      auto v = u.at(cell);
      double s = 0.0;
      for (int b = 0; b < N; ++b) s += f.targetVec(alpha)[std::size_t(b)] * v[std::size_t(b)];
      c.at(cell)[0] = s;
    }
    comp.push_back(std::move(c));
  }

  for (int q = 1; q <= H.p; ++q) {
    TensorShape shape{N, n, q};
    Field Xq = Field::zeros(d, shape);
    std::size_t W = shape.size();
    const auto& steps = H.rows[std::size_t(q - 1)];
    // Raw coefficients per ordered tuple, then symmetrized into the tensor.
    std::vector<std::vector<double>> coeff;  // per tuple, per cell
    for (int alpha = 0; alpha < N; ++alpha) {
      coeff.clear();
      std::vector<std::vector<int>> tuples;
      detail::forEachTuple(n, q, [&](std::span<const int> t) {
        tuples.emplace_back(t.begin(), t.end());
      });
      for (const auto& t : tuples) {
        std::vector<std::vector<double>> dirs;
        dirs.reserve(static_cast<std::size_t>(q));
        for (int k = 0; k < q; ++k) {
          auto dv = f.domainVec(alpha, t[std::size_t(k)]);
          dirs.emplace_back(dv.begin(), dv.end());
        }
        Field qf = dqIterated(comp[std::size_t(alpha)], dirs, steps, resample);
        coeff.emplace_back(qf.raw().begin(), qf.raw().end());
      }
      // Assemble: X_q(alpha-part) += symmetrized coefficients in the induced
      // elements. For the standard frame this reduces to averaging the raw
      // coefficients over tuple permutations.
      std::vector<std::size_t> tupleFlat(tuples.size());
      for (std::size_t ti = 0; ti < tuples.size(); ++ti) {
        std::size_t flat = 0;
        for (int k = 0; k < q; ++k) flat = flat * std::size_t(n) + std::size_t(tuples[ti][std::size_t(k)]);
        tupleFlat[ti] = flat;
      }
      // Symmetrized coefficient per sorted tuple class.
      for (std::size_t cell = 0; cell < d.boxCellCount(); ++cell) {
        if (!d.inDomain(cell)) continue;
        // symmetrize raw coefficients across permutations of each tuple
        for (std::size_t ti = 0; ti < tuples.size(); ++ti) {
          std::vector<int> sorted = tuples[ti];
          std::sort(sorted.begin(), sorted.end());
          double sum = 0.0;
          std::size_t cnt = 0;
          do {
            std::size_t flat = 0;
            for (int k = 0; k < q; ++k) flat = flat * std::size_t(n) + std::size_t(sorted[std::size_t(k)]);
            // find tuple index == flat: tuples are in row-major order so the
            // flat value is the index itself
            sum += coeff[flat][cell];
            ++cnt;
          } while (std::next_permutation(sorted.begin(), sorted.end()));
          double symc = sum / double(cnt);
          jet.maxAsymmetry =
              std::max(jet.maxAsymmetry, std::abs(coeff[tupleFlat[ti]][cell] - symc));
          if (f.isStandard()) {
            Xq.at(cell)[std::size_t(alpha) * (W / std::size_t(N)) + tupleFlat[ti]] = symc;
          } else {
            SymTensor e = f.inducedElement(alpha, tuples[ti]);
            auto dst = Xq.at(cell);
            auto ed = e.data();
            for (std::size_t k = 0; k < W; ++k) dst[k] += symc * ed[k];
          }
        }
      }
    }
    jet.orders.push_back(std::move(Xq));
  }
  return jet;
}

Field JetField::stackedNormField() const {
  Field r = Field::zeros(dom, TensorShape{1, dom.dim(), 0});
  for (std::size_t f = 0; f < dom.boxCellCount(); ++f) {
    double s = 0.0;
    for (const auto& X : orders) {
      auto v = X.at(f);
      for (double x : v) s += x * x;
    }
    r.at(f)[0] = std::sqrt(s);
  }
  return r;
}

CellSet stencilExitSet(const GridDomain& d, const Frame& f,
                       const StepMatrix& H) {
  CellSet s = CellSet::empty(d);
  // Accumulated stencil offsets per order: every subset of steps applied
  // along frame directions. Conservative bound: the axis-aligned box of
  // radius sum of |steps| per axis direction component.
  double reach = 0.0;
  for (const auto& row : H.rows) {
    double sum = 0.0;
    for (double h : row) sum += std::abs(h);
    reach = std::max(reach, sum);
  }
  (void)f;
  std::int64_t cells = std::int64_t(std::ceil(reach / d.cellSize()));
  for (std::size_t flat = 0; flat < d.boxCellCount(); ++flat) {
    if (!d.inDomain(flat)) continue;
    auto m = d.unflatten(flat);
    for (int a = 0; a < d.dim(); ++a) {
      if (m[std::size_t(a)] + cells >= d.extents()[std::size_t(a)] ||
          m[std::size_t(a)] - cells < 0) {
        s.insert(flat);
        break;
      }
    }
  }
  return s;
}

}  // namespace djet
