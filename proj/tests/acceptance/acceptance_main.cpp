// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code is the number of
// failed criteria.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "djet/diffuse.hpp"
#include "djet/inputs.hpp"
#include "djet/mollify.hpp"
#include "djet/pipeline.hpp"

using namespace djet;

namespace {

int failures = 0;

void report(int criterion, const std::string& name, bool pass,
            const std::string& detail) {
  std::printf("%s criterion %d: %s%s%s\n", pass ? "PASS" : "FAIL", criterion,
              name.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
  if (!pass) ++failures;
}

Field scalar1D(const GridDomain& d, double (*fn)(double)) {
  return Field::fromFunction(d, TensorShape{1, 1, 0},
                             [&](std::span<const double> x, std::span<double> v) {
                               v[0] = fn(x[0]);
                             });
}

double regressionSlope(const std::vector<double>& xs,
                       const std::vector<double>& ys) {
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= double(xs.size());
  my /= double(xs.size());
  double num = 0, den = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    num += (xs[k] - mx) * (ys[k] - my);
    den += (xs[k] - mx) * (xs[k] - mx);
  }
  return num / den;
}

// ---------------------------------------------------------------------------
// Criterion 1: the construction bounds, independently re-measured, for the
// full corpus, p in {1,2}, eps in {0.2, 0.1}, with L^1 and L^2 checks.
void criterion1() {
  GridDomain d = GridDomain::box1(0.0, 1.0, 19683);
  double g = d.cellSize();
  Frame fr = Frame::standard(1, 1);
  std::vector<std::string> corpus = {"zero",           "constant",
                                     "sin",            "quadratic",
                                     "cantor-function", "fat-cantor-indicator"};
  bool pass = true;
  std::string detail;
  for (const auto& name : corpus) {
    Field u = makeInput(name, d);
    for (int p : {1, 2}) {
      for (double eps : {0.2, 0.1}) {
        StepMatrix H = StepMatrix::uniform(p, 9.0 * g);
        MollifyOptions mo;
        mo.lr = 2.0;
        MollifierOutput out;
        try {
          out = assemble(u, fr, H, eps, mo);
        } catch (const GridResolutionError& e) {
          pass = false;
          detail += name + " p=" + std::to_string(p) + " eps=" +
                    std::to_string(eps) + " failed: " + e.what() + "; ";
          continue;
        }
        // independent re-measurement of every certified quantity
        JetField quot = jetOfQuotients(u, fr, H);
        double supU = 0.0, supJet = 0.0;
        for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
          if (out.exceptional.contains(f)) continue;
          auto c = d.cellCenter(f);
          supU = std::max(supU,
                          std::abs(out.evaluate(c, 0).data()[0] - u.scalarAt(f)));
          double s = 0.0;
          for (int q = 1; q <= p; ++q) {
            SymTensor vq = out.evaluate(c, q);
            double diff =
                vq.data()[0] - quot.orders[std::size_t(q - 1)].scalarAt(f);
            s += diff * diff;
          }
          supJet = std::max(supJet, std::sqrt(s));
        }
        double measE = measureOf(d, out.exceptional);
        Field diff = out.evaluateField(d, 0);
        diff -= u;
        double l1 = lrNorm(diff, 1.0), l2 = lrNorm(diff, 2.0);
        bool ok = supU <= eps && supJet <= eps && measE <= eps && l1 <= eps &&
                  l2 <= eps;
        if (!ok) {
          pass = false;
          char buf[256];
          std::snprintf(buf, sizeof buf,
                        "%s p=%d eps=%.2g: supU=%.3g supJet=%.3g |E|=%.3g "
                        "L1=%.3g L2=%.3g; ",
                        name.c_str(), p, eps, supU, supJet, measE, l1, l2);
          detail += buf;
        }
      }
    }
  }
  report(1, "construction bounds on the corpus", pass, detail);
}

// ---------------------------------------------------------------------------
// Criterion 2: compatibility on a classical solution. The estimate must put
// >= 0.9 mass into the correct derivative bin on >= 95% of cells; the
// residual check passes with offending measure <= 0.05 |Omega|, halving
// under one grid refinement.
void criterion2() {
  SystemF F;
  F.name = "derivative-minus-cos";
  F.n = 1;
  F.N = 1;
  F.M = 1;
  F.p = 1;
  F.evaluate = [](std::span<const double> x, std::span<const double>,
                  const std::vector<SymTensor>& jet) {
    return std::vector<double>{jet[0].data()[0] - M_PI * std::cos(M_PI * x[0])};
  };
  double offending[2] = {0.0, 0.0};
  bool massOk = true, residOk = true;
  std::string detail;
  int idx = 0;
  for (std::int64_t cells : {6561, 19683}) {
    GridDomain d = GridDomain::box1(0.0, 1.0, cells);
    double g = d.cellSize();
    Field u = scalar1D(d, [](double x) { return std::sin(M_PI * x); });
    auto sched = stepSchedule(1, 27.0 * g, 1.0 / 3.0, 3, g);
    Frame fr = Frame::standard(1, 1);
    auto est = estimateDiffuseJet(u, fr, sched);
    if (cells == 19683) {
      const BinAxes& axes = est.measure.scheme().comps[0];
      std::size_t good = 0, total = 0;
      for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
        ++total;
        double x = d.cellCenter(f)[0];
        std::int64_t bin =
            axes.binOf(std::vector<double>{M_PI * std::cos(M_PI * x)});
        if (est.measure.mass(0, f, bin) >= 0.9) ++good;
      }
      massOk = double(good) >= 0.95 * double(total);
      char buf[128];
      std::snprintf(buf, sizeof buf, "correct-bin fraction %.4f; ",
                    double(good) / double(total));
      detail += buf;
    }
    ResidualOptions ro;
    ro.tol = 0.2;
    auto rf = residual(u, est, F, ro);
    offending[idx] = rf.offendingMeasure;
    if (cells == 19683 && (!rf.pass || rf.offendingMeasure > 0.05 * d.measure()))
      residOk = false;
    ++idx;
  }
  bool halving = offending[1] <= 0.5 * offending[0] + 1e-12;
  char buf[128];
  std::snprintf(buf, sizeof buf, "offending %.4g -> %.4g", offending[0],
                offending[1]);
  detail += buf;
  report(2, "compatibility on a classical solution", massOk && residOk && halving,
         detail);
}

// ---------------------------------------------------------------------------
// Criterion 3: the indicator of the fat Cantor set at J = 64, grid 3^9.
void criterion3() {
  GridDomain d = GridDomain::box1(0.0, 1.0, 19683);
  double g = d.cellSize();
  Field u = makeInput("fat-cantor-indicator", d, 64);
  Frame fr = Frame::standard(1, 1);
  // steps ending at 1/9, the scale at which the visible hole structure is
  // richest
  std::vector<StepMatrix> sched;
  for (std::int64_t c : {6561, 3788, 2187})
    sched.push_back(StepMatrix::uniform(1, double(c) * g));
  DiffuseJetOptions opts;
  auto est = estimateDiffuseJet(u, fr, sched, opts);

  CellSet K = exceedanceSet(u, 0.5);
  double measK = measureOf(d, K);
  bool measOk = measK >= 1.0 / 12.0 && measK <= 1.0 / 3.0;

  const BinAxes& axes = est.measure.scheme().comps[0];
  std::int64_t zeroBin = axes.binOf(std::vector<double>{0.0});
  std::size_t kCells = 0, kInf = 0, cCells = 0, cZero = 0;
  for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
    if (K.contains(f)) {
      ++kCells;
      if (est.measure.infMass(0, f) >= 0.9) ++kInf;
    } else {
      ++cCells;
      if (est.measure.mass(0, f, zeroBin) >= 0.9) ++cZero;
    }
  }
  double kFrac = double(kInf) / double(kCells);
  double cFrac = double(cZero) / double(cCells);
  bool infOk = kFrac >= 0.9;
  bool zeroOk = cFrac >= 0.9;

  ResidualOptions ro;
  ro.tol = 0.1;
  ro.overrideUnconverged = true;
  auto rf = residual(u, est, findSystem("derivative-zero"), ro);

  char buf[256];
  std::snprintf(buf, sizeof buf,
                "inf-mass on %.3f of K cells (need 0.9), zero-mass on %.3f of "
                "complement (need 0.9), |K|=%.4f, residual %s",
                kFrac, cFrac, measK, rf.pass ? "pass" : "fail");
  report(3, "diffuse gradient of the fat Cantor indicator",
         infOk && zeroOk && rf.pass && measOk, buf);
}

// ---------------------------------------------------------------------------
// Criterion 4: approximation diagnostics on the indicator run and the
// Cantor-function run.
void criterion4() {
  GridDomain d = GridDomain::box1(0.0, 1.0, 19683);
  double g = d.cellSize();
  Frame fr = Frame::standard(1, 1);
  std::string detail;
  bool pass = true;

  {  // indicator run, nu_max = 6
    Field u = makeInput("fat-cantor-indicator", d, 64);
    auto sched = stepSchedule(1, 1640.0 * g, 0.75, 6, g);
    DiffuseJetOptions djo;
    auto est = estimateDiffuseJet(u, fr, sched, djo);
    RunOptions ro;
    ApproximationRun run =
        runApproximation(u, findSystem("derivative-zero"), fr, sched, est, ro);
    auto rep = corollary12Diagnostics(run, est, run.epsGrid, run.rGrid);

    bool tripleOk = true;
    for (const auto& t : rep.tripleIntersection)
      if (!t.decreasing || t.last > 0.05) tripleOk = false;
    bool offOk = rep.offExceptional.decreasing && rep.offExceptional.last <= 0.05;
    // exceptional set recovered against the K cells
    CellSet K = exceedanceSet(u, 0.5);
    double symDiff =
        measureOf(d, rep.exceptionalEstimate.symmetricDifference(K));
    double measK = measureOf(d, K);
    bool recoverOk = symDiff <= 0.1 * measK;
    double growth = run.records.back().maxOnExceptional /
                    std::max(run.records.front().maxOnExceptional, 1e-12);
    bool growthOk = growth >= 10.0;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "indicator: triple-intersection %s (last %.3g), off-E %s "
                  "(last %.3g), |E^K|=%.3g vs 0.1|K|=%.3g, growth %.1fx; ",
                  tripleOk ? "ok" : "bad",
                  rep.tripleIntersection.empty()
                      ? 0.0
                      : rep.tripleIntersection[0].last,
                  offOk ? "ok" : "bad", rep.offExceptional.last, symDiff,
                  0.1 * measK, growth);
    detail += buf;
    if (!(tripleOk && offOk && recoverOk && growthOk)) pass = false;
  }

  {  // Cantor-function run
    Field u = makeInput("cantor-function", d);
    auto sched = stepSchedule(1, 729.0 * g, 1.0 / 3.0, 6, g);
    auto estSched = stepSchedule(1, 27.0 * g, 1.0 / 3.0, 3, g);
    auto est = estimateDiffuseJet(u, fr, estSched);
    RunOptions ro;
    ro.rGrid = {0.5, 1.0};  // compact test supports around the vanishing slope
    ApproximationRun run =
        runApproximation(u, findSystem("derivative-zero"), fr, sched, est, ro);
    auto rep = corollary12Diagnostics(run, est, run.epsGrid, run.rGrid);
    bool phiOk = true;
    for (const auto& t : rep.phiWeighted)
      if (t.last > 0.05) phiOk = false;
    double initialL1 = run.records.front().fieldL1;
    bool l1Ok = true;
    for (const auto& rec : run.records)
      if (rec.fieldL1 < 0.5 * initialL1) l1Ok = false;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "cantor: phi-weighted last %.3g (<= 0.05 %s), L1 floor %s "
                  "(initial %.3g)",
                  rep.phiWeighted.empty() ? 0.0 : rep.phiWeighted[0].last,
                  phiOk ? "ok" : "bad", l1Ok ? "held" : "broken", initialL1);
    detail += buf;
    if (!(phiOk && l1Ok)) pass = false;
  }
  report(4, "approximation-scheme diagnostics", pass, detail);
}

// ---------------------------------------------------------------------------
// Criterion 5: measure axioms and the convergence lemmas over 50 randomized
// instances with a fixed seed.
void criterion5() {
  std::mt19937_64 rng(20260810);
  bool pass = true;
  std::string detail;
  int instances = 50;
  for (int inst = 0; inst < instances && pass; ++inst) {
    std::uniform_int_distribution<std::int64_t> cellsDist(24, 96);
    GridDomain d = GridDomain::box1(0.0, 1.0, cellsDist(rng));
    BinAxes axes;
    axes.shape = TensorShape{1, 1, 1};
    axes.Rinf = 2.0;
    axes.binsPerAxis = 64;
    BinScheme scheme{{axes}};
    std::uniform_real_distribution<double> val(-1.9, 1.9), lam(0.05, 0.95);

    // normalization through constructors and combinators
    auto mkDirac = [&](double v) {
      JetField j;
      j.dom = d;
      j.p = 1;
      j.orders.push_back(Field::fromFunction(
          d, TensorShape{1, 1, 1},
          [&](auto, std::span<double> o) { o[0] = v; }));
      return DiscreteYoungMeasure::diracEmbed(j, scheme);
    };
    double v1 = val(rng), v2 = val(rng), l = lam(rng);
    auto t1 = mkDirac(v1), t2 = mkDirac(v2);
    auto mixed = t1.mix(t2, l);
    try {
      mixed.validate(1e-9);
      productMeasure(t1, t2).validate(1e-9);
    } catch (const std::exception& e) {
      pass = false;
      detail = std::string("normalization: ") + e.what();
      break;
    }

    // pairing bilinearity at 1e-12
    TestFunction phi;
    phi.blockLo = {0};
    phi.blockHi = {d.extents()[0]};
    phi.hats = {axes.binOf(std::vector<double>{val(rng)})};
    double lhs = pairMeasure(mixed, phi);
    double rhs = l * pairMeasure(t1, phi) + (1.0 - l) * pairMeasure(t2, phi);
    if (std::abs(lhs - rhs) > 1e-12) {
      pass = false;
      detail = "pairing bilinearity violated";
      break;
    }

    // pseudometric axioms at 1e-12 slack
    auto t3 = mkDirac(val(rng));
    double d12 = weakStarDistance(t1, t2), d21 = weakStarDistance(t2, t1);
    double d13 = weakStarDistance(t1, t3), d23 = weakStarDistance(t2, t3);
    if (d12 != d21 || weakStarDistance(t1, t1) != 0.0 ||
        d13 > d12 + d23 + 1e-12) {
      pass = false;
      detail = "pseudometric axioms violated";
      break;
    }

    // Lemma-style checks on constructed sequences anchored at a bin center
    double center = axes.centerOf(axes.binOf(std::vector<double>{val(rng)}))[0];
    JetField lim;
    lim.dom = d;
    lim.p = 1;
    lim.orders.push_back(Field::fromFunction(
        d, TensorShape{1, 1, 1},
        [&](auto, std::span<double> o) { o[0] = center; }));
    std::vector<double> offsets = {0.2, 0.02, 0.01, 0.005, 0.002, 0.001};
    std::vector<JetField> U, V;
    for (double off : offsets) {
      JetField um = lim;
      for (std::size_t f = 0; f < d.boxCellCount(); ++f)
        um.orders[0].at(f)[0] += off;
      U.push_back(um);
      JetField vm = um;
      for (std::size_t f = 0; f < d.boxCellCount(); ++f)
        vm.orders[0].at(f)[0] += off / 2.0;
      V.push_back(std::move(vm));
    }
    auto l2 = checkLemma2(U, lim, scheme, 0.05, 0.0);
    if (!l2.ok || !traceConverges(l2.traceU)) {
      pass = false;
      detail = "lemma-2 style equivalence failed at instance " +
               std::to_string(inst);
      break;
    }
    auto theta = DiscreteYoungMeasure::diracEmbed(lim, scheme);
    auto l34 = checkLemma34(U, V, theta, 0.05, 0.0);
    if (!l34.ok) {
      pass = false;
      detail = "lemma-34 style transfer failed at instance " + std::to_string(inst);
      break;
    }
    // pair convergence to the fibre product
    BinScheme uScheme = scheme;
    uScheme.comps[0].shape = TensorShape{1, 1, 0};
    Field ulim = Field::fromFunction(d, TensorShape{1, 1, 0},
                                     [&](auto, std::span<double> o) { o[0] = v1; });
    std::vector<Field> Useq;
    for (double off : offsets) {
      Field um = ulim;
      for (std::size_t f = 0; f < d.boxCellCount(); ++f) um.at(f)[0] += off;
      Useq.push_back(std::move(um));
    }
    auto l35 = checkLemma35(Useq, ulim, uScheme, U, theta, 1.5, 0.0);
    if (!l35.ok) {
      pass = false;
      detail = "lemma-35 style product convergence failed at instance " +
               std::to_string(inst);
      break;
    }
  }
  report(5, "measure axioms and convergence lemmas (50 seeded instances)", pass,
         detail);
}

// ---------------------------------------------------------------------------
// Criterion 6: analytic derivatives of the patchwork against central
// differences, observed order >= 1.9 over a step ladder, 100 random points
// per corpus function.
void criterion6() {
  GridDomain d = GridDomain::box1(0.0, 1.0, 6561);
  double g = d.cellSize();
  Frame fr = Frame::standard(1, 1);
  std::vector<std::string> corpus = {"zero",           "constant",
                                     "sin",            "quadratic",
                                     "cantor-function", "fat-cantor-indicator"};
  bool pass = true;
  std::string detail;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> pos(0.05, 0.95);
  for (const auto& name : corpus) {
    Field u = makeInput(name, d);
    auto out = assemble(u, fr, StepMatrix::uniform(1, 9.0 * g), 0.2);
    double rampWidth = out.cutoff.outer - out.cutoff.inner;
    std::vector<double> steps;
    for (int k = 0; k < 4; ++k) steps.push_back(rampWidth / 16.0 / std::pow(2.0, k));
    std::vector<double> totalErr(steps.size(), 0.0);
    int fitPoints = 0;
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<double> x = {pos(rng)};
      double an = out.evaluate(x, 1).data()[0];
      std::vector<double> errs(steps.size());
      for (std::size_t si = 0; si < steps.size(); ++si) {
        double s = steps[si];
        std::vector<double> xp = {x[0] + s}, xm = {x[0] - s};
        double fd =
            (out.evaluate(xp, 0).data()[0] - out.evaluate(xm, 0).data()[0]) /
            (2 * s);
        errs[si] = std::abs(fd - an);
      }
      // points whose errors sit at the roundoff floor already certify the
      // match; the floor covers the cancellation noise of the central
      // difference at the smallest step
      double floor = std::max(1e-7, 1e-9 * std::abs(an));
      bool exact = true;
      for (double e : errs)
        if (e > floor) exact = false;
      if (exact) continue;
      ++fitPoints;
      for (std::size_t si = 0; si < steps.size(); ++si) totalErr[si] += errs[si];
    }
    if (fitPoints == 0) continue;  // everything machine-exact
    std::vector<double> lx, ly;
    for (std::size_t si = 0; si < steps.size(); ++si) {
      if (totalErr[si] <= 0.0) continue;
      lx.push_back(std::log(steps[si]));
      ly.push_back(std::log(totalErr[si]));
    }
    double slope = regressionSlope(lx, ly);
    if (slope < 1.9) {
      pass = false;
      char buf[128];
      std::snprintf(buf, sizeof buf, "%s: observed order %.2f; ", name.c_str(),
                    slope);
      detail += buf;
    }
  }
  report(6, "analytic patch derivatives vs finite differences", pass, detail);
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  if (failures > 0)
    std::printf("%d criterion(s) failed\n", failures);
  else
    std::printf("all criteria passed\n");
  return failures;
}
