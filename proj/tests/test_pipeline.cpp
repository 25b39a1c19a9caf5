#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "djet/inputs.hpp"
#include "djet/pipeline.hpp"

using namespace djet;

namespace {

Field scalar1D(const GridDomain& d, double (*fn)(double)) {
  return Field::fromFunction(d, TensorShape{1, 1, 0},
                             [&](std::span<const double> x, std::span<double> v) {
                               v[0] = fn(x[0]);
                             });
}

SystemF shiftedDerivative() {
  // F(x, u, X) = X - pi cos(pi x): sin(pi x) solves it classically
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
  return F;
}

}  // namespace

TEST_CASE("classical solutions pass the residual check") {
  GridDomain d = GridDomain::box1(0.0, 1.0, 6561);
  double g = d.cellSize();
  Field u = scalar1D(d, [](double x) { return std::sin(M_PI * x); });
  auto sched = stepSchedule(1, 27.0 * g, 1.0 / 3.0, 3, g);
  auto est = estimateDiffuseJet(u, Frame::standard(1, 1), sched);
  ResidualOptions ro;
  ro.tol = 0.2;
  auto rf = residual(u, est, shiftedDerivative(), ro);
  CHECK(rf.pass);
  CHECK(rf.offendingMeasure <= 0.01 * d.measure());
}

TEST_CASE("residual halves or better under grid refinement") {
  double m1 = 0.0, m2 = 0.0;
  for (std::int64_t cells : {6561, 19683}) {
    GridDomain d = GridDomain::box1(0.0, 1.0, cells);
    double g = d.cellSize();
    Field u = scalar1D(d, [](double x) { return std::sin(M_PI * x); });
    auto sched = stepSchedule(1, 27.0 * g, 1.0 / 3.0, 3, g);
    auto est = estimateDiffuseJet(u, Frame::standard(1, 1), sched);
    ResidualOptions ro;
    ro.tol = 0.2;
    auto rf = residual(u, est, shiftedDerivative(), ro);
    (cells == 6561 ? m1 : m2) = rf.offendingMeasure;
  }
  CHECK(m2 <= 0.5 * m1 + 1e-12);
}

TEST_CASE("a.e. solutions with singular parts pass through reduced supports") {
  GridDomain d = GridDomain::box1(0.0, 1.0, 19683);
  double g = d.cellSize();
  SystemF F = findSystem("derivative-zero");

  SUBCASE("Cantor function") {
    Field u = makeInput("cantor-function", d);
    auto sched = stepSchedule(1, 27.0 * g, 1.0 / 3.0, 3, g);
    auto est = estimateDiffuseJet(u, Frame::standard(1, 1), sched);
    ResidualOptions ro;
    ro.tol = 0.1;
    ro.massBudget = 0.02;
    auto rf = residual(u, est, F, ro);
    CHECK(rf.pass);
  }
  SUBCASE("fat Cantor indicator: vacuous sup on the spiking cells") {
    Field u = makeInput("fat-cantor-indicator", d);
    auto sched = stepSchedule(1, 243.0 * g, 1.0 / 3.0, 3, g);
    DiffuseJetOptions opts;
    auto est = estimateDiffuseJet(u, Frame::standard(1, 1), sched, opts);
    ResidualOptions ro;
    ro.tol = 0.1;
    ro.overrideUnconverged = true;
    auto rf = residual(u, est, F, ro);
    CHECK(rf.pass);
    // residual vanishes a.e.: on firing cells the reduced support is empty
    CHECK(lrNorm(rf.r, std::numeric_limits<double>::infinity()) <= 0.1);
  }
}

TEST_CASE("residual preconditions") {
  GridDomain d = GridDomain::box1(0.0, 1.0, 729);
  double g = d.cellSize();
  Field u = scalar1D(d, [](double x) { return x; });
  auto sched = stepSchedule(1, 27.0 * g, 1.0 / 3.0, 3, g);
  auto est = estimateDiffuseJet(u, Frame::standard(1, 1), sched);

  SystemF wrongDim = findSystem("derivative-zero");
  wrongDim.n = 2;
  CHECK_THROWS_AS(residual(u, est, wrongDim, {}), std::invalid_argument);

  SystemF wrongOrder = findSystem("infinity-laplace", 1, 1);
  CHECK_THROWS_AS(residual(u, est, wrongOrder, {}), std::invalid_argument);

  // an unconverged estimate is an error unless overridden
  DiffuseJetEstimate fake = est;
  fake.converged = false;
  CHECK_THROWS_AS(residual(u, fake, findSystem("derivative-zero"), {}),
                  std::invalid_argument);
  ResidualOptions ro;
  ro.overrideUnconverged = true;
  CHECK_NOTHROW(residual(u, fake, findSystem("derivative-zero"), ro));
}

TEST_CASE("built-in system catalog") {
  auto cat = builtinSystems(1, 1);
  std::vector<std::string> names;
  for (const auto& s : cat) names.push_back(s.name);
  CHECK(std::find(names.begin(), names.end(), "derivative-zero") != names.end());
  CHECK(std::find(names.begin(), names.end(), "transport") != names.end());
  CHECK(std::find(names.begin(), names.end(), "eikonal") != names.end());
  CHECK(std::find(names.begin(), names.end(), "infinity-laplace") != names.end());
  CHECK_THROWS_AS(findSystem("no-such-system"), std::invalid_argument);

  SUBCASE("derivative-zero on constants") {
    SystemF F = findSystem("derivative-zero");
    std::vector<SymTensor> jet = {
        SymTensor::fromDataUnchecked(TensorShape{1, 1, 1}, {0.0})};
    std::vector<double> x = {0.5}, uv = {3.0};
    CHECK(F.evaluate(x, uv, jet)[0] == 0.0);
  }
  SUBCASE("scalar infinity-laplace reduces to the pure second-order term") {
    SystemF F = findSystem("infinity-laplace", 2, 1);
    // Du = (1, 2): nonzero row vector spans R^1, so the projection vanishes
    std::vector<SymTensor> jet = {
        SymTensor::fromDataUnchecked(TensorShape{1, 2, 1}, {1.0, 2.0}),
        SymTensor::fromDataUnchecked(TensorShape{1, 2, 2},
                                     {2.0, 0.5, 0.5, -1.0})};
    std::vector<double> x = {0.0, 0.0}, uv = {0.0};
    // Du (x) Du : D2u = sum_ij Du_i Du_j D2_ij
    double want = 1 * 1 * 2.0 + 1 * 2 * 0.5 + 2 * 1 * 0.5 + 2 * 2 * (-1.0);
    CHECK(F.evaluate(x, uv, jet)[0] == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("infinity-laplace vanishes on linear maps") {
    SystemF F = findSystem("infinity-laplace", 2, 2);
    std::vector<SymTensor> jet = {
        SymTensor::fromDataUnchecked(TensorShape{2, 2, 1}, {1.0, 0.0, 0.5, 2.0}),
        SymTensor::zeros(TensorShape{2, 2, 2})};
    std::vector<double> x = {0.0, 0.0}, uv = {0.0, 0.0};
    auto out = F.evaluate(x, uv, jet);
    for (double v : out) CHECK(v == 0.0);
  }
  SUBCASE("vectorial infinity-laplace uses the range projection") {
    SystemF F = findSystem("infinity-laplace", 1, 2);
    // Du = (1, 0)^T: range is the first axis; the projection keeps the second
    std::vector<SymTensor> jet = {
        SymTensor::fromDataUnchecked(TensorShape{2, 1, 1}, {1.0, 0.0}),
        SymTensor::fromDataUnchecked(TensorShape{2, 1, 2}, {3.0, 5.0})};
    std::vector<double> x = {0.0}, uv = {0.0, 0.0};
    auto out = F.evaluate(x, uv, jet);
    // alpha = 0: Du_0 Du_b D2_b = 1*1*3; projection part zero on axis 0
    CHECK(out[0] == doctest::Approx(3.0).epsilon(1e-12));
    // alpha = 1: gradient part zero; |Du|^2 P_11 D2_1 = 1 * 1 * 5
    CHECK(out[1] == doctest::Approx(5.0).epsilon(1e-12));
  }
}

TEST_CASE("approximation run on a classical solution") {
  GridDomain d = GridDomain::box1(0.0, 1.0, 6561);
  double g = d.cellSize();
  Field u = scalar1D(d, [](double x) { return std::sin(M_PI * x); });
  Frame fr = Frame::standard(1, 1);
  auto estSched = stepSchedule(1, 27.0 * g, 1.0 / 3.0, 3, g);
  auto est = estimateDiffuseJet(u, fr, estSched);
  auto runSched = stepSchedule(1, 243.0 * g, 1.0 / 3.0, 4, g);
  RunOptions ro;
  ApproximationRun run = runApproximation(u, shiftedDerivative(), fr, runSched, est, ro);
  REQUIRE(run.records.size() == 4);
  for (const auto& rec : run.records) {
    CHECK_FALSE(rec.mollifyFailed);
    CHECK(rec.bounds.pass);
  }
  // residual decays with the step size: log-log slope at least 0.9
  std::vector<double> hs, errs;
  for (std::size_t k = 0; k < run.records.size(); ++k) {
    double h = runSched[k].rows[0][0];
    double sup = 0.0;
    Field fn = run.fnu[k].normField();
    for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
      double x = d.cellCenter(f)[0];
      if (x < 0.1 || x > 0.85) continue;  // skip fringes and shaved cubes
      sup = std::max(sup, fn.scalarAt(f));
    }
    hs.push_back(std::log(h));
    errs.push_back(std::log(sup));
  }
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < hs.size(); ++k) {
    mx += hs[k];
    my += errs[k];
  }
  mx /= double(hs.size());
  my /= double(hs.size());
  double num = 0, den = 0;
  for (std::size_t k = 0; k < hs.size(); ++k) {
    num += (hs[k] - mx) * (errs[k] - my);
    den += (hs[k] - mx) * (hs[k] - mx);
  }
  CHECK(num / den >= 0.9);
}

TEST_CASE("serialized outputs reproduce the residual field bit for bit") {
  GridDomain d = GridDomain::box1(0.0, 1.0, 2187);
  double g = d.cellSize();
  Field u = makeInput("cantor-function", d);
  Frame fr = Frame::standard(1, 1);
  SystemF F = findSystem("derivative-zero");
  auto sched = stepSchedule(1, 27.0 * g, 1.0 / 3.0, 3, g);
  auto est = estimateDiffuseJet(u, fr, sched);
  ApproximationRun run = runApproximation(u, F, fr, sched, est, {});
  REQUIRE(!run.mollified.empty());
  for (std::size_t k = 0; k < run.mollified.size(); ++k) {
    MollifierOutput back = MollifierOutput::fromJson(run.mollified[k].toJson());
    Field u0 = back.evaluateField(d, 0);
    JetField jets = back.exactJet(d);
    for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
      std::vector<SymTensor> tuple = {jets.orders[0].tensorAt(f)};
      auto x = d.cellCenter(f);
      double fv = F.evaluate(x, u0.at(f), tuple)[0];
      CHECK(fv == run.fnu[k].scalarAt(f));
    }
  }
}

TEST_CASE("convergence-mode equivalence and diagnostics on runs") {
  GridDomain d = GridDomain::box1(0.0, 1.0, 6561);
  double g = d.cellSize();
  Frame fr = Frame::standard(1, 1);

  SUBCASE("classical run: every diagnostic decreases to tolerance") {
    Field u = scalar1D(d, [](double x) { return std::sin(M_PI * x); });
    auto est = estimateDiffuseJet(u, fr, stepSchedule(1, 27.0 * g, 1.0 / 3.0, 3, g));
    auto sched = stepSchedule(1, 243.0 * g, 1.0 / 3.0, 4, g);
    ApproximationRun run = runApproximation(u, shiftedDerivative(), fr, sched, est, {});
    auto rep = corollary12Diagnostics(run, est, run.epsGrid, run.rGrid);
    CHECK(rep.exceptionalMeasure == 0.0);
    CHECK(rep.offExceptional.converged);
    for (const auto& t : rep.ballRestricted) CHECK(t.converged);
    for (const auto& t : rep.tripleIntersection) CHECK(t.converged);
    CHECK(rep.modesAgree);
  }
  SUBCASE("indicator run recovers divergence on the spiking cells") {
    GridDomain d9 = GridDomain::box1(0.0, 1.0, 19683);
    double g9 = d9.cellSize();
    Field u = makeInput("fat-cantor-indicator", d9);
    DiffuseJetOptions djo;
    auto est = estimateDiffuseJet(
        u, fr, stepSchedule(1, 1640.0 * g9, 0.75, 6, g9), djo);
    auto sched = stepSchedule(1, 1640.0 * g9, 0.75, 6, g9);
    RunOptions ro;
    ApproximationRun run = runApproximation(u, findSystem("derivative-zero"), fr,
                                            sched, est, ro);
    auto rep = corollary12Diagnostics(run, est, run.epsGrid, run.rGrid);
    // the off-exceptional trend decreases and ends within tolerance
    CHECK(rep.offExceptional.decreasing);
    CHECK(rep.offExceptional.last <= 0.05);
    // max |f_nu| grows on the exceptional cells
    double first = run.records.front().maxOnExceptional;
    double last = run.records.back().maxOnExceptional;
    CHECK(last >= 10.0 * first);
    CHECK(rep.modesAgree);
  }
}

TEST_CASE("pairings of vanishing integrands stay vanishing along runs") {
  // the convergence-transfer behind the pipeline, instantiated directly:
  // theta_m -> theta weak*, u_m -> u a.e., F fixed with
  // sup_{supp} |F| = 0 at the limit implies the paired residuals vanish.
  GridDomain d = GridDomain::box1(0.0, 1.0, 729);
  BinAxes axes;
  axes.shape = TensorShape{1, 1, 1};
  axes.Rinf = 2.0;
  axes.binsPerAxis = 64;
  BinScheme scheme{{axes}};
  SystemF F = findSystem("eikonal", 1, 1);  // |X| - 1
  // limit jet: slope exactly 1 -> F = 0 on the support
  JetField lim;
  lim.dom = d;
  lim.p = 1;
  lim.orders.push_back(Field::fromFunction(
      d, TensorShape{1, 1, 1}, [](auto, std::span<double> v) { v[0] = 1.0; }));
  auto theta = DiscreteYoungMeasure::diracEmbed(lim, scheme);
  std::vector<double> trace;
  for (double off : {0.5, 0.02, 0.01, 0.001}) {
    JetField jm = lim;
    for (std::size_t f = 0; f < d.boxCellCount(); ++f)
      jm.orders[0].at(f)[0] += off;
    auto th = DiscreteYoungMeasure::diracEmbed(jm, scheme);
    // integral of |F| against the measure, averaged over the domain
    double acc = 0.0;
    for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
      for (const auto& e : th.histogram(0, f)) {
        if (e.bin == scheme.comps[0].infIndex()) continue;
        auto rep = scheme.comps[0].representative(e.bin);
        std::vector<double> x = d.cellCenter(f);
        std::vector<double> uv = {0.0};
        std::vector<SymTensor> tuple = {rep.value};
        acc += e.mass * std::abs(F.evaluate(x, uv, tuple)[0]) * d.cellSize();
      }
    }
    trace.push_back(acc);
  }
  // vanishes in the limit (bin-width floor)
  CHECK(trace.back() <= trace.front());
  CHECK(trace.back() <= 2.0 * 2.0 / 64.0);
}

TEST_CASE("two-dimensional transport residual distinguishes solutions") {
  GridDomain d = GridDomain::box({0.0, 0.0}, {1.0, 1.0}, {96, 96});
  double g = d.cellSize();
  Frame fr = Frame::standard(1, 2);
  auto sched = stepSchedule(1, 6.0 * g, 0.5, 3, g);
  SystemF F = findSystem("transport", 2, 1);

  // u = x - y rides along the drift (1,1)/sqrt(2)
  Field uSol = Field::fromFunction(d, TensorShape{1, 2, 0},
                                   [](std::span<const double> x, std::span<double> v) {
                                     v[0] = x[0] - x[1];
                                   });
  auto estSol = estimateDiffuseJet(uSol, fr, sched);
  ResidualOptions ro;
  ro.tol = 0.25;
  ro.massBudget = 0.1;
  ro.overrideUnconverged = true;
  CHECK(residual(uSol, estSol, F, ro).pass);

  // u = x + y does not
  Field uBad = Field::fromFunction(d, TensorShape{1, 2, 0},
                                   [](std::span<const double> x, std::span<double> v) {
                                     v[0] = x[0] + x[1];
                                   });
  auto estBad = estimateDiffuseJet(uBad, fr, sched);
  CHECK_FALSE(residual(uBad, estBad, F, ro).pass);
}
