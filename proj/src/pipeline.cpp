#include "djet/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace djet {

namespace {

double euclid(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

ResidualField residual(const Field& u, const DiffuseJetEstimate& est,
                       const SystemF& F, const ResidualOptions& opts) {
  const GridDomain& d = u.domain();
  if (F.n != d.dim() || F.N != u.shape().N)
    throw std::invalid_argument("residual: dimension mismatch between field and system");
  if (F.p != est.measure.componentCount())
    throw std::invalid_argument("residual: system order does not match the jet estimate");
  if (!est.converged && !opts.overrideUnconverged)
    throw std::invalid_argument(
        "residual: estimate not converged (set overrideUnconverged to proceed)");
  double budget = opts.massBudget >= 0.0 ? opts.massBudget : 0.01 * d.measure();

  ResidualField rf;
  rf.tol = opts.tol;
  rf.r = Field::zeros(d, TensorShape{1, d.dim(), 0});
  const BinScheme& scheme = est.measure.scheme();
  for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
    if (!d.inDomain(f)) continue;
    auto tuples = reducedSupportJet(est.measure, f, opts.tau);
    if (tuples.empty()) {
      rf.r.at(f)[0] = 0.0;  // vacuous sup over an empty reduced support
      continue;
    }
    auto x = d.cellCenter(f);
    auto uv = u.at(f);
    double worst = 0.0;
    for (auto& tuple : tuples) {
      auto val = F.evaluate(x, uv, tuple);
      worst = std::max(worst, euclid(val));
      if (opts.cornerSampling) {
        // probe per-component corner representatives, others at centers
        for (std::size_t c = 0; c < tuple.size(); ++c) {
          const BinAxes& axes = scheme.comps[c];
          double half = axes.Rinf / double(axes.binsPerAxis);
          auto data = tuple[c].data();
          std::vector<double> probe(data.begin(), data.end());
          for (std::size_t k = 0; k < probe.size(); ++k) {
            for (double sgn : {-1.0, 1.0}) {
              probe[k] = data[k] + sgn * half;
              auto tup2 = tuple;
              tup2[c] = SymTensor::fromDataUnchecked(tuple[c].shape(),
                                                     std::vector<double>(probe));
              auto v2 = F.evaluate(x, uv, tup2);
              worst = std::max(worst, euclid(v2));
            }
            probe[k] = data[k];
          }
        }
      }
    }
    rf.r.at(f)[0] = worst;
  }
  rf.offending = exceedanceSet(rf.r, opts.tol);
  rf.offendingMeasure = measureOf(d, rf.offending);
  rf.pass = rf.offendingMeasure <= budget;
  return rf;
}

ApproximationRun runApproximation(const Field& u, const SystemF& F,
                                  const Frame& frame,
                                  std::span<const StepMatrix> schedule,
                                  const DiffuseJetEstimate& est,
                                  const RunOptions& opts) {
  const GridDomain& d = u.domain();
  ApproximationRun run;
  run.dom = d;
  run.rGrid = opts.rGrid;
  run.epsGrid = opts.epsGrid;
  auto epsRule = opts.epsRule ? opts.epsRule
                              : [](int nu) { return 1.0 / double(nu); };

  // Exceptional-set estimate from the diffuse jet: cells where any order
  // charges infinity above the threshold.
  run.estInfCells = CellSet::empty(d);
  for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
    if (!d.inDomain(f)) continue;
    for (int c = 0; c < est.measure.componentCount(); ++c) {
      if (est.measure.infMass(c, f) > opts.tauInf) {
        run.estInfCells.insert(f);
        break;
      }
    }
  }

  for (int nu = 1; nu <= int(schedule.size()); ++nu) {
    NuRecord rec;
    rec.nu = nu;
    rec.eps = epsRule(nu);
    MollifyOptions mo;
    mo.lr = opts.lr;
    mo.cutoffKind = opts.cutoffKind;
    MollifierOutput mout;
    try {
      mout = assemble(u, frame, schedule[std::size_t(nu - 1)], rec.eps, mo);
    } catch (const GridResolutionError& e) {
      rec.mollifyFailed = true;
      rec.gap = std::string("mollify failed: ") + e.what();
      run.records.push_back(std::move(rec));
      continue;
    }
    rec.bounds = mout.bounds;
    if (!mout.bounds.pass) rec.gap = "bounds not certified at this step";

    Field unu = mout.evaluateField(d, 0);
    JetField jets = mout.exactJet(d);
    // f_nu(x) = F(x, u_nu(x), jets(x))
    Field fnu = Field::zeros(d, TensorShape{F.M, d.dim(), 0});
    std::vector<SymTensor> tuple;
    for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
      if (!d.inDomain(f)) continue;
      tuple.clear();
      for (int q = 1; q <= F.p; ++q)
        tuple.push_back(jets.orders[std::size_t(q - 1)].tensorAt(f));
      auto x = d.cellCenter(f);
      auto val = F.evaluate(x, unu.at(f), tuple);
      auto dst = fnu.at(f);
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = val[k];
    }

    auto emb = DiscreteYoungMeasure::diracEmbed(jets, est.measure.scheme());
    rec.rhoToEstimate = weakStarDistance(emb, est.measure);

    Field fnorm = fnu.normField();
    Field jnorm = jets.stackedNormField();
    double supOff = 0.0, maxOnE = 0.0;
    for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
      if (!d.inDomain(f)) continue;
      double fv = fnorm.scalarAt(f);
      if (run.estInfCells.contains(f))
        maxOnE = std::max(maxOnE, fv);
      else
        supOff = std::max(supOff, fv);
    }
    rec.residualSupOffE = supOff;
    rec.maxOnExceptional = maxOnE;
    rec.fieldL1 = lrNorm(fnorm, 1.0);
    // a.e. trend off the exceptional set
    {
      CellSet off = exceedanceSet(fnorm, opts.convergenceTol);
      off.subtract(run.estInfCells);
      rec.aeOffendingMeasure = measureOf(d, off);
    }
    for (double R : opts.rGrid) {
      CellSet offendPhi = CellSet::empty(d);
      CellSet offendBall = CellSet::empty(d);
      for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
        if (!d.inDomain(f)) continue;
        double jv = jnorm.scalarAt(f);
        double fv = fnorm.scalarAt(f);
        double tent = std::clamp(2.0 - jv / R, 0.0, 1.0);
        if (tent * fv > opts.convergenceTol) offendPhi.insert(f);
        if (jv < R && fv > opts.convergenceTol) offendBall.insert(f);
      }
      rec.phiWeighted.push_back(measureOf(d, offendPhi));
      rec.ballRestricted.push_back(measureOf(d, offendBall));
    }
    for (double e : opts.epsGrid) {
      CellSet triple = CellSet::empty(d);
      for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
        if (!d.inDomain(f)) continue;
        if (fnorm.scalarAt(f) > e && jnorm.scalarAt(f) < 1.0 / e)
          triple.insert(f);
      }
      rec.tripleIntersection.push_back(measureOf(d, triple));
    }
    run.mollified.push_back(std::move(mout));
    run.fnu.push_back(std::move(fnu));
    run.records.push_back(std::move(rec));
  }
  return run;
}

namespace {

TrendReport makeTrend(std::vector<double> values, double tol) {
  TrendReport t;
  t.values = std::move(values);
  if (t.values.empty()) return t;
  t.decreasing = true;
  for (std::size_t k = 1; k < t.values.size(); ++k)
    if (t.values[k] > t.values[k - 1] * 1.1 + 1e-12) t.decreasing = false;
  t.last = t.values.back();
  t.converged = t.decreasing && t.last <= tol;
  return t;
}

nlohmann::json trendJson(const TrendReport& t) {
  nlohmann::json j;
  j["values"] = t.values;
  j["decreasing"] = t.decreasing;
  j["last"] = t.last;
  j["converged"] = t.converged;
  return j;
}

}  // namespace

Corollary12Report corollary12Diagnostics(const ApproximationRun& run,
                                         const DiffuseJetEstimate& est,
                                         std::span<const double> epsGrid,
                                         std::span<const double> rGrid,
                                         double tauInf, double convergenceTol) {
  const GridDomain& d = run.dom;
  Corollary12Report rep;
  rep.exceptionalEstimate = CellSet::empty(d);
  for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
    if (!d.inDomain(f)) continue;
    for (int c = 0; c < est.measure.componentCount(); ++c) {
      if (est.measure.infMass(c, f) > tauInf) {
        rep.exceptionalEstimate.insert(f);
        break;
      }
    }
  }
  rep.exceptionalMeasure = measureOf(d, rep.exceptionalEstimate);

  // Recompute the per-nu diagnostics on the requested grids from the stored
  // fields so the report does not depend on the run's own grids.
  std::size_t completed = run.fnu.size();
  std::vector<std::vector<double>> phi(rGrid.size()), ball(rGrid.size()),
      triple(epsGrid.size());
  std::vector<double> offE;
  for (std::size_t k = 0; k < completed; ++k) {
    Field fnorm = run.fnu[k].normField();
    JetField jets = run.mollified[k].exactJet(d);
    Field jnorm = jets.stackedNormField();
    for (std::size_t ri = 0; ri < rGrid.size(); ++ri) {
      double R = rGrid[ri];
      CellSet offendPhi = CellSet::empty(d), offendBall = CellSet::empty(d);
      for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
        if (!d.inDomain(f)) continue;
        double jv = jnorm.scalarAt(f), fv = fnorm.scalarAt(f);
        if (std::clamp(2.0 - jv / R, 0.0, 1.0) * fv > convergenceTol)
          offendPhi.insert(f);
        if (jv < R && fv > convergenceTol) offendBall.insert(f);
      }
      phi[ri].push_back(measureOf(d, offendPhi));
      ball[ri].push_back(measureOf(d, offendBall));
    }
    for (std::size_t ei = 0; ei < epsGrid.size(); ++ei) {
      double e = epsGrid[ei];
      CellSet tset = CellSet::empty(d);
      for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
        if (!d.inDomain(f)) continue;
        if (fnorm.scalarAt(f) > e && jnorm.scalarAt(f) < 1.0 / e) tset.insert(f);
      }
      triple[ei].push_back(measureOf(d, tset));
    }
    CellSet off = exceedanceSet(fnorm, convergenceTol);
    off.subtract(rep.exceptionalEstimate);
    offE.push_back(measureOf(d, off));
  }
  for (auto& v : phi) rep.phiWeighted.push_back(makeTrend(std::move(v), convergenceTol * d.measure()));
  for (auto& v : ball) rep.ballRestricted.push_back(makeTrend(std::move(v), convergenceTol * d.measure()));
  for (auto& v : triple) rep.tripleIntersection.push_back(makeTrend(std::move(v), convergenceTol * d.measure()));
  rep.offExceptional = makeTrend(std::move(offE), convergenceTol * d.measure());
  rep.modesAgree = true;
  for (std::size_t ri = 0; ri < rGrid.size(); ++ri)
    if (rep.phiWeighted[ri].converged != rep.ballRestricted[ri].converged)
      rep.modesAgree = false;
  return rep;
}

std::string ApproximationRun::toJson() const {
  nlohmann::json j;
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& rec : records) {
    nlohmann::json b;
    b["nu"] = rec.nu;
    b["eps"] = rec.eps;
    nlohmann::json bb;
    bb["sup_u"] = rec.bounds.supU;
    bb["sup_jet"] = rec.bounds.supJet;
    bb["measure_E"] = rec.bounds.measureE;
    if (rec.bounds.lrOrder)
      bb["lr"] = rec.bounds.lrValue;
    else
      bb["lr"] = nullptr;
    bb["pass"] = rec.bounds.pass;
    b["bounds"] = bb;
    b["rho_to_estimate"] = rec.rhoToEstimate;
    b["residual_sup_offE"] = rec.residualSupOffE;
    b["mode_3_30"] = rec.phiWeighted;
    b["mode_3_31a"] = rec.ballRestricted;
    b["mode_3_31b"] = rec.tripleIntersection;
    b["field_l1"] = rec.fieldL1;
    b["max_on_exceptional"] = rec.maxOnExceptional;
    b["ae_offending_measure"] = rec.aeOffendingMeasure;
    if (!rec.gap.empty()) b["gap"] = rec.gap;
    blocks.push_back(b);
  }
  j["per_nu"] = blocks;
  j["r_grid"] = rGrid;
  j["eps_grid"] = epsGrid;
  return j.dump();
}

std::string Corollary12Report::toJson() const {
  nlohmann::json j;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : ballRestricted) arr.push_back(trendJson(t));
  j["mode_3_31a"] = arr;
  arr = nlohmann::json::array();
  for (const auto& t : phiWeighted) arr.push_back(trendJson(t));
  j["mode_3_30"] = arr;
  arr = nlohmann::json::array();
  for (const auto& t : tripleIntersection) arr.push_back(trendJson(t));
  j["mode_3_31b"] = arr;
  j["exceptional_measure"] = exceptionalMeasure;
  j["off_exceptional"] = trendJson(offExceptional);
  j["modes_agree"] = modesAgree;
  return j.dump();
}

}  // namespace djet
