#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "djet/diffuse.hpp"
#include "djet/inputs.hpp"
#include "djet/mollify.hpp"
#include "djet/pipeline.hpp"

namespace py = pybind11;
using namespace djet;

namespace {

GridDomain makeDomain(std::int64_t cells, double lo, double hi) {
  return GridDomain::box1(lo, hi, cells);
}

Field fieldFromArray(const GridDomain& d, py::array_t<double> values) {
  auto buf = values.request();
  if (buf.ndim != 1 || std::size_t(buf.shape[0]) != d.boxCellCount())
    throw std::invalid_argument("values must be a 1D array with one entry per cell");
  std::vector<double> data(static_cast<double*>(buf.ptr),
                           static_cast<double*>(buf.ptr) + buf.shape[0]);
  return Field::fromData(d, TensorShape{1, 1, 0}, std::move(data));
}

py::array_t<double> arrayFromField(const Field& f) {
  py::array_t<double> out(f.raw().size());
  std::copy(f.raw().begin(), f.raw().end(), static_cast<double*>(out.request().ptr));
  return out;
}

std::vector<StepMatrix> scheduleOf(const GridDomain& d, int p,
                                   std::int64_t h0Cells, double decay,
                                   int steps) {
  return stepSchedule(p, double(h0Cells) * d.cellSize(), decay, steps,
                      d.cellSize());
}

}  // namespace

PYBIND11_MODULE(_djet, m) {
  m.doc() = "Diffuse-jet diagnostics for grid-sampled maps";

  m.def("input_names", &inputNames);
  m.def("system_names", [](int n, int N) {
    std::vector<std::string> out;
    for (const auto& s : builtinSystems(n, N)) out.push_back(s.name);
    return out;
  },
        py::arg("n") = 1, py::arg("N") = 1);

  m.def(
      "input_field",
      [](const std::string& name, std::int64_t cells, double lo, double hi,
         int fatCantorJ) {
        GridDomain d = makeDomain(cells, lo, hi);
        return arrayFromField(makeInput(name, d, fatCantorJ));
      },
      py::arg("name"), py::arg("cells"), py::arg("lo") = 0.0,
      py::arg("hi") = 1.0, py::arg("fat_cantor_j") = 64,
      "Sample a built-in input on a uniform 1D grid (cell centers).");

  m.def(
      "chordal_distance",
      [](py::object x, py::object y) {
        auto toValue = [](py::object o) {
          if (o.is_none()) return CompactifiedValue::infinity(TensorShape{1, 1, 0});
          auto arr = o.cast<py::array_t<double>>();
          auto buf = arr.request();
          std::vector<double> data(static_cast<double*>(buf.ptr),
                                   static_cast<double*>(buf.ptr) + buf.size);
          TensorShape s{int(data.size()), 1, 0};
          return CompactifiedValue::of(SymTensor::fromDataUnchecked(s, data));
        };
        return chordalDistance(toValue(x), toValue(y));
      },
      py::arg("x"), py::arg("y"),
      "Chordal metric on the one-point compactification; None is infinity.");

  m.def(
      "estimate_diffuse_jet",
      [](py::array_t<double> values, std::int64_t cells, double lo, double hi,
         int p, std::int64_t h0Cells, double decay, int steps, double rhoTol) {
        GridDomain d = makeDomain(cells, lo, hi);
        Field u = fieldFromArray(d, values);
        DiffuseJetOptions opts;
        opts.rhoTol = rhoTol;
        auto est = estimateDiffuseJet(u, Frame::standard(1, 1),
                                      scheduleOf(d, p, h0Cells, decay, steps),
                                      opts);
        py::array_t<double> infMass(d.boxCellCount());
        auto ptr = static_cast<double*>(infMass.request().ptr);
        for (std::size_t f = 0; f < d.boxCellCount(); ++f)
          ptr[f] = est.measure.infMass(0, f);
        py::dict out;
        out["converged"] = est.converged;
        out["rho_trace"] = est.rhoTrace;
        out["inf_mass"] = infMass;
        out["scheme_json"] = est.measure.scheme().toJson();
        return out;
      },
      py::arg("values"), py::arg("cells"), py::arg("lo") = 0.0,
      py::arg("hi") = 1.0, py::arg("p") = 1, py::arg("h0_cells") = 27,
      py::arg("decay") = 1.0 / 3.0, py::arg("steps") = 3,
      py::arg("rho_tol") = 1e-3,
      "Estimate the diffuse jet of a sampled map; returns the trace and the "
      "per-cell infinity mass of the first order.");

  m.def(
      "mollify",
      [](py::array_t<double> values, std::int64_t cells, double lo, double hi,
         int p, double eps, std::int64_t hCells, py::object lr) {
        GridDomain d = makeDomain(cells, lo, hi);
        Field u = fieldFromArray(d, values);
        MollifyOptions mo;
        if (!lr.is_none()) mo.lr = lr.cast<double>();
        auto out = assemble(u, Frame::standard(1, 1),
                            StepMatrix::uniform(p, double(hCells) * d.cellSize()),
                            eps, mo);
        py::dict r;
        r["pass"] = out.bounds.pass;
        r["sup_u"] = out.bounds.supU;
        r["sup_jet"] = out.bounds.supJet;
        r["measure_E"] = out.bounds.measureE;
        if (out.bounds.lrOrder) r["lr"] = out.bounds.lrValue;
        r["delta"] = out.delta;
        r["alpha"] = out.alpha;
        r["R"] = out.R;
        r["json"] = out.toJson();
        r["values"] = arrayFromField(out.evaluateField(d, 0));
        r["derivative"] = arrayFromField(out.evaluateField(d, 1));
        return r;
      },
      py::arg("values"), py::arg("cells"), py::arg("lo") = 0.0,
      py::arg("hi") = 1.0, py::arg("p") = 1, py::arg("eps") = 0.1,
      py::arg("h_cells") = 9, py::arg("lr") = py::none(),
      "Build the smooth patchwork approximation and report its certified "
      "bounds.");

  m.def(
      "evaluate_mollified",
      [](const std::string& json, py::array_t<double> xs, int k) {
        MollifierOutput out = MollifierOutput::fromJson(json);
        auto buf = xs.request();
        py::array_t<double> res(buf.size);
        auto* src = static_cast<double*>(buf.ptr);
        auto* dst = static_cast<double*>(res.request().ptr);
        for (py::ssize_t i = 0; i < buf.size; ++i) {
          std::vector<double> x = {src[i]};
          dst[i] = out.evaluate(x, k).data()[0];
        }
        return res;
      },
      py::arg("json"), py::arg("xs"), py::arg("k") = 0,
      "Evaluate a serialized patchwork (or its k-th derivative) at points.");

  m.def(
      "check_dsolution",
      [](py::array_t<double> values, const std::string& system,
         std::int64_t cells, double lo, double hi, int p, std::int64_t h0Cells,
         double decay, int steps, double tau, double tol, double massBudget,
         bool overrideUnconverged) {
        GridDomain d = makeDomain(cells, lo, hi);
        Field u = fieldFromArray(d, values);
        auto est = estimateDiffuseJet(u, Frame::standard(1, 1),
                                      scheduleOf(d, p, h0Cells, decay, steps));
        SystemF F = findSystem(system, 1, 1);
        ResidualOptions ro;
        ro.tau = tau;
        ro.tol = tol;
        ro.massBudget = massBudget;
        ro.overrideUnconverged = overrideUnconverged;
        auto rf = residual(u, est, F, ro);
        py::dict out;
        out["pass"] = rf.pass;
        out["offending_measure"] = rf.offendingMeasure;
        out["estimate_converged"] = est.converged;
        out["residual"] = arrayFromField(rf.r);
        return out;
      },
      py::arg("values"), py::arg("system"), py::arg("cells"),
      py::arg("lo") = 0.0, py::arg("hi") = 1.0, py::arg("p") = 1,
      py::arg("h0_cells") = 27, py::arg("decay") = 1.0 / 3.0,
      py::arg("steps") = 3, py::arg("tau") = 0.05, py::arg("tol") = 0.1,
      py::arg("mass_budget") = -1.0, py::arg("override_unconverged") = false,
      "Generalized-solution residual check against a built-in system.");

  m.def(
      "run_approximation",
      [](py::array_t<double> values, const std::string& system,
         std::int64_t cells, double lo, double hi, int p, std::int64_t h0Cells,
         double decay, int nuMax) {
        GridDomain d = makeDomain(cells, lo, hi);
        Field u = fieldFromArray(d, values);
        auto sched = scheduleOf(d, p, h0Cells, decay, nuMax);
        auto est = estimateDiffuseJet(u, Frame::standard(1, 1), sched);
        SystemF F = findSystem(system, 1, 1);
        auto run = runApproximation(u, F, Frame::standard(1, 1), sched, est, {});
        auto rep = corollary12Diagnostics(run, est, run.epsGrid, run.rGrid);
        py::dict out;
        out["run_json"] = run.toJson();
        out["corollary_json"] = rep.toJson();
        std::vector<double> l1, maxE, offE;
        for (const auto& rec : run.records) {
          l1.push_back(rec.fieldL1);
          maxE.push_back(rec.maxOnExceptional);
          offE.push_back(rec.aeOffendingMeasure);
        }
        out["field_l1"] = l1;
        out["max_on_exceptional"] = maxE;
        out["ae_offending_measure"] = offE;
        return out;
      },
      py::arg("values"), py::arg("system"), py::arg("cells"),
      py::arg("lo") = 0.0, py::arg("hi") = 1.0, py::arg("p") = 1,
      py::arg("h0_cells") = 729, py::arg("decay") = 0.5, py::arg("nu_max") = 4,
      "Run the smooth-approximation scheme and collect the convergence "
      "diagnostics.");

  m.attr("__version__") = "0.1.0";
}
