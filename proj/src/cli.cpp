#include "djet/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "djet/diffuse.hpp"
#include "djet/inputs.hpp"
#include "djet/mollify.hpp"
#include "djet/pipeline.hpp"

namespace djet {

namespace {

constexpr const char* kVersion = "djet 0.1.0";

GridDomain domainFor(const RunConfig& cfg) {
  return GridDomain::box1(cfg.domainLo, cfg.domainHi, cfg.cells);
}

Field loadInput(const RunConfig& cfg, const GridDomain& dom) {
  if (std::filesystem::exists(cfg.input) &&
      cfg.input.find(".csv") != std::string::npos)
    return readFieldCsv(cfg.input);
  return makeInput(cfg.input, dom, cfg.fatCantorJ);
}

std::vector<StepMatrix> scheduleFor(const RunConfig& cfg, const GridDomain& dom,
                                    int count) {
  double g = dom.cellSize();
  std::int64_t h0 = cfg.h0Cells;
  if (h0 <= 0) {
    std::int64_t maxExt = 0;
    for (int a = 0; a < dom.dim(); ++a)
      maxExt = std::max(maxExt, dom.extents()[std::size_t(a)]);
    h0 = std::max<std::int64_t>(9, maxExt / 729);
    // keep the finest step at or above one cell
    while (double(h0) * std::pow(cfg.decay, count - 1) < 1.0 && h0 < maxExt / 2)
      h0 *= 2;
  }
  return stepSchedule(cfg.p, double(h0) * g, cfg.decay, count, g);
}

void writeText(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << text;
}

nlohmann::json provenance(const RunConfig& cfg, const std::string& command) {
  nlohmann::json p;
  p["version"] = kVersion;
  p["command"] = command;
  p["config"] = nlohmann::json::parse(cfg.provenanceJson(command))["config"];
  return p;
}

struct StagedExit {
  int code;
  std::string message;
};

int cmdExample(const RunConfig& cfg) {
  GridDomain dom = domainFor(cfg);
  Field u = loadInput(cfg, dom);
  std::filesystem::create_directories(cfg.outDir);
  writeFieldCsv(cfg.outDir + "/input.csv", u);
  nlohmann::json j;
  j["provenance"] = provenance(cfg, "example");
  j["available_inputs"] = inputNames();
  j["written"] = cfg.outDir + "/input.csv";
  writeText(cfg.outDir + "/report.json", j.dump(2));
  std::cout << "wrote " << cfg.outDir << "/input.csv\n";
  return 0;
}

DiffuseJetEstimate makeEstimate(const RunConfig& cfg, const GridDomain& dom,
                                const Field& u) {
  auto sched = scheduleFor(cfg, dom, cfg.steps);
  DiffuseJetOptions opts;
  opts.rhoTol = cfg.rhoTol;
  opts.spatialWindow = cfg.window;
  Frame f = Frame::standard(u.shape().N, dom.dim());
  return estimateDiffuseJet(u, f, sched, opts);
}

void writeEstimateArtifacts(const RunConfig& cfg,
                            const DiffuseJetEstimate& est) {
  std::filesystem::create_directories(cfg.outDir);
  est.measure.writeCsv(cfg.outDir + "/estimate_measure.csv");
  writeText(cfg.outDir + "/estimate_scheme.json", est.measure.scheme().toJson());
  writeText(cfg.outDir + "/estimate_trace.json", est.traceJson());
}

int cmdDiffuseJet(const RunConfig& cfg) {
  GridDomain dom = domainFor(cfg);
  Field u = loadInput(cfg, dom);
  DiffuseJetEstimate est = makeEstimate(cfg, dom, u);
  writeEstimateArtifacts(cfg, est);
  nlohmann::json j;
  j["provenance"] = provenance(cfg, "diffuse-jet");
  j["converged"] = est.converged;
  j["rho_trace"] = est.rhoTrace;
  writeText(cfg.outDir + "/report.json", j.dump(2));
  if (!est.converged) {
    std::cerr << "diffuse-jet: trace did not stabilize below rho_tol\n";
    return 3;
  }
  return 0;
}

int cmdMollify(const RunConfig& cfg) {
  GridDomain dom = domainFor(cfg);
  Field u = loadInput(cfg, dom);
  Frame f = Frame::standard(u.shape().N, dom.dim());
  auto sched = scheduleFor(cfg, dom, 1);
  MollifyOptions mo;
  mo.lr = cfg.lr;
  mo.cutoffKind = cfg.cutoff == "poly" ? CutoffSpec::Kind::PolySmoothstep
                                       : CutoffSpec::Kind::SmoothExp;
  std::filesystem::create_directories(cfg.outDir);
  nlohmann::json j;
  j["provenance"] = provenance(cfg, "mollify");
  try {
    MollifierOutput out = assemble(u, f, sched[0], cfg.eps, mo);
    writeText(cfg.outDir + "/mollifier.json", out.toJson());
    j["bounds"] = nlohmann::json::parse(out.toJson())["bounds"];
    writeText(cfg.outDir + "/report.json", j.dump(2));
    if (!out.bounds.pass) {
      std::cerr << "mollify: bounds not satisfied (sup_u=" << out.bounds.supU
                << " sup_jet=" << out.bounds.supJet
                << " |E|=" << out.bounds.measureE << ")\n";
      return 3;
    }
    return 0;
  } catch (const GridResolutionError& e) {
    j["error"] = {{"inequality", e.inequality}, {"message", e.what()}};
    writeText(cfg.outDir + "/report.json", j.dump(2));
    std::cerr << "mollify: " << e.what() << "\n";
    return 3;
  }
}

int cmdCheckDSolution(const RunConfig& cfg) {
  GridDomain dom = domainFor(cfg);
  Field u = loadInput(cfg, dom);
  SystemF F = findSystem(cfg.system, dom.dim(), u.shape().N);
  RunConfig estCfg = cfg;
  estCfg.p = F.p;  // the estimate's jet order must match the system
  DiffuseJetEstimate est = makeEstimate(estCfg, dom, u);
  writeEstimateArtifacts(cfg, est);
  nlohmann::json j;
  j["provenance"] = provenance(cfg, "check-dsolution");
  j["estimate_converged"] = est.converged;
  if (!est.converged && !cfg.overrideUnconverged) {
    writeText(cfg.outDir + "/report.json", j.dump(2));
    std::cerr << "check-dsolution: estimate did not converge\n";
    return 3;
  }
  ResidualOptions ro;
  ro.tau = cfg.tau;
  ro.tol = cfg.residualTol;
  ro.massBudget = cfg.massBudget;
  ro.overrideUnconverged = true;  // convergence already gated above
  ResidualField rf = residual(u, est, F, ro);
  writeFieldCsv(cfg.outDir + "/residual.csv", rf.r);
  j["residual"] = {{"tol", rf.tol},
                   {"offending_measure", rf.offendingMeasure},
                   {"pass", rf.pass}};
  writeText(cfg.outDir + "/report.json", j.dump(2));
  if (!rf.pass) {
    std::cerr << "check-dsolution: offending measure " << rf.offendingMeasure
              << " exceeds budget\n";
    return 4;
  }
  return 0;
}

int cmdApproximate(const RunConfig& cfg) {
  GridDomain dom = domainFor(cfg);
  Field u = loadInput(cfg, dom);
  SystemF F = findSystem(cfg.system, dom.dim(), u.shape().N);
  RunConfig estCfg = cfg;
  estCfg.steps = std::max(cfg.steps, 3);
  estCfg.p = F.p;
  DiffuseJetEstimate est = makeEstimate(estCfg, dom, u);
  writeEstimateArtifacts(cfg, est);
  auto sched = scheduleFor(estCfg, dom, cfg.nuMax);
  RunOptions ro;
  ro.lr = cfg.lr;
  ro.tauInf = cfg.tauInf;
  ro.convergenceTol = cfg.convergenceTol;
  ApproximationRun run = runApproximation(u, F, Frame::standard(u.shape().N, dom.dim()),
                                          sched, est, ro);
  Corollary12Report rep = corollary12Diagnostics(run, est, run.epsGrid,
                                                 run.rGrid, cfg.tauInf,
                                                 cfg.convergenceTol);
  std::filesystem::create_directories(cfg.outDir);
  for (std::size_t k = 0; k < run.fnu.size(); ++k)
    writeFieldCsv(cfg.outDir + "/fnu_" + std::to_string(k + 1) + ".csv",
                  run.fnu[k]);
  nlohmann::json j;
  j["provenance"] = provenance(cfg, "approximate");
  j["run"] = nlohmann::json::parse(run.toJson());
  j["corollary"] = nlohmann::json::parse(rep.toJson());
  writeText(cfg.outDir + "/report.json", j.dump(2));
  return 0;
}

}  // namespace

std::string RunConfig::provenanceJson(const std::string& command) const {
  nlohmann::json c;
  c["domain_lo"] = domainLo;
  c["domain_hi"] = domainHi;
  c["cells"] = cells;
  c["input"] = input;
  c["system"] = system;
  c["p"] = p;
  c["eps"] = eps;
  if (lr) c["lr"] = *lr;
  c["out"] = outDir;
  c["seed"] = seed;
  c["h0_cells"] = h0Cells;
  c["decay"] = decay;
  c["steps"] = steps;
  c["nu_max"] = nuMax;
  c["rho_tol"] = rhoTol;
  c["tau"] = tau;
  c["tau_inf"] = tauInf;
  c["mass_budget"] = massBudget;
  c["residual_tol"] = residualTol;
  c["convergence_tol"] = convergenceTol;
  c["bins_scalar"] = binsScalar;
  c["bins_multi"] = binsMulti;
  c["fat_cantor_j"] = fatCantorJ;
  c["window"] = window;
  c["override_unconverged"] = overrideUnconverged;
  c["cutoff"] = cutoff;
  nlohmann::json j;
  j["command"] = command;
  j["config"] = c;
  return j.dump();
}

namespace {

/// Expand `--config FILE` into `--key=value` tokens placed before the other
/// flags, so explicit flags override the file.
std::vector<std::string> expandConfig(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string configPath;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) {
      configPath = args[++k];
    } else if (args[k].rfind("--config=", 0) == 0) {
      configPath = args[k].substr(9);
    } else {
      rest.push_back(args[k]);
    }
  }
  if (configPath.empty()) return rest;
  std::ifstream in(configPath);
  if (!in) throw std::invalid_argument("cannot open config file " + configPath);
  std::vector<std::string> fromFile;
  std::string line;
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == '[') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line is not key=value: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    fromFile.push_back("--" + key + "=" + value);
  }
  // subcommand first, then config-derived tokens, then explicit flags
  std::vector<std::string> out;
  std::size_t k = 0;
  if (!rest.empty() && rest[0][0] != '-') out.push_back(rest[k++]);
  out.insert(out.end(), fromFile.begin(), fromFile.end());
  for (; k < rest.size(); ++k) out.push_back(rest[k]);
  return out;
}

}  // namespace

int runCli(const std::vector<std::string>& rawArgs) {
  CLI::App app{"Generalized-solution diagnostics for grid-sampled maps"};
  RunConfig cfg;
  std::vector<std::string> args;
  try {
    args = expandConfig(rawArgs);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  auto addCommon = [&](CLI::App* sub) {
    sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    sub->add_option("--input", cfg.input, "built-in input name or CSV path");
    sub->add_option("--system", cfg.system, "built-in system name");
    sub->add_option("--p", cfg.p, "jet order");
    sub->add_option("--eps", cfg.eps, "target accuracy");
    sub->add_option("--lr", [&cfg](const std::vector<std::string>& vals) {
      cfg.lr = std::stod(vals[0]);
      return true;
    }, "additionally verify the L^r bound");
    sub->add_option("--out", cfg.outDir, "output directory");
    sub->add_option("--seed", cfg.seed, "seed recorded in provenance");
    sub->add_option("--domain-lo", cfg.domainLo);
    sub->add_option("--domain-hi", cfg.domainHi);
    sub->add_option("--cells", cfg.cells, "grid cells");
    sub->add_option("--h0-cells", cfg.h0Cells, "coarsest step in cells (0 = auto)");
    sub->add_option("--decay", cfg.decay, "schedule decay factor");
    sub->add_option("--steps", cfg.steps, "schedule length");
    sub->add_option("--nu-max", cfg.nuMax, "approximation sequence length");
    sub->add_option("--rho-tol", cfg.rhoTol);
    sub->add_option("--tau", cfg.tau, "reduced-support mass threshold");
    sub->add_option("--tau-inf", cfg.tauInf, "infinity-mass threshold");
    sub->add_option("--mass-budget", cfg.massBudget);
    sub->add_option("--residual-tol", cfg.residualTol);
    sub->add_option("--convergence-tol", cfg.convergenceTol);
    sub->add_option("--bins", cfg.binsScalar, "bins per axis (scalar components)");
    sub->add_option("--fat-cantor-j", cfg.fatCantorJ);
    sub->add_option("--window", cfg.window, "histogram window radius");
    sub->add_flag("--override-unconverged", cfg.overrideUnconverged);
    sub->add_option("--cutoff", cfg.cutoff, "smooth-exp or poly");
  };

  auto* cDj = app.add_subcommand("diffuse-jet", "estimate a diffuse jet");
  auto* cMol = app.add_subcommand("mollify", "build the smooth approximation");
  auto* cChk = app.add_subcommand("check-dsolution", "generalized-solution check");
  auto* cApp = app.add_subcommand("approximate", "run the approximation scheme");
  auto* cEx = app.add_subcommand("example", "emit a built-in example field");
  for (auto* sub : {cDj, cMol, cChk, cApp, cEx}) addCommon(sub);
  app.require_subcommand(1);

  std::vector<const char*> argv;
  argv.push_back("djet");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (cEx->parsed()) return cmdExample(cfg);
    if (cDj->parsed()) return cmdDiffuseJet(cfg);
    if (cMol->parsed()) return cmdMollify(cfg);
    if (cChk->parsed()) return cmdCheckDSolution(cfg);
    if (cApp->parsed()) return cmdApproximate(cfg);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace djet
