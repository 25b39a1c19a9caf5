#include "djet/diffuse.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace djet {

namespace {

bool gapTraceConverged(std::span<const double> trace, double rhoTol) {
  if (trace.empty()) return false;
  if (trace.back() > rhoTol) return false;
  // tail nonincreasing within 10% slack
  std::size_t tail = std::min<std::size_t>(3, trace.size());
  for (std::size_t k = trace.size() - tail + 1; k < trace.size(); ++k)
    if (trace[k] > trace[k - 1] * 1.1 + 1e-15) return false;
  return true;
}

}  // namespace

DiffuseJetEstimate estimateDiffuseJet(const Field& u, const Frame& f,
                                      std::span<const StepMatrix> schedule,
                                      const DiffuseJetOptions& opts) {
  if (schedule.size() < 3)
    throw std::invalid_argument("estimateDiffuseJet: need at least 3 steps");
  DiffuseJetEstimate est;
  est.schedule.assign(schedule.begin(), schedule.end());
  est.rhoTol = opts.rhoTol;

  JetField coarsest = jetOfQuotients(u, f, schedule[0], opts.resample);
  BinScheme scheme = opts.scheme ? *opts.scheme : schemeFromJet(coarsest);

  auto embed = [&](const JetField& jet) {
    auto m = DiscreteYoungMeasure::diracEmbed(jet, scheme);
    if (opts.spatialWindow > 0) m = m.spatialWindowAverage(opts.spatialWindow);
    return m;
  };

  std::vector<DiscreteYoungMeasure> embeddings;
  embeddings.reserve(schedule.size());
  embeddings.push_back(embed(coarsest));
  for (std::size_t k = 1; k < schedule.size(); ++k) {
    JetField jet = jetOfQuotients(u, f, schedule[k], opts.resample);
    embeddings.push_back(embed(jet));
    est.rhoTrace.push_back(
        weakStarDistance(embeddings[k - 1], embeddings[k], opts.kmax));
  }
  est.measure = embeddings.back();
  est.converged = gapTraceConverged(est.rhoTrace, opts.rhoTol);

  // Disjoint sub-schedules (even / odd indices) as independent candidates.
  if (embeddings.size() >= 4) {
    const DiscreteYoungMeasure& evenLast =
        embeddings[(embeddings.size() - 1) & ~std::size_t(1)];
    const DiscreteYoungMeasure& oddLast =
        embeddings[embeddings.size() - 1 - (embeddings.size() % 2)];
    double split = weakStarDistance(evenLast, oddLast, opts.kmax);
    est.subScheduleSplit = split;
    est.nonUniquenessSuspected = split > 3.0 * opts.rhoTol;
  }
  return est;
}

std::string DiffuseJetEstimate::traceJson() const {
  nlohmann::json j;
  j["rho_trace"] = rhoTrace;
  j["converged"] = converged;
  nlohmann::json sched = nlohmann::json::array();
  for (const auto& H : schedule) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : H.rows) rows.push_back(r);
    sched.push_back(rows);
  }
  j["schedule"] = sched;
  if (subScheduleSplit) {
    j["sub_schedule_split"] = *subScheduleSplit;
    j["nonuniqueness_suspected"] = nonUniquenessSuspected;
  }
  return j.dump();
}

bool checkLemma8(const Field& u, const JetField& exactJet,
                 const DiffuseJetEstimate& est, double tau,
                 double cellFraction) {
  (void)u;
  const GridDomain& d = exactJet.dom;
  const BinScheme& scheme = est.measure.scheme();
  if (int(scheme.comps.size()) != int(exactJet.orders.size()))
    throw std::invalid_argument("checkLemma8: order count mismatch");
  std::size_t good = 0, total = 0;
  for (std::size_t f = 0; f < d.boxCellCount(); ++f) {
    if (!d.inDomain(f)) continue;
    ++total;
    bool allOrders = true;
    for (std::size_t c = 0; c < scheme.comps.size(); ++c) {
      std::int64_t bin = scheme.comps[c].binOf(exactJet.orders[c].at(f));
      if (est.measure.mass(int(c), f, bin) < 1.0 - tau) {
        allOrders = false;
        break;
      }
    }
    if (allOrders) ++good;
  }
  return total > 0 && double(good) >= cellFraction * double(total);
}

}  // namespace djet
