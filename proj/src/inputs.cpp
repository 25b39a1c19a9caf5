#include "djet/inputs.hpp"

#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>

namespace djet {

std::vector<std::pair<double, double>> fatCantorRemovedIntervals(int J) {
  // Stern-Brocot enumeration of the rationals in [1/3, 2/3]: the endpoints,
  // then breadth-first mediants of the bracketing fractions.
  struct Frac {
    std::int64_t num, den;
    double value() const { return double(num) / double(den); }
  };
  std::vector<double> qs;
  qs.push_back(1.0 / 3.0);
  qs.push_back(2.0 / 3.0);
  std::deque<std::pair<Frac, Frac>> queue;
  queue.push_back({{1, 3}, {2, 3}});
  while (int(qs.size()) < J && !queue.empty()) {
    auto [lo, hi] = queue.front();
    queue.pop_front();
    Frac med{lo.num + hi.num, lo.den + hi.den};
    qs.push_back(med.value());
    queue.push_back({lo, med});
    queue.push_back({med, hi});
  }
  qs.resize(std::size_t(std::min<int>(J, int(qs.size()))));
  std::vector<std::pair<double, double>> removed;
  removed.reserve(qs.size());
  double radius = 1.0;
  for (std::size_t j = 0; j < qs.size(); ++j) {
    radius /= 9.0;  // 3^{-2(j+1)}
    removed.push_back({qs[j] - radius, qs[j] + radius});
  }
  return removed;
}

bool inFatCantorSet(double x,
                    const std::vector<std::pair<double, double>>& removed) {
  if (x < 1.0 / 3.0 || x > 2.0 / 3.0) return false;
  for (const auto& [a, b] : removed)
    if (x > a && x < b) return false;
  return true;
}

double cantorFunctionValue(double x, int depth) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double y = 0.0, scale = 0.5;
  for (int k = 0; k < depth; ++k) {
    x *= 3.0;
    if (x >= 2.0) {
      y += scale;
      x -= 2.0;
    } else if (x >= 1.0) {
      return y + scale;  // inside a removed middle third: plateau value
    }
    scale *= 0.5;
  }
  return y;
}

Field makeInput(const std::string& name, const GridDomain& dom, int fatCantorJ) {
  if (dom.dim() != 1)
    throw std::invalid_argument("makeInput: built-in corpus is 1D");
  TensorShape scalar{1, 1, 0};
  auto scalarField = [&](auto&& fn) {
    return Field::fromFunction(dom, scalar,
                               [&](std::span<const double> x, std::span<double> out) {
                                 out[0] = fn(x[0]);
                               });
  };
  if (name == "zero") return scalarField([](double) { return 0.0; });
  if (name == "constant") return scalarField([](double) { return 1.0; });
  if (name == "linear") return scalarField([](double x) { return x; });
  if (name == "quadratic") return scalarField([](double x) { return x * x; });
  if (name == "sin")
    return scalarField([](double x) { return std::sin(M_PI * x); });
  if (name == "cantor-function") {
    // Depth chosen so the construction is resolved past the grid scale.
    int depth = int(std::ceil(std::log(1.0 / dom.cellSize()) / std::log(3.0))) + 2;
    return scalarField([&](double x) { return cantorFunctionValue(x, depth); });
  }
  if (name == "fat-cantor-indicator") {
    auto removed = fatCantorRemovedIntervals(fatCantorJ);
    return scalarField(
        [&](double x) { return inFatCantorSet(x, removed) ? 1.0 : 0.0; });
  }
  throw std::invalid_argument("makeInput: unknown input '" + name + "'");
}

std::vector<std::string> inputNames() {
  return {"zero",  "constant",        "linear",
          "quadratic", "sin",         "cantor-function",
          "fat-cantor-indicator"};
}

}  // namespace djet
