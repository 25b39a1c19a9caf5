#pragma once

#include <string>
#include <vector>

#include "djet/grid.hpp"

namespace djet {

/// Removed open intervals (q_j - 3^-2j, q_j + 3^-2j) around the first J
/// rationals of [1/3, 2/3] in Stern-Brocot order (endpoints first, then
/// breadth-first mediants). The kept set K is [1/3, 2/3] minus their union.
std::vector<std::pair<double, double>> fatCantorRemovedIntervals(int J = 64);

/// Membership in the truncated fat Cantor set.
bool inFatCantorSet(double x, const std::vector<std::pair<double, double>>& removed);

/// Cantor function (devil's staircase) via the ternary construction,
/// iterated to the given depth.
double cantorFunctionValue(double x, int depth = 40);

/// Built-in scalar corpus on a 1D domain:
///   zero, constant (= 1), linear (x), quadratic (x^2), sin (sin pi x),
///   cantor-function, fat-cantor-indicator.
/// Throws std::invalid_argument for unknown names.
Field makeInput(const std::string& name, const GridDomain& dom, int fatCantorJ = 64);

/// Names accepted by makeInput.
std::vector<std::string> inputNames();

}  // namespace djet
