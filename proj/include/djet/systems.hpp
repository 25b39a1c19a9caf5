#pragma once

#include <functional>
#include <string>
#include <vector>

#include "djet/tensor.hpp"

namespace djet {

/// Evaluable system F(x, u, jet) -> R^M. The evaluator must be total on
/// finite inputs and is never called at infinity (reduced supports exclude
/// it). Evaluators are pure and thread-safe.
struct SystemF {
  std::string name;
  int n = 1, N = 1, M = 1, p = 1;
  bool xContinuous = true;
  std::function<std::vector<double>(std::span<const double> x,
                                    std::span<const double> u,
                                    const std::vector<SymTensor>& jet)>
      evaluate;
};

/// Built-in catalog for the given dimensions:
///   derivative-zero   u' = 0                (n = N = 1, p = 1)
///   transport         a . Du = 0            (N = 1, p = 1)
///   eikonal           |Du| - 1 = 0          (N = 1, p = 1)
///   infinity-laplace  (Du (x) Du + |Du|^2 [Du]^perp (x) I) : D^2 u = 0
///                     (p = 2), with [Du]^perp the orthogonal projection
///                     onto the orthogonal complement of the range of Du,
///                     rank-revealed with singular value threshold 1e-10.
std::vector<SystemF> builtinSystems(int n = 1, int N = 1);

/// Lookup by name; throws std::invalid_argument for unknown names.
SystemF findSystem(const std::string& name, int n = 1, int N = 1);

}  // namespace djet
