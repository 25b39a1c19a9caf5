#include "djet/systems.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace djet {

namespace {

// [Du]^perp = I - U_r U_r^T over the singular vectors with sigma > threshold.
Eigen::MatrixXd rangePerp(const Eigen::MatrixXd& Du, double threshold) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Du, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(Du.rows(), Du.rows());
  for (int k = 0; k < sv.size(); ++k) {
    if (sv[k] > threshold) {
      Eigen::VectorXd uk = svd.matrixU().col(k);
      P -= uk * uk.transpose();
    }
  }
  return P;
}

}  // namespace

std::vector<SystemF> builtinSystems(int n, int N) {
  std::vector<SystemF> cat;

  if (n == 1 && N == 1) {
    SystemF dz;
    dz.name = "derivative-zero";
    dz.n = 1;
    dz.N = 1;
    dz.M = 1;
    dz.p = 1;
    dz.evaluate = [](std::span<const double>, std::span<const double>,
                     const std::vector<SymTensor>& jet) {
      return std::vector<double>{jet[0].data()[0]};
    };
    cat.push_back(std::move(dz));
  }

  if (N == 1) {
    SystemF tr;
    tr.name = "transport";
    tr.n = n;
    tr.N = 1;
    tr.M = 1;
    tr.p = 1;
    tr.evaluate = [n](std::span<const double>, std::span<const double>,
                      const std::vector<SymTensor>& jet) {
      // constant drift (1, 1, ...)/sqrt(n)
      double s = 0.0;
      auto d = jet[0].data();
      for (int i = 0; i < n; ++i) s += d[std::size_t(i)];
      return std::vector<double>{s / std::sqrt(double(n))};
    };
    cat.push_back(std::move(tr));

    SystemF eik;
    eik.name = "eikonal";
    eik.n = n;
    eik.N = 1;
    eik.M = 1;
    eik.p = 1;
    eik.evaluate = [](std::span<const double>, std::span<const double>,
                      const std::vector<SymTensor>& jet) {
      return std::vector<double>{jet[0].norm() - 1.0};
    };
    cat.push_back(std::move(eik));
  }

  SystemF il;
  il.name = "infinity-laplace";
  il.n = n;
  il.N = N;
  il.M = N;
  il.p = 2;
  il.evaluate = [n, N](std::span<const double>, std::span<const double>,
                       const std::vector<SymTensor>& jet) {
    // Du as an N x n matrix, D2u as (N, n, n).
    const SymTensor& Du = jet[0];
    const SymTensor& D2u = jet[1];
    Eigen::MatrixXd G(N, n);
    for (int a = 0; a < N; ++a)
      for (int i = 0; i < n; ++i) {
        int idx[1] = {i};
        G(a, i) = Du.at(a, idx);
      }
    double g2 = G.squaredNorm();
    Eigen::MatrixXd P = rangePerp(G, 1e-10);
    std::vector<double> out(std::size_t(N), 0.0);
    for (int a = 0; a < N; ++a) {
      double acc = 0.0;
      for (int b = 0; b < N; ++b)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            int ij[2] = {i, j};
            double coef = G(a, i) * G(b, j) + g2 * P(a, b) * (i == j ? 1.0 : 0.0);
            acc += coef * D2u.at(b, ij);
          }
      out[std::size_t(a)] = acc;
    }
    return out;
  };
  cat.push_back(std::move(il));

  return cat;
}

SystemF findSystem(const std::string& name, int n, int N) {
  for (auto& s : builtinSystems(n, N))
    if (s.name == name) return s;
  throw std::invalid_argument("unknown system: " + name);
}

}  // namespace djet
