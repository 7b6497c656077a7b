#pragma once

#include <random>

#include "wdis/linalg.hpp"
#include "wdis/model.hpp"

namespace wdis::testing {

inline KPoint random_k(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return KPoint(u(rng), u(rng), u(rng));
}

inline CMat random_matrix(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  CMat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = cplx(n(rng), n(rng));
  return m;
}

inline CMat random_unitary(std::mt19937_64& rng, int n) { return unitarize(random_matrix(rng, n, n)); }

inline CMat random_projector(std::mt19937_64& rng, int dim, int rank) {
  CMat q = random_unitary(rng, dim).leftCols(rank);
  return q * q.adjoint();
}

}  // namespace wdis::testing
