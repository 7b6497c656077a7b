#pragma once

#include <array>
#include <vector>

#include "wdis/linalg.hpp"
#include "wdis/model.hpp"

namespace wdis {

// Uniform periodic k-grid; node (i, j, l) sits at (i / n1, j / n2, l / n3).
struct KGrid {
  std::array<int, 3> n{0, 0, 0};

  KGrid() = default;
  explicit KGrid(std::array<int, 3> dims);

  std::size_t size() const { return static_cast<std::size_t>(n[0]) * n[1] * n[2]; }
  std::size_t index(int i, int j, int l) const;  // periodic wrap
  std::array<int, 3> coords(std::size_t idx) const;
  KPoint point(std::size_t idx) const;
  std::size_t neighbor(std::size_t idx, int axis, int step) const;
  std::size_t opposite(std::size_t idx) const;  // node at -k
};

// Lattice vectors R_a in -floor((n_a - 1) / 2) .. floor(n_a / 2).
std::vector<int> lattice_range(int n);

// Fourier coefficients A_R of a matrix field on a grid, A(k) = sum_R A_R e^{2 pi i k.R}.
struct FourierCoefficients {
  std::array<int, 3> n{0, 0, 0};
  std::vector<std::array<int, 3>> lattice;
  std::vector<CMat> coeffs;

  // Index of R, with components taken modulo the grid.
  std::size_t find(std::array<int, 3> r) const;
  int rows() const { return coeffs.empty() ? 0 : static_cast<int>(coeffs[0].rows()); }
};

// A_R = grid average of f(k) e^{-2 pi i k.R}.
FourierCoefficients forward_transform(const KGrid& grid, const std::vector<CMat>& field);
// Interpolant at any k. A coefficient on the Nyquist plane R_a = n_a / 2 is
// split evenly between +R_a and -R_a so that Hermitian data stay Hermitian.
CMat evaluate(const FourierCoefficients& f, const KPoint& k);
// Grid values reproduced from the coefficients.
std::vector<CMat> inverse_transform(const FourierCoefficients& f);

int shell_of(const std::array<int, 3>& r);  // max norm

struct ShellStat {
  int shell = 0;
  double radius = 0;
  double max_norm = 0;  // largest Frobenius norm in the shell
  double slope = 0;     // log-log slope from the previous shell; 0 for shells 0 and 1
};

struct DecayProfile {
  std::vector<ShellStat> shells;
  int fit_first = 1;
  int fit_last = 0;
  double loglinear_slope = 0;
  double loglinear_intercept = 0;
  double r_squared = 0;
  double residual = 0;             // 1 - R^2 of the log-linear fit
  bool degenerate_flat = false;    // every shell beyond 0 vanishes
  bool superpolynomial = false;    // |slope| strictly increases over the fitted shells
};

// Shell statistics and fits over shells fit_first..fit_last (last < 0: every
// shell below the Nyquist plane of the coarsest axis).
// At least six nonempty shells are required.
DecayProfile decay_profile(const FourierCoefficients& f, int fit_first = 1, int fit_last = -1);

}  // namespace wdis
