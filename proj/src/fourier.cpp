#include "wdis/fourier.hpp"

#include <cmath>
#include <map>

#include "wdis/errors.hpp"

namespace wdis {

namespace {
int wrap(int i, int n) { return ((i % n) + n) % n; }
}  // namespace

KGrid::KGrid(std::array<int, 3> dims) : n(dims) {
  for (int a = 0; a < 3; ++a) require(n[a] >= 1, "grid dimensions must be positive");
}

std::size_t KGrid::index(int i, int j, int l) const {
  return (static_cast<std::size_t>(wrap(i, n[0])) * n[1] + wrap(j, n[1])) * n[2] + wrap(l, n[2]);
}

std::array<int, 3> KGrid::coords(std::size_t idx) const {
  const int l = static_cast<int>(idx % n[2]);
  idx /= n[2];
  const int j = static_cast<int>(idx % n[1]);
  return {static_cast<int>(idx / n[1]), j, l};
}

KPoint KGrid::point(std::size_t idx) const {
  auto c = coords(idx);
  return KPoint(static_cast<double>(c[0]) / n[0], static_cast<double>(c[1]) / n[1], static_cast<double>(c[2]) / n[2]);
}

std::size_t KGrid::neighbor(std::size_t idx, int axis, int step) const {
  auto c = coords(idx);
  c[axis] += step;
  return index(c[0], c[1], c[2]);
}

std::size_t KGrid::opposite(std::size_t idx) const {
  auto c = coords(idx);
  return index(-c[0], -c[1], -c[2]);
}

std::vector<int> lattice_range(int n) {
  std::vector<int> r;
  for (int x = -((n - 1) / 2); x <= n / 2; ++x) r.push_back(x);
  return r;
}

std::size_t FourierCoefficients::find(std::array<int, 3> r) const {
  std::size_t idx = 0;
  for (int a = 0; a < 3; ++a) {
    const int lo = -((n[a] - 1) / 2);
    int x = wrap(r[a] - lo, n[a]) + lo;
    idx = idx * n[a] + static_cast<std::size_t>(x - lo);
  }
  return idx;
}

FourierCoefficients forward_transform(const KGrid& grid, const std::vector<CMat>& field) {
  require(field.size() == grid.size() && !field.empty(), "field does not match the grid");
  const Eigen::Index rows = field[0].rows(), cols = field[0].cols();
  // Separable transform, one axis at a time.
  std::vector<CMat> cur = field;
  std::array<int, 3> dims = grid.n;
  for (int axis = 0; axis < 3; ++axis) {
    const int n = dims[axis];
    const std::vector<int> rs = lattice_range(n);
    std::vector<CMat> next(cur.size(), CMat::Zero(rows, cols));
    std::size_t stride = 1;
    for (int b = axis + 1; b < 3; ++b) stride *= dims[b];
    const std::size_t outer = cur.size() / (stride * n);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t s = 0; s < stride; ++s)
        for (int ri = 0; ri < n; ++ri) {
          CMat acc = CMat::Zero(rows, cols);
          for (int k = 0; k < n; ++k)
            acc += cur[(o * n + k) * stride + s] * std::polar(1.0 / n, -kTwoPi * k * rs[ri] / n);
          next[(o * n + ri) * stride + s] = acc;
        }
    cur.swap(next);
  }
  FourierCoefficients f;
  f.n = grid.n;
  for (int x : lattice_range(grid.n[0]))
    for (int y : lattice_range(grid.n[1]))
      for (int z : lattice_range(grid.n[2])) f.lattice.push_back({x, y, z});
  f.coeffs = std::move(cur);
  return f;
}

CMat evaluate(const FourierCoefficients& f, const KPoint& k) {
  std::array<std::vector<cplx>, 3> phase;
  for (int a = 0; a < 3; ++a) {
    for (int r : lattice_range(f.n[a])) {
      if (f.n[a] % 2 == 0 && r == f.n[a] / 2)
        phase[a].push_back(std::cos(kPi * f.n[a] * k(a)));
      else
        phase[a].push_back(std::polar(1.0, kTwoPi * k(a) * r));
    }
  }
  CMat out = CMat::Zero(f.coeffs[0].rows(), f.coeffs[0].cols());
  std::size_t idx = 0;
  for (int x = 0; x < f.n[0]; ++x)
    for (int y = 0; y < f.n[1]; ++y) {
      const cplx pxy = phase[0][x] * phase[1][y];
      for (int z = 0; z < f.n[2]; ++z) out += f.coeffs[idx++] * (pxy * phase[2][z]);
    }
  return out;
}

std::vector<CMat> inverse_transform(const FourierCoefficients& f) {
  KGrid grid(f.n);
  std::vector<CMat> out;
  for (std::size_t i = 0; i < grid.size(); ++i) out.push_back(evaluate(f, grid.point(i)));
  return out;
}

int shell_of(const std::array<int, 3>& r) {
  return std::max({std::abs(r[0]), std::abs(r[1]), std::abs(r[2])});
}

DecayProfile decay_profile(const FourierCoefficients& f, int fit_first, int fit_last) {
  std::map<int, double> norms;
  for (std::size_t i = 0; i < f.lattice.size(); ++i) {
    double& m = norms[shell_of(f.lattice[i])];
    m = std::max(m, f.coeffs[i].norm());
  }
  if (norms.size() < 6)
    fail(ErrorKind::InsufficientData, "decay profile needs at least 6 shells, grid provides " + std::to_string(norms.size()));
  DecayProfile d;
  for (const auto& [s, m] : norms) d.shells.push_back(ShellStat{s, static_cast<double>(s), m, 0.0});
  const double scale = std::max(d.shells[0].max_norm, 1e-300);
  for (std::size_t i = 2; i < d.shells.size(); ++i) {
    const double a = d.shells[i - 1].max_norm, b = d.shells[i].max_norm;
    if (a > 0 && b > 0) d.shells[i].slope = std::log(b / a) / std::log(d.shells[i].radius / d.shells[i - 1].radius);
  }
  d.degenerate_flat = true;
  for (std::size_t i = 1; i < d.shells.size(); ++i)
    if (d.shells[i].max_norm > 1e-14 * scale) d.degenerate_flat = false;
  const int last_shell = d.shells.back().shell;
  d.fit_first = std::max(1, fit_first);
  // Shells on the Nyquist plane hold aliased sums, so the default fit stops short of them.
  int unaliased = last_shell;
  for (int a = 0; a < 3; ++a)
    if (f.n[a] > 1) unaliased = std::min(unaliased, (f.n[a] - 1) / 2);
  d.fit_last = fit_last < 0 ? unaliased : std::min(fit_last, last_shell);
  if (d.degenerate_flat) return d;

  std::vector<double> xs, ys;
  for (const auto& s : d.shells)
    if (s.shell >= d.fit_first && s.shell <= d.fit_last && s.max_norm > 0) {
      xs.push_back(s.radius);
      ys.push_back(std::log(s.max_norm));
    }
  if (xs.size() < 3) fail(ErrorKind::InsufficientData, "fewer than three nonzero shells in the fit range");
  const double nx = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / nx;
    my += ys[i] / nx;
  }
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  d.loglinear_slope = sxy / sxx;
  d.loglinear_intercept = my - d.loglinear_slope * mx;
  d.r_squared = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  d.residual = 1 - d.r_squared;

  d.superpolynomial = true;
  double prev = 0;
  for (const auto& s : d.shells) {
    if (s.shell < std::max(2, d.fit_first) || s.shell > d.fit_last) continue;
    if (!(std::abs(s.slope) > prev)) d.superpolynomial = false;
    prev = std::abs(s.slope);
  }
  return d;
}

}  // namespace wdis
