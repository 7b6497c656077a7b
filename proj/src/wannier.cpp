#include "wdis/wannier.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "wdis/errors.hpp"
#include "wdis/geometry.hpp"

namespace wdis {

SliceCherns slice_cherns(const KGrid& grid, const std::vector<CMat>& projectors, int rank) {
  SliceCherns out;
  for (int normal = 0; normal < 3; ++normal) {
    const int a = (normal + 1) % 3, b = (normal + 2) % 3;
    auto at = [&](int u, int v) {
      std::array<int, 3> c{0, 0, 0};
      c[a] = u;
      c[b] = v;
      return projectors[grid.index(c[0], c[1], c[2])];
    };
    double total = 0;
    for (int u = 0; u < grid.n[a]; ++u)
      for (int v = 0; v < grid.n[b]; ++v)
        total += plaquette_flux(at(u, v), at(u + 1, v), at(u + 1, v + 1), at(u, v + 1), rank);
    total /= kTwoPi;
    out.chern[normal] = static_cast<int>(std::lround(total));
    out.residual[normal] = std::abs(total - out.chern[normal]);
  }
  return out;
}

namespace {

CMat transport_step(const CMat& p, const CMat& phi, double floor) { return loewdin_frame(p, phi, floor); }

std::vector<double> phases(const CMat& u) {
  Eigen::ComplexEigenSolver<CMat> es(u);
  std::vector<double> out;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out.push_back(std::arg(es.eigenvalues()(i)));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

GridFrames global_frame(const KGrid& grid, const std::vector<CMat>& projectors, int rank,
                        const std::optional<RMat>& theta, const GlobalFrameOptions& opt) {
  const auto [n1, n2, n3] = grid.n;
  require(n1 >= 3 && n2 >= 3 && n3 >= 3, "global frames need at least three nodes per axis");
  require(projectors.size() == grid.size(), "projector field does not match the grid");
  require(rank >= 1, "frame rank must be positive");
  for (std::size_t i = 0; i < projectors.size(); ++i)
    if (std::abs(projectors[i].trace().real() - rank) > 1e-6)
      fail(ErrorKind::InconsistentField, "projector at node " + std::to_string(i) + " does not have rank " +
                                             std::to_string(rank));
  if (theta)
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double d = (projectors[grid.opposite(i)] - apply_theta(*theta, projectors[i], true)).norm();
      if (d > opt.symmetry_tol)
        fail(ErrorKind::Symmetry, "projector field breaks time reversal at node " + std::to_string(i));
    }

  const SliceCherns sc = slice_cherns(grid, projectors, rank);
  for (int a = 0; a < 3; ++a)
    if (sc.chern[a] != 0) {
      std::ostringstream os;
      os << "topological-obstruction: slice normal to axis " << a + 1 << " has Chern number " << sc.chern[a]
         << "; no global frame exists";
      throw TopologicalObstruction(sc.chern[a], os.str());
    }

  auto P = [&](int i, int j, int l) -> const CMat& { return projectors[grid.index(i, j, l)]; };
  std::vector<CMat> phi(grid.size());
  auto at = [&](int i, int j, int l) -> CMat& { return phi[grid.index(i, j, l)]; };

  // k1 line through the origin.
  const CMat start = theta ? real_frame(P(0, 0, 0), rank, *theta) : canonical_frame(P(0, 0, 0), rank);
  std::vector<CMat> line(n1 + 1);
  line[0] = start;
  for (int i = 1; i <= n1; ++i) line[i] = transport_step(P(i, 0, 0), line[i - 1], opt.gram_floor);
  const CMat u = unitarize(start.adjoint() * line[n1]);
  for (int i = 0; i < n1; ++i) at(i, 0, 0) = line[i] * unitary_power(u, -static_cast<double>(i) / n1);

  // k2 planes at k3 = 0.
  std::vector<std::vector<CMat>> plane(n1, std::vector<CMat>(n2 + 1));
  std::vector<CMat> v(n1);
  for (int i = 0; i < n1; ++i) {
    plane[i][0] = at(i, 0, 0);
    for (int j = 1; j <= n2; ++j) plane[i][j] = transport_step(P(i, j, 0), plane[i][j - 1], opt.gram_floor);
    v[i] = unitarize(at(i, 0, 0).adjoint() * plane[i][n2]);
  }
  const auto hv = contract_unitary_loop(v, n2 + 1, opt.contraction);
  for (int i = 0; i < n1; ++i)
    for (int j = 1; j < n2; ++j) at(i, j, 0) = plane[i][j] * hv[n2 - j][i].adjoint();

  // k3 columns.
  std::vector<std::vector<CMat>> column(static_cast<std::size_t>(n1) * n2, std::vector<CMat>(n3 + 1));
  std::vector<CMat> w(static_cast<std::size_t>(n1) * n2);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) {
      auto& c = column[static_cast<std::size_t>(i) * n2 + j];
      c[0] = at(i, j, 0);
      for (int l = 1; l <= n3; ++l) c[l] = transport_step(P(i, j, l), c[l - 1], opt.gram_floor);
      w[static_cast<std::size_t>(i) * n2 + j] = unitarize(c[0].adjoint() * c[n3]);
    }
  const auto hw = contract_unitary_torus(w, n1, n2, n3 + 1, opt.contraction);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j)
      for (int l = 1; l < n3; ++l) {
        const std::size_t idx = static_cast<std::size_t>(i) * n2 + j;
        at(i, j, l) = column[idx][l] * hw[n3 - l][idx].adjoint();
      }

  GridFrames out;
  out.grid = grid;
  out.rank = rank;
  out.gauge = {{"k1_holonomy_phases", phases(u)},
               {"slice_chern", sc.chern},
               {"slice_residual", sc.residual}};

  if (theta) {
    // Phi(k) T(k) = theta Phi(-k); the gauge T^{1/2} makes the frame symmetric
    // because T(-k) = T(k)^T.
    double closest = 2;
    std::vector<CMat> g(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const CMat t = unitarize(phi[i].adjoint() * apply_theta(*theta, phi[grid.opposite(i)], false));
      Eigen::ComplexEigenSolver<CMat> es(t);
      for (Eigen::Index a = 0; a < es.eigenvalues().size(); ++a)
        closest = std::min(closest, std::abs(es.eigenvalues()(a) + 1.0));
      if (closest < opt.branch_floor)
        fail(ErrorKind::Symmetry, "time-reversal mismatch reaches -1 at node " + std::to_string(i) +
                                      "; the square-root gauge is not continuous");
      g[i] = unitary_power(t, 0.5);
    }
    for (std::size_t i = 0; i < grid.size(); ++i) phi[i] = phi[i] * g[i];
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const std::size_t o = grid.opposite(i);
      if (o > i) phi[o] = apply_theta(*theta, phi[i], false);
    }
    out.trs = true;
    out.gauge["trs_branch_distance"] = closest;
  }
  out.frames = std::move(phi);
  return out;
}

GridFrames global_frame(const DisentangledField& field, const std::optional<RMat>& theta,
                        const GlobalFrameOptions& opt) {
  return global_frame(field.grid, field.projectors, field.rank, theta, opt);
}

GridFrames eigenvector_frames(const Model& model, const KGrid& grid, int rank) {
  require(rank >= 1 && rank <= model.dim(), "frame rank out of range");
  GridFrames out;
  out.grid = grid;
  out.rank = rank;
  for (std::size_t i = 0; i < grid.size(); ++i) out.frames.push_back(model.spectrum(grid.point(i)).vectors.leftCols(rank));
  return out;
}

FrameQuality frame_quality(const GridFrames& f, const std::vector<CMat>& projectors, const std::optional<RMat>& theta) {
  FrameQuality q;
  const CMat id = CMat::Identity(f.rank, f.rank);
  for (std::size_t i = 0; i < f.grid.size(); ++i) {
    const CMat& x = f.frames[i];
    q.projector_defect = std::max(q.projector_defect, (x * x.adjoint() - projectors[i]).norm());
    q.orthonormality = std::max(q.orthonormality, (x.adjoint() * x - id).norm());
    for (int a = 0; a < 3; ++a)
      q.max_increment = std::max(q.max_increment, op_norm(f.frames[f.grid.neighbor(i, a, 1)] - x));
  }
  if (theta) {
    q.trs_defect = 0;
    for (std::size_t i = 0; i < f.grid.size(); ++i)
      q.trs_defect = std::max(q.trs_defect,
                              (f.frames[f.grid.opposite(i)] - apply_theta(*theta, f.frames[i], false)).norm());
  }
  return q;
}

std::vector<CMat> frame_hamiltonians(const GridFrames& frames, const Model& model) {
  require(!frames.frames.empty() && frames.frames[0].rows() == model.dim(), "frames do not match the model");
  std::vector<CMat> out;
  for (std::size_t i = 0; i < frames.grid.size(); ++i) {
    const CMat& x = frames.frames[i];
    out.push_back(hermitian_part(x.adjoint() * model.hamiltonian(frames.grid.point(i)) * x));
  }
  return out;
}

HoppingTensor hoppings(const GridFrames& frames, const Model& model) {
  return forward_transform(frames.grid, frame_hamiltonians(frames, model));
}

double hermiticity_defect(const HoppingTensor& h) {
  double d = 0;
  for (std::size_t i = 0; i < h.lattice.size(); ++i) {
    const auto& r = h.lattice[i];
    d = std::max(d, (h.coeffs[h.find({-r[0], -r[1], -r[2]})] - h.coeffs[i].adjoint()).norm());
  }
  return d;
}

double reality_defect(const HoppingTensor& h) {
  double d = 0;
  for (const auto& c : h.coeffs) d = std::max(d, c.imag().norm());
  return d;
}

double plancherel_defect(const HoppingTensor& h, const std::vector<CMat>& values) {
  double lhs = 0, rhs = 0;
  for (const auto& c : h.coeffs) lhs += c.squaredNorm();
  for (const auto& v : values) rhs += v.squaredNorm();
  rhs /= static_cast<double>(values.size());
  return std::abs(lhs - rhs);
}

RVec interpolate_bands(const HoppingTensor& h, const KPoint& k) { return eigh(hermitian_part(evaluate(h, k))).values; }

std::vector<RVec> band_grid(const Model& model, const KGrid& grid, int bands) {
  require(bands >= 1 && bands <= model.dim(), "band count out of range");
  std::vector<RVec> out;
  for (std::size_t i = 0; i < grid.size(); ++i) out.push_back(model.spectrum(grid.point(i)).values.head(bands));
  return out;
}

FourierCoefficients band_coefficients(const KGrid& grid, const std::vector<RVec>& bands) {
  require(bands.size() == grid.size(), "band data do not match the grid");
  std::vector<CMat> field;
  for (const auto& b : bands) field.push_back(b.cast<cplx>());
  return forward_transform(grid, field);
}

RVec direct_fourier_interp(const FourierCoefficients& bands, const KPoint& k) {
  return evaluate(bands, k).col(0).real();
}

std::vector<KPoint> probe_points(int count, std::uint64_t seed, const std::vector<KPoint>& avoid, double radius) {
  require(count >= 0, "probe count must be non-negative");
  // Powers of the inverse of the real root of x^4 = x + 1.
  const double g = 1.2207440846057596;
  const Vec3 alpha(1 / g, 1 / (g * g), 1 / (g * g * g));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 offset(u(rng), u(rng), u(rng));
  std::vector<KPoint> out;
  for (long i = 1; static_cast<int>(out.size()) < count; ++i) {
    if (i > 1000L * (count + 10)) fail(ErrorKind::Precondition, "crossing neighbourhoods leave no room for probes");
    KPoint k = offset + static_cast<double>(i) * alpha;
    for (int a = 0; a < 3; ++a) k(a) -= std::floor(k(a));
    bool ok = true;
    for (const auto& c : avoid)
      if (torus_distance(k, c) < radius) ok = false;
    if (ok) out.push_back(k);
  }
  return out;
}

InterpolationReport compare_interpolation(const Model& model, int bands, const HoppingTensor& h,
                                          const FourierCoefficients& baseline, const std::vector<KPoint>& probes) {
  require(bands >= 1 && bands <= h.rows(), "band count exceeds the hopping rank");
  require(baseline.rows() >= bands, "baseline covers fewer bands");
  InterpolationReport r;
  r.bands = bands;
  std::vector<double> errors;
  for (const auto& k : probes) {
    ProbeResult p;
    p.k = k;
    p.exact = model.spectrum(k).values.head(bands);
    p.interpolated = interpolate_bands(h, k).head(bands);
    p.baseline = direct_fourier_interp(baseline, k).head(bands);
    p.error = (p.interpolated - p.exact).cwiseAbs().maxCoeff();
    p.baseline_error = (p.baseline - p.exact).cwiseAbs().maxCoeff();
    r.max_error = std::max(r.max_error, p.error);
    r.max_baseline_error = std::max(r.max_baseline_error, p.baseline_error);
    errors.push_back(p.error);
    r.probes.push_back(std::move(p));
  }
  if (!errors.empty()) {
    std::sort(errors.begin(), errors.end());
    const std::size_t m = errors.size() / 2;
    r.median_error = errors.size() % 2 ? errors[m] : 0.5 * (errors[m - 1] + errors[m]);
  }
  return r;
}

nlohmann::json to_json(const HoppingTensor& h) {
  nlohmann::json terms = nlohmann::json::array();
  for (std::size_t i = 0; i < h.lattice.size(); ++i) {
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
    for (int a = 0; a < h.coeffs[i].rows(); ++a) {
      nlohmann::json rr = nlohmann::json::array(), ii = nlohmann::json::array();
      for (int b = 0; b < h.coeffs[i].cols(); ++b) {
        rr.push_back(h.coeffs[i](a, b).real());
        ii.push_back(h.coeffs[i](a, b).imag());
      }
      re.push_back(rr);
      im.push_back(ii);
    }
    terms.push_back({{"R", h.lattice[i]}, {"re", re}, {"im", im}});
  }
  return {{"grid", h.n}, {"terms", terms}};
}

HoppingTensor hoppings_from_json(const nlohmann::json& j) {
  HoppingTensor h;
  h.n = j.at("grid").get<std::array<int, 3>>();
  for (const auto& t : j.at("terms")) {
    h.lattice.push_back(t.at("R").get<std::array<int, 3>>());
    const auto& re = t.at("re");
    const auto& im = t.at("im");
    CMat m(re.size(), re.size() ? re.at(0).size() : 0);
    for (Eigen::Index a = 0; a < m.rows(); ++a)
      for (Eigen::Index b = 0; b < m.cols(); ++b)
        m(a, b) = cplx(re.at(a).at(b).get<double>(), im.at(a).at(b).get<double>());
    h.coeffs.push_back(m);
  }
  if (h.lattice.size() != static_cast<std::size_t>(h.n[0]) * h.n[1] * h.n[2])
    fail(ErrorKind::Parse, "hopping file does not cover the grid");
  for (std::size_t i = 0; i < h.lattice.size(); ++i)
    if (h.find(h.lattice[i]) != i) fail(ErrorKind::Parse, "hopping terms are not in grid order");
  return h;
}

}  // namespace wdis
