#include "wdis/frames.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <random>
#include <sstream>

#include "wdis/errors.hpp"
#include "wdis/model.hpp"

namespace wdis {

std::vector<double> shell_radii(int shells) {
  require(shells >= 2, "need at least two shells");
  std::vector<double> r(shells);
  for (int s = 0; s < shells; ++s) r[s] = 1.0 - static_cast<double>(s) / shells;
  return r;
}

double smoothstep(double x) {
  auto g = [](double t) { return t > 0 ? std::exp(-1.0 / t) : 0.0; };
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  const double a = g(x), b = g(1 - x);
  return a / (a + b);
}

double radial_cutoff(double r) { return smoothstep((r - 0.25) / 0.5); }

CVec contraction_blend(double h, const CVec& phi, const CVec& target) {
  CVec v = h * phi + (1 - h) * target;
  const double n = v.norm();
  if (!(n > 1e-12)) fail(ErrorKind::Numerical, "contraction passes through zero");
  return v / n;
}

CMat rotation_between(const CVec& u, const CVec& w) {
  const cplx denom = 1.0 + w.dot(u);
  if (!(std::abs(denom) > 1e-12)) fail(ErrorKind::Numerical, "rotation between antipodal vectors");
  const CVec s = u + w;
  return CMat::Identity(u.size(), u.size()) - s * s.adjoint() / denom + 2.0 * w * u.adjoint();
}

AvoidedPoint find_avoided_point(const std::vector<CVec>& samples, const AvoidanceOptions& opt) {
  require(!samples.empty(), "avoided point needs samples");
  const Eigen::Index m = samples[0].size();
  require(m >= 2, "avoided point needs ambient dimension at least 2");
  // Sorting by the real part of the first component restricts every distance
  // test to a slab of width 2 floor.
  std::vector<std::pair<double, const CVec*>> sorted;
  sorted.reserve(samples.size());
  for (const auto& s : samples) sorted.emplace_back(s(0).real(), &s);
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  AvoidedPoint best;
  int accepted = 0;
  for (int trial = 1; trial <= opt.max_trials && accepted < std::max(1, opt.candidates); ++trial) {
    CVec x(m);
    for (Eigen::Index i = 0; i < m; ++i) x(i) = cplx(normal(rng), normal(rng));
    x.normalize();
    const double key = x(0).real();
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), key - opt.floor,
                               [](const auto& a, double v) { return a.first < v; });
    bool ok = true;
    for (auto it = lo; it != sorted.end() && it->first <= key + opt.floor; ++it)
      if ((*it->second - x).norm() <= opt.floor) {
        ok = false;
        break;
      }
    if (!ok) continue;
    double dmin = 1e300;
    for (const auto& s : samples) dmin = std::min(dmin, (s - x).norm());
    ++accepted;
    if (dmin > best.distance) best = AvoidedPoint{x, dmin, trial};
  }
  if (accepted > 0) {
    auto min_distance = [&](const CVec& x) {
      double d = 1e300;
      for (const auto& s : samples) d = std::min(d, (s - x).norm());
      return d;
    };
    double sigma = 0.3;
    for (int step = 0; step < opt.refine; ++step) {
      CVec x = best.point;
      for (Eigen::Index i = 0; i < m; ++i) x(i) += sigma * cplx(normal(rng), normal(rng));
      x.normalize();
      const double d = min_distance(x);
      if (d > best.distance) {
        best.point = x;
        best.distance = d;
      } else {
        sigma = std::max(0.01, 0.97 * sigma);
      }
    }
    return best;
  }
  std::ostringstream os;
  os << "no point farther than " << opt.floor << " from all samples after " << opt.max_trials << " trials";
  fail(ErrorKind::AvoidanceFailure, os.str());
}

namespace {

bool is_unitary(const CMat& u, double tol) {
  return (u.adjoint() * u - CMat::Identity(u.rows(), u.cols())).norm() < tol;
}

// Largest gap of a set of angles on the circle; returns its midpoint.
double largest_gap(std::vector<double> angles, double& width) {
  if (angles.empty()) {
    width = kTwoPi;
    return kPi;
  }
  for (double& a : angles) a = std::remainder(a, kTwoPi);
  std::sort(angles.begin(), angles.end());
  width = angles.front() + kTwoPi - angles.back();
  double mid = angles.back() + 0.5 * width;
  for (std::size_t i = 1; i < angles.size(); ++i) {
    const double w = angles[i] - angles[i - 1];
    if (w > width) {
      width = w;
      mid = angles[i - 1] + 0.5 * w;
    }
  }
  return std::remainder(mid, kTwoPi);
}

// Sample set with a neighbour structure and a phase unwrapper that throws
// TopologicalObstruction when the phases wind.
struct Topology {
  std::size_t size = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::function<std::vector<double>(const std::vector<cplx>&)> unwrap;
};

double unwrap_step(cplx a, cplx b) {
  const double d = std::arg(b / a);
  if (std::abs(d) >= kPi / 2) fail(ErrorKind::RefineLoop, "phase step exceeds pi/2; use more samples");
  return d;
}

// Unwraps z[first + k stride], k = 0..len-1, starting from start; returns the
// closure winding.
int unwrap_line(const std::vector<cplx>& z, std::vector<double>& out, std::size_t first, std::size_t stride,
                std::size_t len, double start) {
  out[first] = start;
  for (std::size_t k = 1; k < len; ++k) {
    const std::size_t a = first + (k - 1) * stride, b = first + k * stride;
    out[b] = out[a] + unwrap_step(z[a], z[b]);
  }
  const std::size_t last = first + (len - 1) * stride;
  const double total = out[last] + unwrap_step(z[last], z[first]) - out[first];
  return static_cast<int>(std::lround(total / kTwoPi));
}

Topology loop_topology(std::size_t len) {
  Topology t;
  t.size = len;
  for (std::size_t j = 0; j < len; ++j) t.edges.emplace_back(j, (j + 1) % len);
  t.unwrap = [len](const std::vector<cplx>& z) {
    std::vector<double> out(len);
    const int w = unwrap_line(z, out, 0, 1, len, std::arg(z[0]));
    if (w != 0)
      throw TopologicalObstruction(w, "topological-obstruction: loop determinant winds " + std::to_string(w) + " times");
    return out;
  };
  return t;
}

Topology torus_topology(std::size_t n1, std::size_t n2) {
  Topology t;
  t.size = n1 * n2;
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) {
      t.edges.emplace_back(i * n2 + j, ((i + 1) % n1) * n2 + j);
      t.edges.emplace_back(i * n2 + j, i * n2 + (j + 1) % n2);
    }
  t.unwrap = [n1, n2](const std::vector<cplx>& z) {
    std::vector<double> out(n1 * n2);
    const int w1 = unwrap_line(z, out, 0, n2, n1, std::arg(z[0]));
    if (w1 != 0)
      throw TopologicalObstruction(w1, "topological-obstruction: determinant winds " + std::to_string(w1) +
                                           " times along the first torus direction");
    for (std::size_t i = 0; i < n1; ++i) {
      const int w2 = unwrap_line(z, out, i * n2, 1, n2, out[i * n2]);
      if (w2 != 0)
        throw TopologicalObstruction(w2, "topological-obstruction: determinant winds " + std::to_string(w2) +
                                             " times along the second torus direction");
    }
    return out;
  };
  return t;
}

CMat complete_unitary(const CVec& a) {
  const Eigen::Index n = a.size();
  CMat out(n, n);
  out.col(0) = a;
  Eigen::Index filled = 1;
  for (Eigen::Index e = 0; e < n && filled < n; ++e) {
    CVec c = CVec::Unit(n, e);
    for (Eigen::Index k = 0; k < filled; ++k) c -= out.col(k).dot(c) * out.col(k);
    if (c.norm() > 1e-3) out.col(filled++) = c.normalized();
  }
  return out;
}

// Contraction of a family with trivial determinant windings: move the first
// column to a fixed avoided vector, recurse on the deflated block, then
// contract the constant unitary carrying e1 to that vector.
std::vector<std::vector<CMat>> peel(const std::vector<CMat>& v, const Topology& topo, const std::vector<double>& ts,
                                    std::uint64_t seed) {
  const Eigen::Index n = v[0].rows();
  const std::size_t len = v.size();
  std::vector<std::vector<CMat>> out(ts.size(), std::vector<CMat>(len));
  if (n == 1) {
    std::vector<cplx> z;
    for (const auto& m : v) z.push_back(m(0, 0) / std::abs(m(0, 0)));
    std::vector<double> psi;
    try {
      psi = topo.unwrap(z);
    } catch (const TopologicalObstruction&) {
      fail(ErrorKind::ContractionFailure, "deflated family has nonzero winding");
    }
    for (std::size_t t = 0; t < ts.size(); ++t)
      for (std::size_t j = 0; j < len; ++j) out[t][j] = CMat::Constant(1, 1, std::polar(1.0, (1 - ts[t]) * psi[j]));
    return out;
  }
  std::vector<CVec> cols;
  for (const auto& m : v) cols.push_back(m.col(0));
  AvoidanceOptions ao;
  ao.seed = seed;
  const CVec a = -find_avoided_point(cols, ao).point;
  const CMat big_a = std::abs(1.0 + a(0)) > 0.1 ? rotation_between(CVec::Unit(n, 0), a) : complete_unitary(a);
  std::vector<CMat> deflated;
  for (std::size_t j = 0; j < len; ++j) {
    CMat d = big_a.adjoint() * rotation_between(cols[j], a) * v[j];
    deflated.push_back(unitarize(d.bottomRightCorner(n - 1, n - 1)));
  }
  // Equal time for each of the 2n - 1 segments across all recursion levels.
  const double seg = 1.0 / (2 * n - 1);
  std::vector<double> mid;
  for (double t : ts) mid.push_back(std::clamp((t - seg) / (1 - 2 * seg), 0.0, 1.0));
  auto inner = peel(deflated, topo, mid, seed + 1);
  const CMat log_a = unitary_log(big_a);
  for (std::size_t t = 0; t < ts.size(); ++t)
    for (std::size_t j = 0; j < len; ++j) {
      const double x = ts[t];
      if (x <= seg) {
        CVec w = contraction_blend(1 - x / seg, cols[j], a);
        out[t][j] = rotation_between(cols[j], w) * v[j];
      } else if (x <= 1 - seg) {
        CMat block = CMat::Identity(n, n);
        block.bottomRightCorner(n - 1, n - 1) = inner[t][j];
        out[t][j] = big_a * block;
      } else {
        out[t][j] = unitary_exp(((1 - x) / seg) * log_a);
      }
    }
  return out;
}

std::vector<std::vector<CMat>> contract_family(const std::vector<CMat>& u, const Topology& topo, int times,
                                               const ContractionOptions& opt) {
  require(times >= 2, "contraction needs at least two time samples");
  require(u.size() == topo.size && u.size() >= 2, "contraction needs at least two samples");
  const Eigen::Index n = u[0].rows();
  for (const auto& m : u) require(m.rows() == n && is_unitary(m, 1e-9), "contraction samples must be unitary");
  std::vector<cplx> dets;
  for (const auto& m : u) {
    const cplx d = m.determinant();
    dets.push_back(d / std::abs(d));
  }
  const std::vector<double> phi = topo.unwrap(dets);
  const std::size_t len = u.size();
  std::vector<CMat> v(len);
  std::vector<double> phases;
  for (std::size_t j = 0; j < len; ++j) {
    v[j] = u[j] * std::polar(1.0, -phi[j] / n);
    UnitaryEig e = unitary_eig(v[j]);
    for (Eigen::Index i = 0; i < n; ++i) phases.push_back(e.phases(i));
  }
  std::vector<double> ts(times);
  for (int t = 0; t < times; ++t) ts[t] = static_cast<double>(t) / (times - 1);

  std::vector<std::vector<CMat>> h;
  double width;
  const double cut = largest_gap(phases, width);
  if (width >= opt.min_gap) {
    // Branch-cut logarithm: continuous because no eigenphase meets the cut.
    h.assign(times, std::vector<CMat>(len));
    for (std::size_t j = 0; j < len; ++j) {
      const CMat x = unitary_log(v[j], cut);
      for (int t = 0; t < times; ++t) h[t][j] = unitary_exp((1 - ts[t]) * x);
    }
  } else {
    h = peel(v, topo, ts, opt.seed);
  }
  for (int t = 0; t < times; ++t)
    for (std::size_t j = 0; j < len; ++j) h[t][j] *= std::polar(1.0, (1 - ts[t]) * phi[j] / n);
  h.front() = u;
  h.back().assign(len, CMat::Identity(n, n));

  for (int t = 0; t < times; ++t) {
    for (const auto& [a, b] : topo.edges) {
      const double d = op_norm(h[t][b] - h[t][a]);
      if (!(d < opt.max_step)) {
        std::ostringstream os;
        os << "contraction step " << d << " at time " << t << " between samples " << a << " and " << b
           << " exceeds " << opt.max_step << "; use more samples";
        fail(ErrorKind::ContractionFailure, os.str());
      }
    }
    if (t + 1 < times)
      for (std::size_t j = 0; j < len; ++j) {
        const double d = op_norm(h[t + 1][j] - h[t][j]);
        if (!(d < opt.max_step)) {
          std::ostringstream os;
          os << "contraction step " << d << " at time " << t << ", sample " << j << " exceeds " << opt.max_step
             << "; use more times";
          fail(ErrorKind::ContractionFailure, os.str());
        }
      }
  }
  return h;
}

}  // namespace

std::vector<std::vector<CMat>> contract_unitary_loop(const std::vector<CMat>& loop, int times,
                                                     const ContractionOptions& opt) {
  require(loop.size() >= 2, "contraction needs at least two loop samples");
  return contract_family(loop, loop_topology(loop.size()), times, opt);
}

std::vector<std::vector<CMat>> contract_unitary_torus(const std::vector<CMat>& family, int n1, int n2, int times,
                                                      const ContractionOptions& opt) {
  require(n1 >= 2 && n2 >= 2 && family.size() == static_cast<std::size_t>(n1) * n2,
          "torus family must have n1 * n2 samples");
  return contract_family(family, torus_topology(n1, n2), times, opt);
}

namespace {

std::vector<std::vector<std::pair<int, double>>> kernel_weights(const std::vector<Vec3>& x, double delta) {
  std::vector<std::vector<std::pair<int, double>>> w(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double total = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double r = (x[i] - x[j]).norm() / delta;
      if (r >= 1) continue;
      const double k = (1 - r * r) * (1 - r * r);
      w[i].emplace_back(static_cast<int>(j), k);
      total += k;
    }
    for (auto& p : w[i]) p.second /= total;
  }
  return w;
}

}  // namespace

FrameField smooth_frames(const std::vector<Vec3>& positions, const FrameField& frames, const ProjectorField& p,
                         double delta) {
  require(positions.size() == frames.size() && frames.size() == p.size(), "smoothing inputs differ in size");
  require(delta > 0, "smoothing width must be positive");
  auto w = kernel_weights(positions, delta);
  FrameField out(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CMat avg = CMat::Zero(frames[i].rows(), frames[i].cols());
    for (const auto& [j, k] : w[i]) avg += k * frames[j];
    CMat x = p[i] * avg;
    CMat g = x.adjoint() * x;
    if (!(min_eigenvalue(g) >= 0.5)) fail(ErrorKind::DeltaTooLarge, "mollified frame lost rank; reduce delta");
    out[i] = x * inverse_sqrt(g);
  }
  return out;
}

ProjectorField smooth_projectors(const std::vector<Vec3>& positions, const ProjectorField& p, int rank,
                                 double delta) {
  require(positions.size() == p.size(), "smoothing inputs differ in size");
  require(delta > 0, "smoothing width must be positive");
  auto w = kernel_weights(positions, delta);
  ProjectorField out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    CMat avg = CMat::Zero(p[i].rows(), p[i].cols());
    for (const auto& [j, k] : w[i]) avg += k * p[j];
    Eigh e = eigh(avg);
    const Eigen::Index m = avg.rows();
    if ((rank > 0 && e.values(m - rank) < 0.75) || (rank < m && e.values(m - rank - 1) > 0.25))
      fail(ErrorKind::DeltaTooLarge, "mollified projector eigenvalues leave [0,1/4] u [3/4,1]; reduce delta");
    CMat v = e.vectors.rightCols(rank);
    out[i] = v * v.adjoint();
  }
  return out;
}

SphereFrame frame_on_sphere(const SurfaceMesh& mesh, const ProjectorField& p, int rank, const SphereFrameOptions& opt) {
  require(mesh.is_latlong(), "frame_on_sphere needs a latitude-longitude mesh");
  require(mesh.n_theta % 2 == 0, "frame_on_sphere needs an even number of latitude bands");
  require(p.size() == mesh.nodes.size(), "field size does not match the mesh");
  const int e = mesh.n_theta / 2;
  const int nphi = mesh.n_phi;
  const CMat north = canonical_frame(p[mesh.node(0, 0)], rank);
  const CMat south = canonical_frame(p[mesh.node(mesh.n_theta, 0)], rank);

  // plus[r][j] for rings 0..e, minus[r][j] for rings e..n_theta (offset by e).
  std::vector<std::vector<CMat>> plus(e + 1, std::vector<CMat>(nphi)), minus(e + 1, std::vector<CMat>(nphi));
  for (int j = 0; j < nphi; ++j) {
    ProjectorField np, sp;
    for (int r = 0; r <= e; ++r) np.push_back(p[mesh.node(r, j)]);
    for (int r = mesh.n_theta; r >= e; --r) sp.push_back(p[mesh.node(r, j)]);
    FrameField nf = transport_frame(np, north), sf = transport_frame(sp, south);
    for (int r = 0; r <= e; ++r) {
      plus[r][j] = nf[r];
      minus[e - r][j] = sf[r];  // minus[s] is ring e + s
    }
  }
  SphereFrame out;
  std::vector<cplx> dets;
  for (int j = 0; j < nphi; ++j) {
    CMat u = unitarize(minus[0][j].adjoint() * plus[e][j]);
    out.obstruction.push_back(u);
    const cplx d = u.determinant();
    dets.push_back(d / std::abs(d));
  }
  out.winding = -winding_number(dets).winding;
  if (out.winding != 0)
    throw TopologicalObstruction(out.winding, "topological-obstruction: Chern number " + std::to_string(out.winding) +
                                                  " on the sphere");

  auto h = contract_unitary_loop(out.obstruction, e + 1, opt.contraction);
  FrameField frames(mesh.nodes.size());
  for (int r = 0; r <= e; ++r)
    for (int j = 0; j < nphi; ++j) frames[mesh.node(r, j)] = plus[r][j];
  for (int s = 1; s <= e; ++s)
    for (int j = 0; j < nphi; ++j) frames[mesh.node(e + s, j)] = minus[s][j] * h[s][j];
  frames[mesh.node(mesh.n_theta, 0)] = south;

  const double delta = opt.delta < 0 ? 1.5 * kPi / mesh.n_theta : opt.delta;
  if (delta > 0) frames = smooth_frames(mesh.directions, frames, p, delta);
  for (std::size_t i = 0; i < frames.size(); ++i)
    out.max_frame_defect = std::max(out.max_frame_defect, (frames[i] * frames[i].adjoint() - p[i]).norm());
  if (!(out.max_frame_defect < 1e-8)) fail(ErrorKind::Numerical, "sphere frame does not span the projector field");
  out.frames = std::move(frames);
  return out;
}

BallField<CVec> extend_rank1(const std::vector<CVec>& phi, const ExtensionOptions& opt) {
  require(!phi.empty(), "rank-one extension needs boundary samples");
  const CVec target = -find_avoided_point(phi, opt.avoidance).point;
  BallField<CVec> out;
  out.radii = shell_radii(opt.shells);
  out.center = target;
  out.shells.resize(out.radii.size());
  out.shells[0] = phi;
  for (std::size_t s = 1; s < out.radii.size(); ++s)
    for (const auto& v : phi) out.shells[s].push_back(contraction_blend(radial_cutoff(out.radii[s]), v, target));
  return out;
}

namespace {

BallField<CMat> extend_in_q(const SurfaceMesh& mesh, const ProjectorField& p, int rank, const BallField<CMat>& q,
                            const ExtensionOptions& opt, int depth);

BallField<CMat> constant_ball(const std::vector<double>& radii, std::size_t nodes, const CMat& value) {
  BallField<CMat> out;
  out.radii = radii;
  out.center = value;
  out.shells.assign(radii.size(), std::vector<CMat>(nodes, value));
  return out;
}

BallField<CMat> extend_free(const SurfaceMesh& mesh, const ProjectorField& p, int rank, int dim,
                            const std::vector<double>& radii, const ExtensionOptions& opt, int depth) {
  const std::size_t nodes = mesh.nodes.size();
  if (rank == 0) return constant_ball(radii, nodes, CMat::Zero(dim, dim));
  if (rank == dim) return constant_ball(radii, nodes, CMat::Identity(dim, dim));
  SphereFrame sf = frame_on_sphere(mesh, p, rank, opt.sphere);
  std::vector<CVec> first;
  for (const auto& f : sf.frames) first.push_back(f.col(0));
  ExtensionOptions o = opt;
  o.shells = static_cast<int>(radii.size());
  o.avoidance.seed = opt.avoidance.seed + 7919 * depth;
  BallField<CVec> u = extend_rank1(first, o);
  BallField<CMat> out;
  out.radii = radii;
  out.center = u.center * u.center.adjoint();
  out.shells.resize(radii.size());
  for (std::size_t s = 0; s < radii.size(); ++s)
    for (const auto& v : u.shells[s]) out.shells[s].push_back(v * v.adjoint());
  if (rank == 1) return out;

  const CMat id = CMat::Identity(dim, dim);
  BallField<CMat> q1 = out;
  q1.center = id - out.center;
  for (auto& shell : q1.shells)
    for (auto& m : shell) m = id - m;
  ProjectorField rest(nodes);
  for (std::size_t j = 0; j < nodes; ++j) {
    CMat f = sf.frames[j].rightCols(rank - 1);
    rest[j] = f * f.adjoint();
  }
  BallField<CMat> r = extend_in_q(mesh, rest, rank - 1, q1, opt, depth + 1);
  out.center += r.center;
  for (std::size_t s = 0; s < radii.size(); ++s)
    for (std::size_t j = 0; j < nodes; ++j) out.shells[s][j] += r.shells[s][j];
  return out;
}

// Frames of Q transported from the center along every ray: psi[s][j].
std::vector<std::vector<CMat>> ray_frames(const BallField<CMat>& q, const CMat& center_frame) {
  const std::size_t shells = q.radii.size(), nodes = q.shells[0].size();
  std::vector<std::vector<CMat>> psi(shells, std::vector<CMat>(nodes));
  for (std::size_t j = 0; j < nodes; ++j) {
    ProjectorField path{q.center};
    for (std::size_t s = shells; s-- > 0;) path.push_back(q.shells[s][j]);
    FrameField f = transport_frame(path, center_frame);
    for (std::size_t s = 0; s < shells; ++s) psi[s][j] = f[shells - s];
  }
  return psi;
}

BallField<CMat> extend_in_q(const SurfaceMesh& mesh, const ProjectorField& p, int rank, const BallField<CMat>& q,
                            const ExtensionOptions& opt, int depth) {
  const int dq = projector_rank(q.center);
  const CMat c = canonical_frame(q.center, dq);
  auto psi = ray_frames(q, c);
  ProjectorField reduced(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) reduced[j] = hermitian_part(psi[0][j].adjoint() * p[j] * psi[0][j]);
  BallField<CMat> e = extend_free(mesh, reduced, rank, dq, q.radii, opt, depth);
  BallField<CMat> out;
  out.radii = q.radii;
  out.center = c * e.center * c.adjoint();
  out.shells.resize(q.radii.size());
  for (std::size_t s = 0; s < q.radii.size(); ++s)
    for (std::size_t j = 0; j < p.size(); ++j) out.shells[s].push_back(psi[s][j] * e.shells[s][j] * psi[s][j].adjoint());
  return out;
}

}  // namespace

BallField<CMat> extend_projector(const SurfaceMesh& mesh, const ProjectorField& p, int rank, const BallField<CMat>& q,
                                 const ExtensionOptions& opt) {
  require(p.size() == mesh.nodes.size(), "field size does not match the mesh");
  require(!q.radii.empty() && q.radii[0] == 1.0, "ball field shell 0 must be the boundary");
  require(q.shells.size() == q.radii.size(), "ball field shells do not match radii");
  for (const auto& shell : q.shells) require(shell.size() == mesh.nodes.size(), "ball field shell size mismatch");
  for (std::size_t j = 0; j < p.size(); ++j)
    require((q.shells[0][j] * p[j] - p[j]).norm() < 1e-9, "boundary projector is not contained in Q");
  BallField<CMat> out = extend_in_q(mesh, p, rank, q, opt, 0);
  double drift = 0;
  for (std::size_t j = 0; j < p.size(); ++j) drift = std::max(drift, (out.shells[0][j] - p[j]).norm());
  if (!(drift < 1e-7)) fail(ErrorKind::Numerical, "extension does not reproduce the boundary data");
  out.shells[0] = p;
  return out;
}

// ---------------------------------------------------------------------------

CVec apply_theta(const RMat& theta, const CVec& v) { return theta.cast<cplx>() * v.conjugate(); }

CMat apply_theta(const RMat& theta, const CMat& a, bool op) {
  CMat t = theta.cast<cplx>();
  return op ? CMat(t * a.conjugate() * t.transpose()) : CMat(t * a.conjugate());
}

CMat real_frame(const CMat& p, int rank, const RMat& theta) {
  const Eigen::Index m = p.rows();
  require((apply_theta(theta, p, true) - p).norm() < 1e-9, "projector is not theta symmetric");
  CMat v = canonical_frame(p, rank);
  std::vector<CVec> cand;
  for (Eigen::Index c = 0; c < rank; ++c) {
    CVec x = v.col(c), tx = apply_theta(theta, CVec(v.col(c)));
    cand.push_back(x + tx);
    cand.push_back(cplx(0, 1) * (x - tx));
  }
  CMat out(m, rank);
  int filled = 0;
  for (auto& c : cand) {
    if (filled == rank) break;
    for (int k = 0; k < filled; ++k) c -= out.col(k).dot(c).real() * out.col(k);
    c = 0.5 * (c + apply_theta(theta, c));
    if (c.norm() > 1e-6) out.col(filled++) = c.normalized();
  }
  if (filled < rank) fail(ErrorKind::Numerical, "could not build a real frame");
  return out;
}

namespace {

void check_pairs(const ProjectorField& loop, const RMat& theta) {
  const std::size_t len = loop.size();
  require(len >= 4 && len % 2 == 0, "symmetric loops need an even number of samples");
  for (std::size_t j = 0; j < len / 2; ++j)
    if (!((loop[j + len / 2] - apply_theta(theta, loop[j], true)).norm() < 1e-9))
      fail(ErrorKind::Symmetry, "loop samples " + std::to_string(j) + " and " + std::to_string(j + len / 2) +
                                    " are not related by time reversal");
}

std::vector<Vec3> circle_positions(std::size_t len) {
  std::vector<Vec3> x;
  for (std::size_t j = 0; j < len; ++j) {
    const double a = kTwoPi * j / len;
    x.emplace_back(std::cos(a), std::sin(a), 0);
  }
  return x;
}

}  // namespace

FrameField trs_frame_on_circle(const ProjectorField& loop, int rank, const RMat& theta, const TrsOptions& opt) {
  check_pairs(loop, theta);
  const std::size_t len = loop.size(), half = len / 2;
  ProjectorField upper(loop.begin(), loop.begin() + half + 1);
  FrameField f = transport_frame(upper, canonical_frame(loop[0], rank));
  const CMat u = unitarize(apply_theta(theta, f[0], false).adjoint() * f[half]);
  FrameField out(len);
  for (std::size_t j = 0; j < half; ++j) out[j] = f[j] * unitary_power(u, -static_cast<double>(j) / half);
  for (std::size_t j = 0; j < half; ++j) out[j + half] = apply_theta(theta, out[j], false);
  if (opt.delta > 0) {
    out = smooth_frames(circle_positions(len), out, loop, opt.delta);
    for (std::size_t j = 0; j < half; ++j) out[j + half] = apply_theta(theta, out[j], false);
  }
  return out;
}

namespace {

CVec realify(const RMat& theta, const CVec& v) {
  CVec r = 0.5 * (v + apply_theta(theta, v));
  const double n = r.norm();
  if (!(n > 1e-12)) fail(ErrorKind::Numerical, "vector has no real part");
  return r / n;
}

// Value of the boundary loop at angle beta by normalized linear interpolation.
CVec loop_value(const std::vector<CVec>& phi, double beta) {
  const std::size_t len = phi.size();
  double u = beta / (kTwoPi / len);
  u -= len * std::floor(u / len);
  const std::size_t i0 = static_cast<std::size_t>(std::floor(u)) % len, i1 = (i0 + 1) % len;
  const double f = u - std::floor(u);
  CVec v = (1 - f) * phi[i0] + f * phi[i1];
  return v.normalized();
}

}  // namespace

DiskVectorField trs_contract_vector_on_disk(const std::vector<CVec>& phi, const RMat& theta, const TrsOptions& opt) {
  const std::size_t len = phi.size(), half = len / 2;
  require(len >= 4 && len % 2 == 0, "symmetric loops need an even number of samples");
  for (std::size_t j = 0; j < half; ++j)
    if (!((phi[j + half] - apply_theta(theta, phi[j])).norm() < 1e-9))
      fail(ErrorKind::Symmetry, "vector loop violates phi(-w) = theta phi(w) at sample " + std::to_string(j));
  const Eigen::Index m = phi[0].size();

  DiskVectorField out;
  BallField<CVec>& f = out.field;
  f.radii = shell_radii(opt.shells);
  f.shells.assign(f.radii.size(), std::vector<CVec>(len));

  std::size_t j0 = 0;
  double best = 1e300;
  for (std::size_t j = 0; j < len; ++j) {
    const double r = (phi[j] - apply_theta(theta, phi[j])).norm();
    if (r < best) {
      best = r;
      j0 = j;
    }
  }
  if (best > opt.real_tol) {
    // No real value on the loop: contract towards a real vector.
    std::mt19937_64 rng(opt.avoidance.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    CVec target;
    bool found = false;
    for (int trial = 0; trial < opt.avoidance.max_trials && !found; ++trial) {
      CVec x(m);
      for (Eigen::Index i = 0; i < m; ++i) x(i) = cplx(normal(rng), normal(rng));
      if ((x + apply_theta(theta, x)).norm() < 1e-6) continue;
      x = realify(theta, x);
      double dmin = 1e300;
      for (const auto& v : phi) dmin = std::min(dmin, (v + x).norm());
      if (dmin > opt.avoidance.floor) {
        target = x;
        found = true;
      }
    }
    if (!found) fail(ErrorKind::AvoidanceFailure, "no real vector avoided by the loop");
    f.center = target;
    for (std::size_t s = 0; s < f.radii.size(); ++s)
      for (std::size_t j = 0; j < half; ++j) {
        f.shells[s][j] = s == 0 ? phi[j] : contraction_blend(radial_cutoff(f.radii[s]), phi[j], target);
        f.shells[s][j + half] = s == 0 ? phi[j + half] : apply_theta(theta, f.shells[s][j]);
      }
    return out;
  }

  // A real value at w0: hold it on the diameter [-w0, w0], contract the upper
  // half disk onto an avoided vector, reflect, then mollify.
  out.real_point_branch = true;
  j0 %= half;
  out.real_index = static_cast<int>(j0);
  const CVec phi0 = realify(theta, phi[j0]);
  const double a0 = kTwoPi * j0 / len;
  const Eigen::Vector2d e0(std::cos(a0), std::sin(a0)), n0(-std::sin(a0), std::cos(a0));
  const Eigen::Vector2d c = 0.5 * n0;

  std::vector<CVec> boundary{phi0};
  for (std::size_t j = j0; j <= j0 + half; ++j) boundary.push_back(phi[j % len]);
  const CVec target = -find_avoided_point(boundary, opt.avoidance).point;

  auto upper_value = [&](const Eigen::Vector2d& x) -> CVec {
    if (std::abs(x.dot(n0)) < 1e-14) return phi0;
    const Eigen::Vector2d d = x - c;
    const double dn = d.norm();
    if (dn < 1e-14) return target;
    const Eigen::Vector2d dir = d / dn;
    const double cd = c.dot(dir);
    double s_exit = -cd + std::sqrt(cd * cd - (c.squaredNorm() - 1));
    bool on_line = false;
    if (dir.dot(n0) < 0) {
      const double sl = -c.dot(n0) / dir.dot(n0);
      if (sl < s_exit) {
        s_exit = sl;
        on_line = true;
      }
    }
    const Eigen::Vector2d b = c + s_exit * dir;
    const CVec value = on_line ? phi0 : loop_value(phi, std::atan2(b(1), b(0)));
    return contraction_blend(radial_cutoff(dn / s_exit), value, target);
  };

  auto in_upper = [&](std::size_t j) { return ((j + len - j0) % len) <= half; };
  std::vector<Vec3> pos;
  std::vector<CVec> raw;
  for (std::size_t s = 0; s < f.radii.size(); ++s)
    for (std::size_t j = 0; j < len; ++j) {
      const double a = kTwoPi * j / len;
      const Eigen::Vector2d x = f.radii[s] * Eigen::Vector2d(std::cos(a), std::sin(a));
      pos.emplace_back(x(0), x(1), 0);
      f.shells[s][j] = s == 0 ? phi[j] : (in_upper(j) ? upper_value(x) : CVec());
    }
  for (std::size_t s = 1; s < f.radii.size(); ++s)
    for (std::size_t j = 0; j < len; ++j)
      if (!in_upper(j)) f.shells[s][j] = apply_theta(theta, f.shells[s][(j + half) % len]);
  f.center = phi0;
  pos.emplace_back(0, 0, 0);

  // Mollify the continuous field and blend with the boundary values.
  for (std::size_t s = 0; s < f.radii.size(); ++s)
    for (std::size_t j = 0; j < len; ++j) raw.push_back(f.shells[s][j]);
  raw.push_back(f.center);
  auto w = kernel_weights(pos, opt.mollify);
  std::vector<CVec> moll(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    moll[i] = CVec::Zero(m);
    for (const auto& [k, wk] : w[i]) moll[i] += wk * raw[k];
  }
  auto blend_weight = [&](double r) { return 1.0 - smoothstep((r - (1 - 2 * opt.epsilon)) / opt.epsilon); };
  for (std::size_t s = 1; s < f.radii.size(); ++s)
    for (std::size_t j = 0; j < len; ++j) {
      const double fe = blend_weight(f.radii[s]);
      f.shells[s][j] = contraction_blend(1 - fe, phi[j], moll[s * len + j]);
    }
  f.center = realify(theta, moll.back());
  for (std::size_t s = 1; s < f.radii.size(); ++s)
    for (std::size_t j = 0; j < half; ++j) f.shells[s][j + half] = apply_theta(theta, f.shells[s][j]);
  return out;
}

namespace {

BallField<CMat> trs_extend_in_q(const ProjectorField& loop, int rank, const BallField<CMat>& q, const RMat& theta,
                                const TrsOptions& opt, int depth);

BallField<CMat> trs_extend_free(const ProjectorField& loop, int rank, int dim, const std::vector<double>& radii,
                                const TrsOptions& opt, int depth) {
  const std::size_t len = loop.size();
  if (rank == 0) return constant_ball(radii, len, CMat::Zero(dim, dim));
  if (rank == dim) return constant_ball(radii, len, CMat::Identity(dim, dim));
  const RMat id = RMat::Identity(dim, dim);
  FrameField frames = trs_frame_on_circle(loop, rank, id, opt);
  std::vector<CVec> first;
  for (const auto& fr : frames) first.push_back(fr.col(0));
  TrsOptions o = opt;
  o.shells = static_cast<int>(radii.size());
  o.avoidance.seed = opt.avoidance.seed + 7919 * depth;
  BallField<CVec> u = trs_contract_vector_on_disk(first, id, o).field;
  BallField<CMat> out;
  out.radii = radii;
  out.center = u.center * u.center.adjoint();
  out.shells.resize(radii.size());
  for (std::size_t s = 0; s < radii.size(); ++s)
    for (const auto& v : u.shells[s]) out.shells[s].push_back(v * v.adjoint());
  if (rank == 1) return out;
  const CMat eye = CMat::Identity(dim, dim);
  BallField<CMat> q1 = out;
  q1.center = eye - out.center;
  for (auto& shell : q1.shells)
    for (auto& mat : shell) mat = eye - mat;
  ProjectorField rest(len);
  for (std::size_t j = 0; j < len; ++j) {
    CMat fr = frames[j].rightCols(rank - 1);
    rest[j] = fr * fr.adjoint();
  }
  BallField<CMat> r = trs_extend_in_q(rest, rank - 1, q1, id, opt, depth + 1);
  out.center += r.center;
  for (std::size_t s = 0; s < radii.size(); ++s)
    for (std::size_t j = 0; j < len; ++j) out.shells[s][j] += r.shells[s][j];
  return out;
}

BallField<CMat> trs_extend_in_q(const ProjectorField& loop, int rank, const BallField<CMat>& q, const RMat& theta,
                                const TrsOptions& opt, int depth) {
  const std::size_t len = loop.size(), half = len / 2, shells = q.radii.size();
  const int dq = projector_rank(q.center);
  const CMat c = real_frame(q.center, dq, theta);
  std::vector<std::vector<CMat>> psi(shells, std::vector<CMat>(len));
  for (std::size_t j = 0; j < half; ++j) {
    ProjectorField path{q.center};
    for (std::size_t s = shells; s-- > 0;) path.push_back(q.shells[s][j]);
    FrameField f = transport_frame(path, c);
    for (std::size_t s = 0; s < shells; ++s) {
      psi[s][j] = f[shells - s];
      psi[s][j + half] = apply_theta(theta, psi[s][j], false);
    }
  }
  ProjectorField reduced(len);
  for (std::size_t j = 0; j < half; ++j) {
    reduced[j] = hermitian_part(psi[0][j].adjoint() * loop[j] * psi[0][j]);
    reduced[j + half] = reduced[j].conjugate();
  }
  BallField<CMat> e = trs_extend_free(reduced, rank, dq, q.radii, opt, depth);
  BallField<CMat> out;
  out.radii = q.radii;
  out.center = c * e.center * c.adjoint();
  out.shells.assign(shells, std::vector<CMat>(len));
  for (std::size_t s = 0; s < shells; ++s)
    for (std::size_t j = 0; j < half; ++j) {
      out.shells[s][j] = psi[s][j] * e.shells[s][j] * psi[s][j].adjoint();
      out.shells[s][j + half] = apply_theta(theta, out.shells[s][j], true);
    }
  return out;
}

}  // namespace

BallField<CMat> trs_extend_on_disk(const ProjectorField& loop, int rank, const BallField<CMat>& q, const RMat& theta,
                                   const TrsOptions& opt) {
  check_pairs(loop, theta);
  require(!q.radii.empty() && q.radii[0] == 1.0, "disk field shell 0 must be the boundary");
  for (const auto& shell : q.shells) check_pairs(shell, theta);
  require((apply_theta(theta, q.center, true) - q.center).norm() < 1e-9, "Q is not symmetric at the center");
  for (std::size_t j = 0; j < loop.size(); ++j)
    require((q.shells[0][j] * loop[j] - loop[j]).norm() < 1e-9, "boundary projector is not contained in Q");
  TrsOptions o = opt;
  o.shells = static_cast<int>(q.radii.size());
  BallField<CMat> out = trs_extend_in_q(loop, rank, q, theta, o, 0);
  double drift = 0;
  for (std::size_t j = 0; j < loop.size(); ++j) drift = std::max(drift, (out.shells[0][j] - loop[j]).norm());
  if (!(drift < 1e-7)) fail(ErrorKind::Numerical, "extension does not reproduce the boundary loop");
  out.shells[0] = loop;
  out.center = 0.5 * (out.center + apply_theta(theta, out.center, true));
  return out;
}

double trs_defect(const BallField<CMat>& f, const RMat& theta) {
  double d = (f.center - apply_theta(theta, f.center, true)).norm();
  for (const auto& shell : f.shells) {
    const std::size_t half = shell.size() / 2;
    for (std::size_t j = 0; j < half; ++j) d = std::max(d, (shell[j + half] - apply_theta(theta, shell[j], true)).norm());
  }
  return d;
}

}  // namespace wdis
