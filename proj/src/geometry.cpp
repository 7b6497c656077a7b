#include "wdis/geometry.hpp"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "wdis/errors.hpp"

namespace wdis {

int SurfaceMesh::node(int ring, int j) const {
  if (ring == 0) return 0;
  if (ring == n_theta) return 1 + (n_theta - 1) * n_phi;
  const int jj = ((j % n_phi) + n_phi) % n_phi;
  return 1 + (ring - 1) * n_phi + jj;
}

double SurfaceMesh::theta(int ring) const { return kPi * ring / n_theta; }
double SurfaceMesh::phi(int j) const { return kTwoPi * j / n_phi; }

static SurfaceMesh latlong_topology(int n_theta, int n_phi) {
  require(n_theta >= 2 && n_phi >= 3, "latitude-longitude mesh needs n_theta >= 2 and n_phi >= 3");
  SurfaceMesh m;
  m.n_theta = n_theta;
  m.n_phi = n_phi;
  const int count = 2 + (n_theta - 1) * n_phi;
  m.directions.resize(count);
  for (int ring = 0; ring <= n_theta; ++ring)
    for (int j = 0; j < (ring == 0 || ring == n_theta ? 1 : n_phi); ++j) {
      const double t = m.theta(ring), p = m.phi(j);
      Vec3 d(std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t));
      if (ring == 0) d = Vec3(0, 0, 1);
      if (ring == n_theta) d = Vec3(0, 0, -1);
      m.directions[m.node(ring, j)] = d;
    }
  for (int ring = 0; ring < n_theta; ++ring)
    for (int j = 0; j < n_phi; ++j)
      m.quads.push_back({m.node(ring, j), m.node(ring + 1, j), m.node(ring + 1, j + 1), m.node(ring, j + 1)});
  return m;
}

SurfaceMesh sphere_mesh(const Vec3& center, double radius, int n_theta, int n_phi) {
  require(radius > 0, "sphere radius must be positive");
  SurfaceMesh m = latlong_topology(n_theta, n_phi);
  m.center = center;
  for (const Vec3& d : m.directions) m.nodes.push_back(center + radius * d);
  return m;
}

double box_radial_extent(const Vec3& half_widths, const Vec3& direction) {
  double t = 1e300;
  for (int a = 0; a < 3; ++a)
    if (std::abs(direction(a)) > 1e-300) t = std::min(t, half_widths(a) / std::abs(direction(a)));
  return t;
}

SurfaceMesh box_latlong_mesh(const Vec3& center, const Vec3& half_widths, int n_theta, int n_phi) {
  require((half_widths.array() > 0).all(), "box half widths must be positive");
  SurfaceMesh m = latlong_topology(n_theta, n_phi);
  m.center = center;
  for (const Vec3& d : m.directions) m.nodes.push_back(center + box_radial_extent(half_widths, d) * d);
  return m;
}

SurfaceMesh box_mesh(const Vec3& center, const Vec3& half_widths, int n) {
  require(n >= 1, "box mesh needs at least one cell per edge");
  require((half_widths.array() > 0).all(), "box half widths must be positive");
  SurfaceMesh m;
  m.center = center;
  std::map<std::array<int, 3>, int> index;
  auto node = [&](std::array<int, 3> c) {
    auto it = index.find(c);
    if (it != index.end()) return it->second;
    Vec3 x;
    for (int a = 0; a < 3; ++a) x(a) = center(a) - half_widths(a) + 2.0 * half_widths(a) * c[a] / n;
    const int id = static_cast<int>(m.nodes.size());
    m.nodes.push_back(x);
    index.emplace(c, id);
    return id;
  };
  for (int a = 0; a < 3; ++a)
    for (int side : {0, n}) {
      const int b = (a + 1) % 3, c = (a + 2) % 3;
      for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v) {
          std::array<std::array<int, 3>, 4> corner;
          const int du[4] = {0, 1, 1, 0}, dv[4] = {0, 0, 1, 1};
          for (int q = 0; q < 4; ++q) {
            corner[q][a] = side;
            corner[q][b] = u + du[q];
            corner[q][c] = v + dv[q];
          }
          std::array<int, 4> quad{node(corner[0]), node(corner[1]), node(corner[2]), node(corner[3])};
          if (side == 0) std::swap(quad[1], quad[3]);
          m.quads.push_back(quad);
        }
    }
  return m;
}

int euler_characteristic(const SurfaceMesh& mesh) {
  std::set<std::pair<int, int>> edges;
  std::set<int> used;
  for (const auto& q : mesh.quads)
    for (int e = 0; e < 4; ++e) {
      const int a = q[e], b = q[(e + 1) % 4];
      used.insert(a);
      if (a != b) edges.insert({std::min(a, b), std::max(a, b)});
    }
  return static_cast<int>(used.size()) - static_cast<int>(edges.size()) + static_cast<int>(mesh.quads.size());
}

double enclosed_volume(const SurfaceMesh& mesh) {
  double v = 0;
  for (const auto& q : mesh.quads) {
    const Vec3 &p0 = mesh.nodes[q[0]], &p1 = mesh.nodes[q[1]], &p2 = mesh.nodes[q[2]], &p3 = mesh.nodes[q[3]];
    v += p0.dot(p1.cross(p2)) + p0.dot(p2.cross(p3));
  }
  return v / 6.0;
}

bool edges_consistent(const SurfaceMesh& mesh) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& q : mesh.quads)
    for (int e = 0; e < 4; ++e) {
      const int a = q[e], b = q[(e + 1) % 4];
      if (a != b) ++directed[{a, b}];
    }
  for (const auto& [edge, count] : directed) {
    if (count != 1) return false;
    auto it = directed.find({edge.second, edge.first});
    if (it == directed.end() || it->second != 1) return false;
  }
  return true;
}

CMat loewdin_frame(const CMat& p, const CMat& phi0, double gram_floor) {
  CMat x = p * phi0;
  CMat g = x.adjoint() * x;
  const double lmin = min_eigenvalue(g);
  if (!(lmin > gram_floor)) {
    std::ostringstream os;
    os << "Gram matrix smallest eigenvalue " << lmin << " is below " << gram_floor;
    fail(ErrorKind::TransportBreakdown, os.str());
  }
  return x * inverse_sqrt(g);
}

static double hermitian_op_norm(const CMat& h) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(h), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

FrameField transport_frame(const ProjectorField& path, const CMat& phi0, double gram_floor) {
  require(!path.empty(), "transport needs at least one projector sample");
  FrameField out;
  out.reserve(path.size());
  out.push_back(loewdin_frame(path[0], phi0, gram_floor));
  for (std::size_t j = 1; j < path.size(); ++j) {
    const double step = hermitian_op_norm(path[j] - path[j - 1]);
    if (!(step < 0.5)) {
      std::ostringstream os;
      os << "projector step " << step << " between samples " << j - 1 << " and " << j << " exceeds 0.5";
      fail(ErrorKind::MeshTooCoarse, os.str());
    }
    out.push_back(loewdin_frame(path[j], out.back(), gram_floor));
  }
  return out;
}

ProjectorField sample_segment(const std::function<CMat(const Vec3&)>& field, const Vec3& a, const Vec3& b,
                              int steps) {
  require(steps >= 1, "segment needs at least one step");
  ProjectorField out;
  out.reserve(steps + 1);
  for (int j = 0; j <= steps; ++j) out.push_back(field(a + (b - a) * (static_cast<double>(j) / steps)));
  return out;
}

CMat canonical_frame(const CMat& p, int rank) {
  require(rank >= 0 && rank <= p.rows(), "frame rank out of range");
  Eigh e = eigh(p);
  const Eigen::Index m = p.rows();
  if (rank > 0 && (e.values(m - rank) < 0.5 || (rank < m && e.values(m - rank - 1) > 0.5)))
    fail(ErrorKind::Numerical, "matrix is not a projector of the requested rank");
  return e.vectors.rightCols(rank);
}

cplx link_phase(const CMat& pa, const CMat& pb, int rank, double floor) {
  CMat fa = canonical_frame(pa, rank), fb = canonical_frame(pb, rank);
  const cplx d = (fa.adjoint() * fb).determinant();
  if (!(std::abs(d) >= floor)) fail(ErrorKind::Numerical, "link-degenerate: overlap determinant below floor");
  return d / std::abs(d);
}

static double flux_from_frames(const CMat& f1, const CMat& f2, const CMat& f3, const CMat& f4) {
  const cplx w = ((f1.adjoint() * f2) * (f2.adjoint() * f3) * (f3.adjoint() * f4) * (f4.adjoint() * f1)).determinant();
  if (!(std::abs(w) > 1e-12)) fail(ErrorKind::RefineMesh, "plaquette Wilson loop vanishes");
  return -std::arg(w);
}

double plaquette_flux(const CMat& p1, const CMat& p2, const CMat& p3, const CMat& p4, int rank) {
  return flux_from_frames(canonical_frame(p1, rank), canonical_frame(p2, rank), canonical_frame(p3, rank),
                          canonical_frame(p4, rank));
}

static std::vector<double> all_fluxes(const SurfaceMesh& mesh, const ProjectorField& field, int rank) {
  require(field.size() == mesh.nodes.size(), "field size does not match the mesh");
  FrameField frames;
  frames.reserve(field.size());
  for (const auto& p : field) frames.push_back(canonical_frame(p, rank));
  std::vector<double> flux;
  flux.reserve(mesh.quads.size());
  for (const auto& q : mesh.quads) flux.push_back(flux_from_frames(frames[q[0]], frames[q[1]], frames[q[2]], frames[q[3]]));
  return flux;
}

BerryData chern_number(const SurfaceMesh& mesh, const ProjectorField& field, int rank, const ChernOptions& opt) {
  BerryData out;
  out.flux = all_fluxes(mesh, field, rank);
  double sum = 0;
  for (std::size_t i = 0; i < out.flux.size(); ++i) {
    if (std::abs(out.flux[i]) > opt.max_flux) {
      std::ostringstream os;
      os << "flux " << out.flux[i] << " through quad " << i << " is too close to pi";
      fail(ErrorKind::RefineMesh, os.str());
    }
    sum += out.flux[i];
  }
  out.total = sum / kTwoPi;
  out.chern = static_cast<int>(std::lround(out.total));
  out.residual = std::abs(out.total - out.chern);
  if (out.residual >= opt.max_residual) {
    std::ostringstream os;
    os << "total flux " << out.total << " is not close to an integer";
    fail(ErrorKind::InconsistentField, os.str());
  }
  return out;
}

WindingResult winding_number(const std::vector<cplx>& loop, double max_step, double max_residual) {
  require(loop.size() >= 2, "winding number needs at least two samples");
  WindingResult out;
  double sum = 0;
  for (std::size_t j = 0; j < loop.size(); ++j) {
    const cplx a = loop[j], b = loop[(j + 1) % loop.size()];
    if (std::abs(a) == 0.0) fail(ErrorKind::Numerical, "winding loop passes through zero");
    const double step = std::arg(b / a);
    out.max_step = std::max(out.max_step, std::abs(step));
    if (std::abs(step) >= max_step) {
      std::ostringstream os;
      os << "argument step " << step << " after sample " << j << " is too large";
      fail(ErrorKind::RefineLoop, os.str());
    }
    sum += step;
  }
  out.raw = sum / kTwoPi;
  out.winding = static_cast<int>(std::lround(out.raw));
  out.residual = std::abs(out.raw - out.winding);
  if (out.residual >= max_residual) fail(ErrorKind::InconsistentField, "winding is not an integer");
  return out;
}

AdditivityReport curvature_additivity_check(const SurfaceMesh& mesh, const ProjectorField& p, int rank_p,
                                            const ProjectorField& q, int rank_q, double overlap_floor) {
  require(p.size() == q.size() && p.size() == mesh.nodes.size(), "fields do not match the mesh");
  AdditivityReport out;
  ProjectorField sum(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    out.max_overlap = std::max(out.max_overlap, (p[i] * q[i]).norm());
    sum[i] = p[i] + q[i];
  }
  if (!(out.max_overlap < overlap_floor)) fail(ErrorKind::Precondition, "projectors are not orthogonal");
  BerryData bp = chern_number(mesh, p, rank_p), bq = chern_number(mesh, q, rank_q),
            bs = chern_number(mesh, sum, rank_p + rank_q);
  out.chern_p = bp.chern;
  out.chern_q = bq.chern;
  out.chern_sum = bs.chern;
  for (std::size_t i = 0; i < bs.flux.size(); ++i) {
    const double d = std::arg(std::polar(1.0, bs.flux[i] - bp.flux[i] - bq.flux[i]));
    out.max_plaquette_defect = std::max(out.max_plaquette_defect, std::abs(d));
  }
  return out;
}

}  // namespace wdis
