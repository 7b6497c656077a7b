#include "wdis/disentangle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wdis/errors.hpp"

namespace wdis {

namespace {

std::string format_k(const KPoint& k) {
  std::ostringstream os;
  os.precision(17);
  os << "(" << k(0) << ", " << k(1) << ", " << k(2) << ")";
  return os.str();
}

// Minimal circular arc containing all coordinates: returns (center, half length).
std::pair<double, double> minimal_arc(std::vector<double> u) {
  for (double& x : u) x -= std::floor(x);
  std::sort(u.begin(), u.end());
  double gap = u.front() + 1 - u.back();
  std::size_t start = 0;
  for (std::size_t i = 1; i < u.size(); ++i)
    if (u[i] - u[i - 1] > gap + 1e-12) {
      gap = u[i] - u[i - 1];
      start = i;
    }
  const double length = 1 - gap;
  return {u[start] + 0.5 * length, 0.5 * length};
}

}  // namespace

Vec3 Region::offset(const KPoint& k) const { return wrap_displacement(k - center); }

bool Region::contains(const KPoint& k) const { return depth(k) > 0; }

bool Region::in_inner(const KPoint& k) const { return depth(k) >= epsilon; }

double Region::depth(const KPoint& k) const {
  const Vec3 x = offset(k);
  return (half.array() - x.array().abs()).minCoeff();
}

double Region::distance(const KPoint& k) const {
  const Vec3 x = offset(k);
  return (x.array().abs() - half.array()).max(0.0).matrix().norm();
}

double Region::ellipsoidal_radius(const KPoint& k) const { return (offset(k).array() / half.array()).matrix().norm(); }

SurfaceMesh Region::boundary_mesh(int n_theta, int n_phi) const {
  return box_latlong_mesh(center, half, n_theta, n_phi);
}

std::vector<KPoint> crossing_points(const std::vector<Crossing>& c) {
  std::vector<KPoint> out;
  for (const auto& x : c) out.push_back(x.k);
  return out;
}

Region build_region(const std::vector<KPoint>& upper, const std::vector<KPoint>& lower,
                    const std::optional<std::vector<KPoint>>& next, const RegionOptions& opt) {
  require(!upper.empty(), "no crossings between bands N+1 and N+2: P_{N+1} itself is smooth, use it directly");
  require(opt.margin > 0 && opt.epsilon > 0, "margin and epsilon must be positive");
  Vec3 center, base;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> u;
    for (const auto& k : upper) u.push_back(k(a));
    auto [c, h] = minimal_arc(u);
    center(a) = c;
    base(a) = h;
  }
  std::ostringstream why;
  for (double scale : {1.0, 0.75, 0.5, 0.35, 0.25}) {
    Region r;
    r.center = center;
    r.epsilon = opt.epsilon;
    r.pad = scale * opt.margin;
    r.crossings = upper;
    for (int a = 0; a < 3; ++a) r.half(a) = std::min(base(a) + r.pad, opt.max_half);
    // Grow the axes that dominate the ellipsoidal radius of the crossings.
    for (int iter = 0; iter < 200; ++iter) {
      double worst = 0;
      Vec3 worst_x = Vec3::Zero();
      for (const auto& k : upper) {
        const double rho = r.ellipsoidal_radius(k);
        if (rho > worst) {
          worst = rho;
          worst_x = r.offset(k);
        }
      }
      r.core_radius = worst;
      if (worst <= opt.core_max) break;
      bool grown = false;
      for (int a = 0; a < 3; ++a)
        if (std::abs(worst_x(a)) > 0.1 * r.half(a) && r.half(a) < opt.max_half) {
          r.half(a) = std::min(opt.max_half, 1.05 * r.half(a));
          grown = true;
        }
      if (!grown) break;
    }
    r.clearance = 1e300;
    for (const auto& k : upper) r.clearance = std::min(r.clearance, r.depth(k));
    for (const auto& k : lower) r.distance_lower = std::min(r.distance_lower, r.distance(k));
    if (next)
      for (const auto& k : *next) r.distance_upper = std::min(r.distance_upper, r.distance(k));
    const double min_half = r.half.minCoeff();
    if (r.core_radius > opt.core_max) {
      why << " pad " << r.pad << ": core radius " << r.core_radius << ";";
      continue;
    }
    if (!(r.clearance > opt.epsilon)) {
      why << " pad " << r.pad << ": clearance " << r.clearance << ";";
      continue;
    }
    if (!(r.distance_lower > 2 * opt.epsilon)) {
      why << " pad " << r.pad << ": K_N at distance " << r.distance_lower << ";";
      continue;
    }
    if (!(r.distance_upper > 2 * opt.epsilon)) {
      why << " pad " << r.pad << ": K_{N+2} at distance " << r.distance_upper << ";";
      continue;
    }
    if (!(opt.epsilon < min_half / 4)) {
      why << " pad " << r.pad << ": epsilon not below a quarter of the half width;";
      continue;
    }
    return r;
  }
  fail(ErrorKind::RegionConstruction, "no admissible box around the crossings:" + why.str());
}

double glue_cutoff(const Region& region, double epsilon, const KPoint& k) {
  const Vec3 x = region.offset(k);
  double keep = 1;
  for (int a = 0; a < 3; ++a) {
    const double d = region.half(a) - std::abs(x(a));
    if (d <= 0) return 1;
    keep *= 1 - smoothstep((epsilon - d) / epsilon);
  }
  return 1 - keep;
}

namespace {

CMat lower_projector(const Model& model, const KPoint& k, int n) {
  return n == 0 ? CMat(CMat::Zero(model.dim(), model.dim())) : model.spectral_projector(k, n);
}

}  // namespace

ProjectorField boundary_quasiprojector(const Model& model, int n, const SurfaceMesh& mesh) {
  require(n >= 0 && n + 1 < model.dim() + 1, "band index out of range");
  ProjectorField out;
  for (const auto& k : mesh.nodes) {
    try {
      const CMat pn = lower_projector(model, k, n);
      const CMat p = model.spectral_projector(k, n + 1) - pn;
      if (!((p * pn).norm() < 1e-9)) fail(ErrorKind::Numerical, "quasi-projector not orthogonal to P_N");
      out.push_back(p);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateCut) throw;
      fail(ErrorKind::RegionInvalid, std::string("gap closes on the region boundary: ") + e.what());
    }
  }
  return out;
}

RegionCharges region_charges(const Model& model, int n, const Region& region, int n_theta, int n_phi) {
  const SurfaceMesh mesh = region.boundary_mesh(n_theta, n_phi);
  ProjectorField lower, upper;
  for (const auto& k : mesh.nodes) {
    try {
      lower.push_back(lower_projector(model, k, n));
      upper.push_back(model.spectral_projector(k, n + 1));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateCut) throw;
      fail(ErrorKind::RegionInvalid, std::string("gap closes on the region boundary: ") + e.what());
    }
  }
  ProjectorField p(mesh.nodes.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = upper[i] - lower[i];
  RegionCharges c;
  if (n > 0) c.lower = chern_number(mesh, lower, n);
  c.upper = chern_number(mesh, upper, n + 1);
  c.p = chern_number(mesh, p, 1);
  return c;
}

std::vector<ChargeEntry> charge_report(const Model& model, int n, const std::vector<KPoint>& crossings, double radius,
                                       int n_theta, int n_phi) {
  require(radius > 0, "sphere radius must be positive");
  for (std::size_t i = 0; i < crossings.size(); ++i)
    for (std::size_t j = i + 1; j < crossings.size(); ++j) {
      const double d = model.periodic() ? torus_distance(crossings[i], crossings[j])
                                        : (crossings[i] - crossings[j]).norm();
      if (!(d > 2 * radius))
        fail(ErrorKind::Radius, "spheres of radius " + std::to_string(radius) + " around " + format_k(crossings[i]) +
                                    " and " + format_k(crossings[j]) + " overlap");
    }
  std::vector<ChargeEntry> out;
  for (const auto& k : crossings) {
    const SurfaceMesh mesh = sphere_mesh(k, radius, n_theta, n_phi);
    ProjectorField p;
    for (const auto& x : mesh.nodes) {
      try {
        p.push_back(model.spectral_projector(x, n + 1) - lower_projector(model, x, n));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateCut) throw;
        fail(ErrorKind::Radius, "sphere around " + format_k(k) + " meets another crossing: " + e.what());
      }
    }
    BerryData b = chern_number(mesh, p, 1);
    out.push_back(ChargeEntry{k, b.chern, b.residual, radius});
  }
  return out;
}

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::Outside:
      return "outside";
    case Provenance::Extended:
      return "extended";
    case Provenance::Glued:
      return "glued";
  }
  return "?";
}

CMat glue_projectors(const CMat& outer, const CMat& inner, double f, int rank, const GlueConfig& glue) {
  const CMat m = hermitian_part(f * outer + (1 - f) * inner);
  Eigh e = eigh(m);
  const Eigen::Index d = m.rows();
  const double kept = e.values(d - rank);
  const double dropped = rank < d ? e.values(d - rank - 1) : 0.0;
  if (kept < glue.accept || dropped > glue.reject) {
    std::ostringstream os;
    os << "glue eigenvalues not separated: smallest kept " << kept << ", largest dropped " << dropped;
    fail(ErrorKind::GlueFailure, os.str());
  }
  const CMat v = e.vectors.rightCols(rank);
  return v * v.adjoint();
}

namespace {

// Smooth rank-one extension of p = P_{N+1} - P_N into the region. In
// ellipsoidal coordinates y = x / half, p is kept exactly for |y| >= rho_out,
// contracted to a constant vector (in transported coordinates of Q) for
// |y| <= rho_in, and blended in between.
class CollarExtension {
 public:
  CollarExtension(const Model& model, int n, const Region& region, const GlueConfig& glue, bool assumption2)
      : model_(model), n_(n), region_(region), glue_(glue), assumption2_(assumption2) {
    rho_in_ = region.core_radius + glue.transition;
    rho_out_ = 1 - glue.epsilon / region.half.minCoeff();
    if (!(rho_out_ - rho_in_ > 0.1)) {
      std::ostringstream os;
      os << "collar too thin: blend radii " << rho_in_ << " to " << rho_out_ << "; enlarge the region";
      fail(ErrorKind::RegionInvalid, os.str());
    }
    const CMat q0 = q(region.center);
    dq_ = projector_rank(q0);
    psi0_ = canonical_frame(q0, dq_);

    mesh_ = sphere_mesh(Vec3::Zero(), 1.0, glue.sphere_theta, glue.sphere_phi);
    kernel_ = glue.kernel_width > 0 ? glue.kernel_width : 2.5 * kPi / glue.sphere_theta;
    const double rho_ref = 0.5 * (rho_in_ + rho_out_);
    ProjectorField ref;
    for (const auto& w : mesh_.directions) {
      const KPoint k = region.center + rho_ref * (region.half.array() * w.array()).matrix();
      const CMat psi = ray_frame(k);
      ref.push_back(hermitian_part(psi.adjoint() * p(k) * psi));
    }
    SphereFrameOptions so;
    so.contraction.seed = glue.seed + 1;
    const SphereFrame sf = frame_on_sphere(mesh_, ref, 1, so);
    for (const auto& f : sf.frames) sphere_.push_back(f.col(0));
  }

  double rho_in() const { return rho_in_; }
  double rho_out() const { return rho_out_; }
  int q_rank() const { return dq_; }
  double target_distance() const { return target_distance_; }

  // The constant vector of the core avoids the collar frame on a fixed set of
  // ellipsoidal shells, so it does not depend on the output grid.
  void choose_target() {
    std::vector<CVec> samples = sphere_;
    const SurfaceMesh coarse = sphere_mesh(Vec3::Zero(), 1.0, 24, 32);
    const int radii = 6;
    for (int s = 0; s <= radii; ++s) {
      const double rho = rho_in_ + (rho_out_ - rho_in_) * (s + 0.5) / (radii + 1);
      for (const auto& w : coarse.directions) {
        const KPoint k = region_.center + rho * (region_.half.array() * w.array()).matrix();
        samples.push_back(collar_vector(k, ray_frame(k)));
      }
    }
    AvoidanceOptions ao;
    ao.seed = glue_.seed;
    AvoidedPoint a = find_avoided_point(samples, ao);
    target_ = -a.point;
    target_distance_ = a.distance;
    has_target_ = true;
  }

  CMat extension(const KPoint& k) const {
    require(has_target_, "collar target not chosen");
    const double rho = region_.ellipsoidal_radius(k);
    if (rho >= rho_out_) return p(k);
    const CMat psi = ray_frame(k);
    CVec u = target_;
    if (rho > rho_in_) {
      const double h = smoothstep((rho - rho_in_) / (rho_out_ - rho_in_));
      u = contraction_blend(h, collar_vector(k, psi), target_);
    }
    const CVec v = psi * u;
    return v * v.adjoint();
  }

  CMat q(const KPoint& k) const {
    const CMat pn = lower(k);
    if (assumption2_ && n_ + 2 <= model_.dim()) return model_.spectral_projector(k, n_ + 2) - pn;
    return CMat::Identity(model_.dim(), model_.dim()) - pn;
  }

  CMat lower(const KPoint& k) const { return lower_projector(model_, k, n_); }

 private:
  CMat p(const KPoint& k) const { return model_.spectral_projector(k, n_ + 1) - lower(k); }

  CMat ray_frame(const KPoint& k) const {
    const Vec3 x = region_.offset(k);
    ProjectorField path;
    for (int m = 0; m <= glue_.ray_steps; ++m)
      path.push_back(q(region_.center + (static_cast<double>(m) / glue_.ray_steps) * x));
    return transport_frame(path, psi0_).back();
  }

  // Unit vector spanning Psi^dag p Psi, phase taken from the sphere frame.
  CVec collar_vector(const KPoint& k, const CMat& psi) const {
    const Vec3 y = (region_.offset(k).array() / region_.half.array()).matrix();
    const Vec3 w = y.normalized();
    CVec s = CVec::Zero(dq_);
    for (std::size_t i = 0; i < sphere_.size(); ++i) {
      const double r = (mesh_.directions[i] - w).norm() / kernel_;
      if (r < 1) s += std::exp(-1.0 / (1 - r * r)) * sphere_[i];
    }
    const CMat pt = hermitian_part(psi.adjoint() * p(k) * psi);
    CVec u = pt * s;
    if (!(u.norm() > 0.25 * s.norm() && s.norm() > 0))
      fail(ErrorKind::Numerical, "collar frame degenerates at " + format_k(k) + "; refine the reference sphere");
    return u.normalized();
  }

  const Model& model_;
  int n_;
  Region region_;
  GlueConfig glue_;
  bool assumption2_;
  double rho_in_ = 0, rho_out_ = 1;
  int dq_ = 0;
  CMat psi0_;
  SurfaceMesh mesh_;
  double kernel_ = 0;
  std::vector<CVec> sphere_;
  CVec target_;
  double target_distance_ = 0;
  bool has_target_ = false;
};

}  // namespace

DisentangledField build_global_projector(const Model& model, int n, const std::optional<Region>& region,
                                         const GlueConfig& glue, bool assumption2) {
  require(n >= 0 && n + 1 <= model.dim(), "band index out of range");
  require(glue.accept > glue.reject && glue.accept <= 1 && glue.reject >= 0, "glue thresholds out of order");
  DisentangledField out;
  out.grid = KGrid(glue.grid);
  out.band_index = n;
  out.rank = n + 1;
  out.region = region;
  out.assumption2 = assumption2;
  const std::size_t size = out.grid.size();
  out.projectors.resize(size);
  out.provenance.assign(size, Provenance::Outside);

  if (!region) {
    for (std::size_t i = 0; i < size; ++i) out.projectors[i] = model.spectral_projector(out.grid.point(i), n + 1);
    return out;
  }
  require(glue.epsilon > 0 && glue.epsilon < region->half.minCoeff() / 4,
          "glue epsilon must lie in (0, min half width / 4)");
  if (assumption2)
    require(n + 2 <= model.dim(), "assumption2 needs a band N+2");

  const RegionCharges charges = region_charges(model, n, *region);
  if (charges.p.chern != 0)
    throw TopologicalObstruction(charges.p.chern, "topological-obstruction: Ch(boundary, p) = " +
                                                      std::to_string(charges.p.chern) + ", the region misses crossings");

  CollarExtension ext(model, n, *region, glue, assumption2);
  ext.choose_target();

  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < size; ++i) {
    const KPoint k = out.grid.point(i);
    if (!region->contains(k)) {
      out.projectors[i] = model.spectral_projector(k, n + 1);
      ++counts[0];
      continue;
    }
    const CMat inner = ext.lower(k) + ext.extension(k);
    if (region->in_inner(k)) {
      out.projectors[i] = inner;
      out.provenance[i] = Provenance::Extended;
      ++counts[1];
      continue;
    }
    const double f = glue_cutoff(*region, glue.epsilon, k);
    try {
      out.projectors[i] = glue_projectors(model.spectral_projector(k, n + 1), inner, f, n + 1, glue);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::GlueFailure) throw;
      fail(ErrorKind::GlueFailure, std::string(e.what()) + " at node " + std::to_string(i) + " " + format_k(k));
    }
    out.provenance[i] = Provenance::Glued;
    ++counts[2];
  }
  out.diagnostics = {
      {"chern_boundary", {{"lower", charges.lower.chern}, {"upper", charges.upper.chern}, {"p", charges.p.chern}}},
      {"chern_residual", {{"lower", charges.lower.residual}, {"upper", charges.upper.residual}, {"p", charges.p.residual}}},
      {"blend_radii", {ext.rho_in(), ext.rho_out()}},
      {"q_rank", ext.q_rank()},
      {"target_distance", ext.target_distance()},
      {"nodes", {{"outside", counts[0]}, {"extended", counts[1]}, {"glued", counts[2]}}},
  };
  return out;
}

VerifyReport verify_field(const DisentangledField& field, const Model& model, const VerifyOptions& opt) {
  VerifyReport r;
  const KGrid& g = field.grid;
  const int n = field.band_index;
  require(field.projectors.size() == g.size(), "field does not match its grid");
  const bool upper_available = n + 2 <= model.dim();
  if (upper_available) r.upper_residual = 0;
  std::vector<CMat> model_upper(g.size());
  std::vector<bool> upper_gapped(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const KPoint k = g.point(i);
    const CMat& p = field.projectors[i];
    const Spectrum s = model.spectrum(k);
    const double idem = projector_defect(p), herm = (p - p.adjoint()).norm();
    const double rank = std::abs(p.trace().real() - field.rank);
    r.idempotency = std::max(r.idempotency, idem);
    r.hermiticity = std::max(r.hermiticity, herm);
    r.rank_error = std::max(r.rank_error, rank);
    if (!(idem < 1e-8 && herm < 1e-8 && rank < 1e-8) || p.rows() != model.dim()) r.bad_nodes.push_back(i);
    if (n > 0) {
      const CMat pn = s.projector(n);
      const double span = (p * pn - pn).norm();
      r.span_residual_all = std::max(r.span_residual_all, span);
      if (s.gap(n) > opt.gap_floor && span > r.span_residual) {
        r.span_residual = span;
        r.span_node = i;
      }
    }
    if (upper_available && (n + 2 == model.dim() || s.gap(n + 2) > opt.gap_floor)) {
      const CMat id = CMat::Identity(model.dim(), model.dim());
      r.upper_residual = std::max(r.upper_residual, ((id - s.projector(n + 2)) * p).norm());
    }
    model_upper[i] = s.projector(n + 1);
    upper_gapped[i] = n + 1 == model.dim() || s.gap(n + 1) > opt.gap_floor;
  }
  for (std::size_t i = 0; i < g.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      const std::size_t j = g.neighbor(i, a, 1);
      r.max_increment = std::max(r.max_increment, op_norm(field.projectors[j] - field.projectors[i]));
      if (upper_gapped[i] && upper_gapped[j])
        r.model_increment = std::max(r.model_increment, op_norm(model_upper[j] - model_upper[i]));
    }
  if (model.has_trs()) {
    r.trs_residual = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
      r.trs_residual = std::max(
          r.trs_residual, (field.projectors[g.opposite(i)] - model.theta_operator(field.projectors[i])).norm());
  }
  try {
    r.decay = decay_profile(forward_transform(g, field.projectors));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InsufficientData) throw;
  }
  return r;
}

nlohmann::json to_json(const Region& r) {
  auto vec = [](const Vec3& v) { return nlohmann::json::array({v(0), v(1), v(2)}); };
  nlohmann::json crossings = nlohmann::json::array();
  for (const auto& k : r.crossings) crossings.push_back(vec(k));
  auto finite = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"center", vec(r.center)},
          {"half", vec(r.half)},
          {"epsilon", r.epsilon},
          {"pad", r.pad},
          {"crossings", crossings},
          {"clearance", r.clearance},
          {"distance_lower", finite(r.distance_lower)},
          {"distance_upper", finite(r.distance_upper)},
          {"core_radius", r.core_radius}};
}

Region region_from_json(const nlohmann::json& j) {
  auto vec = [](const nlohmann::json& a) { return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()); };
  auto finite = [](const nlohmann::json& x) {
    return x.is_null() ? std::numeric_limits<double>::infinity() : x.get<double>();
  };
  Region r;
  r.center = vec(j.at("center"));
  r.half = vec(j.at("half"));
  r.epsilon = j.at("epsilon").get<double>();
  r.pad = j.value("pad", 0.0);
  for (const auto& k : j.at("crossings")) r.crossings.push_back(vec(k));
  r.clearance = j.value("clearance", 0.0);
  r.distance_lower = finite(j.value("distance_lower", nlohmann::json(nullptr)));
  r.distance_upper = finite(j.value("distance_upper", nlohmann::json(nullptr)));
  r.core_radius = j.value("core_radius", 0.0);
  return r;
}

nlohmann::json to_json(const DecayProfile& d) {
  nlohmann::json shells = nlohmann::json::array();
  for (const auto& s : d.shells)
    shells.push_back({{"shell", s.shell}, {"radius", s.radius}, {"max_norm", s.max_norm}, {"slope", s.slope}});
  return {{"shells", shells},
          {"fit_first", d.fit_first},
          {"fit_last", d.fit_last},
          {"loglinear_slope", d.loglinear_slope},
          {"loglinear_intercept", d.loglinear_intercept},
          {"r_squared", d.r_squared},
          {"residual", d.residual},
          {"degenerate_flat", d.degenerate_flat},
          {"superpolynomial", d.superpolynomial}};
}

nlohmann::json to_json(const VerifyReport& r) {
  nlohmann::json j = {{"span_residual", r.span_residual},
                      {"span_node", r.span_node},
                      {"span_residual_all", r.span_residual_all},
                      {"upper_residual", r.upper_residual},
                      {"rank_error", r.rank_error},
                      {"idempotency", r.idempotency},
                      {"hermiticity", r.hermiticity},
                      {"max_increment", r.max_increment},
                      {"model_increment", r.model_increment},
                      {"trs_residual", r.trs_residual},
                      {"bad_nodes", r.bad_nodes},
                      {"ok", r.ok()}};
  j["decay"] = r.decay ? to_json(*r.decay) : nlohmann::json(nullptr);
  return j;
}

}  // namespace wdis
