#pragma once

#include <limits>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "wdis/fourier.hpp"
#include "wdis/frames.hpp"
#include "wdis/geometry.hpp"
#include "wdis/model.hpp"

namespace wdis {

// Axis-aligned box on the torus around the crossings of bands N+1 and N+2.
struct Region {
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Zero();
  double epsilon = 0;  // glue shell width; the inner box is half - epsilon
  double pad = 0;
  std::vector<KPoint> crossings;  // K_{N+1}, all inside
  double clearance = 0;           // min distance of K_{N+1} to the boundary
  double distance_lower = std::numeric_limits<double>::infinity();  // K_N to the box
  double distance_upper = std::numeric_limits<double>::infinity();  // K_{N+2} to the box
  double core_radius = 0;  // largest ellipsoidal radius of a K_{N+1} point

  Vec3 offset(const KPoint& k) const;  // wrapped k - center
  bool contains(const KPoint& k) const;
  bool in_inner(const KPoint& k) const;  // inside the box shrunk by epsilon
  double depth(const KPoint& k) const;   // min_a (half_a - |x_a|), negative outside
  double distance(const KPoint& k) const;  // Euclidean distance to the closed box
  double ellipsoidal_radius(const KPoint& k) const;  // |x / half|
  SurfaceMesh boundary_mesh(int n_theta, int n_phi) const;
};

struct RegionOptions {
  double margin = 0.42;   // padding of the bounding box of K_{N+1}
  double epsilon = 0.03;
  double max_half = 0.45;
  double core_max = 0.6;  // K_{N+1} must lie inside this ellipsoidal radius
};

// Box containing all of K_{N+1} with clearance > epsilon and distance > 2
// epsilon to K_N (and to K_{N+2} when given).
Region build_region(const std::vector<KPoint>& upper_crossings, const std::vector<KPoint>& lower_crossings,
                    const std::optional<std::vector<KPoint>>& next_crossings, const RegionOptions& opt = {});

std::vector<KPoint> crossing_points(const std::vector<Crossing>& c);

struct GlueConfig {
  double epsilon = 0.03;
  double accept = 0.75;  // kept eigenvalues must be at least this
  double reject = 0.25;  // discarded eigenvalues must be at most this
  std::array<int, 3> grid{16, 16, 16};
  int ray_steps = 24;       // transport steps from the box center to a node
  int sphere_theta = 48;    // reference sphere mesh for the collar frame
  int sphere_phi = 64;
  double kernel_width = -1;  // angular interpolation width; negative: 2.5 ring spacings
  double transition = 0.1;   // gap between the core radius and the start of the blend
  std::uint64_t seed = 0;
};

// Cutoff that vanishes on the inner box and equals 1 on and outside the boundary.
double glue_cutoff(const Region& region, double epsilon, const KPoint& k);

// p = P_{N+1} - P_N on the nodes of a boundary mesh.
ProjectorField boundary_quasiprojector(const Model& model, int n, const SurfaceMesh& mesh);

struct RegionCharges {
  BerryData lower;  // P_N
  BerryData upper;  // P_{N+1}
  BerryData p;      // P_{N+1} - P_N
};
RegionCharges region_charges(const Model& model, int n, const Region& region, int n_theta = 32, int n_phi = 64);

struct ChargeEntry {
  KPoint point;
  int charge = 0;
  double residual = 0;
  double radius = 0;
};

// Chern number of p = P_{N+1} - P_N on a small sphere around every crossing.
std::vector<ChargeEntry> charge_report(const Model& model, int n, const std::vector<KPoint>& crossings, double radius,
                                       int n_theta = 32, int n_phi = 64);

enum class Provenance { Outside, Extended, Glued };
const char* to_string(Provenance p);

struct DisentangledField {
  KGrid grid;
  int band_index = 0;  // N
  int rank = 0;        // N + 1
  std::vector<CMat> projectors;
  std::vector<Provenance> provenance;
  std::optional<Region> region;
  bool assumption2 = false;
  nlohmann::json diagnostics = nlohmann::json::object();
};

// Smooth rank-(N+1) projector field on the grid whose range contains P_N.
// Without a region the field is P_{N+1} (valid when K_{N+1} is empty).
DisentangledField build_global_projector(const Model& model, int n, const std::optional<Region>& region,
                                         const GlueConfig& glue, bool assumption2 = false);

// Re-projection of the convex glue f P_{N+1} + (1 - f) X onto its top rank
// eigenvectors; raises GlueFailure when the eigenvalues are not separated.
CMat glue_projectors(const CMat& outer, const CMat& inner, double f, int rank, const GlueConfig& glue);

struct VerifyOptions {
  double gap_floor = 0.1;
};

struct VerifyReport {
  double span_residual = 0;        // max ||P P_N - P_N|| over nodes with gap_N > floor
  std::size_t span_node = 0;       // node attaining span_residual
  double span_residual_all = 0;    // same over all nodes
  double upper_residual = -1;      // max ||(Id - P_{N+2}) P|| over nodes with gap_{N+2} > floor; -1 if n/a
  double rank_error = 0;           // max |tr P - (N + 1)|
  double idempotency = 0;          // max ||P^2 - P||
  double hermiticity = 0;
  double max_increment = 0;        // max ||P(k) - P(k')|| over grid neighbours
  double model_increment = 0;      // same for P_{N+1} over neighbours with gap_{N+1} > floor
  double trs_residual = -1;        // max ||P(-k) - theta P(k) theta^T||; -1 without symmetry
  std::optional<DecayProfile> decay;
  std::vector<std::size_t> bad_nodes;  // nodes failing rank, idempotency or Hermiticity
  bool ok() const { return bad_nodes.empty(); }
};

VerifyReport verify_field(const DisentangledField& field, const Model& model, const VerifyOptions& opt = {});

nlohmann::json to_json(const Region& r);
Region region_from_json(const nlohmann::json& j);
nlohmann::json to_json(const VerifyReport& r);
nlohmann::json to_json(const DecayProfile& d);

}  // namespace wdis
