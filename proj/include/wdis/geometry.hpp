#pragma once

#include <array>
#include <functional>
#include <vector>

#include "wdis/linalg.hpp"

namespace wdis {

// Closed quadrilateral surface mesh. Quads are listed counterclockwise when
// seen from the outside. Latitude-longitude meshes keep their ring structure
// so that meridians and rings can be addressed; their polar caps are quads
// with a repeated pole node.
struct SurfaceMesh {
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 4>> quads;

  // Latitude-longitude structure (n_theta == 0 for other meshes).
  int n_theta = 0;
  int n_phi = 0;
  Vec3 center = Vec3::Zero();
  std::vector<Vec3> directions;  // unit direction of every node seen from center

  bool is_latlong() const { return n_theta > 0; }
  // ring 0 is the north pole, ring n_theta the south pole.
  int node(int ring, int j) const;
  double theta(int ring) const;
  double phi(int j) const;
};

SurfaceMesh sphere_mesh(const Vec3& center, double radius, int n_theta, int n_phi);
// Latitude-longitude mesh pushed radially onto the surface of a box.
SurfaceMesh box_latlong_mesh(const Vec3& center, const Vec3& half_widths, int n_theta, int n_phi);
// Uniform quads on the six faces of a box, n cells per edge.
SurfaceMesh box_mesh(const Vec3& center, const Vec3& half_widths, int n);

int euler_characteristic(const SurfaceMesh& mesh);
// Oriented enclosed volume; positive for outward orientation.
double enclosed_volume(const SurfaceMesh& mesh);
// Every non-degenerate edge is shared by exactly two quads with opposite traversal.
bool edges_consistent(const SurfaceMesh& mesh);

// Distance from the unit-ball point direction d to the box boundary.
double box_radial_extent(const Vec3& half_widths, const Vec3& direction);

using ProjectorField = std::vector<CMat>;
using FrameField = std::vector<CMat>;

// Phi = P Phi0 [(P Phi0)^dag (P Phi0)]^{-1/2}.
CMat loewdin_frame(const CMat& p, const CMat& phi0, double gram_floor = 1e-6);

// Frame transported through the projector samples path[0..]; path[0] is
// spanned by phi0 on entry and the returned frames have one entry per sample.
FrameField transport_frame(const ProjectorField& path, const CMat& phi0, double gram_floor = 1e-6);

// Samples P(t_j) along a straight segment; steps_per_unit sets the density.
ProjectorField sample_segment(const std::function<CMat(const Vec3&)>& field, const Vec3& a, const Vec3& b,
                              int steps);

// Deterministic orthonormal frame of a rank-n projector.
CMat canonical_frame(const CMat& p, int rank);

cplx link_phase(const CMat& pa, const CMat& pb, int rank, double floor = 1e-8);

// Berry flux through the quad with corners p1..p4 (traversal order). The sign
// convention makes the lower band of (B k).sigma carry charge sign det B.
double plaquette_flux(const CMat& p1, const CMat& p2, const CMat& p3, const CMat& p4, int rank);

struct BerryData {
  std::vector<double> flux;  // per quad
  double total = 0;          // sum of flux / 2 pi
  int chern = 0;
  double residual = 0;
};

struct ChernOptions {
  double max_flux = kPi - 0.1;
  double max_residual = 0.05;
};

BerryData chern_number(const SurfaceMesh& mesh, const ProjectorField& field, int rank, const ChernOptions& opt = {});

struct WindingResult {
  int winding = 0;
  double raw = 0;
  double residual = 0;
  double max_step = 0;
};

// Winding of a closed loop of unit complex numbers (last sample joins the first).
WindingResult winding_number(const std::vector<cplx>& loop, double max_step = kPi / 2, double max_residual = 1e-6);

struct AdditivityReport {
  int chern_p = 0;
  int chern_q = 0;
  int chern_sum = 0;
  double max_plaquette_defect = 0;  // |F[P+Q] - F[P] - F[Q]| per quad, mod 2 pi
  double max_overlap = 0;           // max ||P Q||
};

AdditivityReport curvature_additivity_check(const SurfaceMesh& mesh, const ProjectorField& p, int rank_p,
                                            const ProjectorField& q, int rank_q, double overlap_floor = 1e-9);

}  // namespace wdis
