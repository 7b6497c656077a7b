#pragma once

#include <cstdint>
#include <vector>

#include "wdis/geometry.hpp"

namespace wdis {

// Radial-shell grid over the unit ball (or disk): shells[s][j] sits at radius
// radii[s] in the direction of mesh node (or loop sample) j. Shell 0 is the
// boundary, radii decrease towards the center.
template <class T>
struct BallField {
  std::vector<double> radii;
  std::vector<std::vector<T>> shells;
  T center;
};

std::vector<double> shell_radii(int shells);

// C-infinity step: 0 for x <= 0, 1 for x >= 1.
double smoothstep(double x);
// Radial cutoff of the rank-one extension: 0 on r <= 1/4, 1 on r >= 3/4.
double radial_cutoff(double r);

// normalize(h phi + (1 - h) target)
CVec contraction_blend(double h, const CVec& phi, const CVec& target);

// Unitary mapping the unit vector u to w, continuous in (u, w) away from w = -u
// and equal to Id when u = w.
CMat rotation_between(const CVec& u, const CVec& w);

struct AvoidedPoint {
  CVec point;
  double distance = 0;
  int trials = 0;
};

struct AvoidanceOptions {
  double floor = 0.05;
  int max_trials = 10000;
  std::uint64_t seed = 1;
  int candidates = 32;  // accepted draws compared before returning the farthest
  int refine = 200;     // hill-climbing steps that push the point away from the samples
};

// Random unit vector farther than floor from every sample. Among the first
// `candidates` acceptable draws the one farthest from the samples is kept and
// then moved further away by random local search.
AvoidedPoint find_avoided_point(const std::vector<CVec>& samples, const AvoidanceOptions& opt = {});

struct ContractionOptions {
  double min_gap = 0.3;   // eigenphase gap required for the branch-cut logarithm
  double max_step = 0.5;  // largest operator-norm step between neighbouring samples
  std::uint64_t seed = 1;
};

// Homotopy h[t][j] from the loop samples (t = 0) to Id (t = times - 1).
// The loop must have zero determinant winding.
std::vector<std::vector<CMat>> contract_unitary_loop(const std::vector<CMat>& loop, int times,
                                                     const ContractionOptions& opt = {});
// Same for a family on an n1 x n2 periodic grid, sample index i * n2 + j.
// Both determinant windings must vanish.
std::vector<std::vector<CMat>> contract_unitary_torus(const std::vector<CMat>& family, int n1, int n2, int times,
                                                      const ContractionOptions& opt = {});

// Mollify frames with an even bump kernel over the given node positions, then
// project back: Phi = P Phi_d [(P Phi_d)^dag (P Phi_d)]^{-1/2}.
FrameField smooth_frames(const std::vector<Vec3>& positions, const FrameField& frames, const ProjectorField& p,
                         double delta);
// Mollify projectors and re-project by eigenvalue threshold at 1/2.
ProjectorField smooth_projectors(const std::vector<Vec3>& positions, const ProjectorField& p, int rank,
                                 double delta);

struct SphereFrameOptions {
  double delta = -1;  // smoothing width; negative selects 1.5 times the ring spacing
  ContractionOptions contraction;
};

struct SphereFrame {
  FrameField frames;            // one per mesh node
  std::vector<CMat> obstruction;  // Phi_+ = Phi_- U on the equator, per longitude
  int winding = 0;              // winding of det U along the equator
  double max_frame_defect = 0;  // max ||Phi Phi^dag - P||
};

// Continuous frame of a rank-n projector field on a latitude-longitude sphere.
// Raises TopologicalObstruction carrying the integer when the winding is nonzero.
SphereFrame frame_on_sphere(const SurfaceMesh& mesh, const ProjectorField& p, int rank,
                            const SphereFrameOptions& opt = {});

struct ExtensionOptions {
  int shells = 32;
  AvoidanceOptions avoidance;
  SphereFrameOptions sphere;
};

// Rank-one extension of a unit vector field on the boundary sphere.
BallField<CVec> extend_rank1(const std::vector<CVec>& phi, const ExtensionOptions& opt = {});

// Extension of a Chern-zero projector field from the sphere into the ball,
// contained in the ball field Q.
BallField<CMat> extend_projector(const SurfaceMesh& mesh, const ProjectorField& p, int rank, const BallField<CMat>& q,
                                 const ExtensionOptions& opt = {});

// ----- time-reversal symmetric primitives -----
// A loop has L (even) samples at angles 2 pi j / L; sample j pairs with
// j + L/2. theta is the real matrix of the antiunitary operator.

CVec apply_theta(const RMat& theta, const CVec& v);
CMat apply_theta(const RMat& theta, const CMat& a, bool op);

// theta-invariant orthonormal frame of a theta-symmetric projector.
CMat real_frame(const CMat& p, int rank, const RMat& theta);

struct TrsOptions {
  double delta = -1;          // smoothing width; negative disables it
  double real_tol = 1e-9;     // realness test for the contraction branch
  double epsilon = 0.1;       // boundary blend width of the real-point branch
  double mollify = 0.15;      // kernel width of the real-point branch
  AvoidanceOptions avoidance;
  int shells = 32;
};

FrameField trs_frame_on_circle(const ProjectorField& loop, int rank, const RMat& theta, const TrsOptions& opt = {});

struct DiskVectorField {
  BallField<CVec> field;
  bool real_point_branch = false;
  int real_index = -1;
};

// Extension of a vector loop with phi(-w) = theta phi(w) over the disk.
DiskVectorField trs_contract_vector_on_disk(const std::vector<CVec>& phi, const RMat& theta,
                                            const TrsOptions& opt = {});

BallField<CMat> trs_extend_on_disk(const ProjectorField& loop, int rank, const BallField<CMat>& q, const RMat& theta,
                                   const TrsOptions& opt = {});

// Largest deviation from theta symmetry over paired nodes of a disk field.
double trs_defect(const BallField<CMat>& f, const RMat& theta);

}  // namespace wdis
