#pragma once

#include <array>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "wdis/disentangle.hpp"
#include "wdis/fourier.hpp"
#include "wdis/frames.hpp"
#include "wdis/model.hpp"

namespace wdis {

// Orthonormal frames Phi(k) of a projector field on a periodic grid.
struct GridFrames {
  KGrid grid;
  int rank = 0;
  std::vector<CMat> frames;
  bool trs = false;
  nlohmann::json gauge = nlohmann::json::object();  // holonomy data of the sweep
};

// Chern numbers of the coordinate 2-torus slices through the origin; entry a
// is the slice normal to axis a.
struct SliceCherns {
  std::array<int, 3> chern{0, 0, 0};
  std::array<double, 3> residual{0, 0, 0};
  bool trivial() const { return chern == std::array<int, 3>{0, 0, 0}; }
};
SliceCherns slice_cherns(const KGrid& grid, const std::vector<CMat>& projectors, int rank);

struct GlobalFrameOptions {
  ContractionOptions contraction;
  double gram_floor = 1e-6;
  double branch_floor = 0.05;  // TRS: eigenvalues of the symmetry mismatch must stay this far from -1
  double symmetry_tol = 1e-8;  // TRS: allowed ||P(-k) - theta P(k) theta^T||
};

// Sweep: transport along k1 and cancel the loop holonomy, then transport the
// line frames along k2 and contract the holonomy loop, then transport the
// plane frames along k3 and contract the holonomy torus. With theta the result
// satisfies Phi(-k) = theta Phi(k) at every pair of opposite nodes.
GridFrames global_frame(const KGrid& grid, const std::vector<CMat>& projectors, int rank,
                        const std::optional<RMat>& theta = std::nullopt, const GlobalFrameOptions& opt = {});
GridFrames global_frame(const DisentangledField& field, const std::optional<RMat>& theta = std::nullopt,
                        const GlobalFrameOptions& opt = {});

// Frames from the columns of the model eigenvectors: discontinuous wherever
// bands cross and the phase convention jumps.
GridFrames eigenvector_frames(const Model& model, const KGrid& grid, int rank);

struct FrameQuality {
  double projector_defect = 0;  // max ||Phi Phi^dag - P||
  double orthonormality = 0;    // max ||Phi^dag Phi - Id||
  double max_increment = 0;     // max ||Phi(k) - Phi(k')|| over neighbours
  double trs_defect = -1;       // max ||Phi(-k) - theta Phi(k)||; -1 without theta
};
FrameQuality frame_quality(const GridFrames& frames, const std::vector<CMat>& projectors,
                           const std::optional<RMat>& theta = std::nullopt);

// Fourier coefficients A_R of A(k) = Phi^dag H Phi.
using HoppingTensor = FourierCoefficients;
HoppingTensor hoppings(const GridFrames& frames, const Model& model);
// Hamiltonian matrices A(k) at the grid nodes.
std::vector<CMat> frame_hamiltonians(const GridFrames& frames, const Model& model);

double hermiticity_defect(const HoppingTensor& h);  // max ||A_{-R} - A_R^dag||
double reality_defect(const HoppingTensor& h);      // max ||Im A_R||
// |sum_R ||A_R||^2 - mean_k ||A(k)||^2|
double plancherel_defect(const HoppingTensor& h, const std::vector<CMat>& values);

// Eigenvalues of sum_R A_R e^{2 pi i k.R}, ascending.
RVec interpolate_bands(const HoppingTensor& h, const KPoint& k);

// Lowest bands of the model on the grid, one vector per node.
std::vector<RVec> band_grid(const Model& model, const KGrid& grid, int bands);
// Coefficients of the per-band trigonometric interpolation.
FourierCoefficients band_coefficients(const KGrid& grid, const std::vector<RVec>& bands);
RVec direct_fourier_interp(const FourierCoefficients& bands, const KPoint& k);

// Kronecker sequence in the unit cube with a seeded offset, skipping points
// within `radius` of any of the given crossings.
std::vector<KPoint> probe_points(int count, std::uint64_t seed, const std::vector<KPoint>& avoid = {},
                                 double radius = 0.02);

struct ProbeResult {
  KPoint k;
  RVec exact;
  RVec interpolated;
  RVec baseline;
  double error = 0;           // max over bands of |interpolated - exact|
  double baseline_error = 0;  // same for the baseline
};

struct InterpolationReport {
  int bands = 0;
  std::vector<ProbeResult> probes;
  double max_error = 0;
  double max_baseline_error = 0;
  double median_error = 0;
  double ratio() const { return max_baseline_error / max_error; }
};

// Compare the lowest `bands` eigenvalues of the hopping interpolation and of
// the direct interpolation with the exact spectrum.
InterpolationReport compare_interpolation(const Model& model, int bands, const HoppingTensor& h,
                                          const FourierCoefficients& baseline, const std::vector<KPoint>& probes);

nlohmann::json to_json(const HoppingTensor& h);
HoppingTensor hoppings_from_json(const nlohmann::json& j);

}  // namespace wdis
