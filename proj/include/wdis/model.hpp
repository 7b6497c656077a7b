#pragma once

#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "wdis/linalg.hpp"

namespace wdis {

// Crystal momenta are reduced coordinates on the torus R^3 / Z^3.
using KPoint = Vec3;

KPoint canonical_k(const KPoint& k);               // representative in [0,1)^3
Vec3 wrap_displacement(const Vec3& d);             // representative in [-1/2,1/2)^3
double torus_distance(const KPoint& a, const KPoint& b);
bool same_k(const KPoint& a, const KPoint& b, double tol = 1e-12);

struct Spectrum {
  RVec values;   // ascending
  CMat vectors;  // phase fixed columns

  // Projector on the n lowest bands; n = 0 gives 0 and n = M gives Id.
  CMat projector(int n) const;
  double gap(int n) const;  // eps_{n+1} - eps_n, 1-based band index n
};

class Model {
 public:
  using Evaluator = std::function<CMat(const KPoint&)>;

  // theta: real orthogonal matrix with theta*theta = Id; the time-reversal
  // operator is theta composed with complex conjugation.
  Model(std::string name, int dim, Evaluator h, std::optional<RMat> theta = std::nullopt,
        bool periodic = true);

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  bool periodic() const { return periodic_; }
  bool has_trs() const { return theta_.has_value(); }
  const RMat& theta() const;

  CMat hamiltonian(const KPoint& k) const;
  Spectrum spectrum(const KPoint& k) const;
  // Raises DegenerateCut naming k when eps_{n+1} - eps_n < gap_floor.
  CMat spectral_projector(const KPoint& k, int n, double gap_floor = 1e-8) const;
  double gap(const KPoint& k, int n) const;

  // theta applied to vectors (columns) and to operators.
  CMat theta_vectors(const CMat& x) const;
  CMat theta_operator(const CMat& a) const;
  double trs_residual(const KPoint& k) const;

  nlohmann::json description;  // JSON form, used for field dumps

 private:
  std::string name_;
  int dim_;
  Evaluator h_;
  std::optional<RMat> theta_;
  bool periodic_;
};

double projector_defect(const CMat& p);  // ||P^2 - P||_F
int projector_rank(const CMat& p);        // rounded trace

// Builtin models. Parameters may be overridden through the JSON object.
Model make_builtin(const std::string& name, const nlohmann::json& params = nlohmann::json::object());
std::vector<std::string> builtin_names();

// Local Weyl model (B (k - k0)) . sigma on R^3.
Model local_weyl_model(const Eigen::Matrix3d& b, const Vec3& k0 = Vec3::Zero());

// Model from a JSON document (builtin reference or Fourier hoppings).
Model model_from_json(const nlohmann::json& doc);
Model load_model(const std::string& path);

struct Crossing {
  KPoint k;
  double gap = 0;
  bool avoided = false;  // refinement stalled above the degeneracy floor
};

struct CrossingOptions {
  int grid = 24;
  double tol = -1;  // default: 0.05 times the bandwidth
  double degeneracy_floor = 1e-8;
  int max_shrinks = 60;
};

// Degeneracy points between bands n and n+1.
std::vector<Crossing> detect_crossings(const Model& model, int n, const CrossingOptions& opt = {});

}  // namespace wdis
