#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace wdis {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

struct Eigh {
  RVec values;   // ascending
  CMat vectors;  // columns, phase fixed
};

// Hermitian eigendecomposition with deterministic phases: the largest-modulus
// component of every eigenvector (first index on ties) is real and positive.
Eigh eigh(const CMat& h);

void fix_phases(CMat& vectors);

double hermiticity_defect(const CMat& h);
CMat hermitian_part(const CMat& h);

// f(H) for Hermitian H through its eigendecomposition.
template <class F>
CMat hermitian_function(const CMat& h, F f) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(h));
  RVec v = es.eigenvalues().unaryExpr(f);
  return es.eigenvectors() * v.asDiagonal() * es.eigenvectors().adjoint();
}

// G^{-1/2} for positive definite Hermitian G.
CMat inverse_sqrt(const CMat& g);

double min_eigenvalue(const CMat& h);
double op_norm(const CMat& a);

// Spectral decomposition of a unitary: U = V diag(exp(i phases)) V^dagger.
struct UnitaryEig {
  RVec phases;  // in (-pi, pi]
  CMat vectors;
};
UnitaryEig unitary_eig(const CMat& u);

// Log with the branch cut at angle theta0: eigenphases are mapped into
// (theta0 - 2 pi, theta0). Returns the Hermitian generator X with U = exp(iX).
CMat unitary_log(const CMat& u, double theta0 = kPi);
CMat unitary_exp(const CMat& x);  // exp(iX), X Hermitian
CMat unitary_power(const CMat& u, double t, double theta0 = kPi);
CMat unitarize(const CMat& a);  // polar factor

// Geodesic combination U0 (U0^dag U1)^t.
CMat unitary_geodesic(const CMat& u0, const CMat& u1, double t);

}  // namespace wdis
