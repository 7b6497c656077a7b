#include "wdis/linalg.hpp"

#include <cmath>

#include "wdis/errors.hpp"

namespace wdis {

void fix_phases(CMat& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      double a = std::abs(vectors(r, c));
      if (a > best_abs * (1.0 + 1e-12) + 1e-300) {
        best_abs = a;
        best = r;
      }
    }
    if (best_abs > 0) vectors.col(c) *= std::conj(vectors(best, c)) / best_abs;
  }
}

double hermiticity_defect(const CMat& h) {
  return (h - h.adjoint()).norm() / std::max(1.0, h.norm());
}

CMat hermitian_part(const CMat& h) { return 0.5 * (h + h.adjoint()); }

Eigh eigh(const CMat& h) {
  if (!h.allFinite()) fail(ErrorKind::Numerical, "non-finite matrix passed to eigh");
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(h));
  if (es.info() != Eigen::Success) fail(ErrorKind::Numerical, "eigh did not converge");
  Eigh out{es.eigenvalues(), es.eigenvectors()};
  fix_phases(out.vectors);
  return out;
}

CMat inverse_sqrt(const CMat& g) {
  return hermitian_function(g, [](double x) { return 1.0 / std::sqrt(x); });
}

double min_eigenvalue(const CMat& h) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(h), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double op_norm(const CMat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMat> svd(a);
  return svd.singularValues()(0);
}

UnitaryEig unitary_eig(const CMat& u) {
  // For a normal matrix the Schur form is diagonal and the Schur basis is an
  // orthonormal eigenbasis, also inside degenerate clusters.
  Eigen::ComplexSchur<CMat> schur(u);
  if (schur.info() != Eigen::Success) fail(ErrorKind::Numerical, "unitary eigendecomposition failed");
  UnitaryEig out;
  out.phases.resize(u.rows());
  for (Eigen::Index i = 0; i < u.rows(); ++i) out.phases(i) = std::arg(schur.matrixT()(i, i));
  out.vectors = schur.matrixU();
  return out;
}

static double wrap_below(double phase, double theta0) {
  // map into (theta0 - 2 pi, theta0]
  double x = phase;
  while (x > theta0) x -= kTwoPi;
  while (x <= theta0 - kTwoPi) x += kTwoPi;
  return x;
}

CMat unitary_log(const CMat& u, double theta0) {
  UnitaryEig e = unitary_eig(u);
  RVec ph(e.phases.size());
  for (Eigen::Index i = 0; i < ph.size(); ++i) ph(i) = wrap_below(e.phases(i), theta0);
  return e.vectors * ph.asDiagonal() * e.vectors.adjoint();
}

CMat unitary_exp(const CMat& x) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(x));
  Eigen::VectorXcd d(x.rows());
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = std::polar(1.0, es.eigenvalues()(i));
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
}

CMat unitary_power(const CMat& u, double t, double theta0) {
  return unitary_exp(t * hermitian_part(unitary_log(u, theta0)));
}

CMat unitarize(const CMat& a) {
  Eigen::JacobiSVD<CMat> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

CMat unitary_geodesic(const CMat& u0, const CMat& u1, double t) {
  return u0 * unitary_power(u0.adjoint() * u1, t);
}

}  // namespace wdis
