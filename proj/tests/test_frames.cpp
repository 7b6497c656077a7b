#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "wdis/errors.hpp"
#include "wdis/frames.hpp"
#include "wdis/geometry.hpp"
#include "wdis/model.hpp"

using namespace wdis;

namespace {

CMat bloch_lower(const Vec3& b) {
  CMat h(2, 2);
  h << b(2), cplx(b(0), -b(1)), cplx(b(0), b(1)), -b(2);
  return 0.5 * (CMat::Identity(2, 2) - h / b.norm());
}

CMat block_diag(const CMat& a, const CMat& b) {
  CMat out = CMat::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

// Smooth unitary family exp(i sum_a x_a A_a) with fixed random Hermitian A_a.
struct UnitaryFamily {
  std::vector<CMat> gens;
  UnitaryFamily(int dim, std::uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    for (int a = 0; a < 3; ++a) gens.push_back(scale * hermitian_part(testing::random_matrix(rng, dim, dim)));
  }
  CMat operator()(const Vec3& x) const { return unitary_exp(x(0) * gens[0] + x(1) * gens[1] + x(2) * gens[2]); }
};

// Charge +1 and -1 line bundles side by side: total charge 0, rank 2.
CMat split_pair(const Vec3& x) {
  Vec3 flipped(x(0), -x(1), x(2));
  return block_diag(bloch_lower(x), bloch_lower(flipped));
}

ProjectorField on_mesh(const SurfaceMesh& mesh, const std::function<CMat(const Vec3&)>& f) {
  ProjectorField out;
  for (const auto& d : mesh.directions) out.push_back(f(d));
  return out;
}

double max_mesh_jump(const SurfaceMesh& mesh, const std::vector<CMat>& f) {
  double d = 0;
  for (const auto& q : mesh.quads)
    for (int i = 0; i < 4; ++i) d = std::max(d, op_norm(f[q[i]] - f[q[(i + 1) % 4]]));
  return d;
}

double max_frame_mismatch(const FrameField& frames, const ProjectorField& p) {
  double d = 0;
  for (std::size_t i = 0; i < p.size(); ++i) d = std::max(d, (frames[i] * frames[i].adjoint() - p[i]).norm());
  return d;
}

BallField<CMat> constant_ball(int shells, std::size_t nodes, const CMat& value) {
  BallField<CMat> q;
  q.radii = shell_radii(shells);
  q.center = value;
  q.shells.assign(shells, std::vector<CMat>(nodes, value));
  return q;
}

void check_ball_projector(const SurfaceMesh& mesh, const BallField<CMat>& f, const BallField<CMat>& q, int rank) {
  double defect = 0, containment = 0, jump = 0;
  int max_abs_chern = 0;
  for (std::size_t s = 0; s < f.radii.size(); ++s) {
    for (std::size_t j = 0; j < mesh.nodes.size(); ++j) {
      const CMat& p = f.shells[s][j];
      defect = std::max(defect, projector_defect(p) + (p - p.adjoint()).norm());
      containment = std::max(containment, (q.shells[s][j] * p - p).norm());
      CHECK(projector_rank(p) == rank);
      if (s + 1 < f.radii.size()) jump = std::max(jump, op_norm(p - f.shells[s + 1][j]));
    }
    jump = std::max(jump, max_mesh_jump(mesh, f.shells[s]));
    max_abs_chern = std::max(max_abs_chern, std::abs(chern_number(mesh, f.shells[s], rank).chern));
  }
  CHECK(defect < 1e-8);
  CHECK(containment < 1e-8);
  CHECK(jump < 0.6);
  CHECK(max_abs_chern == 0);
}

}  // namespace

TEST_CASE("smoothstep and radial cutoff") {
  CHECK(smoothstep(-1) == 0);
  CHECK(smoothstep(0) == 0);
  CHECK(smoothstep(1) == 1);
  CHECK(smoothstep(0.5) == doctest::Approx(0.5));
  for (double x = 0.05; x < 1; x += 0.05) CHECK(smoothstep(x) + smoothstep(1 - x) == doctest::Approx(1.0));
  CHECK(radial_cutoff(0.2) == 0);
  CHECK(radial_cutoff(0.8) == 1);
  auto r = shell_radii(4);
  CHECK(r.size() == 4);
  CHECK(r[0] == 1.0);
  CHECK(r[3] == 0.25);
}

TEST_CASE("rotation between unit vectors") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    CVec u = testing::random_matrix(rng, 4, 1).col(0).normalized();
    CVec w = testing::random_matrix(rng, 4, 1).col(0).normalized();
    CMat r = rotation_between(u, w);
    CHECK((r.adjoint() * r - CMat::Identity(4, 4)).norm() < 1e-12);
    CHECK((r * u - w).norm() < 1e-12);
    CHECK((rotation_between(u, u) - CMat::Identity(4, 4)).norm() < 1e-12);
  }
}

TEST_CASE("avoided point keeps the floor distance") {
  std::mt19937_64 rng(5);
  std::vector<CVec> samples;
  for (int i = 0; i < 2000; ++i) samples.push_back(testing::random_matrix(rng, 3, 1).col(0).normalized());
  AvoidedPoint a = find_avoided_point(samples, {0.2, 10000, 9});
  CHECK(a.point.norm() == doctest::Approx(1.0));
  double d = 1e9;
  for (const auto& s : samples) d = std::max(-1.0, std::min(d, (s - a.point).norm()));
  CHECK(d > 0.2);
  CHECK(a.distance == doctest::Approx(d));
  // Same seed, same answer.
  CHECK((find_avoided_point(samples, {0.2, 10000, 9}).point - a.point).norm() == 0);
}

TEST_CASE("dense samples of the unit sphere in C^2 defeat avoidance") {
  std::vector<CVec> samples;
  const int ne = 32, nx = 64;
  for (int a = 0; a <= ne; ++a)
    for (int b = 0; b < nx; ++b)
      for (int c = 0; c < nx; ++c) {
        const double eta = 0.5 * kPi * a / ne;
        CVec v(2);
        v << std::polar(std::cos(eta), kTwoPi * b / nx), std::polar(std::sin(eta), kTwoPi * c / nx);
        samples.push_back(v);
      }
  CHECK_THROWS_WITH_AS(find_avoided_point(samples, {0.1, 200, 1}), doctest::Contains("avoidance-failure"), Error);
}

TEST_CASE("contraction of loops with trivial determinant") {
  const int len = 64, times = 33;
  std::vector<std::vector<CMat>> loops(3);
  UnitaryFamily fam(3, 11, 0.6);
  for (int j = 0; j < len; ++j) {
    const double a = kTwoPi * j / len;
    CMat d = CMat::Zero(2, 2);
    d(0, 0) = std::polar(1.0, a);
    d(1, 1) = std::polar(1.0, -a);
    loops[0].push_back(d);
    loops[1].push_back(fam(Vec3(std::cos(a), std::sin(a), 0.3 * std::cos(2 * a))));
    CMat e = CMat::Identity(3, 3);
    e.topLeftCorner(2, 2) = d;
    loops[2].push_back(unitary_exp(0.1 * fam.gens[2]) * e * std::polar(1.0, 0.4));
  }
  for (const auto& loop : loops) {
    auto h = contract_unitary_loop(loop, times);
    REQUIRE(h.size() == static_cast<std::size_t>(times));
    const Eigen::Index n = loop[0].rows();
    double unitary = 0, step = 0;
    for (int t = 0; t < times; ++t)
      for (int j = 0; j < len; ++j) {
        unitary = std::max(unitary, (h[t][j].adjoint() * h[t][j] - CMat::Identity(n, n)).norm());
        step = std::max(step, op_norm(h[t][(j + 1) % len] - h[t][j]));
        if (t + 1 < times) step = std::max(step, op_norm(h[t + 1][j] - h[t][j]));
      }
    for (int j = 0; j < len; ++j) {
      CHECK((h[0][j] - loop[j]).norm() == 0);
      CHECK((h[times - 1][j] - CMat::Identity(n, n)).norm() == 0);
    }
    CHECK(unitary < 1e-9);
    CHECK(step < 0.5);
  }
}

TEST_CASE("contraction reports an unresolved homotopy") {
  std::vector<CMat> loop;
  for (int j = 0; j < 64; ++j) {
    CMat d = CMat::Zero(2, 2);
    d(0, 0) = std::polar(1.0, kTwoPi * j / 64);
    d(1, 1) = std::conj(d(0, 0));
    loop.push_back(d);
  }
  CHECK_THROWS_WITH_AS(contract_unitary_loop(loop, 3), doctest::Contains("contraction-failure"), Error);
}

TEST_CASE("contraction refuses a winding determinant") {
  std::vector<CMat> loop;
  for (int j = 0; j < 32; ++j) {
    CMat d = CMat::Identity(2, 2);
    d(0, 0) = std::polar(1.0, kTwoPi * j / 32);
    loop.push_back(d);
  }
  try {
    contract_unitary_loop(loop, 9);
    FAIL("expected an obstruction");
  } catch (const TopologicalObstruction& e) {
    CHECK(e.chern() == 1);
  }
}

TEST_CASE("frame on sphere reports the Chern number as obstruction") {
  SurfaceMesh mesh = sphere_mesh(Vec3::Zero(), 1.0, 24, 48);
  for (double s : {1.0, -1.0}) {
    ProjectorField p = on_mesh(mesh, [s](const Vec3& x) { return bloch_lower(Vec3(x(0), s * x(1), x(2))); });
    const int chern = chern_number(mesh, p, 1).chern;
    CHECK(chern == static_cast<int>(s));
    try {
      frame_on_sphere(mesh, p, 1);
      FAIL("expected an obstruction");
    } catch (const TopologicalObstruction& e) {
      CHECK(e.chern() == chern);
    }
  }
}

TEST_CASE("frame on sphere for Chern-zero fields") {
  SurfaceMesh mesh = sphere_mesh(Vec3(0.3, 0.1, 0.2), 0.7, 24, 48);
  UnitaryFamily fam(4, 21, 0.4);
  std::vector<std::pair<int, std::function<CMat(const Vec3&)>>> fields{
      {1, [](const Vec3& x) { return bloch_lower(Vec3(x(0), x(1), x(2) * x(2) + 0.2)); }},
      {2, [&](const Vec3& x) {
         CMat u = fam(x);
         return CMat(u.leftCols(2) * u.leftCols(2).adjoint());
       }},
      {2, split_pair},
      {2, [&](const Vec3& x) {
         CMat u = fam(x);
         return CMat(u * split_pair(x) * u.adjoint());
       }},
  };
  for (const auto& [rank, f] : fields) {
    ProjectorField p = on_mesh(mesh, f);
    REQUIRE(chern_number(mesh, p, rank).chern == 0);
    SphereFrame sf = frame_on_sphere(mesh, p, rank);
    CHECK(sf.winding == 0);
    CHECK(sf.max_frame_defect < 1e-8);
    CHECK(max_frame_mismatch(sf.frames, p) < 1e-8);
    double ortho = 0;
    for (const auto& fr : sf.frames) ortho = std::max(ortho, (fr.adjoint() * fr - CMat::Identity(rank, rank)).norm());
    CHECK(ortho < 1e-10);
    CHECK(max_mesh_jump(mesh, sf.frames) < 0.5);
  }
}

TEST_CASE("smoothing keeps frames in the projector and refuses a wide kernel") {
  const int len = 40;
  std::vector<Vec3> pos;
  ProjectorField p;
  FrameField frames;
  for (int j = 0; j < len; ++j) {
    const double a = kTwoPi * j / len;
    pos.emplace_back(std::cos(a), std::sin(a), 0);
    p.push_back(bloch_lower(Vec3(std::cos(a), std::sin(a), 0.5)));
    frames.push_back(canonical_frame(p.back(), 1));
  }
  FrameField smooth = smooth_frames(pos, frames, p, 0.3);
  CHECK(max_frame_mismatch(smooth, p) < 1e-12);

  FrameField alternating = frames;
  for (int j = 0; j < len; j += 2) alternating[j] *= -1.0;
  CHECK_THROWS_WITH_AS(smooth_frames(pos, alternating, p, 0.5), doctest::Contains("delta-too-large"), Error);

  ProjectorField sp = smooth_projectors(pos, p, 1, 0.3);
  double d = 0;
  for (int j = 0; j < len; ++j) d = std::max(d, (sp[j] - p[j]).norm());
  CHECK(d < 0.1);
  CHECK(projector_defect(sp[0]) < 1e-12);
}

TEST_CASE("rank-one extension of a constant vector") {
  std::vector<CVec> phi(10, CVec::Unit(3, 1));
  ExtensionOptions opt;
  opt.shells = 8;
  BallField<CVec> f = extend_rank1(phi, opt);
  CHECK(f.shells.size() == 8);
  CHECK((f.center + find_avoided_point(phi, opt.avoidance).point).norm() < 1e-15);
  for (std::size_t s = 0; s < f.shells.size(); ++s)
    for (const auto& v : f.shells[s]) {
      CHECK(v.norm() == doctest::Approx(1.0));
      if (f.radii[s] >= 0.75) CHECK((v - phi[0]).norm() < 1e-15);
      if (f.radii[s] <= 0.25) CHECK((v - f.center).norm() < 1e-15);
    }
}

TEST_CASE("projector extension into the ball") {
  SurfaceMesh mesh = sphere_mesh(Vec3::Zero(), 1.0, 36, 48);
  ExtensionOptions opt;
  opt.shells = 24;
  SUBCASE("free ambient space") {
    UnitaryFamily fam(3, 31, 0.4);
    ProjectorField p = on_mesh(mesh, [&](const Vec3& x) {
      CMat u = fam(x);
      return CMat(u.leftCols(2) * u.leftCols(2).adjoint());
    });
    BallField<CMat> q = constant_ball(opt.shells, mesh.nodes.size(), CMat::Identity(3, 3));
    BallField<CMat> f = extend_projector(mesh, p, 2, q, opt);
    for (std::size_t j = 0; j < p.size(); ++j) CHECK((f.shells[0][j] - p[j]).norm() == 0);
    check_ball_projector(mesh, f, q, 2);
  }
  SUBCASE("inside a varying subspace") {
    UnitaryFamily fam(5, 41, 0.3);
    CMat d = CMat::Zero(5, 5);
    for (int i = 0; i < 4; ++i) d(i, i) = 1;
    BallField<CMat> q;
    q.radii = shell_radii(opt.shells);
    q.center = fam(Vec3::Zero()) * d * fam(Vec3::Zero()).adjoint();
    q.shells.resize(opt.shells);
    for (int s = 0; s < opt.shells; ++s)
      for (const auto& x : mesh.directions) {
        CMat u = fam(q.radii[s] * x);
        q.shells[s].push_back(u * d * u.adjoint());
      }
    ProjectorField p = on_mesh(mesh, [&](const Vec3& x) {
      CMat u = fam(x);
      CMat inner = block_diag(split_pair(x), CMat::Zero(1, 1));
      return CMat(u * inner * u.adjoint());
    });
    BallField<CMat> f = extend_projector(mesh, p, 2, q, opt);
    check_ball_projector(mesh, f, q, 2);
  }
  SUBCASE("obstructed boundary data") {
    ProjectorField p = on_mesh(mesh, bloch_lower);
    BallField<CMat> q = constant_ball(opt.shells, mesh.nodes.size(), CMat::Identity(2, 2));
    CHECK_THROWS_AS(extend_projector(mesh, p, 1, q, opt), TopologicalObstruction);
  }
}

// ----- time reversal -----

TEST_CASE("real frame of a symmetric projector") {
  Model m = make_builtin("trs4");
  const RMat theta = m.theta();
  CMat p = m.spectral_projector(KPoint(0, 0.5, 0), 2);
  CMat f = real_frame(p, 2, theta);
  CHECK((f.adjoint() * f - CMat::Identity(2, 2)).norm() < 1e-12);
  CHECK((f * f.adjoint() - p).norm() < 1e-10);
  CHECK((apply_theta(theta, f, false) - f).norm() < 1e-12);
}

TEST_CASE("symmetric frame on a time-reversal loop") {
  Model m = make_builtin("trs4");
  const RMat theta = m.theta();
  ProjectorField loop;
  const int len = 48;
  for (int j = 0; j < len; ++j) {
    const double a = kTwoPi * j / len;
    loop.push_back(m.spectral_projector(KPoint(0.2 * std::cos(a), 0.2 * std::sin(a), 0), 2));
  }
  for (double delta : {-1.0, 0.3}) {
    TrsOptions opt;
    opt.delta = delta;
    FrameField f = trs_frame_on_circle(loop, 2, theta, opt);
    CHECK(max_frame_mismatch(f, loop) < 1e-8);
    double sym = 0, jump = 0;
    for (int j = 0; j < len / 2; ++j) sym = std::max(sym, (f[j + len / 2] - apply_theta(theta, f[j], false)).norm());
    for (int j = 0; j < len; ++j) jump = std::max(jump, op_norm(f[(j + 1) % len] - f[j]));
    CHECK(sym < 1e-12);
    CHECK(jump < 0.5);
  }
  ProjectorField broken = loop;
  std::mt19937_64 rng(2);
  CMat u = testing::random_unitary(rng, 4);
  broken[3] = u * broken[3] * u.adjoint();
  CHECK_THROWS_WITH_AS(trs_frame_on_circle(broken, 2, theta), doctest::Contains("symmetry"), Error);
}

TEST_CASE("symmetric vector contraction on the disk") {
  const RMat id = RMat::Identity(3, 3);
  const int len = 64;
  auto run = [&](const std::function<CVec(double)>& g, bool expect_real_point) {
    std::vector<CVec> phi;
    for (int j = 0; j < len; ++j) phi.push_back(g(kTwoPi * j / len).normalized());
    TrsOptions opt;
    opt.shells = 16;
    DiskVectorField d = trs_contract_vector_on_disk(phi, id, opt);
    CHECK(d.real_point_branch == expect_real_point);
    const BallField<CVec>& f = d.field;
    double sym = 0, norm = 0, jump = 0;
    for (std::size_t s = 0; s < f.radii.size(); ++s)
      for (int j = 0; j < len; ++j) {
        norm = std::max(norm, std::abs(f.shells[s][j].norm() - 1));
        if (j < len / 2) sym = std::max(sym, (f.shells[s][j + len / 2] - f.shells[s][j].conjugate()).norm());
        jump = std::max(jump, (f.shells[s][(j + 1) % len] - f.shells[s][j]).norm());
        if (s + 1 < f.radii.size()) jump = std::max(jump, (f.shells[s + 1][j] - f.shells[s][j]).norm());
      }
    for (int j = 0; j < len; ++j) CHECK((f.shells[0][j] - phi[j]).norm() == 0);
    CHECK((f.center - f.center.conjugate()).norm() < 1e-12);
    CHECK(std::abs(f.center.norm() - 1) < 1e-12);
    CHECK(sym < 1e-12);
    CHECK(norm < 1e-12);
    CHECK(jump < 0.6);
  };
  run([](double a) { return CVec((CVec(3) << 1, cplx(0, std::sin(a)), cplx(0, std::cos(a))).finished()); }, false);
  run([](double a) { return CVec((CVec(3) << 1, cplx(0, std::cos(a)), std::cos(2 * a)).finished()); }, true);
  std::vector<CVec> bad(8, CVec::Unit(3, 0) * cplx(0, 1));
  CHECK_THROWS_WITH_AS(trs_contract_vector_on_disk(bad, id), doctest::Contains("symmetry"), Error);
}

TEST_CASE("symmetric projector extension over the disk") {
  Model m = make_builtin("trs4");
  const RMat theta = m.theta();
  const int len = 48;
  ProjectorField loop;
  for (int j = 0; j < len; ++j) {
    const double a = kTwoPi * j / len;
    loop.push_back(m.spectral_projector(KPoint(0.25 * std::cos(a), 0.25 * std::sin(a), 0), 2));
  }
  TrsOptions opt;
  opt.shells = 32;
  BallField<CMat> q;
  q.radii = shell_radii(opt.shells);
  q.center = CMat::Identity(4, 4);
  q.shells.assign(opt.shells, std::vector<CMat>(len, CMat::Identity(4, 4)));
  BallField<CMat> f = trs_extend_on_disk(loop, 2, q, theta, opt);
  CHECK(trs_defect(f, theta) < 1e-10);
  double defect = 0, jump = 0;
  for (std::size_t s = 0; s < f.radii.size(); ++s)
    for (int j = 0; j < len; ++j) {
      const CMat& p = f.shells[s][j];
      defect = std::max(defect, projector_defect(p) + (p - p.adjoint()).norm());
      CHECK(projector_rank(p) == 2);
      jump = std::max(jump, op_norm(f.shells[s][(j + 1) % len] - p));
      if (s + 1 < f.radii.size()) jump = std::max(jump, op_norm(f.shells[s + 1][j] - p));
    }
  for (int j = 0; j < len; ++j) CHECK((f.shells[0][j] - loop[j]).norm() == 0);
  CHECK(defect < 1e-8);
  CHECK(jump < 0.6);
  CHECK(projector_defect(f.center) < 1e-8);
}

TEST_CASE("contraction of a torus family") {
  const int n1 = 48, n2 = 48, times = 49;
  std::vector<CMat> fam;
  UnitaryFamily g(3, 51, 0.3);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) {
      const double a = kTwoPi * i / n1, b = kTwoPi * j / n2;
      CMat d = CMat::Identity(3, 3);
      d(0, 0) = std::polar(1.0, a + b);
      d(1, 1) = std::polar(1.0, -a);
      d(2, 2) = std::polar(1.0, -b);
      fam.push_back(g(Vec3(std::cos(a), std::sin(b), 0)) * d);
    }
  auto h = contract_unitary_torus(fam, n1, n2, times);
  double unitary = 0;
  for (const auto& row : h)
    for (const auto& m : row) unitary = std::max(unitary, (m.adjoint() * m - CMat::Identity(3, 3)).norm());
  CHECK(unitary < 1e-9);
  for (std::size_t j = 0; j < fam.size(); ++j) {
    CHECK((h[0][j] - fam[j]).norm() == 0);
    CHECK((h[times - 1][j] - CMat::Identity(3, 3)).norm() == 0);
  }

  std::vector<CMat> winding;
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) winding.push_back(CMat::Constant(1, 1, std::polar(1.0, -kTwoPi * j / n2)));
  try {
    contract_unitary_torus(winding, n1, n2, times);
    FAIL("expected an obstruction");
  } catch (const TopologicalObstruction& e) {
    CHECK(e.chern() == -1);
  }
}
