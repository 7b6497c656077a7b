#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "wdis/errors.hpp"
#include "wdis/wannier.hpp"

using namespace wdis;

namespace {

std::vector<KPoint> real_crossings(const Model& m, int n) {
  std::vector<KPoint> out;
  for (const auto& c : detect_crossings(m, n))
    if (!c.avoided) out.push_back(c.k);
  return out;
}

std::vector<CMat> model_projectors(const Model& m, const KGrid& g, int rank) {
  std::vector<CMat> out;
  for (std::size_t i = 0; i < g.size(); ++i) out.push_back(m.spectral_projector(g.point(i), rank));
  return out;
}

// Two-band Chern insulator in the (k1, k2) planes, constant along k3.
Model chern_layer() {
  return Model("chern_layer", 2, [](const KPoint& k) {
    const double c1 = std::cos(kTwoPi * k(0)), c2 = std::cos(kTwoPi * k(1));
    CMat h(2, 2);
    const double dz = 1 - c1 - c2;
    const cplx dxy(std::sin(kTwoPi * k(0)), std::sin(kTwoPi * k(1)));
    h << dz, std::conj(dxy), dxy, -dz;
    return h;
  });
}

struct Weyl4Frames {
  Model model = make_builtin("weyl4");
  DisentangledField field;
  GridFrames frames;
  Weyl4Frames(int n) {
    const Region r = build_region(real_crossings(model, 3), real_crossings(model, 2), std::nullopt, {});
    GlueConfig g;
    g.grid = {n, n, n};
    field = build_global_projector(model, 2, r, g);
    frames = global_frame(field);
  }
};

const Weyl4Frames& weyl4_frames(int n) {
  static const Weyl4Frames f8(8), f16(16);
  return n == 8 ? f8 : f16;
}

}  // namespace

TEST_CASE("constant projector field gives a constant frame") {
  std::mt19937_64 rng(2);
  const CMat p = testing::random_projector(rng, 4, 2);
  KGrid g({5, 4, 6});
  const auto f = global_frame(g, std::vector<CMat>(g.size(), p), 2);
  for (const auto& x : f.frames) CHECK((x - f.frames[0]).norm() < 1e-12);
  CHECK((f.frames[0] * f.frames[0].adjoint() - p).norm() < 1e-12);
}

TEST_CASE("insulator frame reproduces the projector") {
  Model m = make_builtin("insulator2");
  KGrid g({10, 10, 10});
  const auto p = model_projectors(m, g, 1);
  const auto f = global_frame(g, p, 1);
  const auto q = frame_quality(f, p);
  CHECK(q.projector_defect < 1e-8);
  CHECK(q.orthonormality < 1e-12);
}

TEST_CASE("weyl4 frames are smooth and span the constructed field") {
  const auto& w = weyl4_frames(16);
  const auto q = frame_quality(w.frames, w.field.projectors);
  CHECK(q.projector_defect < 1e-8);
  const auto rep = verify_field(w.field, w.model);
  CHECK(q.max_increment < 5 * rep.max_increment);
  const auto sc = slice_cherns(w.field.grid, w.field.projectors, 3);
  CHECK(sc.trivial());
  for (double r : sc.residual) CHECK(r < 0.02);
}

TEST_CASE("a slice with Chern number one has no global frame") {
  Model m = chern_layer();
  KGrid g({12, 12, 4});
  const auto p = model_projectors(m, g, 1);
  const auto sc = slice_cherns(g, p, 1);
  CHECK(std::abs(sc.chern[2]) == 1);
  CHECK(sc.chern[0] == 0);
  CHECK(sc.chern[1] == 0);
  try {
    global_frame(g, p, 1);
    FAIL("expected obstruction");
  } catch (const TopologicalObstruction& e) {
    CHECK(e.chern() == sc.chern[2]);
  }
}

TEST_CASE("identity Hamiltonian gives on-site identity hoppings") {
  Model id("identity", 3, [](const KPoint&) { return CMat(CMat::Identity(3, 3)); });
  std::mt19937_64 rng(9);
  KGrid g({6, 6, 6});
  GridFrames f;
  f.grid = g;
  f.rank = 2;
  for (std::size_t i = 0; i < g.size(); ++i) f.frames.push_back(testing::random_unitary(rng, 3).leftCols(2));
  const auto h = hoppings(f, id);
  for (std::size_t i = 0; i < h.lattice.size(); ++i) {
    const auto& r = h.lattice[i];
    const CMat expect = r == std::array<int, 3>{0, 0, 0} ? CMat(CMat::Identity(2, 2)) : CMat(CMat::Zero(2, 2));
    CHECK((h.coeffs[i] - expect).norm() < 1e-12);
  }
  for (int t = 0; t < 10; ++t) {
    const RVec e = interpolate_bands(h, testing::random_k(rng));
    CHECK((e - RVec::Ones(2)).norm() < 1e-12);
  }
}

TEST_CASE("insulator hoppings decay exponentially") {
  Model m = make_builtin("insulator2");
  KGrid g({16, 16, 16});
  const auto p = model_projectors(m, g, 1);
  const auto h = hoppings(global_frame(g, p, 1), m);
  const auto d = decay_profile(h);
  for (int s = 1; s <= 4; ++s) CHECK(d.shells[s + 1].max_norm < 0.1 * d.shells[s].max_norm);
  CHECK(d.r_squared > 0.99);
  CHECK(d.superpolynomial);
}

TEST_CASE("hopping tensor invariants") {
  const auto& w = weyl4_frames(16);
  const auto values = frame_hamiltonians(w.frames, w.model);
  const auto h = forward_transform(w.frames.grid, values);
  CHECK(hermiticity_defect(h) < 1e-10);
  CHECK(plancherel_defect(h, values) < 1e-10 * values.size());
  const auto back = hoppings_from_json(to_json(h));
  CHECK(back.lattice == h.lattice);
  for (std::size_t i = 0; i < h.coeffs.size(); ++i) CHECK((back.coeffs[i] - h.coeffs[i]).norm() == 0);
}

TEST_CASE("interpolation is exact on grid nodes and gauge covariant") {
  const auto& w = weyl4_frames(8);
  const auto h = hoppings(w.frames, w.model);
  std::mt19937_64 rng(14);
  GridFrames regauged = w.frames;
  for (auto& x : regauged.frames) x = x * testing::random_unitary(rng, 3);
  const auto h2 = hoppings(regauged, w.model);
  for (std::size_t i = 0; i < w.field.grid.size(); i += 7) {
    const KPoint k = w.field.grid.point(i);
    const RVec exact = w.model.spectrum(k).values.head(2);
    const RVec a = interpolate_bands(h, k), b = interpolate_bands(h2, k);
    CHECK((a.head(2) - exact).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("direct Fourier interpolation of band-limited bands") {
  KGrid g({8, 8, 8});
  std::vector<RVec> bands;
  for (std::size_t i = 0; i < g.size(); ++i) {
    RVec b(2);
    b << std::cos(kTwoPi * g.point(i)(0)), 0.75;
    bands.push_back(b);
  }
  const auto c = band_coefficients(g, bands);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const KPoint k = testing::random_k(rng);
    const RVec v = direct_fourier_interp(c, k);
    CHECK(std::abs(v(0) - std::cos(kTwoPi * k(0))) < 1e-12);
    CHECK(std::abs(v(1) - 0.75) < 1e-12);
  }
}

TEST_CASE("probe points are seeded and avoid crossings") {
  const std::vector<KPoint> avoid{KPoint(0.5, 0.5, 0.5), KPoint(0.1, 0.2, 0.3)};
  const auto a = probe_points(200, 3, avoid, 0.1);
  const auto b = probe_points(200, 3, avoid, 0.1);
  const auto c = probe_points(200, 4, avoid, 0.1);
  REQUIRE(a.size() == 200);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i] - b[i]).norm() == 0);
    for (const auto& x : avoid) CHECK(torus_distance(a[i], x) >= 0.1);
    for (int d = 0; d < 3; ++d) {
      CHECK(a[i](d) >= 0);
      CHECK(a[i](d) < 1);
    }
  }
  CHECK((a[0] - c[0]).norm() > 0);
}

TEST_CASE("time-reversal symmetric frames give real hoppings") {
  Model m = make_builtin("trs4", {{"m", 8.0}});
  KGrid g({8, 8, 8});
  const auto p = model_projectors(m, g, 2);
  const auto f = global_frame(g, p, 2, m.theta());
  const auto q = frame_quality(f, p, m.theta());
  CHECK(f.trs);
  CHECK(q.projector_defect < 1e-8);
  CHECK(q.trs_defect < 1e-12);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::size_t o = g.opposite(i);
    if (o != i) CHECK((f.frames[o] - apply_theta(m.theta(), f.frames[i], false)).norm() == 0);
  }
  const auto h = hoppings(f, m);
  CHECK(reality_defect(h) < 1e-9);
}

TEST_CASE("time reversal requires a symmetric field") {
  Model m = make_builtin("trs4", {{"m", 8.0}});
  KGrid g({6, 6, 6});
  auto p = model_projectors(m, g, 2);
  std::mt19937_64 rng(3);
  p[g.index(1, 2, 3)] = testing::random_projector(rng, 4, 2);
  try {
    global_frame(g, p, 2, m.theta());
    FAIL("expected a symmetry error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Symmetry);
  }
}

TEST_CASE("eigenvector frames of raw P_N decay slowly") {
  const auto& w = weyl4_frames(16);
  const auto h = hoppings(eigenvector_frames(w.model, w.field.grid, 2), w.model);
  const auto d = decay_profile(h);
  CHECK_FALSE(d.superpolynomial);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int s = 3; s <= 7; ++s) {
    const double x = std::log(double(s)), y = std::log(d.shells[s].max_norm);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const double slope = (5 * sxy - sx * sy) / (5 * sxx - sx * sx);
  MESSAGE("raw eigenvector hopping slope " << slope);
  CHECK(slope < -2.0);
  CHECK(slope > -5.0);
  CHECK(d.shells[7].max_norm > 1e-4 * d.shells[1].max_norm);
}

TEST_CASE("refining the grid does not increase the median interpolation error") {
  const auto& coarse = weyl4_frames(8);
  const auto& fine = weyl4_frames(16);
  auto avoid = real_crossings(coarse.model, 3);
  for (const auto& k : real_crossings(coarse.model, 2)) avoid.push_back(k);
  const auto probes = probe_points(100, 0, avoid);
  auto report = [&](const Weyl4Frames& w) {
    const auto base = band_coefficients(w.field.grid, band_grid(w.model, w.field.grid, 2));
    return compare_interpolation(w.model, 2, hoppings(w.frames, w.model), base, probes);
  };
  const auto a = report(coarse), b = report(fine);
  CHECK(b.median_error <= a.median_error);
  CHECK(b.max_error <= a.max_error);
}
