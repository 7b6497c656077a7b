#include "wdis/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "wdis/errors.hpp"
#include "wdis/io.hpp"

namespace wdis {

using nlohmann::json;

KPoint canonical_k(const KPoint& k) {
  KPoint out;
  for (int a = 0; a < 3; ++a) {
    double x = k(a) - std::floor(k(a));
    if (x >= 1.0) x = 0.0;
    out(a) = x;
  }
  return out;
}

Vec3 wrap_displacement(const Vec3& d) {
  Vec3 out;
  for (int a = 0; a < 3; ++a) out(a) = d(a) - std::floor(d(a) + 0.5);
  return out;
}

double torus_distance(const KPoint& a, const KPoint& b) { return wrap_displacement(a - b).norm(); }

bool same_k(const KPoint& a, const KPoint& b, double tol) { return torus_distance(a, b) <= tol; }

CMat Spectrum::projector(int n) const {
  const Eigen::Index m = values.size();
  require(n >= 0 && n <= m, "projector rank out of range");
  if (n == 0) return CMat::Zero(m, m);
  if (n == m) return CMat::Identity(m, m);
  CMat v = vectors.leftCols(n);
  return v * v.adjoint();
}

double Spectrum::gap(int n) const {
  require(n >= 1 && n < values.size(), "gap index out of range");
  return values(n) - values(n - 1);
}

Model::Model(std::string name, int dim, Evaluator h, std::optional<RMat> theta, bool periodic)
    : name_(std::move(name)), dim_(dim), h_(std::move(h)), theta_(std::move(theta)), periodic_(periodic) {
  if (dim_ < 1) fail(ErrorKind::ModelDefinition, "model dimension must be positive");
  if (theta_) {
    const RMat& t = *theta_;
    if (t.rows() != dim_ || t.cols() != dim_) fail(ErrorKind::ModelDefinition, "theta has the wrong shape");
    if ((t * t.transpose() - RMat::Identity(dim_, dim_)).norm() > 1e-12)
      fail(ErrorKind::ModelDefinition, "theta is not orthogonal");
    if ((t * t - RMat::Identity(dim_, dim_)).norm() > 1e-12)
      fail(ErrorKind::ModelDefinition, "theta does not square to the identity");
  }
  // Probe a few fixed points for Hermiticity and time-reversal symmetry.
  const double probes[][3] = {{0.0, 0.0, 0.0}, {0.13, 0.37, 0.71}, {0.5, 0.25, 0.9}, {0.91, 0.07, 0.44}};
  for (const auto& p : probes) {
    KPoint k(p[0], p[1], p[2]);
    CMat hk = h_(k);
    if (hk.rows() != dim_ || hk.cols() != dim_) fail(ErrorKind::ModelDefinition, "evaluator returned wrong shape");
    if (!hk.allFinite() || hermiticity_defect(hk) > 1e-12)
      fail(ErrorKind::ModelDefinition, "Hamiltonian is not Hermitian at a probe point");
    if (theta_ && trs_residual(k) > 1e-12)
      fail(ErrorKind::ModelDefinition, "time-reversal relation H(-k) = theta H(k) theta^-1 fails");
  }
}

const RMat& Model::theta() const {
  require(theta_.has_value(), "model " + name_ + " has no time-reversal operator");
  return *theta_;
}

CMat Model::hamiltonian(const KPoint& k) const {
  CMat h = h_(k);
  if (!h.allFinite()) fail(ErrorKind::Numerical, "non-finite Hamiltonian");
  if (hermiticity_defect(h) > 1e-12) fail(ErrorKind::ModelDefinition, "non-Hermitian Hamiltonian");
  return hermitian_part(h);
}

Spectrum Model::spectrum(const KPoint& k) const {
  Eigh e = eigh(hamiltonian(k));
  return Spectrum{e.values, e.vectors};
}

static std::string format_k(const KPoint& k) {
  std::ostringstream os;
  os.precision(17);
  os << "(" << k(0) << ", " << k(1) << ", " << k(2) << ")";
  return os.str();
}

CMat Model::spectral_projector(const KPoint& k, int n, double gap_floor) const {
  require(n >= 0 && n <= dim_, "band count out of range");
  Spectrum s = spectrum(k);
  if (n > 0 && n < dim_ && s.gap(n) < gap_floor) {
    std::ostringstream os;
    os << "gap between bands " << n << " and " << n + 1 << " is " << s.gap(n) << " at k = " << format_k(k);
    fail(ErrorKind::DegenerateCut, os.str());
  }
  return s.projector(n);
}

double Model::gap(const KPoint& k, int n) const { return spectrum(k).gap(n); }

CMat Model::theta_vectors(const CMat& x) const { return theta().cast<cplx>() * x.conjugate(); }

CMat Model::theta_operator(const CMat& a) const {
  CMat t = theta().cast<cplx>();
  return t * a.conjugate() * t.transpose();
}

double Model::trs_residual(const KPoint& k) const {
  CMat hk = h_(k);
  CMat hm = h_(-k);
  return (hm - theta_operator(hk)).norm() / std::max(1.0, hk.norm());
}

double projector_defect(const CMat& p) { return (p * p - p).norm(); }

int projector_rank(const CMat& p) { return static_cast<int>(std::lround(p.trace().real())); }

namespace {

const CMat& pauli(int a) {
  static const CMat s[3] = {
      (CMat(2, 2) << 0, 1, 1, 0).finished(),
      (CMat(2, 2) << 0, cplx(0, -1), cplx(0, 1), 0).finished(),
      (CMat(2, 2) << 1, 0, 0, -1).finished(),
  };
  return s[a];
}

CMat d_dot_sigma(const Vec3& d) { return d(0) * pauli(0) + d(1) * pauli(1) + d(2) * pauli(2); }

Vec3 weyl_vector(const KPoint& k, double m) {
  const double c1 = std::cos(kTwoPi * k(0)), c2 = std::cos(kTwoPi * k(1)), c3 = std::cos(kTwoPi * k(2));
  return Vec3(std::sin(kTwoPi * k(0)), std::sin(kTwoPi * k(1)), c3 + m - c1 - c2);
}

double param(const json& p, const char* key, double fallback) {
  return p.contains(key) ? p.at(key).get<double>() : fallback;
}

Model weyl2(const json& p) {
  const double m = param(p, "m", 2.0);
  Model model("weyl2", 2, [m](const KPoint& k) { return d_dot_sigma(weyl_vector(k, m)); });
  model.description = {{"name", "weyl2"}, {"kind", "builtin"}, {"params", {{"m", m}}}};
  return model;
}

Model insulator2(const json& p) {
  const double m = param(p, "m", 8.0);
  Model model("insulator2", 2, [m](const KPoint& k) { return d_dot_sigma(weyl_vector(k, m)); });
  model.description = {{"name", "insulator2"}, {"kind", "builtin"}, {"params", {{"m", m}}}};
  return model;
}

Model trs4(const json& p) {
  const double m = param(p, "m", 2.0);
  auto h = [m](const KPoint& k) {
    CMat out = CMat::Zero(4, 4);
    out.topLeftCorner(2, 2) = d_dot_sigma(weyl_vector(k, m));
    out.bottomRightCorner(2, 2) = d_dot_sigma(weyl_vector(-k, m)).conjugate();
    return out;
  };
  RMat theta = RMat::Zero(4, 4);
  theta.topRightCorner(2, 2).setIdentity();
  theta.bottomLeftCorner(2, 2).setIdentity();
  Model model("trs4", 4, h, theta);
  model.description = {{"name", "trs4"}, {"kind", "builtin"}, {"params", {{"m", m}}}};
  return model;
}

// Spin-one matrices.
const CMat& spin1(int a) {
  static const double r = 1.0 / std::sqrt(2.0);
  static const CMat s[3] = {
      (CMat(3, 3) << 0, r, 0, r, 0, r, 0, r, 0).finished(),
      (CMat(3, 3) << 0, cplx(0, -r), 0, cplx(0, r), 0, cplx(0, -r), 0, cplx(0, r), 0).finished(),
      (CMat(3, 3) << 1, 0, 0, 0, 0, 0, 0, 0, -1).finished(),
  };
  return s[a];
}

// Three bands d(k).S + D(k) Sz^2 below which sits a gapped level. The
// anisotropy D changes sign between the (0,0) and (1/2,1/2) lines, so the
// lower pair of the triplet touches on one line and the upper pair on the
// other.
Model weyl4(const json& p) {
  const double e_low = param(p, "e_low", -8.0);
  const double t = param(p, "coupling", 0.3);
  const double d0 = param(p, "anisotropy", 0.6);
  const bool top = p.contains("top_band") && p.at("top_band").get<bool>();
  const double e_top = param(p, "e_top", 8.0);
  const int dim = top ? 5 : 4;
  auto h = [=](const KPoint& k) {
    const double c1 = std::cos(kTwoPi * k(0)), c2 = std::cos(kTwoPi * k(1)), c3 = std::cos(kTwoPi * k(2));
    const double mu = 2.25 - 0.75 * c1 * c2;
    const Vec3 d(std::sin(kTwoPi * k(0)), std::sin(kTwoPi * k(1)), c3 + mu);
    const double aniso = d0 * 0.5 * (c1 + c2);
    CMat out = CMat::Zero(dim, dim);
    out(0, 0) = e_low;
    out.block(1, 1, 3, 3) = d(0) * spin1(0) + d(1) * spin1(1) + d(2) * spin1(2) + aniso * spin1(2) * spin1(2);
    const Vec3 v = t * Vec3(c1, c2, c3);
    for (int i = 0; i < 3; ++i) out(0, 1 + i) = out(1 + i, 0) = v(i);
    if (top) {
      out(4, 4) = e_top;
      const Vec3 w = t * Vec3(c2 * c3, c3 * c1, c1 * c2);
      for (int i = 0; i < 3; ++i) out(4, 1 + i) = out(1 + i, 4) = w(i);
    }
    return out;
  };
  Model model("weyl4", dim, h);
  model.description = {{"name", "weyl4"},
                       {"kind", "builtin"},
                       {"params",
                        {{"e_low", e_low},
                         {"coupling", t},
                         {"anisotropy", d0},
                         {"top_band", top},
                         {"e_top", e_top}}}};
  return model;
}

}  // namespace

std::vector<std::string> builtin_names() { return {"weyl2", "insulator2", "trs4", "weyl4"}; }

Model make_builtin(const std::string& name, const json& params) {
  if (name == "weyl2") return weyl2(params);
  if (name == "insulator2") return insulator2(params);
  if (name == "trs4") return trs4(params);
  if (name == "weyl4") return weyl4(params);
  fail(ErrorKind::ModelDefinition, "unknown builtin model '" + name + "'");
}

Model local_weyl_model(const Eigen::Matrix3d& b, const Vec3& k0) {
  Model model("local_weyl", 2, [b, k0](const KPoint& k) { return d_dot_sigma(b * (k - k0)); }, std::nullopt, false);
  json rows = json::array();
  for (int i = 0; i < 3; ++i) rows.push_back({b(i, 0), b(i, 1), b(i, 2)});
  model.description = {{"name", "local_weyl"}, {"kind", "local_weyl"},
                       {"params", {{"b", rows}, {"k0", {k0(0), k0(1), k0(2)}}}}};
  return model;
}

namespace {

RMat read_real_matrix(const json& j, int dim, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    fail(ErrorKind::ModelDefinition, what + " must be a " + std::to_string(dim) + "x" + std::to_string(dim) + " array");
  RMat m(dim, dim);
  for (int r = 0; r < dim; ++r) {
    if (!j[r].is_array() || static_cast<int>(j[r].size()) != dim)
      fail(ErrorKind::ModelDefinition, what + " row " + std::to_string(r) + " has the wrong length");
    for (int c = 0; c < dim; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

struct RKey {
  int a, b, c;
  auto operator<=>(const RKey&) const = default;
};

Model fourier_model(const json& doc) {
  const int dim = doc.at("dim").get<int>();
  const std::string name = doc.value("name", std::string("fourier"));
  std::map<RKey, CMat> hop;
  for (const auto& h : doc.at("hoppings")) {
    const auto& r = h.at("R");
    if (!r.is_array() || r.size() != 3) fail(ErrorKind::ModelDefinition, "hopping R must have three integers");
    RKey key{r[0].get<int>(), r[1].get<int>(), r[2].get<int>()};
    CMat t = read_real_matrix(h.at("matrix_re"), dim, "matrix_re").cast<cplx>();
    if (h.contains("matrix_im")) t += cplx(0, 1) * read_real_matrix(h.at("matrix_im"), dim, "matrix_im").cast<cplx>();
    if (hop.count(key)) fail(ErrorKind::ModelDefinition, "duplicate hopping vector");
    hop[key] = t;
  }
  // Hermiticity of H(k) requires T_{-R} = T_R^dagger; missing partners are filled in.
  std::map<RKey, CMat> full = hop;
  for (const auto& [key, t] : hop) {
    RKey neg{-key.a, -key.b, -key.c};
    auto it = hop.find(neg);
    if (it == hop.end()) {
      full[neg] = t.adjoint();
    } else if ((it->second - t.adjoint()).norm() > 1e-12 * std::max(1.0, t.norm())) {
      fail(ErrorKind::ModelDefinition, "hoppings violate T_{-R} = T_R^dagger");
    }
  }
  std::vector<std::pair<Vec3, CMat>> terms;
  for (const auto& [key, t] : full) terms.emplace_back(Vec3(key.a, key.b, key.c), t);
  auto h = [terms, dim](const KPoint& k) {
    CMat out = CMat::Zero(dim, dim);
    for (const auto& [r, t] : terms) out += std::polar(1.0, kTwoPi * k.dot(r)) * t;
    return out;
  };
  std::optional<RMat> theta;
  if (doc.contains("trs") && !doc.at("trs").is_null()) {
    const json& trs = doc.at("trs");
    if (trs.contains("theta_im")) {
      RMat im = read_real_matrix(trs.at("theta_im"), dim, "theta_im");
      if (im.norm() != 0.0) fail(ErrorKind::ModelDefinition, "theta must be real");
    }
    theta = read_real_matrix(trs.contains("theta_re") ? trs.at("theta_re") : trs.at("theta"), dim, "theta");
  }
  Model model(name, dim, h, theta);
  model.description = doc;
  return model;
}

}  // namespace

Model model_from_json(const json& doc) {
  try {
    const std::string kind = doc.value("kind", std::string("builtin"));
    if (kind == "builtin") {
      Model m = make_builtin(doc.at("name").get<std::string>(), doc.value("params", json::object()));
      if (doc.contains("dim") && doc.at("dim").get<int>() != m.dim())
        fail(ErrorKind::ModelDefinition, "declared dim does not match builtin model");
      return m;
    }
    if (kind == "fourier") return fourier_model(doc);
    if (kind == "local_weyl") {
      const json& p = doc.at("params");
      Eigen::Matrix3d b;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) b(i, j) = p.at("b")[i][j].get<double>();
      Vec3 k0 = Vec3::Zero();
      if (p.contains("k0"))
        for (int i = 0; i < 3; ++i) k0(i) = p.at("k0")[i].get<double>();
      return local_weyl_model(b, k0);
    }
    fail(ErrorKind::ModelDefinition, "unknown model kind '" + kind + "'");
  } catch (const json::exception& e) {
    fail(ErrorKind::ModelDefinition, std::string("malformed model description: ") + e.what());
  }
}

Model load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

std::vector<Crossing> detect_crossings(const Model& model, int n, const CrossingOptions& opt) {
  require(n >= 1 && n + 1 <= model.dim(), "crossing detection needs bands n and n+1 with n+1 <= dim");
  require(opt.grid >= 8, "crossing scan grid must be at least 8");
  const int g = opt.grid;
  std::vector<double> gap(static_cast<std::size_t>(g) * g * g);
  double lo = 1e300, hi = -1e300;
  auto idx = [g](int i, int j, int l) {
    auto w = [g](int x) { return ((x % g) + g) % g; };
    return (static_cast<std::size_t>(w(i)) * g + w(j)) * g + w(l);
  };
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j)
      for (int l = 0; l < g; ++l) {
        Spectrum s = model.spectrum(KPoint(i, j, l) / g);
        gap[idx(i, j, l)] = s.gap(n);
        lo = std::min(lo, s.values(0));
        hi = std::max(hi, s.values(s.values.size() - 1));
      }
  const double tol = opt.tol > 0 ? opt.tol : 0.05 * (hi - lo);

  std::vector<Crossing> found;
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j)
      for (int l = 0; l < g; ++l) {
        const double v = gap[idx(i, j, l)];
        if (v >= tol) continue;
        bool is_min = true;
        for (int a = -1; a <= 1 && is_min; ++a)
          for (int b = -1; b <= 1 && is_min; ++b)
            for (int c = -1; c <= 1 && is_min; ++c)
              if ((a || b || c) && gap[idx(i + a, j + b, l + c)] < v) is_min = false;
        if (!is_min) continue;

        // Compass search refinement.
        KPoint k = KPoint(i, j, l) / g;
        double best = v;
        double step = 1.0 / g;
        int shrinks = 0;
        while (best >= opt.degeneracy_floor && shrinks < opt.max_shrinks) {
          bool moved = false;
          for (int a = 0; a < 3 && !moved; ++a)
            for (int s = -1; s <= 1 && !moved; s += 2) {
              KPoint trial = k;
              trial(a) += s * step;
              const double gt = model.gap(trial, n);
              if (gt < best) {
                best = gt;
                k = trial;
                moved = true;
              }
            }
          if (!moved) {
            step *= 0.5;
            ++shrinks;
          }
        }
        Crossing c{canonical_k(k), best, best >= opt.degeneracy_floor};
        bool dup = false;
        for (auto& f : found)
          if (torus_distance(f.k, c.k) < 1e-6) {
            dup = true;
            if (c.gap < f.gap) f = c;
          }
        if (!dup) found.push_back(c);
      }
  std::sort(found.begin(), found.end(), [](const Crossing& a, const Crossing& b) {
    return std::lexicographical_compare(a.k.data(), a.k.data() + 3, b.k.data(), b.k.data() + 3);
  });
  return found;
}

}  // namespace wdis
