#include "wdis/cli.hpp"

#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "wdis/disentangle.hpp"
#include "wdis/errors.hpp"
#include "wdis/io.hpp"
#include "wdis/wannier.hpp"

namespace wdis {

using json = nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v(0), v(1), v(2)}); }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) fail(ErrorKind::Parse, "expected a 3-vector, got " + j.dump());
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

std::array<int, 3> parse_grid(const std::string& s) {
  std::vector<int> v;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, "bad grid '" + s + "'");
    }
  }
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  fail(ErrorKind::Parse, "grid takes one or three sizes, got '" + s + "'");
}

std::string path_in(const RunConfig& c, const std::string& name) { return (std::filesystem::path(c.out) / name).string(); }

std::string input_or(const RunConfig& c, const std::string& name) { return c.input.empty() ? path_in(c, name) : c.input; }

void write_report(const RunConfig& c, const std::string& stem, const std::string& csv, const json& j) {
  if (c.format == "json")
    write_json_file(path_in(c, stem + ".json"), j);
  else
    write_text_file(path_in(c, stem + ".csv"), csv);
}

std::string format_k(const KPoint& k) {
  return "(" + format_double(k(0)) + ", " + format_double(k(1)) + ", " + format_double(k(2)) + ")";
}

std::vector<KPoint> real_crossings(const Model& m, int n, const RunConfig& c) {
  if (n < 1 || n >= m.dim()) return {};
  CrossingOptions opt;
  opt.grid = c.crossing_grid;
  opt.tol = c.crossing_tol;
  std::vector<KPoint> out;
  for (const auto& x : detect_crossings(m, n, opt))
    if (!x.avoided) out.push_back(x.k);
  return out;
}

int cmd_bands(const RunConfig& c, std::ostream& out) {
  const Model m = resolve_model(c.model);
  const int dim = m.dim();
  const bool with_gap = c.band >= 1 && c.band < dim;
  std::string csv = "t,k1,k2,k3";
  for (int b = 1; b <= dim; ++b) csv += ",e" + std::to_string(b);
  if (with_gap) csv += ",gap";
  csv += "\n";
  json rows = json::array();
  double t = 0;
  for (std::size_t s = 0; s + 1 < c.path.size(); ++s) {
    const Vec3 a = c.path[s], b = c.path[s + 1];
    const double len = (b - a).norm();
    const bool last = s + 2 == c.path.size();
    for (int i = 0; i < c.path_points + (last ? 1 : 0); ++i) {
      const double u = static_cast<double>(i) / c.path_points;
      const KPoint k = a + u * (b - a);
      const RVec e = m.spectrum(k).values;
      csv += format_double(t + u * len) + "," + format_double(k(0)) + "," + format_double(k(1)) + "," +
             format_double(k(2));
      json row = {{"t", t + u * len}, {"k", vec_json(k)}, {"energies", std::vector<double>(e.data(), e.data() + dim)}};
      for (int b2 = 0; b2 < dim; ++b2) csv += "," + format_double(e(b2));
      if (with_gap) {
        csv += "," + format_double(e(c.band) - e(c.band - 1));
        row["gap"] = e(c.band) - e(c.band - 1);
      }
      csv += "\n";
      rows.push_back(row);
    }
    t += len;
  }
  write_report(c, "bands", csv, {{"model", m.description}, {"rows", rows}});

  const KGrid g(c.grid);
  std::string grid_csv = "node,k1,k2,k3";
  for (int b = 1; b <= dim; ++b) grid_csv += ",e" + std::to_string(b);
  grid_csv += "\n";
  json nodes = json::array();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const KPoint k = g.point(i);
    const RVec e = m.spectrum(k).values;
    grid_csv += std::to_string(i) + "," + format_double(k(0)) + "," + format_double(k(1)) + "," + format_double(k(2));
    for (int b = 0; b < dim; ++b) grid_csv += "," + format_double(e(b));
    grid_csv += "\n";
    nodes.push_back(std::vector<double>(e.data(), e.data() + dim));
  }
  write_report(c, "bands_grid", grid_csv, {{"grid", g.n}, {"energies", nodes}});
  out << "bands: " << rows.size() << " path points, " << g.size() << " grid nodes\n";
  return 0;
}

int cmd_charges(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Model m = resolve_model(c.model);
  require(c.band >= 1 && c.band < m.dim(), "band index must lie in 1..M-1");
  const auto ks = real_crossings(m, c.band, c);
  // charge of band N, the lower band at each crossing
  const auto entries = charge_report(m, c.band - 1, ks, c.charge_radius);
  int total = 0;
  double worst = 0;
  json rows = json::array();
  for (const auto& e : entries) {
    total += e.charge;
    worst = std::max(worst, e.residual);
    rows.push_back({{"k", vec_json(e.point)}, {"charge", e.charge}, {"radius", e.radius}, {"residual", e.residual}});
  }
  write_report(c, "charges", charges_csv(entries), {{"model", m.description}, {"band", c.band}, {"points", rows}, {"total", total}});
  out << "charges: " << entries.size() << " crossings, total " << total << ", max residual " << format_double(worst)
      << "\n";
  if (total != 0) {
    err << "charges do not sum to zero (total " << total << ")\n";
    return exit_code(ErrorKind::Numerical);
  }
  if (worst > c.charge_tol) {
    err << "charge residual " << format_double(worst) << " exceeds " << format_double(c.charge_tol) << "\n";
    return exit_code(ErrorKind::Numerical);
  }
  return 0;
}

// Names every failing invariant; returns false when any fails.
bool check_report(const VerifyReport& r, const DisentangledField& f, const RunConfig& c, std::ostream& err) {
  bool ok = true;
  for (std::size_t i : r.bad_nodes) {
    err << "node " << i << " at k = " << format_k(f.grid.point(i)) << " is not a rank-" << f.rank << " projector\n";
    ok = false;
  }
  if (f.band_index > 0 && r.span_residual > c.span_tol) {
    err << "span residual " << format_double(r.span_residual) << " at node " << r.span_node << " k = "
        << format_k(f.grid.point(r.span_node)) << " exceeds " << format_double(c.span_tol) << "\n";
    ok = false;
  }
  if (f.assumption2 && r.upper_residual > c.span_tol) {
    err << "upper residual " << format_double(r.upper_residual) << " exceeds " << format_double(c.span_tol) << "\n";
    ok = false;
  }
  if (c.trs && r.trs_residual > c.projector_tol) {
    err << "time-reversal residual " << format_double(r.trs_residual) << " exceeds " << format_double(c.projector_tol)
        << "\n";
    ok = false;
  }
  return ok;
}

json verify_json(const VerifyReport& r, const DisentangledField& f) {
  json j = to_json(r);
  j["grid"] = f.grid.n;
  j["band_index"] = f.band_index;
  return j;
}

std::string verify_csv(const VerifyReport& r) {
  std::string s = "quantity,value\n";
  const std::pair<const char*, double> rows[] = {
      {"span_residual", r.span_residual},     {"span_residual_all", r.span_residual_all},
      {"upper_residual", r.upper_residual},   {"rank_error", r.rank_error},
      {"idempotency", r.idempotency},         {"hermiticity", r.hermiticity},
      {"max_increment", r.max_increment},     {"model_increment", r.model_increment},
      {"trs_residual", r.trs_residual},       {"bad_nodes", static_cast<double>(r.bad_nodes.size())}};
  for (const auto& [name, v] : rows) s += std::string(name) + "," + format_double(v) + "\n";
  return s;
}

int cmd_disentangle(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Model m = resolve_model(c.model);
  require(c.band >= 0 && c.band < m.dim(), "band index must lie in 0..M-1");
  const int n = c.band;
  const auto upper = real_crossings(m, n + 1, c);
  std::optional<Region> region;
  if (!upper.empty()) {
    RegionOptions ro;
    ro.margin = c.margin;
    ro.epsilon = c.epsilon;
    ro.max_half = c.max_half;
    ro.core_max = c.core_max;
    std::optional<std::vector<KPoint>> next;
    if (c.assumption2) next = real_crossings(m, n + 2, c);
    region = build_region(upper, real_crossings(m, n, c), next, ro);
  }
  GlueConfig glue;
  glue.epsilon = c.epsilon;
  glue.transition = c.transition;
  glue.grid = c.grid;
  glue.seed = c.seed;
  const DisentangledField f = build_global_projector(m, n, region, glue, c.assumption2);
  write_json_file(path_in(c, "field.json"), to_json(f, m));
  VerifyOptions vo;
  vo.gap_floor = c.gap_floor;
  const VerifyReport r = verify_field(f, m, vo);
  write_report(c, "verify", verify_csv(r), verify_json(r, f));
  out << "disentangle: " << (region ? upper.size() : 0) << " crossings enclosed, span residual "
      << format_double(r.span_residual) << ", max increment " << format_double(r.max_increment) << "\n";
  return check_report(r, f, c, err) ? 0 : exit_code(ErrorKind::Numerical);
}

int cmd_verify(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const json doc = read_json_file(input_or(c, "field.json"));
  const DisentangledField f = field_from_json(doc);
  const Model m = model_from_json(doc.at("model"));
  VerifyOptions vo;
  vo.gap_floor = c.gap_floor;
  const VerifyReport r = verify_field(f, m, vo);
  write_report(c, "verify", verify_csv(r), verify_json(r, f));
  const bool ok = check_report(r, f, c, err);
  out << "verify: " << f.grid.size() << " nodes, " << (ok ? "all invariants hold" : "invariant violated") << "\n";
  return ok ? 0 : exit_code(ErrorKind::InconsistentField);
}

int cmd_wannierize(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const json doc = read_json_file(input_or(c, "field.json"));
  const DisentangledField f = field_from_json(doc);
  const Model m = model_from_json(doc.at("model"));
  std::optional<RMat> theta;
  if (c.trs) {
    if (!m.has_trs()) fail(ErrorKind::Precondition, "model has no time-reversal operator");
    theta = m.theta();
  }
  const GridFrames frames = global_frame(f, theta);
  const FrameQuality q = frame_quality(frames, f.projectors, theta);
  const HoppingTensor h = hoppings(frames, m);
  write_json_file(path_in(c, "frames.json"), to_json(frames));
  write_json_file(path_in(c, "hoppings.json"), {{"kind", "hoppings"},
                                                {"model", m.description},
                                                {"band_index", f.band_index},
                                                {"rank", f.rank},
                                                {"hoppings", to_json(h)}});
  std::optional<DecayProfile> d;
  try {
    d = decay_profile(h);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InsufficientData) throw;
    err << "decay profile skipped: " << e.what() << "\n";
  }
  if (d) write_report(c, "decay", decay_csv(*d), to_json(*d));
  out << "wannierize: frame defect " << format_double(q.projector_defect) << ", hermiticity "
      << format_double(hermiticity_defect(h));
  if (d) out << ", log-linear R^2 " << format_double(d->r_squared) << (d->superpolynomial ? ", superpolynomial" : "");
  out << "\n";
  if (q.projector_defect > c.projector_tol) {
    err << "frame defect " << format_double(q.projector_defect) << " exceeds " << format_double(c.projector_tol) << "\n";
    return exit_code(ErrorKind::Numerical);
  }
  return 0;
}

int cmd_interpolate(const RunConfig& c, std::ostream& out) {
  const json doc = read_json_file(input_or(c, "hoppings.json"));
  if (doc.value("kind", std::string()) != "hoppings") fail(ErrorKind::Parse, "not a hopping dump");
  const Model m = model_from_json(doc.at("model"));
  const int n = doc.at("band_index").get<int>();
  require(n >= 1, "interpolation needs at least one band below the disentangled one");
  const HoppingTensor h = hoppings_from_json(doc.at("hoppings"));
  auto avoid = real_crossings(m, n, c);
  for (const auto& k : real_crossings(m, n + 1, c)) avoid.push_back(k);
  const auto probes = probe_points(c.probes, c.seed, avoid, c.probe_radius);
  const KGrid g(h.n);
  const auto base = band_coefficients(g, band_grid(m, g, n));
  const InterpolationReport r = compare_interpolation(m, n, h, base, probes);
  json rows = json::array();
  for (const auto& p : r.probes)
    rows.push_back({{"k", vec_json(p.k)}, {"error", p.error}, {"baseline_error", p.baseline_error}});
  write_report(c, "interpolation", interpolation_csv(r),
               {{"bands", r.bands},
                {"max_error", r.max_error},
                {"max_baseline_error", r.max_baseline_error},
                {"median_error", r.median_error},
                {"probes", rows}});
  out << "interpolate: " << r.probes.size() << " probes, max error " << format_double(r.max_error) << ", baseline "
      << format_double(r.max_baseline_error) << ", ratio " << format_double(r.ratio()) << "\n";
  return 0;
}

}  // namespace

json to_json(const RunConfig& c) {
  json path = json::array();
  for (const auto& k : c.path) path.push_back(vec_json(k));
  return {{"model", c.model},
          {"input", c.input},
          {"out", c.out},
          {"format", c.format},
          {"seed", c.seed},
          {"grid", c.grid},
          {"band", c.band},
          {"assumption2", c.assumption2},
          {"trs", c.trs},
          {"path", path},
          {"path_points", c.path_points},
          {"crossing_grid", c.crossing_grid},
          {"crossing_tol", c.crossing_tol},
          {"charge_radius", c.charge_radius},
          {"margin", c.margin},
          {"epsilon", c.epsilon},
          {"transition", c.transition},
          {"max_half", c.max_half},
          {"core_max", c.core_max},
          {"gap_floor", c.gap_floor},
          {"span_tol", c.span_tol},
          {"projector_tol", c.projector_tol},
          {"charge_tol", c.charge_tol},
          {"probes", c.probes},
          {"probe_radius", c.probe_radius}};
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::Parse, "config must be a JSON object");
  const json defaults = to_json(RunConfig{});
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) fail(ErrorKind::Parse, "unknown config key '" + key + "'");
  RunConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("model", c.model);
    get("input", c.input);
    get("out", c.out);
    get("format", c.format);
    get("seed", c.seed);
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      c.grid = g.is_number() ? std::array<int, 3>{g.get<int>(), g.get<int>(), g.get<int>()} : g.get<std::array<int, 3>>();
    }
    get("band", c.band);
    get("assumption2", c.assumption2);
    get("trs", c.trs);
    if (j.contains("path")) {
      c.path.clear();
      for (const auto& k : j.at("path")) c.path.push_back(vec_from(k));
    }
    get("path_points", c.path_points);
    get("crossing_grid", c.crossing_grid);
    get("crossing_tol", c.crossing_tol);
    get("charge_radius", c.charge_radius);
    get("margin", c.margin);
    get("epsilon", c.epsilon);
    get("transition", c.transition);
    get("max_half", c.max_half);
    get("core_max", c.core_max);
    get("gap_floor", c.gap_floor);
    get("span_tol", c.span_tol);
    get("projector_tol", c.projector_tol);
    get("charge_tol", c.charge_tol);
    get("probes", c.probes);
    get("probe_radius", c.probe_radius);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed config: ") + e.what());
  }
  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  require(c.format == "csv" || c.format == "json", "format must be csv or json");
  for (int n : c.grid) require(n >= 1, "grid sizes must be positive");
  require(c.path_points >= 1, "path_points must be positive");
  require(c.crossing_grid >= 2, "crossing_grid must be at least 2");
  require(c.probes >= 1, "probes must be positive");
  const std::pair<const char*, double> positive[] = {
      {"charge_radius", c.charge_radius}, {"margin", c.margin},       {"epsilon", c.epsilon},
      {"transition", c.transition},       {"max_half", c.max_half},   {"core_max", c.core_max},
      {"gap_floor", c.gap_floor},         {"span_tol", c.span_tol},   {"projector_tol", c.projector_tol},
      {"charge_tol", c.charge_tol},       {"probe_radius", c.probe_radius}};
  for (const auto& [name, v] : positive) require(v > 0 && std::isfinite(v), std::string(name) + " must be positive");
}

Model resolve_model(const std::string& spec) {
  for (const auto& name : builtin_names())
    if (spec == name) return make_builtin(name);
  return load_model(spec);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Disentangled Wannier construction for band crossings", "wdis"};
  app.require_subcommand(1);
  std::string model, config, outdir, grid, format, input;
  std::uint64_t seed = 0;
  int band = 0;
  bool assumption2 = false, trs = false;
  auto* o_model = app.add_option("--model", model, "builtin model name or model file");
  auto* o_config = app.add_option("--config", config, "JSON run configuration");
  auto* o_out = app.add_option("--out", outdir, "output directory");
  auto* o_seed = app.add_option("--seed", seed, "random seed");
  auto* o_grid = app.add_option("--grid", grid, "k grid, n or n1,n2,n3");
  auto* o_format = app.add_option("--format", format, "report format")->check(CLI::IsMember({"json", "csv"}));
  auto* o_input = app.add_option("--input", input, "field or hopping dump to read");
  auto* o_band = app.add_option("--band", band, "band index N");
  auto* o_a2 = app.add_flag("--assumption2", assumption2, "keep the field inside P_{N+2}");
  auto* o_trs = app.add_flag("--trs", trs, "use the model's time reversal");
  const std::pair<const char*, const char*> commands[] = {
      {"bands", "band structure along a k path and on the grid"},
      {"charges", "Weyl charges of the crossings of bands N and N+1"},
      {"disentangle", "smooth rank N+1 projector field and its verification"},
      {"wannierize", "global frame, hoppings and decay report"},
      {"interpolate", "interpolation error against direct Fourier interpolation"},
      {"verify", "re-check a dumped field"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    RunConfig c = *o_config ? config_from_json(read_json_file(config)) : RunConfig{};
    if (*o_model) c.model = model;
    if (*o_out) c.out = outdir;
    if (*o_seed) c.seed = seed;
    if (*o_grid) c.grid = parse_grid(grid);
    if (*o_format) c.format = format;
    if (*o_input) c.input = input;
    if (*o_band) c.band = band;
    if (*o_a2) c.assumption2 = assumption2;
    if (*o_trs) c.trs = trs;
    validate(c);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "bands") return cmd_bands(c, out);
    if (cmd == "charges") return cmd_charges(c, out, err);
    if (cmd == "disentangle") return cmd_disentangle(c, out, err);
    if (cmd == "wannierize") return cmd_wannierize(c, out, err);
    if (cmd == "interpolate") return cmd_interpolate(c, out);
    return cmd_verify(c, out, err);
  } catch (const TopologicalObstruction& e) {
    err << e.what() << " (Chern number " << e.chern() << ")\n";
    return exit_code(e.kind());
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code(e.kind());
  }
}

}  // namespace wdis
