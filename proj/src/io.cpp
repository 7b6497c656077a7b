#include "wdis/io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wdis/errors.hpp"

namespace wdis {

using json = nlohmann::json;

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const long line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
    fail(ErrorKind::Parse, origin + ":" + std::to_string(line) + ": " + e.what());
  }
}

json read_json_file(const std::string& path) { return parse_json(read_text_file(path), path); }

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed for " + path);
}

void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(1) + "\n"); }

json to_json(const CMat& m) {
  json re = json::array(), im = json::array();
  for (Eigen::Index a = 0; a < m.rows(); ++a) {
    json rr = json::array(), ii = json::array();
    for (Eigen::Index b = 0; b < m.cols(); ++b) {
      rr.push_back(m(a, b).real());
      ii.push_back(m(a, b).imag());
    }
    re.push_back(rr);
    im.push_back(ii);
  }
  return {{"re", re}, {"im", im}};
}

CMat cmat_from_json(const json& j) {
  const json& re = j.at("re");
  const json& im = j.at("im");
  const Eigen::Index rows = static_cast<Eigen::Index>(re.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(re.at(0).size()) : 0;
  if (static_cast<Eigen::Index>(im.size()) != rows) fail(ErrorKind::Parse, "matrix parts differ in shape");
  CMat m(rows, cols);
  for (Eigen::Index a = 0; a < rows; ++a) {
    if (static_cast<Eigen::Index>(re.at(a).size()) != cols || static_cast<Eigen::Index>(im.at(a).size()) != cols)
      fail(ErrorKind::Parse, "ragged matrix row");
    for (Eigen::Index b = 0; b < cols; ++b) m(a, b) = cplx(re[a][b].get<double>(), im[a][b].get<double>());
  }
  return m;
}

Provenance provenance_from_string(const std::string& s) {
  for (Provenance p : {Provenance::Outside, Provenance::Extended, Provenance::Glued})
    if (s == to_string(p)) return p;
  fail(ErrorKind::Parse, "unknown provenance '" + s + "'");
}

json to_json(const DisentangledField& field, const Model& model) {
  json nodes = json::array();
  for (std::size_t i = 0; i < field.projectors.size(); ++i) {
    json node = to_json(field.projectors[i]);
    node["provenance"] = to_string(field.provenance[i]);
    nodes.push_back(node);
  }
  return {{"kind", "disentangled_field"},
          {"model", model.description},
          {"grid", field.grid.n},
          {"band_index", field.band_index},
          {"rank", field.rank},
          {"assumption2", field.assumption2},
          {"region", field.region ? to_json(*field.region) : json(nullptr)},
          {"diagnostics", field.diagnostics},
          {"nodes", nodes}};
}

DisentangledField field_from_json(const json& j) {
  try {
    if (j.value("kind", std::string()) != "disentangled_field") fail(ErrorKind::Parse, "not a field dump");
    DisentangledField f;
    f.grid = KGrid(j.at("grid").get<std::array<int, 3>>());
    f.band_index = j.at("band_index").get<int>();
    f.rank = j.at("rank").get<int>();
    f.assumption2 = j.value("assumption2", false);
    if (j.contains("region") && !j.at("region").is_null()) f.region = region_from_json(j.at("region"));
    f.diagnostics = j.value("diagnostics", json::object());
    const json& nodes = j.at("nodes");
    if (nodes.size() != f.grid.size())
      fail(ErrorKind::Parse, "field has " + std::to_string(nodes.size()) + " nodes, grid needs " +
                                 std::to_string(f.grid.size()));
    for (const json& node : nodes) {
      f.projectors.push_back(cmat_from_json(node));
      f.provenance.push_back(provenance_from_string(node.at("provenance").get<std::string>()));
    }
    return f;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed field dump: ") + e.what());
  }
}

json to_json(const GridFrames& frames) {
  json nodes = json::array();
  for (const CMat& f : frames.frames) nodes.push_back(to_json(f));
  return {{"kind", "frame_field"}, {"grid", frames.grid.n}, {"rank", frames.rank},
          {"trs", frames.trs},     {"gauge", frames.gauge}, {"nodes", nodes}};
}

GridFrames frames_from_json(const json& j) {
  try {
    if (j.value("kind", std::string()) != "frame_field") fail(ErrorKind::Parse, "not a frame dump");
    GridFrames f;
    f.grid = KGrid(j.at("grid").get<std::array<int, 3>>());
    f.rank = j.at("rank").get<int>();
    f.trs = j.value("trs", false);
    f.gauge = j.value("gauge", json::object());
    for (const json& node : j.at("nodes")) f.frames.push_back(cmat_from_json(node));
    if (f.frames.size() != f.grid.size()) fail(ErrorKind::Parse, "frame dump does not cover its grid");
    return f;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed frame dump: ") + e.what());
  }
}

std::string charges_csv(const std::vector<ChargeEntry>& entries) {
  std::string s = "k1,k2,k3,charge,radius,residual\n";
  for (const auto& e : entries)
    s += format_double(e.point(0)) + "," + format_double(e.point(1)) + "," + format_double(e.point(2)) + "," +
         std::to_string(e.charge) + "," + format_double(e.radius) + "," + format_double(e.residual) + "\n";
  return s;
}

std::string decay_csv(const DecayProfile& d) {
  std::string s = "shell,radius,max_norm,slope\n";
  for (const auto& sh : d.shells)
    s += std::to_string(sh.shell) + "," + format_double(sh.radius) + "," + format_double(sh.max_norm) + "," +
         format_double(sh.slope) + "\n";
  return s;
}

std::string interpolation_csv(const InterpolationReport& r) {
  std::string s = "k1,k2,k3";
  for (const char* part : {"exact", "interpolated", "baseline"})
    for (int b = 1; b <= r.bands; ++b) s += std::string(",") + part + "_" + std::to_string(b);
  s += ",error,baseline_error\n";
  for (const auto& p : r.probes) {
    s += format_double(p.k(0)) + "," + format_double(p.k(1)) + "," + format_double(p.k(2));
    for (const RVec* v : {&p.exact, &p.interpolated, &p.baseline})
      for (int b = 0; b < r.bands; ++b) s += "," + format_double((*v)(b));
    s += "," + format_double(p.error) + "," + format_double(p.baseline_error) + "\n";
  }
  return s;
}

}  // namespace wdis
