#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "wdis/cli.hpp"
#include "wdis/errors.hpp"
#include "wdis/io.hpp"

using namespace wdis;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wdis_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::vector<std::vector<double>> read_csv(const std::string& path, std::string* header = nullptr) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::getline(in, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

// Two-band Chern insulator sin k1 s1 + sin k2 s2 + (1 + cos k1 + cos k2) s3 as Fourier hoppings.
json chern_layer_file() {
  return {{"name", "chern_layer"},
          {"dim", 2},
          {"kind", "fourier"},
          {"hoppings",
           {{{"R", {0, 0, 0}}, {"matrix_re", {{1, 0}, {0, -1}}}},
            {{"R", {1, 0, 0}}, {"matrix_re", {{0.5, 0}, {0, -0.5}}}, {"matrix_im", {{0, -0.5}, {-0.5, 0}}}},
            {{"R", {0, 1, 0}}, {"matrix_re", {{0.5, -0.5}, {0.5, -0.5}}}}}},
          {"trs", nullptr}};
}

RunConfig random_config(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(1e-9, 1.0);
  std::uniform_int_distribution<int> n(1, 40);
  RunConfig c;
  c.model = "model_" + std::to_string(n(rng)) + ".json";
  c.input = n(rng) % 2 ? "" : "dump.json";
  c.out = "out/" + std::to_string(n(rng));
  c.format = n(rng) % 2 ? "csv" : "json";
  c.seed = rng();
  c.grid = {n(rng), n(rng), n(rng)};
  c.band = n(rng) % 4;
  c.assumption2 = n(rng) % 2;
  c.trs = n(rng) % 2;
  c.path.clear();
  for (int i = n(rng) % 4; i > 0; --i) c.path.push_back(KPoint(u(rng), u(rng), u(rng)));
  c.path_points = n(rng);
  c.crossing_grid = n(rng) + 1;
  c.crossing_tol = u(rng) - 0.5;
  for (double* x : {&c.charge_radius, &c.margin, &c.epsilon, &c.transition, &c.max_half, &c.core_max, &c.gap_floor,
                    &c.span_tol, &c.projector_tol, &c.charge_tol, &c.probe_radius})
    *x = u(rng) / 3.0;
  c.probes = n(rng);
  return c;
}

}  // namespace

TEST_CASE("config round trips losslessly through JSON text") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    const RunConfig c = random_config(rng);
    const json j = to_json(c);
    const RunConfig back = config_from_json(json::parse(j.dump()));
    CHECK(to_json(back) == j);
    CHECK(back.seed == c.seed);
    CHECK(back.epsilon == c.epsilon);
  }
  CHECK(config_from_json(json::object()).seed == 0);
}

TEST_CASE("config rejects bad values") {
  CHECK_THROWS_AS(config_from_json({{"span_tol", 0.0}}), Error);
  CHECK_THROWS_AS(config_from_json({{"epsilon", -0.1}}), Error);
  CHECK_THROWS_AS(config_from_json({{"format", "xml"}}), Error);
  CHECK_THROWS_AS(config_from_json({{"unknown_key", 1}}), Error);
  CHECK_THROWS_AS(config_from_json({{"grid", "sixteen"}}), Error);
}

TEST_CASE("bands of the insulator along the diagonal") {
  const std::string dir = scratch("bands_insulator");
  const Run r = run({"bands", "--model", "insulator2", "--grid", "4", "--out", dir});
  REQUIRE(r.code == 0);
  std::string header;
  const auto rows = read_csv(dir + "/bands.csv", &header);
  CHECK(header == "t,k1,k2,k3,e1,e2,gap");
  REQUIRE(rows.size() == 51);
  double min_gap = 1e300;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double x = 2 * M_PI * rows[i][1];
    const double d3 = std::cos(x) + 8.0 - 2 * std::cos(x);
    const double gap = 2 * std::sqrt(2 * std::sin(x) * std::sin(x) + d3 * d3);
    CHECK(rows[i][6] == doctest::Approx(gap).epsilon(1e-12));
    if (i > 0) CHECK(rows[i][6] > rows[i - 1][6]);
    min_gap = std::min(min_gap, rows[i][6]);
  }
  CHECK(min_gap > 0);
  CHECK(read_csv(dir + "/bands_grid.csv").size() == 64);
}

TEST_CASE("weyl2 gap closes at the Weyl points on the k3 axis") {
  const std::string dir = scratch("bands_weyl2");
  write_json_file(dir + "/config.json", {{"path", {{0, 0, 0}, {0, 0, 1}}}, {"path_points", 200}, {"grid", 2}});
  REQUIRE(run({"bands", "--model", "weyl2", "--config", dir + "/config.json", "--out", dir}).code == 0);
  // cos(2 pi k0) + m - 2 = 0 with m = 2
  for (const auto& row : read_csv(dir + "/bands.csv")) {
    const double k3 = row[3];
    if (std::abs(k3 - 0.25) < 1e-12 || std::abs(k3 - 0.75) < 1e-12)
      CHECK(row[6] < 1e-12);
    else
      CHECK(row[6] > 1e-3);
  }
}

TEST_CASE("empty path writes the header only") {
  const std::string dir = scratch("bands_empty");
  write_json_file(dir + "/config.json", {{"path", json::array()}, {"grid", 2}});
  REQUIRE(run({"bands", "--config", dir + "/config.json", "--out", dir}).code == 0);
  CHECK(read_text_file(dir + "/bands.csv") == "t,k1,k2,k3,e1,e2,gap\n");
}

TEST_CASE("charges of weyl2 cancel") {
  const std::string dir = scratch("charges");
  const Run r = run({"charges", "--model", "weyl2", "--out", dir, "--format", "json"});
  CHECK(r.code == 0);
  const json j = read_json_file(dir + "/charges.json");
  CHECK(j.at("total") == 0);
  REQUIRE(j.at("points").size() == 2);
  CHECK(std::abs(j["points"][0]["charge"].get<int>()) == 1);
}

TEST_CASE("pipeline runs disentangle, wannierize, interpolate and verify") {
  const std::string dir = scratch("pipeline");
  for (const auto& cmd : {"disentangle", "wannierize", "interpolate", "verify"}) {
    const Run r = run({cmd, "--model", "weyl4", "--band", "2", "--grid", "8", "--out", dir});
    INFO(cmd, r.err);
    CHECK(r.code == 0);
  }
  for (const auto& f : {"field.json", "verify.csv", "frames.json", "hoppings.json", "interpolation.csv"})
    CHECK(fs::exists(dir + "/" + f));
  CHECK(read_csv(dir + "/interpolation.csv").size() == 100);
}

TEST_CASE("rank-one field of weyl2 and the trivial field of the insulator") {
  const std::string dir = scratch("rank_one");
  CHECK(run({"disentangle", "--model", "weyl2", "--band", "0", "--grid", "8", "--out", dir}).code == 0);
  CHECK(run({"disentangle", "--model", "insulator2", "--band", "1", "--grid", "8", "--out", dir}).code == 0);
}

TEST_CASE("identical config and seed give identical reports") {
  const std::string a = scratch("repro_a"), b = scratch("repro_b");
  for (const auto& dir : {a, b})
    for (const auto& cmd : {"disentangle", "wannierize", "interpolate"})
      REQUIRE(run({cmd, "--model", "weyl4", "--band", "2", "--grid", "8", "--seed", "3", "--out", dir}).code == 0);
  for (const auto& f : {"field.json", "verify.csv", "frames.json", "hoppings.json", "interpolation.csv"})
    CHECK(read_text_file(a + "/" + f) == read_text_file(b + "/" + f));
}

TEST_CASE("verify names a corrupted node") {
  const std::string dir = scratch("corrupt");
  REQUIRE(run({"disentangle", "--model", "weyl4", "--band", "2", "--grid", "8", "--out", dir}).code == 0);
  json doc = read_json_file(dir + "/field.json");
  doc["nodes"][37]["re"][1][1] = doc["nodes"][37]["re"][1][1].get<double>() + 0.25;
  write_json_file(dir + "/field.json", doc);
  const Run r = run({"verify", "--out", dir});
  CHECK(r.code == exit_code(ErrorKind::InconsistentField));
  CHECK(r.code != 0);
  CHECK(r.err.find("node 37") != std::string::npos);
}

TEST_CASE("a projector that drops P_N fails the span check at its node") {
  const std::string dir = scratch("span");
  REQUIRE(run({"disentangle", "--model", "weyl4", "--band", "2", "--grid", "8", "--out", dir}).code == 0);
  json doc = read_json_file(dir + "/field.json");
  // rank-3 coordinate projector, unrelated to the model
  CMat p = CMat::Zero(4, 4);
  p(0, 0) = p(1, 1) = p(3, 3) = 1;
  const json node = to_json(p);
  doc["nodes"][100]["re"] = node["re"];
  doc["nodes"][100]["im"] = node["im"];
  write_json_file(dir + "/field.json", doc);
  const Run r = run({"verify", "--out", dir});
  CHECK(r.code != 0);
  CHECK(r.err.find("node 100") != std::string::npos);
}

TEST_CASE("file errors map to the I/O exit code") {
  const std::string dir = scratch("io");
  const Run missing = run({"verify", "--input", dir + "/absent.json"});
  CHECK(missing.code == 5);
  CHECK(missing.err.find("absent.json") != std::string::npos);

  write_text_file(dir + "/model.json", "{\n  \"name\": \"x\",\n  \"dim\": 2,\n  oops\n}\n");
  const Run bad = run({"bands", "--model", dir + "/model.json", "--out", dir});
  CHECK(bad.code == 5);
  CHECK(bad.err.find("model.json:4:") != std::string::npos);
}

TEST_CASE("a Chern layer has no global frame") {
  const std::string dir = scratch("chern");
  write_json_file(dir + "/model.json", chern_layer_file());
  REQUIRE(run({"disentangle", "--model", dir + "/model.json", "--band", "0", "--grid", "8", "--out", dir}).code == 0);
  const Run r = run({"wannierize", "--out", dir});
  CHECK(r.code == 2);
  CHECK(r.err.find("Chern number") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(run({}).code != 0);
  CHECK(run({"bands", "--format", "xml"}).code != 0);
  CHECK(run({"bands", "--grid", "4,4"}).code == 5);
}

TEST_CASE("dumps round trip bit for bit") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const double x = nd(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(std::stod(format_double(x)) == x);
  }
  const Model m = make_builtin("weyl2");
  DisentangledField f;
  f.grid = KGrid({2, 3, 2});
  f.band_index = 0;
  f.rank = 1;
  for (std::size_t i = 0; i < f.grid.size(); ++i) {
    f.projectors.push_back(m.spectral_projector(f.grid.point(i) + KPoint(0.013, 0.007, 0.1), 1));
    f.provenance.push_back(static_cast<Provenance>(i % 3));
  }
  const DisentangledField g = field_from_json(json::parse(to_json(f, m).dump(1)));
  REQUIRE(g.projectors.size() == f.projectors.size());
  for (std::size_t i = 0; i < f.grid.size(); ++i) {
    CHECK(g.projectors[i] == f.projectors[i]);
    CHECK(g.provenance[i] == f.provenance[i]);
  }
  CHECK(g.grid.n == f.grid.n);
  CHECK_FALSE(g.region.has_value());

  json broken = to_json(f, m);
  broken["nodes"].erase(0);
  CHECK_THROWS_AS(field_from_json(broken), Error);
}
