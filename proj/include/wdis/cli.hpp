#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wdis/model.hpp"

namespace wdis {

struct RunConfig {
  std::string model = "weyl2";  // builtin name or model file
  std::string input;            // dump read by wannierize, interpolate and verify
  std::string out = ".";
  std::string format = "csv";   // report format: csv or json
  std::uint64_t seed = 0;
  std::array<int, 3> grid{16, 16, 16};
  int band = 1;  // N
  bool assumption2 = false;
  bool trs = false;

  // k-path for the band structure; empty or single vertex gives no rows
  std::vector<KPoint> path{KPoint(0, 0, 0), KPoint(0.5, 0.5, 0.5)};
  int path_points = 50;  // samples per segment

  int crossing_grid = 24;
  double crossing_tol = -1;  // default: 0.05 times the bandwidth
  double charge_radius = 0.05;

  double margin = 0.42;
  double epsilon = 0.03;
  double transition = 0.1;
  double max_half = 0.45;
  double core_max = 0.6;

  double gap_floor = 0.1;
  double span_tol = 1e-7;
  double projector_tol = 1e-8;
  double charge_tol = 0.02;

  int probes = 100;
  double probe_radius = 0.02;
};

nlohmann::json to_json(const RunConfig& c);
// Missing keys keep their defaults; tolerances must be positive.
RunConfig config_from_json(const nlohmann::json& j);
void validate(const RunConfig& c);

// Builtin name, otherwise a path to a model file.
Model resolve_model(const std::string& spec);

// Runs the command line and returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wdis
