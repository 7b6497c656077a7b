#include "wdis/errors.hpp"

namespace wdis {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::ModelDefinition: return "model-definition";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Io: return "io";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::DegenerateCut: return "degenerate-cut";
    case ErrorKind::TransportBreakdown: return "transport-breakdown";
    case ErrorKind::MeshTooCoarse: return "mesh-too-coarse";
    case ErrorKind::RefineMesh: return "refine-mesh";
    case ErrorKind::RefineLoop: return "refine-loop";
    case ErrorKind::InconsistentField: return "inconsistent-field";
    case ErrorKind::TopologicalObstruction: return "topological-obstruction";
    case ErrorKind::ContractionFailure: return "contraction-failure";
    case ErrorKind::DeltaTooLarge: return "delta-too-large";
    case ErrorKind::AvoidanceFailure: return "avoidance-failure";
    case ErrorKind::Symmetry: return "symmetry";
    case ErrorKind::RegionConstruction: return "region-construction";
    case ErrorKind::RegionInvalid: return "region-invalid";
    case ErrorKind::Radius: return "radius";
    case ErrorKind::GlueFailure: return "glue-failure";
    case ErrorKind::InsufficientData: return "insufficient-data";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::TopologicalObstruction:
      return 2;
    case ErrorKind::RegionConstruction:
    case ErrorKind::RegionInvalid:
    case ErrorKind::Radius:
    case ErrorKind::MeshTooCoarse:
    case ErrorKind::RefineMesh:
    case ErrorKind::RefineLoop:
      return 3;
    case ErrorKind::Io:
    case ErrorKind::Parse:
      return 5;
    default:
      return 4;
  }
}

}  // namespace wdis
