#pragma once

#include <stdexcept>
#include <string>

namespace wdis {

enum class ErrorKind {
  Precondition,
  ModelDefinition,
  Parse,
  Io,
  Numerical,
  DegenerateCut,
  TransportBreakdown,
  MeshTooCoarse,
  RefineMesh,
  RefineLoop,
  InconsistentField,
  TopologicalObstruction,
  ContractionFailure,
  DeltaTooLarge,
  AvoidanceFailure,
  Symmetry,
  RegionConstruction,
  RegionInvalid,
  Radius,
  GlueFailure,
  InsufficientData,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Carries the integer Chern number that blocks the construction.
class TopologicalObstruction : public Error {
 public:
  TopologicalObstruction(int chern, const std::string& what)
      : Error(ErrorKind::TopologicalObstruction, what), chern_(chern) {}
  int chern() const noexcept { return chern_; }

 private:
  int chern_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::Precondition, what);
}

// Process exit code for the command line tool.
int exit_code(ErrorKind kind);

}  // namespace wdis
