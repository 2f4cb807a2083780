#pragma once

#include <string>
#include <vector>

#include "stabopt/model.hpp"
#include "stabopt/optimizer.hpp"

namespace stabopt {

// Support or load placed either on one grid vertex (i, j) or spread over a
// mesh edge ("left", "right", "bottom", "top").
struct BoundarySpec {
  std::string edge;          // empty: use vertex
  int i = 0, j = 0;
  int component = 0;         // 0 x, 1 y, 2 both (supports only)
  double value = 0.0;        // prescribed displacement or total load
};

struct ProblemConfig {
  std::string preset;        // a builder name, or "grid" for explicit boundary conditions
  int nx = 0;
  int ny = 0;
  double element_size = 1.0;
  double load = 0.0;         // total reference load of the preset
  double target_load = 1.0;  // load factor of the analysis
  Material material;
  InterpolationParams interp;
  std::vector<BoundarySpec> supports;  // "grid" only
  std::vector<BoundarySpec> loads;     // "grid" only
};

struct AnalysisConfig {
  int num_clusters = 6;
  bool pseudo_mass = true;
  double arc_length = 0.0;    // <= 0: chosen from the linear response
  int max_points = 200;
  double path_limit = 1.0;    // trace until gamma reaches path_limit * target_load
  double tau = 100.0;         // branch-switch scale divisor
  double radius_factor = 0.1; // BCC radius relative to |u_cr|
  double threshold = 0.5;     // solid level for post-buckling meshes
  int branch_points = 40;     // points per traced secondary branch
  unsigned seed = 1;
  int workers = 1;
  double fd_step = 1e-5;
  double cdm_tolerance = 1e-3;
};

struct OutputConfig {
  std::string directory = "out";
  int snapshot_every = 0;  // 0: final field only
  bool csv = true;
  bool pgm = true;
};

struct RunConfig {
  std::string source;
  ProblemConfig problem;
  OptimizationConfig optimizer;  // filter radius lives here as well
  AnalysisConfig analysis;
  OutputConfig output;

  Model build_model() const;
};

// Strict parser: unknown keys and sections are errors; messages carry
// origin:line.
RunConfig parse_run_config(const std::string& text, const std::string& origin = "<string>");
RunConfig load_run_config(const std::string& path);

}  // namespace stabopt
