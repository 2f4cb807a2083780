#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stabopt/config.hpp"
#include "stabopt/continuation.hpp"
#include "stabopt/model.hpp"

namespace stabopt {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,      // unreadable or invalid config / density input
  kExitAnalysis = 3,    // solver failure, degenerate analysis, aborted run
  kExitAcceptance = 4,  // a verification gate failed
};

// Command-line overrides; unset fields keep the config values.
struct CommandOptions {
  std::string config;
  std::string density;
  std::string out_dir;
  std::optional<unsigned> seed;
  std::optional<int> workers;
  std::optional<double> threshold;
  std::optional<double> fd_step;
  std::string fault_kernel;  // verify-sens negative control
};

int cmd_optimize(const CommandOptions& opts, std::ostream& log);
int cmd_analyze(const CommandOptions& opts, std::ostream& log);
int cmd_verify_sens(const CommandOptions& opts, std::ostream& log);
int cmd_post_buckle(const CommandOptions& opts, std::ostream& log);

// Elements with rho >= level.
std::vector<int> threshold_elements(const Vec& rho, double level);

// Edge-connectedness of an element subset.
bool elements_connected(const Model& model, const std::vector<int>& elements);

struct PostBuckleReport {
  Model mesh;
  double gamma_target = 0;
  EquilibriumPath primary;
  std::vector<EquilibriumPath> branches;
  std::vector<BranchPoint> bcc_crossings;
  bool reached_target = false;
  std::vector<std::string> notes;
};

// Threshold, check connectivity, trace the primary path of the solid mesh
// and follow the branches of its first bifurcation. Throws InputError for a
// disconnected or empty solid region.
PostBuckleReport post_buckle(const Model& parent, const Vec& rho, const RunConfig& cfg);

}  // namespace stabopt
