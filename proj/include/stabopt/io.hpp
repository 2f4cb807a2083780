#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "stabopt/continuation.hpp"
#include "stabopt/model.hpp"
#include "stabopt/optimizer.hpp"
#include "stabopt/stability.hpp"

namespace stabopt {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);

// Element densities of an nx-by-ny grid. rho[j*nx + i], row j = 0 at the
// bottom of the mesh.
struct DensityGrid {
  int nx = 0;
  int ny = 0;
  double elem_size = 1.0;
  Vec rho;
};

// Layout:
//   nx,ny,elem_size
//   <nx>,<ny>,<h>
//   ny lines of nx comma-separated values, row j = 0 first
std::string format_density_csv(const DensityGrid& g);
DensityGrid parse_density_csv(const std::string& text, const std::string& origin = "<string>");
void write_density_csv(const std::string& path, const DensityGrid& g);
DensityGrid read_density_csv(const std::string& path);

// Binary graymap, pixel = 1 - rho, top mesh row first.
void write_pgm(const std::string& path, const DensityGrid& g);

DensityGrid density_grid(const Model& model, const Vec& rho);

// Iteration log, one line per record, flushed as it goes.
class TraceWriter {
 public:
  TraceWriter() = default;
  explicit TraceWriter(const std::string& path);
  bool is_open() const { return out_.is_open(); }
  void write(const IterationRecord& r);

  static std::string header();
  static std::string row(const IterationRecord& r);

 private:
  std::ofstream out_;
};

// One line of the path export. Critical points share the step index of the
// point that opens their segment and carry their kind in `critical`.
struct PathRow {
  int branch = 0;
  int step = 0;
  double gamma = 0;
  double displacement = 0;
  double lambda1 = 0;
  bool stable = true;
  std::string critical = "none";

  bool operator==(const PathRow&) const = default;
};

std::vector<PathRow> path_rows(const EquilibriumPath& path);
std::string format_path_csv(const std::vector<PathRow>& rows);
std::vector<PathRow> parse_path_csv(const std::string& text, const std::string& origin = "<string>");
void write_path_csv(const std::string& path, const std::vector<PathRow>& rows);
std::vector<PathRow> read_path_csv(const std::string& path);

// node, x, y, then ux_k, uy_k per mode.
void write_modes_csv(const std::string& path, const Model& model, const Eigen::MatrixXd& modes);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace stabopt
