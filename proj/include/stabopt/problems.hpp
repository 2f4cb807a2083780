#pragma once

#include <string>
#include <vector>

#include "stabopt/model.hpp"

namespace stabopt {

// Loads are total magnitudes spread evenly over the listed nodes; every
// builder returns a finalized grid model.

// Left edge clamped; compressive load -x over the right edge plus a small
// downward load at its midpoint.
Model cantilever_beam(int nx, int ny, double h, double axial_load, double transverse_load,
                      const Material& mat = {}, const InterpolationParams& ip = {});

// Both short edges clamped; downward load over the `load_width` central
// top-edge nodes (odd nx gives an even count centred on the span).
Model double_clamped_beam(int nx, int ny, double h, double load, int load_width = 2,
                          const Material& mat = {}, const InterpolationParams& ip = {});

// Square n x n block (n even). Each edge midpoint is supported tangentially
// and pushed inward with the same magnitude, so the problem has the full
// symmetry group of the square.
Model symmetric_block(int n, double h, double load, const Material& mat = {},
                      const InterpolationParams& ip = {});

// Column `width` elements wide and `height` tall. Bottom-centre node pinned,
// top-centre node on a vertical roller, compressive load over the top edge.
Model pinned_column(int width, int height, double h, double load, const Material& mat = {},
                    const InterpolationParams& ip = {});

// Shallow clamped arch of `span` and `thickness` with a sinusoidal
// centre-line of height `rise`; downward point load at the crown (nx even).
Model shallow_arch(int nx, int ny, double span, double thickness, double rise, double load,
                   const Material& mat = {}, const InterpolationParams& ip = {});

// A clamped column inside a larger grid. Elements of the column are listed
// in `column`; `conforming` is the column alone with identical supports and
// loads.
struct EmbeddedColumn {
  Model fictitious;
  Model conforming;
  std::vector<int> column;
  std::vector<int> void_only_dofs;  // dofs whose node touches no column element
};

EmbeddedColumn embedded_column(int domain_nx, int column_width, int column_height, int void_top,
                               double h, double load, const Material& mat = {},
                               const InterpolationParams& ip = {});

// Column density bands used to emulate a blurred design: the given values
// fill successive element layers outwards from the column, rest `background`.
std::vector<double> banded_density(const EmbeddedColumn& col, const std::vector<double>& bands,
                                   double background);

std::vector<std::string> problem_names();
// Builds a named preset with default sizes scaled by `nx`, `ny`, `h` and
// `load`; throws InputError for unknown names.
Model build_problem(const std::string& name, int nx, int ny, double h, double load,
                    const Material& mat, const InterpolationParams& ip);

}  // namespace stabopt
