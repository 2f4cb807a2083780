#include "stabopt/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "stabopt/errors.hpp"

namespace stabopt {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

int parse_int(const std::string& s, const std::string& where) {
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw InputError(where + ": expected an integer, got '" + s + "'");
  return v;
}

double parse_double_at(const std::string& s, const std::string& where) {
  try {
    return parse_double(s);
  } catch (const InputError&) {
    throw InputError(where + ": expected a number, got '" + s + "'");
  }
}

std::string join(const std::vector<int>& v, char sep) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

std::string join(const std::vector<double>& v, char sep) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += format_double(v[i]);
  }
  return s;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw InputError("cannot write '" + path + "'");
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  double v = 0;
  const char* b = s.data();
  if (!s.empty() && s[0] == '+') ++b;
  const auto r = std::from_chars(b, s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw InputError("not a number: '" + s + "'");
  return v;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out = open_out(path, std::ios::binary);
  out << text;
}

// ---- density grid ----

std::string format_density_csv(const DensityGrid& g) {
  if (g.nx <= 0 || g.ny <= 0 || g.rho.size() != static_cast<Eigen::Index>(g.nx) * g.ny)
    throw InputError("density grid size does not match nx * ny");
  std::string s = "nx,ny,elem_size\n";
  s += std::to_string(g.nx) + "," + std::to_string(g.ny) + "," + format_double(g.elem_size) + "\n";
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (i) s += ',';
      s += format_double(g.rho[j * g.nx + i]);
    }
    s += '\n';
  }
  return s;
}

DensityGrid parse_density_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto where = [&] { return origin + ":" + std::to_string(lineno); };
  auto next = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      line = strip(line);
      if (!line.empty()) return true;
    }
    return false;
  };
  if (!next() || line != "nx,ny,elem_size")
    throw InputError(where() + ": expected header 'nx,ny,elem_size'");
  if (!next()) throw InputError(where() + ": missing grid dimensions");
  auto dims = split(line, ',');
  if (dims.size() != 3) throw InputError(where() + ": expected 'nx,ny,elem_size'");
  DensityGrid g;
  g.nx = parse_int(strip(dims[0]), where());
  g.ny = parse_int(strip(dims[1]), where());
  g.elem_size = parse_double_at(strip(dims[2]), where());
  if (g.nx <= 0 || g.ny <= 0 || !(g.elem_size > 0))
    throw InputError(where() + ": grid dimensions must be positive");
  g.rho.resize(static_cast<Eigen::Index>(g.nx) * g.ny);
  for (int j = 0; j < g.ny; ++j) {
    if (!next()) throw InputError(where() + ": expected " + std::to_string(g.ny) + " density rows, got " +
                                  std::to_string(j));
    auto cells = split(line, ',');
    if (static_cast<int>(cells.size()) != g.nx)
      throw InputError(where() + ": expected " + std::to_string(g.nx) + " values, got " +
                       std::to_string(cells.size()));
    for (int i = 0; i < g.nx; ++i) g.rho[j * g.nx + i] = parse_double_at(strip(cells[i]), where());
  }
  if (next()) throw InputError(where() + ": unexpected data after the last density row");
  return g;
}

void write_density_csv(const std::string& path, const DensityGrid& g) {
  write_text_file(path, format_density_csv(g));
}

DensityGrid read_density_csv(const std::string& path) { return parse_density_csv(read_text_file(path), path); }

void write_pgm(const std::string& path, const DensityGrid& g) {
  if (g.rho.size() != static_cast<Eigen::Index>(g.nx) * g.ny)
    throw InputError("density grid size does not match nx * ny");
  std::ofstream out = open_out(path, std::ios::binary);
  out << "P5\n" << g.nx << " " << g.ny << "\n255\n";
  std::string row(g.nx, '\0');
  for (int j = g.ny - 1; j >= 0; --j) {
    for (int i = 0; i < g.nx; ++i) {
      const double v = std::clamp(1.0 - g.rho[j * g.nx + i], 0.0, 1.0);
      row[i] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v)));
    }
    out.write(row.data(), g.nx);
  }
}

DensityGrid density_grid(const Model& model, const Vec& rho) {
  if (model.grid.nx <= 0 || model.grid.ny <= 0) throw InputError("model has no grid layout");
  if (rho.size() != model.num_elements()) throw InputError("density length does not match the mesh");
  DensityGrid g{model.grid.nx, model.grid.ny, model.grid.elem_size, Vec::Zero(model.grid.nx * model.grid.ny)};
  if (model.cell.empty()) {
    if (model.num_elements() != g.nx * g.ny) throw InputError("model is not a full grid");
    g.rho = rho;
  } else {
    for (int e = 0; e < model.num_elements(); ++e) g.rho[model.cell[e]] = rho[e];
  }
  return g;
}

// ---- optimization trace ----

TraceWriter::TraceWriter(const std::string& path) : out_(open_out(path)) { out_ << header() << '\n'; }

void TraceWriter::write(const IterationRecord& r) {
  if (!out_.is_open()) return;
  out_ << row(r) << '\n';
  out_.flush();
}

std::string TraceWriter::header() {
  return "iter,f0,f1,change,inner,cutoff,cutoff_updates,p,p_lin,p_m,stability_rows,equality_rows,"
         "multiplicities,eigenvalues";
}

std::string TraceWriter::row(const IterationRecord& r) {
  std::string s = std::to_string(r.iter) + "," + format_double(r.f0) + "," + format_double(r.f1) + "," +
                  format_double(r.change) + "," + (r.inner ? "1" : "0") + "," + format_double(r.cutoff) + "," +
                  std::to_string(r.cutoff_updates) + "," + format_double(r.penalties.p) + "," +
                  format_double(r.penalties.p_lin) + "," + format_double(r.penalties.p_m) + "," +
                  std::to_string(r.stability_rows) + "," + std::to_string(r.equality_rows) + ",";
  s += join(r.multiplicities, ';') + "," + join(r.eigenvalues, ';');
  return s;
}

// ---- equilibrium paths ----

std::vector<PathRow> path_rows(const EquilibriumPath& path) {
  std::vector<PathRow> rows;
  const int d = path.monitor_dof;
  for (size_t i = 0; i < path.points.size(); ++i) {
    const PathPoint& p = path.points[i];
    PathRow r;
    r.branch = path.branch_id;
    r.step = static_cast<int>(i);
    r.gamma = p.gamma;
    r.displacement = d >= 0 && d < p.u.size() ? p.u[d] : 0.0;
    r.lambda1 = p.eigenvalues.empty() ? std::nan("") : p.eigenvalues.front();
    r.stable = p.stable;
    rows.push_back(r);
    for (const CriticalPoint& cp : path.criticals) {
      if (cp.segment != static_cast<int>(i)) continue;
      PathRow c;
      c.branch = path.branch_id;
      c.step = static_cast<int>(i);
      c.gamma = cp.gamma;
      c.displacement = d >= 0 && d < cp.u.size() ? cp.u[d] : 0.0;
      c.lambda1 = cp.lambda;
      c.stable = false;
      c.critical = to_string(cp.kind);
      rows.push_back(c);
    }
  }
  return rows;
}

std::string format_path_csv(const std::vector<PathRow>& rows) {
  std::string s = "branch,step,gamma,displacement,lambda1,stable,critical\n";
  for (const PathRow& r : rows) {
    s += std::to_string(r.branch) + "," + std::to_string(r.step) + "," + format_double(r.gamma) + "," +
         format_double(r.displacement) + "," + format_double(r.lambda1) + "," + (r.stable ? "1" : "0") + "," +
         r.critical + "\n";
  }
  return s;
}

std::vector<PathRow> parse_path_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::vector<PathRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (lineno == 1) {
      if (line != "branch,step,gamma,displacement,lambda1,stable,critical")
        throw InputError(where + ": unexpected path header");
      continue;
    }
    auto f = split(line, ',');
    if (f.size() != 7) throw InputError(where + ": expected 7 fields");
    PathRow r;
    r.branch = parse_int(f[0], where);
    r.step = parse_int(f[1], where);
    r.gamma = parse_double_at(f[2], where);
    r.displacement = parse_double_at(f[3], where);
    r.lambda1 = parse_double_at(f[4], where);
    if (f[5] != "0" && f[5] != "1") throw InputError(where + ": stable flag must be 0 or 1");
    r.stable = f[5] == "1";
    r.critical = f[6];
    rows.push_back(r);
  }
  return rows;
}

void write_path_csv(const std::string& path, const std::vector<PathRow>& rows) {
  write_text_file(path, format_path_csv(rows));
}

std::vector<PathRow> read_path_csv(const std::string& path) { return parse_path_csv(read_text_file(path), path); }

void write_modes_csv(const std::string& path, const Model& model, const Eigen::MatrixXd& modes) {
  if (modes.rows() != model.num_dofs()) throw InputError("mode length does not match the mesh");
  std::ofstream out = open_out(path);
  out << "node,x,y";
  for (Eigen::Index k = 0; k < modes.cols(); ++k) out << ",ux_" << k + 1 << ",uy_" << k + 1;
  out << '\n';
  for (int n = 0; n < model.num_nodes(); ++n) {
    out << n << ',' << format_double(model.coords[n][0]) << ',' << format_double(model.coords[n][1]);
    for (Eigen::Index k = 0; k < modes.cols(); ++k)
      out << ',' << format_double(modes(2 * n, k)) << ',' << format_double(modes(2 * n + 1, k));
    out << '\n';
  }
}

}  // namespace stabopt
