#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include "doctest.h"
#include "stabopt/commands.hpp"
#include "stabopt/config.hpp"
#include "stabopt/errors.hpp"
#include "stabopt/io.hpp"
#include "stabopt/problems.hpp"

using namespace stabopt;

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

std::string scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "stabopt_test_io";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::string error_of(const std::string& yaml) {
  try {
    parse_run_config(yaml, "cfg.yaml");
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

const char* kMinimal =
    "problem:\n"
    "  preset: double-clamped-beam\n"
    "  nx: 8\n"
    "  ny: 4\n"
    "optimizer:\n"
    "  volume_fraction: 0.4\n";

}  // namespace

TEST_CASE("doubles survive formatting bit for bit") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1, 1);
  std::vector<double> vals{0.0, -0.0, 1.0 / 3.0, 0.1, 1e-300, 4.9e-324, 1.7976931348623157e308,
                           std::nextafter(1.0, 2.0)};
  for (int i = 0; i < 2000; ++i) vals.push_back(U(rng) * std::pow(10.0, static_cast<int>(U(rng) * 30)));
  for (double v : vals) CHECK(same_bits(parse_double(format_double(v)), v));
  CHECK(std::isnan(parse_double(format_double(std::nan("")))));
  CHECK(parse_double(format_double(-HUGE_VAL)) == -HUGE_VAL);
  CHECK_THROWS_AS(parse_double("1.0x"), InputError);
  CHECK_THROWS_AS(parse_double(""), InputError);
}

TEST_CASE("density CSV round trip is exact") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0, 1);
  DensityGrid g{7, 5, 0.25, Vec(35)};
  for (int i = 0; i < 35; ++i) g.rho[i] = U(rng);
  g.rho[0] = 1e-9;
  g.rho[1] = 1.0;
  const std::string path = scratch("rho.csv");
  write_density_csv(path, g);
  DensityGrid r = read_density_csv(path);
  CHECK(r.nx == 7);
  CHECK(r.ny == 5);
  CHECK(same_bits(r.elem_size, 0.25));
  for (int i = 0; i < 35; ++i) CHECK(same_bits(r.rho[i], g.rho[i]));

  // self-describing layout: header, dims, then one line per mesh row
  const std::string text = format_density_csv(g);
  CHECK(text.rfind("nx,ny,elem_size\n7,5,0.25\n", 0) == 0);
  int lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 2 + 5);
}

TEST_CASE("density CSV errors carry line numbers") {
  CHECK_THROWS_WITH_AS(parse_density_csv("nx,ny\n", "d.csv"), "d.csv:1: expected header 'nx,ny,elem_size'",
                       InputError);
  CHECK_THROWS_WITH_AS(parse_density_csv("nx,ny,elem_size\n2,2,1\n0.1,0.2\n0.3\n", "d.csv"),
                       "d.csv:4: expected 2 values, got 1", InputError);
  CHECK_THROWS_AS(parse_density_csv("nx,ny,elem_size\n2,2,1\n0.1,0.2\n", "d.csv"), InputError);
  CHECK_THROWS_AS(parse_density_csv("nx,ny,elem_size\n2,1,1\n0.1,abc\n", "d.csv"), InputError);
  CHECK_THROWS_AS(parse_density_csv("nx,ny,elem_size\n2,1,1\n0.1,0.2\n0.3,0.4\n", "d.csv"), InputError);
}

TEST_CASE("graymap pixels are one minus density, top row first") {
  DensityGrid g{2, 2, 1.0, Vec(4)};
  g.rho << 1.0, 0.0, 0.5, 0.25;  // bottom row, then top row
  const std::string path = scratch("rho.pgm");
  write_pgm(path, g);
  const std::string bytes = read_text_file(path);
  const std::string header = "P5\n2 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 4);
  CHECK(bytes.substr(0, header.size()) == header);
  auto px = [&](int k) { return static_cast<int>(static_cast<unsigned char>(bytes[header.size() + k])); };
  CHECK(px(0) == 128);  // top-left, rho 0.5
  CHECK(px(1) == 191);
  CHECK(px(2) == 0);    // bottom-left, solid
  CHECK(px(3) == 255);
}

TEST_CASE("density grid of a thresholded submesh") {
  Model m = double_clamped_beam(4, 2, 1.0, 0.01, 2);
  Model sub = extract_submesh(m, {0, 1, 2, 3, 4, 5, 7});
  DensityGrid g = density_grid(sub, Vec::Ones(7));
  CHECK(g.nx == 4);
  CHECK(g.rho.sum() == 7.0);
  CHECK(g.rho[5] == 1.0);
  CHECK(g.rho[6] == 0.0);
}

TEST_CASE("trace rows") {
  IterationRecord r;
  r.iter = 3;
  r.f0 = 0.5;
  r.eigenvalues = {1e-3, 1e-3, 2e-3};
  r.multiplicities = {2, 1};
  r.inner = true;
  const std::string row = TraceWriter::row(r);
  CHECK(row.rfind("3,0.5,", 0) == 0);
  CHECK(row.find(",2;1,0.001;0.001;0.002") != std::string::npos);
  int commas = 0, header_commas = 0;
  for (char c : row) commas += c == ',';
  for (char c : TraceWriter::header()) header_commas += c == ',';
  CHECK(commas == header_commas);
}

TEST_CASE("path CSV round trip from a traced column") {
  Model m = pinned_column(2, 24, 0.5, 1e-3);
  PathOptions o;
  o.max_points = 12;
  EquilibriumPath p = trace_primary(m, Vec::Ones(m.num_elements()), Interpolation{}, o);
  std::vector<PathRow> rows = path_rows(p);
  // inject a critical row so the marker column is exercised
  PathRow c = rows[3];
  c.critical = "bifurcation";
  c.stable = false;
  c.lambda1 = -1.2345678901234567e-13;
  rows.insert(rows.begin() + 4, c);
  const std::string path = scratch("paths.csv");
  write_path_csv(path, rows);
  std::vector<PathRow> back = read_path_csv(path);
  REQUIRE(back.size() == rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i] == rows[i]);
    CHECK(same_bits(back[i].gamma, rows[i].gamma));
    CHECK(same_bits(back[i].displacement, rows[i].displacement));
    CHECK(same_bits(back[i].lambda1, rows[i].lambda1));
  }
  CHECK_THROWS_AS(parse_path_csv("branch,step\n"), InputError);
}

TEST_CASE("config defaults and overrides") {
  RunConfig c = parse_run_config(kMinimal, "cfg.yaml");
  CHECK(c.problem.preset == "double-clamped-beam");
  CHECK(c.optimizer.volume_fraction == 0.4);
  CHECK(c.optimizer.theta == 0.04);
  CHECK(c.optimizer.max_outer == 800);
  CHECK(c.optimizer.filter_radius == 1.5);
  CHECK(c.analysis.threshold == 0.5);
  CHECK(c.analysis.radius_factor == 0.1);
  CHECK(c.analysis.tau == 100.0);
  CHECK(c.output.snapshot_every == 0);
  CHECK(c.output.csv);
  CHECK(c.output.pgm);
  Model m = c.build_model();
  CHECK(m.num_elements() == 32);

  RunConfig d = parse_run_config(std::string(kMinimal) +
                                     "  lambda_hat: 2.0e-3\n"
                                     "  symmetry: half-x\n"
                                     "  continuation: false\n"
                                     "filter:\n"
                                     "  r_min: 2.5\n"
                                     "analysis:\n"
                                     "  seed: 9\n"
                                     "  threshold: 0.4\n"
                                     "output:\n"
                                     "  formats: [csv]\n",
                                 "cfg.yaml");
  CHECK(d.optimizer.lambda_hat == 2e-3);
  CHECK(d.optimizer.symmetry == Symmetry::HalfX);
  CHECK(!d.optimizer.schedule.enabled);
  CHECK(d.optimizer.filter_radius == 2.5);
  CHECK(d.analysis.seed == 9u);
  CHECK(d.analysis.threshold == 0.4);
  CHECK(d.output.csv);
  CHECK(!d.output.pgm);
}

TEST_CASE("strict config parsing") {
  // missing required key names it and the section line
  std::string e = error_of("problem:\n  preset: cantilever\n  nx: 4\n  ny: 2\noptimizer:\n  lambda_hat: 1\n");
  CHECK(e.find("cfg.yaml:6:") == 0);
  CHECK(e.find("volume_fraction") != std::string::npos);

  e = error_of(std::string(kMinimal) + "  volume_fractoin: 0.3\n");
  CHECK(e.rfind("cfg.yaml:7: unknown key 'volume_fractoin'", 0) == 0);

  e = error_of(std::string(kMinimal) + "outputs:\n  directory: x\n");
  CHECK(e.rfind("cfg.yaml:7: unknown key 'outputs'", 0) == 0);

  e = error_of("problem:\n  preset: double-clamped-beam\n  nx: four\n  ny: 4\noptimizer:\n  volume_fraction: 0.4\n");
  CHECK(e.rfind("cfg.yaml:3: bad value for 'problem.nx'", 0) == 0);

  e = error_of("problem:\n  preset: bridge\n  nx: 4\n  ny: 4\noptimizer:\n  volume_fraction: 0.4\n");
  CHECK(e.find("unknown preset 'bridge'") != std::string::npos);

  e = error_of(std::string(kMinimal) + "  theta: 0.3\n");
  CHECK(!e.empty());

  e = error_of("problem: [1, 2\n");
  CHECK(e.rfind("cfg.yaml:", 0) == 0);

  CHECK(!error_of("optimizer:\n  volume_fraction: 0.4\n").empty());
  CHECK(!error_of(std::string(kMinimal) + "analysis:\n  threshold: 1.5\n").empty());
  CHECK(!error_of(std::string(kMinimal) + "output:\n  snapshot_every: -1\n").empty());
}

TEST_CASE("grid preset with explicit boundary conditions") {
  RunConfig c = parse_run_config(
      "problem:\n"
      "  preset: grid\n"
      "  nx: 6\n"
      "  ny: 2\n"
      "  supports:\n"
      "    - {edge: left, component: both}\n"
      "    - {node: [6, 0], component: y}\n"
      "  loads:\n"
      "    - {edge: top, component: y, magnitude: -0.7}\n"
      "optimizer:\n"
      "  volume_fraction: 0.5\n",
      "cfg.yaml");
  Model m = c.build_model();
  CHECK(m.fixed.size() == 2 * 3 + 1);
  // the share on the clamped top-left vertex is reacted by the support
  CHECK(m.load.sum() == doctest::Approx(-0.6));
  CHECK(!error_of("problem:\n  preset: grid\n  nx: 2\n  ny: 2\noptimizer:\n  volume_fraction: 0.5\n").empty());
  std::string e = error_of(
      "problem:\n  preset: grid\n  nx: 2\n  ny: 2\n  supports:\n    - {edge: left, component: z}\n"
      "  loads:\n    - {node: [2, 2], component: y, magnitude: 1}\noptimizer:\n  volume_fraction: 0.5\n");
  CHECK(e.rfind("cfg.yaml:6:", 0) == 0);
}

TEST_CASE("thresholding and connectivity") {
  Model m = build_grid_mesh(3, 3, 1.0, {{0, 0, 0.0}, {0, 1, 0.0}}, {{15, 1, -1.0}});
  Vec rho = Vec::Zero(9);
  rho << 1, 0, 0,
         0, 1, 0,
         0, 0, 1;  // diagonal: corner contacts only
  std::vector<int> keep = threshold_elements(rho, 0.5);
  CHECK(keep == std::vector<int>{0, 4, 8});
  CHECK(!elements_connected(m, keep));
  CHECK(elements_connected(m, {0, 1, 4, 5, 8}));
  CHECK(threshold_elements(Vec::Constant(9, 0.45), 0.4).size() == 9);
  CHECK(threshold_elements(Vec::Constant(9, 0.45), 0.5).empty());

  RunConfig cfg = parse_run_config(kMinimal, "cfg.yaml");
  CHECK_THROWS_WITH_AS(post_buckle(m, rho, cfg), "solid region at threshold 0.5 is disconnected", InputError);
  CHECK_THROWS_AS(post_buckle(m, Vec::Zero(9), cfg), InputError);
}

TEST_CASE("post-buckling of a solid column") {
  RunConfig cfg = parse_run_config(
      "problem:\n"
      "  preset: pinned-column\n"
      "  nx: 4\n"
      "  ny: 48\n"
      "  element_size: 0.25\n"
      "  load: 6.2765e-3\n"
      "  target_load: 1.3\n"
      "optimizer:\n"
      "  volume_fraction: 0.5\n"
      "analysis:\n"
      "  branch_points: 6\n",
      "cfg.yaml");
  Model m = cfg.build_model();
  PostBuckleReport r = post_buckle(m, Vec::Ones(m.num_elements()), cfg);
  CHECK(r.reached_target);
  REQUIRE(!r.primary.criticals.empty());
  CHECK(r.primary.criticals[0].kind == CriticalKind::Bifurcation);
  CHECK(r.primary.criticals[0].gamma < 1.3);
  REQUIRE(r.branches.size() == 2);
  for (const auto& b : r.branches) {
    CHECK(b.complete);
    CHECK(b.points.size() == 6);
    CHECK(b.parent == 0);
  }
  // a stable design stays free of critical points up to a lower target
  cfg.problem.target_load = 0.5;
  PostBuckleReport low = post_buckle(m, Vec::Ones(m.num_elements()), cfg);
  CHECK(low.reached_target);
  CHECK(low.primary.criticals.empty());
  CHECK(low.branches.empty());
  for (const auto& p : low.primary.points) CHECK(p.stable);
}
