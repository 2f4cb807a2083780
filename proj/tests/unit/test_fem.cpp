#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "stabopt/errors.hpp"
#include "stabopt/fem.hpp"

using namespace stabopt;

namespace {

using Quad = std::array<std::array<double, 2>, 4>;

// Total-Lagrangian Q4 written from the second Piola-Kirchhoff stress.
Vec8 oracle_force(const Quad& X, const Vec8& ue, double kappa, double mu) {
  const double g = 1.0 / std::sqrt(3.0);
  const double pts[4][2] = {{-g, -g}, {g, -g}, {g, g}, {-g, g}};
  const double xa[4] = {-1, 1, 1, -1}, ya[4] = {-1, -1, 1, 1};
  Vec8 f = Vec8::Zero();
  for (auto& pt : pts) {
    double dN[4][2];
    for (int a = 0; a < 4; ++a) {
      dN[a][0] = xa[a] * (1 + ya[a] * pt[1]) / 4;
      dN[a][1] = ya[a] * (1 + xa[a] * pt[0]) / 4;
    }
    Eigen::Matrix2d Jm;
    Jm << 0, 0, 0, 0;
    for (int a = 0; a < 4; ++a) {
      Jm(0, 0) += dN[a][0] * X[a][0];
      Jm(0, 1) += dN[a][0] * X[a][1];
      Jm(1, 0) += dN[a][1] * X[a][0];
      Jm(1, 1) += dN[a][1] * X[a][1];
    }
    Eigen::Matrix2d Jinv = Jm.inverse();
    Eigen::Matrix<double, 4, 2> grad;  // dN_a/dX
    for (int a = 0; a < 4; ++a) {
      Eigen::Vector2d v = Jinv * Eigen::Vector2d(dN[a][0], dN[a][1]);
      grad.row(a) = v.transpose();
    }
    Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
    for (int a = 0; a < 4; ++a)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) F(i, j) += ue[2 * a + i] * grad(a, j);
    Eigen::Matrix3d C = F.transpose() * F;
    double J = std::sqrt(C.determinant());
    Eigen::Matrix3d Ci = C.inverse();
    Eigen::Matrix3d S = kappa * (J - 1) * J * Ci +
                        mu * std::pow(J, -2.0 / 3.0) * (Eigen::Matrix3d::Identity() - C.trace() / 3.0 * Ci);
    Eigen::Matrix3d P = F * S;
    const double w = Jm.determinant();
    for (int a = 0; a < 4; ++a)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) f[2 * a + i] += w * P(i, j) * grad(a, j);
  }
  return f;
}

Quad skewed_quad() { return {{{0.0, 0.0}, {1.2, 0.1}, {1.3, 1.1}, {-0.1, 0.9}}}; }

Vec8 random_vec8(std::mt19937& rng, double amp) {
  std::uniform_real_distribution<double> U(-amp, amp);
  Vec8 v;
  for (int i = 0; i < 8; ++i) v[i] = U(rng);
  return v;
}

Model clamped_grid(int nx, int ny) {
  std::vector<SupportSpec> sup;
  for (int j = 0; j <= ny; ++j) {
    sup.push_back({grid_node(nx, 0, j), 0, 0.0});
    sup.push_back({grid_node(nx, 0, j), 1, 0.0});
  }
  std::vector<LoadSpec> loads{{grid_node(nx, nx, ny / 2), 1, -1.0}, {grid_node(nx, nx, ny), 0, 0.3}};
  return build_grid_mesh(nx, ny, 1.0, sup, loads, {10.0, 0.3});
}

double max_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-300);
}

}  // namespace

TEST_CASE("zero displacement gives zero force and blended tangent") {
  Material mat{2.0, 0.3};
  Interpolation ip;
  ElementGeometry geo = element_geometry(skewed_quad(), 1.0);
  ElementProperties pr = interpolate_properties(0.09, mat, ip);
  ElementKernelOutput out = element_force_and_tangent(geo, Vec8::Zero(), pr);
  CHECK(out.f.cwiseAbs().maxCoeff() == 0.0);
  ElementProperties nl = pr, lin = pr;
  nl.eta = 1.0;
  lin.eta = 0.0;
  Mat8 knl = element_force_and_tangent(geo, Vec8::Zero(), nl).k;
  Mat8 klin = element_force_and_tangent(geo, Vec8::Zero(), lin).k;
  Mat8 expect = pr.eta * pr.eta * knl + (1 - pr.eta * pr.eta) * klin;
  CHECK(max_rel(out.k, expect) <= 1e-13);
}

TEST_CASE("solid element matches an independent total-Lagrangian element") {
  Material mat{3.0, 0.35};
  ElementProperties pr = interpolate_properties(1.0, mat, Interpolation{});
  CHECK(pr.eta == 1.0);
  std::mt19937 rng(1);
  for (int t = 0; t < 5; ++t) {
    Vec8 ue = random_vec8(rng, 0.15);
    ElementGeometry geo = element_geometry(skewed_quad(), 1.0);
    Vec8 f = element_force_and_tangent(geo, ue, pr).f;
    Vec8 fo = oracle_force(skewed_quad(), ue, pr.nl.kappa, pr.nl.mu);
    CHECK(max_rel(f, fo) <= 1e-8);
  }
}

TEST_CASE("element tangent matches finite differences of the force") {
  Material mat{2.0, 0.3};
  std::mt19937 rng(2);
  ElementGeometry geo = element_geometry(skewed_quad(), 1.0);
  for (double rho : {1.0, 0.6, 0.1, 0.0}) {
    ElementProperties pr = interpolate_properties(rho, mat, Interpolation{});
    Vec8 ue = random_vec8(rng, 0.1);
    ElementKernelOutput out = element_force_and_tangent(geo, ue, pr);
    CHECK(max_rel(out.k, out.k.transpose()) <= 1e-10);
    Mat8 fd;
    const double h = 1e-6;
    for (int j = 0; j < 8; ++j) {
      Vec8 up = ue, um = ue;
      up[j] += h;
      um[j] -= h;
      fd.col(j) = (element_force_and_tangent(geo, up, pr, false).f -
                   element_force_and_tangent(geo, um, pr, false).f) / (2 * h);
    }
    CHECK(max_rel(out.k, fd) <= 1e-6);
  }
}

TEST_CASE("element inversion reported with element id") {
  Model m = clamped_grid(2, 1);
  Assembler a(m);
  Vec u = Vec::Zero(m.num_dofs());
  u[2 * grid_node(2, 2, 1)] = -5.0;  // fold the last element
  CHECK_THROWS_AS(a.assemble(u, Vec::Ones(2), Interpolation{}, 1.0, nullptr, nullptr), Error);
  bool caught = false;
  try {
    Vec R;
    a.assemble(u, Vec::Ones(2), Interpolation{}, 1.0, &R, nullptr);
  } catch (const ElementInversionError& e) {
    caught = true;
    CHECK(e.element() == 1);
  }
  CHECK(caught);
}

TEST_CASE("global assembly: reference state, symmetry, finite differences") {
  Model m = clamped_grid(3, 3);
  Assembler a(m);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(0, 1), V(-0.05, 0.05);
  Vec rho(m.num_elements());
  for (int e = 0; e < rho.size(); ++e) rho[e] = U(rng);
  Interpolation ip;

  Vec R;
  SpMat K;
  a.assemble(Vec::Zero(m.num_dofs()), rho, ip, 1.0, &R, &K);
  Vec expect = -m.load;
  CHECK((R - expect).cwiseAbs().maxCoeff() == 0.0);

  Vec u(m.num_dofs());
  for (int i = 0; i < u.size(); ++i) u[i] = V(rng);
  apply_prescribed(m, 1.0, u);
  a.assemble(u, rho, ip, 1.0, &R, &K);
  Eigen::MatrixXd Kd(K);
  CHECK(max_rel(Kd, Kd.transpose()) <= 1e-10);

  const double h = 1e-6;
  Eigen::MatrixXd fd = Eigen::MatrixXd::Zero(m.num_dofs(), m.num_dofs());
  for (int j = 0; j < m.num_dofs(); ++j) {
    if (m.dof_fixed[j]) continue;
    Vec up = u, um = u;
    up[j] += h;
    um[j] -= h;
    fd.col(j) = (a.internal_force(up, rho, ip) - a.internal_force(um, rho, ip)) / (2 * h);
  }
  for (int i = 0; i < m.num_dofs(); ++i)
    for (int j = 0; j < m.num_dofs(); ++j)
      if (m.dof_fixed[i] || m.dof_fixed[j]) {
        fd(i, j) = (i == j) ? 1.0 : 0.0;
      }
  CHECK(max_rel(Kd, fd) <= 1e-6);
}

TEST_CASE("assembly independent of element order") {
  Model m = clamped_grid(4, 3);
  Model p = m;
  std::vector<int> perm(m.num_elements());
  for (int e = 0; e < m.num_elements(); ++e) perm[e] = m.num_elements() - 1 - e;
  for (int e = 0; e < m.num_elements(); ++e) p.elements[e] = m.elements[perm[e]];
  p.cell.clear();
  p.finalize();
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> U(0, 1), V(-0.05, 0.05);
  Vec rho(m.num_elements()), rho_p(m.num_elements());
  for (int e = 0; e < rho.size(); ++e) rho[e] = U(rng);
  for (int e = 0; e < rho.size(); ++e) rho_p[e] = rho[perm[e]];
  Vec u(m.num_dofs());
  for (int i = 0; i < u.size(); ++i) u[i] = V(rng);
  apply_prescribed(m, 1.0, u);
  Vec R1, R2;
  SpMat K1, K2;
  Assembler(m).assemble(u, rho, Interpolation{}, 0.7, &R1, &K1);
  Assembler(p).assemble(u, rho_p, Interpolation{}, 0.7, &R2, &K2);
  CHECK(max_rel(R1, R2) <= 1e-13);
  CHECK(max_rel(Eigen::MatrixXd(K1), Eigen::MatrixXd(K2)) <= 1e-13);
}

TEST_CASE("density derivative of the residual") {
  Model m = clamped_grid(2, 2);
  Assembler a(m);
  std::mt19937 rng(6);
  std::uniform_real_distribution<double> U(0.05, 0.95), V(-0.05, 0.05);
  Vec rho(m.num_elements());
  for (int e = 0; e < rho.size(); ++e) rho[e] = U(rng);
  rho[1] = 0.1;  // near the energy-weight cutoff
  Interpolation ip;
  ip.p = 2.3;
  SpMat D0 = a.density_derivative_matrix(Vec::Zero(m.num_dofs()), rho, ip);
  CHECK(D0.norm() == 0.0);

  Vec u(m.num_dofs());
  for (int i = 0; i < u.size(); ++i) u[i] = V(rng);
  apply_prescribed(m, 1.0, u);
  SpMat D = a.density_derivative_matrix(u, rho, ip);
  Eigen::MatrixXd Dd(D);
  const double h = 1e-6;
  Eigen::MatrixXd fd(m.num_dofs(), m.num_elements());
  for (int e = 0; e < m.num_elements(); ++e) {
    Vec rp = rho, rm = rho;
    rp[e] += h;
    rm[e] -= h;
    Vec Rp, Rm;
    a.assemble(u, rp, ip, 1.0, &Rp, nullptr);
    a.assemble(u, rm, ip, 1.0, &Rm, nullptr);
    fd.col(e) = (Rp - Rm) / (2 * h);
  }
  CHECK(max_rel(Dd, fd) <= 1e-5);
  for (int e = 0; e < m.num_elements(); ++e) {
    auto dofs = m.element_dofs(e);
    for (int i = 0; i < m.num_dofs(); ++i) {
      bool in = std::find(dofs.begin(), dofs.end(), i) != dofs.end();
      if (!in) CHECK(Dd(i, e) == 0.0);
    }
  }
}

TEST_CASE("equilibrium: zero load and linear regime") {
  Model m = clamped_grid(6, 2);
  Vec rho = Vec::Ones(m.num_elements());
  EquilibriumState s0 = solve_equilibrium(m, rho, 0.0, Interpolation{});
  CHECK(s0.u.norm() == 0.0);
  CHECK(s0.record.iterations == 0);

  Assembler a(m);
  SpMat K;
  a.assemble(Vec::Zero(m.num_dofs()), rho, Interpolation{}, 0.0, nullptr, &K);
  SymmetricSolver ls;
  REQUIRE(ls.factorize(K));
  Vec ulin = ls.solve(m.load);
  const double scale = 1e-5 * 6.0 / ulin.cwiseAbs().maxCoeff();
  EquilibriumState s = solve_equilibrium(m, rho, scale, Interpolation{});
  CHECK(max_rel(s.u, scale * ulin) <= 1e-3);
  CHECK(s.record.final_energy_ratio <= 1e-12);
}

TEST_CASE("equilibrium: large load converges quadratically") {
  Model m = clamped_grid(8, 2);
  Vec rho = Vec::Ones(m.num_elements());
  EquilibriumState s = solve_equilibrium(m, rho, 0.4, Interpolation{});
  CHECK(s.record.final_energy_ratio <= 1e-12);
  Vec R;
  Assembler(m).assemble(s.u, rho, Interpolation{}, 0.4, &R, nullptr);
  CHECK(R.norm() / m.load.norm() <= 1e-8);
  const auto& r = s.record.last_energy_ratios;
  REQUIRE(r.size() >= 3);
  bool checked = false;
  for (size_t k = 1; k < r.size(); ++k)
    if (r[k - 1] < 1e-4) {
      CHECK(r[k] <= 1e3 * r[k - 1] * r[k - 1] + 1e-13);
      checked = true;
    }
  CHECK(checked);
  // u is geometrically nonlinear: differs noticeably from the linear response
  Assembler a(m);
  SpMat K;
  a.assemble(Vec::Zero(m.num_dofs()), rho, Interpolation{}, 0.0, nullptr, &K);
  SymmetricSolver ls;
  REQUIRE(ls.factorize(K));
  CHECK(max_rel(s.u, 0.4 * ls.solve(m.load)) > 1e-3);
}

TEST_CASE("equilibrium: saturated energy weight on solid designs") {
  Model m = clamped_grid(6, 2);
  Vec rho = Vec::Ones(m.num_elements());
  Interpolation ip;
  EquilibriumState a = solve_equilibrium(m, rho, 0.3, ip);
  Interpolation forced = ip;
  forced.c = -10.0;  // eta == 1 everywhere
  EquilibriumState b = solve_equilibrium(m, rho, 0.3, forced);
  CHECK(max_rel(a.u, b.u) <= 1e-6);
}

TEST_CASE("equilibrium warm start and prescribed displacements") {
  Model m = clamped_grid(4, 2);
  Vec rho = Vec::Constant(m.num_elements(), 0.7);
  EquilibriumState s = solve_equilibrium(m, rho, 0.2, Interpolation{});
  EquilibriumState w = solve_equilibrium(m, rho, 0.2, Interpolation{}, {}, &s.u);
  CHECK(w.record.increments == 1);
  CHECK(max_rel(w.u, s.u) <= 1e-10);

  Model pm = build_grid_mesh(3, 1, 1.0,
                             {{0, 0, 0.0}, {0, 1, 0.0}, {4, 0, 0.0}, {4, 1, 0.0},
                              {3, 0, -0.02}, {7, 0, -0.02}},
                             {});
  EquilibriumState ps = solve_equilibrium(pm, Vec::Ones(3), 1.0, Interpolation{});
  CHECK(ps.u[6] == doctest::Approx(-0.02));
  CHECK(ps.u[14] == doctest::Approx(-0.02));
}
