#include "stabopt/fem.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "stabopt/errors.hpp"

namespace stabopt {

ElementProperties interpolate_properties(double rho, const Material& mat, const Interpolation& ip) {
  ElementProperties pr;
  const double E = simp_modulus(rho, mat.E, ip.p, ip.eps);
  const double dE = simp_modulus_derivative(rho, mat.E, ip.p, ip.eps);
  const Moduli unit = moduli_from(1.0, mat.nu);
  pr.nl = {unit.kappa * E, unit.mu * E};
  pr.dnl = {unit.kappa * dE, unit.mu * dE};
  const Eigen::Matrix3d C1 = linear_elasticity_matrix(1.0, mat.nu);
  pr.C = C1 * simp_modulus(rho, mat.E, ip.p_lin, ip.eps);
  pr.dC = C1 * simp_modulus_derivative(rho, mat.E, ip.p_lin, ip.eps);
  pr.eta = energy_weight(rho, ip.beta, ip.c);
  pr.deta = energy_weight_derivative(rho, ip.beta, ip.c);
  return pr;
}

ElementGeometry element_geometry(const std::array<std::array<double, 2>, 4>& X, double thickness) {
  static const double sx[4] = {-1, 1, 1, -1};
  static const double sy[4] = {-1, -1, 1, 1};
  const double g = 1.0 / std::sqrt(3.0);
  const double gxi[4] = {-g, g, g, -g};
  const double geta[4] = {-g, -g, g, g};
  ElementGeometry geo;
  for (int q = 0; q < 4; ++q) {
    Eigen::Matrix<double, 4, 2> dNdxi;
    for (int a = 0; a < 4; ++a) {
      dNdxi(a, 0) = 0.25 * sx[a] * (1 + sy[a] * geta[q]);
      dNdxi(a, 1) = 0.25 * sy[a] * (1 + sx[a] * gxi[q]);
    }
    Eigen::Matrix2d J0 = Eigen::Matrix2d::Zero();
    for (int a = 0; a < 4; ++a)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) J0(i, j) += X[a][i] * dNdxi(a, j);
    const double det = J0.determinant();
    Eigen::Matrix<double, 4, 2> dNdX = dNdxi * J0.inverse();
    GaussPoint& gp = geo[q];
    gp.B.setZero();
    gp.BL.setZero();
    for (int a = 0; a < 4; ++a)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) gp.B(2 * i + j, 2 * a + i) = dNdX(a, j);
    for (int a = 0; a < 4; ++a) {
      gp.BL(0, 2 * a) = dNdX(a, 0);
      gp.BL(1, 2 * a + 1) = dNdX(a, 1);
      gp.BL(2, 2 * a) = dNdX(a, 1);
      gp.BL(2, 2 * a + 1) = dNdX(a, 0);
    }
    gp.weight = det * thickness;
  }
  return geo;
}

namespace {

Mat3 deformation(const Eigen::Vector4d& H, double eta) {
  Mat2 F;
  F << 1 + eta * H[0], eta * H[1], eta * H[2], 1 + eta * H[3];
  return embed_plane_strain(F);
}

Eigen::Vector4d flatten(const Mat3& P) { return {P(0, 0), P(0, 1), P(1, 0), P(1, 1)}; }

}  // namespace

ElementKernelOutput element_force_and_tangent(const ElementGeometry& geo, const Vec8& ue,
                                              const ElementProperties& props, bool with_tangent) {
  ElementKernelOutput out;
  out.f.setZero();
  out.k.setZero();
  const double eta = props.eta;
  const double lin = 1.0 - eta * eta;
  for (int q = 0; q < 4; ++q) {
    const GaussPoint& gp = geo[q];
    GaussState& gs = out.gauss[q];
    gs.H = gp.B * ue;
    gs.F = deformation(gs.H, eta);
    gs.P = pk1_stress(gs.F, props.nl);
    const Eigen::Vector3d sig = props.C * (gp.BL * ue);
    out.f += gp.weight * (eta * gp.B.transpose() * flatten(gs.P) + lin * gp.BL.transpose() * sig);
    if (with_tangent) {
      gs.A = restrict_tangent(tangent_moduli(gs.F, props.nl));
      out.k += gp.weight * (eta * eta * gp.B.transpose() * gs.A * gp.B +
                            lin * gp.BL.transpose() * props.C * gp.BL);
    }
  }
  if (with_tangent) out.k = 0.5 * (out.k + out.k.transpose()).eval();
  return out;
}

Vec8 element_density_derivative(const ElementGeometry& geo, const Vec8& ue,
                                const ElementProperties& props) {
  Vec8 d = Vec8::Zero();
  const double eta = props.eta, deta = props.deta;
  for (int q = 0; q < 4; ++q) {
    const GaussPoint& gp = geo[q];
    const Eigen::Vector4d H = gp.B * ue;
    const Mat3 F = deformation(H, eta);
    const Eigen::Vector4d P = flatten(pk1_stress(F, props.nl));
    const Eigen::Vector4d dP = flatten(pk1_stress(F, props.dnl));
    const Tangent2 A = restrict_tangent(tangent_moduli(F, props.nl));
    const Eigen::Vector3d strain = gp.BL * ue;
    Eigen::Vector4d t = deta * P + eta * (dP + A * (deta * H));
    d += gp.weight * (gp.B.transpose() * t +
                      gp.BL.transpose() * (-2.0 * eta * deta * (props.C * strain) +
                                           (1.0 - eta * eta) * (props.dC * strain)));
  }
  return d;
}

Assembler::Assembler(const Model& model) : model_(&model) {
  const int ne = model.num_elements();
  const int nd = model.num_dofs();
  geo_.resize(ne);
  for (int e = 0; e < ne; ++e) {
    std::array<std::array<double, 2>, 4> X;
    for (int a = 0; a < 4; ++a) X[a] = model.coords[model.elements[e][a]];
    geo_[e] = element_geometry(X, model.thickness);
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(64 * ne);
  for (int e = 0; e < ne; ++e) {
    auto dofs = model.element_dofs(e);
    for (int a : dofs)
      for (int b : dofs) trip.emplace_back(a, b, 0.0);
  }
  for (int d = 0; d < nd; ++d) trip.emplace_back(d, d, 0.0);
  pattern_.resize(nd, nd);
  pattern_.setFromTriplets(trip.begin(), trip.end());
  pattern_.makeCompressed();

  auto find_slot = [&](int row, int col) {
    const int* inner = pattern_.innerIndexPtr();
    const int begin = pattern_.outerIndexPtr()[col];
    const int end = pattern_.outerIndexPtr()[col + 1];
    const int* it = std::lower_bound(inner + begin, inner + end, row);
    return static_cast<int>(it - inner);
  };
  slot_.resize(ne);
  for (int e = 0; e < ne; ++e) {
    auto dofs = model.element_dofs(e);
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) {
        const bool elim = model.dof_fixed[dofs[a]] || model.dof_fixed[dofs[b]];
        slot_[e][8 * a + b] = elim ? -1 : find_slot(dofs[a], dofs[b]);
      }
  }
  for (const auto& f : model.fixed) fixed_diag_slot_.push_back(find_slot(f.dof, f.dof));
}

Vec8 Assembler::gather(const Vec& u, int e) const {
  Vec8 ue;
  auto dofs = model_->element_dofs(e);
  for (int a = 0; a < 8; ++a) ue[a] = u[dofs[a]];
  return ue;
}

void Assembler::zero_fixed(Vec& v) const {
  for (const auto& f : model_->fixed) v[f.dof] = 0.0;
}

void Assembler::assemble(const Vec& u, const Vec& rho, const Interpolation& ip, double gamma, Vec* R,
                         SpMat* K) const {
  const Model& m = *model_;
  const int ne = m.num_elements();
  if (u.size() != m.num_dofs() || rho.size() != ne)
    throw InputError("assemble: vector sizes do not match the model");
  if (R) *R = Vec::Zero(m.num_dofs());
  if (K) {
    *K = pattern_;
    std::fill(K->valuePtr(), K->valuePtr() + K->nonZeros(), 0.0);
  }
  for (int e = 0; e < ne; ++e) {
    const ElementProperties props = interpolate_properties(rho[e], m.material, ip);
    ElementKernelOutput out;
    try {
      out = element_force_and_tangent(geo_[e], gather(u, e), props, K != nullptr);
    } catch (const SingularConfigurationError&) {
      throw ElementInversionError(e, "element " + std::to_string(e) + " inverted (det F <= 0)");
    }
    auto dofs = m.element_dofs(e);
    if (R)
      for (int a = 0; a < 8; ++a) (*R)[dofs[a]] += out.f[a];
    if (K) {
      double* val = K->valuePtr();
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
          const int s = slot_[e][8 * a + b];
          if (s >= 0) val[s] += out.k(a, b);
        }
    }
  }
  if (R) {
    *R -= gamma * m.load;
    zero_fixed(*R);
  }
  if (K)
    for (int s : fixed_diag_slot_) K->valuePtr()[s] = 1.0;
}

Vec Assembler::internal_force(const Vec& u, const Vec& rho, const Interpolation& ip) const {
  const Model& m = *model_;
  Vec f = Vec::Zero(m.num_dofs());
  for (int e = 0; e < m.num_elements(); ++e) {
    const ElementProperties props = interpolate_properties(rho[e], m.material, ip);
    ElementKernelOutput out;
    try {
      out = element_force_and_tangent(geo_[e], gather(u, e), props, false);
    } catch (const SingularConfigurationError&) {
      throw ElementInversionError(e, "element " + std::to_string(e) + " inverted (det F <= 0)");
    }
    auto dofs = m.element_dofs(e);
    for (int a = 0; a < 8; ++a) f[dofs[a]] += out.f[a];
  }
  return f;
}

std::vector<Vec8> Assembler::density_derivatives(const Vec& u, const Vec& rho,
                                                 const Interpolation& ip) const {
  const Model& m = *model_;
  std::vector<Vec8> cols(m.num_elements());
  for (int e = 0; e < m.num_elements(); ++e) {
    const ElementProperties props = interpolate_properties(rho[e], m.material, ip);
    cols[e] = element_density_derivative(geo_[e], gather(u, e), props);
    auto dofs = m.element_dofs(e);
    for (int a = 0; a < 8; ++a)
      if (m.dof_fixed[dofs[a]]) cols[e][a] = 0.0;
  }
  return cols;
}

SpMat Assembler::density_derivative_matrix(const Vec& u, const Vec& rho,
                                           const Interpolation& ip) const {
  const Model& m = *model_;
  auto cols = density_derivatives(u, rho, ip);
  std::vector<Eigen::Triplet<double>> trip;
  for (int e = 0; e < m.num_elements(); ++e) {
    auto dofs = m.element_dofs(e);
    for (int a = 0; a < 8; ++a)
      if (cols[e][a] != 0.0) trip.emplace_back(dofs[a], e, cols[e][a]);
  }
  SpMat D(m.num_dofs(), m.num_elements());
  D.setFromTriplets(trip.begin(), trip.end());
  return D;
}

AssembledSystem assemble(const Model& model, const Vec& u, const Vec& rho, const Interpolation& ip,
                         double gamma) {
  Assembler a(model);
  AssembledSystem s;
  a.assemble(u, rho, ip, gamma, &s.residual, &s.tangent);
  return s;
}

SpMat residual_density_derivative(const Model& model, const Vec& u, const Vec& rho,
                                  const Interpolation& ip) {
  return Assembler(model).density_derivative_matrix(u, rho, ip);
}

void apply_prescribed(const Model& model, double gamma, Vec& u) {
  for (const auto& f : model.fixed) u[f.dof] = gamma * f.value;
}

bool newton_fixed_load(const Assembler& asmb, SymmetricSolver& solver, const Vec& rho,
                       const Interpolation& ip, double gamma, Vec& u, const SolverOptions& opts,
                       ConvergenceRecord* rec) {
  const Model& m = asmb.model();
  apply_prescribed(m, gamma, u);
  const double ref = std::abs(gamma) * m.load.norm();
  const double floor = 1e-13 * (ref > 0 ? ref : 1.0);
  Vec R;
  SpMat K;
  double e0 = 0;
  if (rec) rec->last_energy_ratios.clear();
  for (int it = 0; it <= opts.max_newton_iter; ++it) {
    try {
      asmb.assemble(u, rho, ip, gamma, &R, &K);
    } catch (const ElementInversionError&) {
      return false;
    }
    const double rn = R.norm();
    if (!std::isfinite(rn)) return false;
    if (rec) rec->residual_norm = rn;
    if (rn <= floor) {
      if (rec) rec->final_energy_ratio = 0.0;
      return true;
    }
    if (it == opts.max_newton_iter) return false;
    if (!solver.factorize(K)) return false;
    Vec du = solver.solve(Vec(-R));
    const double e = std::abs(du.dot(R));
    if (it == 0) e0 = std::max(e, 1e-300);
    const double ratio = e / e0;
    u += du;
    if (rec) {
      rec->iterations++;
      rec->last_energy_ratios.push_back(ratio);
      rec->final_energy_ratio = ratio;
    }
    if (!std::isfinite(ratio)) return false;
    if (it > 0 && ratio <= opts.tolerance) {
      for (int k = 0; k < opts.polish_iterations; ++k) {
        try {
          asmb.assemble(u, rho, ip, gamma, &R, &K);
        } catch (const ElementInversionError&) {
          return false;
        }
        if (R.norm() <= floor || !solver.factorize(K)) break;
        u += solver.solve(Vec(-R));
      }
      return true;
    }
    if (it >= 4 && ratio > 1e4) return false;
  }
  return false;
}

EquilibriumState solve_equilibrium(const Model& model, const Vec& rho, double gamma_target,
                                   const Interpolation& ip_in, const SolverOptions& opts,
                                   const Vec* u0) {
  Assembler asmb(model);
  SymmetricSolver solver;
  Interpolation ip = ip_in;
  EquilibriumState st;
  st.u = Vec::Zero(model.num_dofs());
  st.gamma = 0.0;
  if (gamma_target == 0.0) {
    st.c = ip.c;
    return st;
  }
  if (u0) {
    Vec u = *u0;
    ConvergenceRecord rec;
    if (newton_fixed_load(asmb, solver, rho, ip, gamma_target, u, opts, &rec)) {
      st.u = u;
      st.gamma = gamma_target;
      st.c = ip.c;
      rec.increments = 1;
      st.record = rec;
      return st;
    }
  }
  const double full = gamma_target;
  const double min_step = std::abs(full) * opts.min_increment_ratio;
  double inc = std::abs(full) * std::clamp(opts.initial_increment, opts.min_increment_ratio, 1.0);
  double restart_inc = inc;
  const double sgn = full > 0 ? 1.0 : -1.0;
  double done = 0.0;  // magnitude applied so far
  Vec u_conv = st.u;
  ConvergenceRecord rec;
  rec.initial_increment_used = 1.0;
  double smallest = 1.0;
  while (done < std::abs(full) * (1 - 1e-14)) {
    if (rec.increments >= opts.max_increments)
      throw AnalysisError("equilibrium: increment budget exhausted");
    const double step = std::min(inc, std::abs(full) - done);
    Vec u = u_conv;
    const int it_before = rec.iterations;
    const bool ok = newton_fixed_load(asmb, solver, rho, ip, sgn * (done + step), u, opts, &rec);
    if (ok) {
      u_conv = u;
      done += step;
      rec.increments++;
      smallest = std::min(smallest, step / std::abs(full));
      if (rec.iterations - it_before <= 6) inc = std::min(2 * inc, std::abs(full));
      restart_inc = inc;
      continue;
    }
    if (step > min_step * (1 + 1e-12)) {
      inc = std::max(step / 2, min_step);
      continue;
    }
    if (!opts.adapt_cutoff) {
      std::ostringstream os;
      os << "equilibrium failed at load factor " << sgn * done << " of " << full
         << " (cutoff " << ip.c << ", residual " << rec.residual_norm << ")";
      throw AnalysisError(os.str());
    }
    ip.c += model.interp.dc;
    rec.cutoff_updates++;
    if (ip.c > 1.0) {
      std::ostringstream os;
      os << "equilibrium failed: cutoff exceeded 1 at load factor " << sgn * done << " of " << full
         << " (last residual " << rec.residual_norm << ")";
      throw AnalysisError(os.str());
    }
    inc = restart_inc;
  }
  rec.initial_increment_used = smallest;
  st.u = u_conv;
  st.gamma = full;
  st.c = ip.c;
  st.record = rec;
  return st;
}

}  // namespace stabopt
