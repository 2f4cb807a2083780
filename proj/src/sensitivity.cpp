#include "stabopt/sensitivity.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "stabopt/errors.hpp"

namespace stabopt {

int ClusterSensitivity::index(int s, int k, int n) {
  if (s > k) std::swap(s, k);
  // rows s = 0..n-1 hold n - s entries
  return s * n - s * (s - 1) / 2 + (k - s);
}

DirectionalIncrements directional_increments(const ClusterSensitivity& c, const Vec& drho) {
  DirectionalIncrements out;
  const int n = c.size;
  out.T.resize(n, n);
  for (int s = 0; s < n; ++s)
    for (int k = s; k < n; ++k) {
      const double t = c.zsk(s, k).dot(drho);
      out.T(s, k) = t;
      out.T(k, s) = t;
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.T, Eigen::EigenvaluesOnly);
  out.increments = es.eigenvalues();
  return out;
}

SensitivityContext::SensitivityContext(const Model& model, const Vec& rho, const Interpolation& ip,
                                       const Vec& u, double gamma, const PseudoMassParams& mass,
                                       bool use_pseudo_mass)
    : model_(model),
      rho_(rho),
      ip_(ip),
      u_(u),
      gamma_(gamma),
      mass_(mass),
      use_mass_(use_pseudo_mass),
      asmb_(model) {
  asmb_.assemble(u_, rho_, ip_, gamma_, nullptr, &K_);
  if (!solver_.factorize(K_))
    throw AnalysisError("sensitivity: tangent stiffness is singular at the analysed state");
  dR_ = asmb_.density_derivatives(u_, rho_, ip_);
}

void SensitivityContext::scale(const char* kernel, Vec& v) const {
  if (fault_.kernel == kernel) v *= fault_.factor;
}

double SensitivityContext::compliance() const { return gamma_ * model_.load.dot(u_); }

Vec SensitivityContext::compliance_gradient() const {
  Vec g = Vec::Zero(model_.num_elements());
  if (gamma_ == 0.0) return g;
  Vec rhs = -gamma_ * model_.load;
  asmb_.zero_fixed(rhs);
  Vec chi = solver_.solve(rhs);
  asmb_.zero_fixed(chi);
  for (int e = 0; e < model_.num_elements(); ++e) g[e] = asmb_.gather(chi, e).dot(dR_[e]);
  scale("compliance", g);
  return g;
}

PairTerms SensitivityContext::pair_terms(const Vec& phi_s, const Vec& phi_k, double lambda) const {
  const int ne = model_.num_elements();
  PairTerms t;
  t.lambda = lambda;
  t.stiffness = Vec::Zero(ne);
  t.mass = Vec::Zero(ne);
  t.adjoint = Vec::Zero(ne);
  Vec dQdu = Vec::Zero(model_.num_dofs());

  for (int e = 0; e < ne; ++e) {
    const ElementProperties pr = interpolate_properties(rho_[e], model_.material, ip_);
    const ElementGeometry& geo = asmb_.geometry(e);
    const Vec8 ue = asmb_.gather(u_, e);
    const Vec8 a = asmb_.gather(phi_s, e);
    const Vec8 b = asmb_.gather(phi_k, e);
    const double eta = pr.eta, deta = pr.deta;
    double stiff = 0;
    Vec8 du = Vec8::Zero();
    for (int q = 0; q < 4; ++q) {
      const GaussPoint& gp = geo[q];
      const Eigen::Vector4d H = gp.B * ue;
      Mat2 F2;
      F2 << 1 + eta * H[0], eta * H[1], eta * H[2], 1 + eta * H[3];
      const Mat3 F = embed_plane_strain(F2);
      const Tangent2 A = restrict_tangent(tangent_moduli(F, pr.nl));
      const Tangent2 Arho = restrict_tangent(tangent_moduli(F, pr.dnl));
      const TangentDerivative2 dA = restrict_tangent_derivative(tangent_moduli_derivative(F, pr.nl));
      const Eigen::Vector4d ga = gp.B * a, gb = gp.B * b;
      const Eigen::Vector3d la = gp.BL * a, lb = gp.BL * b;
      Eigen::Matrix<double, 16, 1> outer;
      for (int I = 0; I < 4; ++I)
        for (int J = 0; J < 4; ++J) outer[4 * I + J] = ga[I] * gb[J];
      // dA/dF contracted with both mode gradients
      const Eigen::Vector4d dAgg = dA.transpose() * outer;
      const double gAg = ga.dot(A * gb);
      stiff += gp.weight * (2 * eta * deta * gAg + eta * eta * (ga.dot(Arho * gb) + dAgg.dot(deta * H)) -
                            2 * eta * deta * la.dot(pr.C * lb) + (1 - eta * eta) * la.dot(pr.dC * lb));
      du += gp.weight * eta * eta * eta * (gp.B.transpose() * dAgg);
    }
    t.stiffness[e] = stiff;
    auto dofs = model_.element_dofs(e);
    for (int i = 0; i < 8; ++i) dQdu[dofs[i]] += du[i];
  }

  if (use_mass_) {
    const double q = mass_.params().q;
    Vec w = nodal_pseudo_density(rho_, model_, q);
    Vec coef = Vec::Zero(model_.num_nodes());
    for (int i = 0; i < model_.num_nodes(); ++i) {
      if (w[i] <= 0) continue;
      double dot = 0;
      for (int c = 0; c < 2; ++c)
        if (!model_.dof_fixed[2 * i + c]) dot += phi_s[2 * i + c] * phi_k[2 * i + c];
      coef[i] = dot * mass_.derivative(w[i]);
    }
    for (int e = 0; e < ne; ++e) {
      double s = 0;
      for (int n : model_.elements[e])
        if (coef[n] != 0.0) s += coef[n] * std::pow(rho_[e] / w[n], q - 1);
      t.mass[e] = s;
    }
  }

  asmb_.zero_fixed(dQdu);
  t.adjoint_vector = solver_.solve(Vec(-dQdu));
  asmb_.zero_fixed(t.adjoint_vector);
  for (int e = 0; e < ne; ++e) t.adjoint[e] = asmb_.gather(t.adjoint_vector, e).dot(dR_[e]);

  scale("stiffness", t.stiffness);
  scale("mass", t.mass);
  scale("adjoint", t.adjoint);
  return t;
}

Vec SensitivityContext::simple_eigenvalue_gradient(const Vec& phi, double lambda) const {
  return pair_terms(phi, phi, lambda).total();
}

ClusterSensitivity SensitivityContext::cluster_direction_vectors(const EigenSolution& eig,
                                                                 int cluster) const {
  if (cluster < 0 || cluster >= static_cast<int>(eig.clusters.size()))
    throw InputError("cluster index out of range");
  const Cluster& cl = eig.clusters[cluster];
  ClusterSensitivity cs;
  cs.begin = cl.begin;
  cs.size = cl.size;
  cs.lambda = eig.values.segment(cl.begin, cl.size).mean();
  const int n = cl.size;
  cs.z.resize(n * (n + 1) / 2);
  cs.adjoint.resize(cs.z.size());
  for (int s = 0; s < n; ++s)
    for (int k = s; k < n; ++k) {
      PairTerms t = pair_terms(eig.vectors.col(cl.begin + s), eig.vectors.col(cl.begin + k), cs.lambda);
      const int idx = ClusterSensitivity::index(s, k, n);
      cs.z[idx] = t.total();
      cs.adjoint[idx] = std::move(t.adjoint_vector);
    }
  return cs;
}

SensitivityBundle compute_sensitivities(const SensitivityContext& ctx, const EigenSolution& eig) {
  SensitivityBundle b;
  b.compliance = ctx.compliance();
  b.compliance_gradient = ctx.compliance_gradient();
  for (int c = 0; c < static_cast<int>(eig.clusters.size()); ++c)
    b.clusters.push_back(ctx.cluster_direction_vectors(eig, c));
  return b;
}

namespace {

struct Sample {
  bool ok = false;
  double f0 = 0;
  Vec lambda;
};

Sample perturbed_sample(const Model& model, const Assembler& asmb, const Vec& rho, const Vec& u_base,
                        double gamma, const Interpolation& ip, const AnalysisOptions& ao,
                        int window) {
  Sample s;
  SymmetricSolver solver;
  SolverOptions so = ao.solver;
  so.adapt_cutoff = false;
  Vec u = u_base;
  if (!newton_fixed_load(asmb, solver, rho, ip, gamma, u, so, nullptr)) {
    try {
      u = solve_equilibrium(model, rho, gamma, ip, so).u;
    } catch (const Error&) {
      return s;
    }
  }
  try {
    AnalysisOptions a = ao;
    a.num_clusters = window;
    EigenSolution es = eigen_at_state(model, rho, ip, u, gamma, a);
    if (es.count() < window) return s;
    s.lambda = es.values.head(window);
  } catch (const Error&) {
    return s;
  }
  s.f0 = gamma * model.load.dot(u);
  s.ok = true;
  return s;
}

void finish_quantity(CdmQuantity& q, const std::vector<int>& elems, const std::vector<char>& good,
                     double floor_rel) {
  double scale = 0;
  for (size_t i = 0; i < elems.size(); ++i)
    if (good[i]) scale = std::max(scale, std::abs(q.cdm[i]));
  const double floor = floor_rel * scale;
  q.rel_error = Vec::Zero(static_cast<int>(elems.size()));
  for (size_t i = 0; i < elems.size(); ++i) {
    if (!good[i]) continue;
    const double den = std::max(std::abs(q.cdm[i]), floor);
    const double err = den > 0 ? std::abs(q.adjoint[i] - q.cdm[i]) / den : std::abs(q.adjoint[i]);
    q.rel_error[i] = err;
    if (err > q.max_rel) {
      q.max_rel = err;
      q.worst_element = elems[i];
    }
  }
}

}  // namespace

CdmReport verify_sensitivities_cdm(const Model& model, const Vec& rho, double gamma,
                                   const Interpolation& ip_in, const CdmOptions& opts) {
  CdmReport rep;
  rep.h = opts.h;
  const int window = opts.analysis.num_clusters;
  // converged states carry ~1e-12 relative error; polish so differences resolve
  AnalysisOptions ao = opts.analysis;
  ao.solver.polish_iterations = std::max(ao.solver.polish_iterations, 2);
  StabilityAnalysis base = analyze_stability(model, rho, gamma, ip_in, ao);
  const Interpolation ip = base.ip;
  if (base.eig.count() < window || !base.eig.all_simple()) rep.all_simple = false;
  const int nq = std::min(window, base.eig.count());

  SensitivityContext ctx(model, rho, ip, base.state.u, base.state.gamma, ao.mass,
                         ao.use_pseudo_mass);
  ctx.set_fault(opts.fault);
  std::vector<Vec> adj;
  adj.push_back(ctx.compliance_gradient());
  for (int q = 0; q < nq; ++q)
    adj.push_back(ctx.simple_eigenvalue_gradient(base.eig.vectors.col(q), base.eig.values[q]));

  rep.elements = opts.elements;
  if (rep.elements.empty())
    for (int e = 0; e < model.num_elements(); ++e) rep.elements.push_back(e);
  const int ns = static_cast<int>(rep.elements.size());
  std::vector<Sample> plus(ns), minus(ns);

  Assembler asmb(model);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next++; i < ns; i = next++) {
      const int e = rep.elements[i];
      Vec r = rho;
      r[e] = rho[e] + opts.h;
      plus[i] = perturbed_sample(model, asmb, r, base.state.u, base.state.gamma, ip, ao, nq);
      r[e] = rho[e] - opts.h;
      minus[i] = perturbed_sample(model, asmb, r, base.state.u, base.state.gamma, ip, ao, nq);
    }
  };
  const int nw = std::max(1, opts.workers);
  if (nw == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<char> good(ns, 0);
  for (int i = 0; i < ns; ++i) {
    good[i] = plus[i].ok && minus[i].ok;
    if (!good[i]) rep.excluded.push_back(rep.elements[i]);
  }
  for (int k = 0; k <= nq; ++k) {
    CdmQuantity q;
    q.name = k == 0 ? "compliance" : "eigenvalue " + std::to_string(k);
    q.adjoint.resize(ns);
    q.cdm = Vec::Zero(ns);
    for (int i = 0; i < ns; ++i) {
      q.adjoint[i] = adj[k][rep.elements[i]];
      if (!good[i]) continue;
      const double fp = k == 0 ? plus[i].f0 : plus[i].lambda[k - 1];
      const double fm = k == 0 ? minus[i].f0 : minus[i].lambda[k - 1];
      q.cdm[i] = (fp - fm) / (2 * opts.h);
    }
    finish_quantity(q, rep.elements, good, opts.denominator_floor);
    if (q.max_rel >= rep.max_rel) {
      rep.max_rel = q.max_rel;
      rep.worst_quantity = q.name;
    }
    rep.quantities.push_back(std::move(q));
  }
  return rep;
}

double fitted_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0 && y[i] > 0)) continue;
    const double a = std::log10(x[i]), b = std::log10(y[i]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

FirstOrderReport first_order_multi_eig_check(const Model& model, const Vec& rho, double gamma,
                                             const Interpolation& ip_in, int cluster,
                                             const Vec& drho, const std::vector<double>& eps,
                                             const AnalysisOptions& opts) {
  if (drho.size() != rho.size()) throw InputError("direction length must equal element count");
  AnalysisOptions ao = opts;
  ao.solver.polish_iterations = std::max(ao.solver.polish_iterations, 2);
  StabilityAnalysis base = analyze_stability(model, rho, gamma, ip_in, ao);
  if (cluster >= static_cast<int>(base.eig.clusters.size()))
    throw AnalysisError("requested cluster not found");
  const Cluster cl = base.eig.clusters[cluster];
  SensitivityContext ctx(model, rho, base.ip, base.state.u, base.state.gamma, ao.mass,
                         opts.use_pseudo_mass);
  ClusterSensitivity cs = ctx.cluster_direction_vectors(base.eig, cluster);
  DirectionalIncrements di = directional_increments(cs, drho);

  FirstOrderReport rep;
  rep.lambda = cs.lambda;
  rep.multiplicity = cl.size;
  rep.T = di.T;
  rep.increments = di.increments;
  rep.eps = eps;
  Assembler asmb(model);
  ao.num_clusters = cluster + 1 + cl.size;
  SolverOptions so = ao.solver;
  so.adapt_cutoff = false;
  for (double e : eps) {
    Vec r = rho + e * drho;
    Vec u = base.state.u;
    SymmetricSolver solver;
    if (!newton_fixed_load(asmb, solver, r, base.ip, base.state.gamma, u, so, nullptr))
      u = solve_equilibrium(model, r, base.state.gamma, base.ip, so).u;
    EigenSolution es = eigen_at_state(model, r, base.ip, u, base.state.gamma, ao);
    if (es.count() < cl.begin + cl.size)
      throw AnalysisError("perturbed cluster left the eigenvalue window");
    Vec lam = es.values.segment(cl.begin, cl.size);
    double res = 0;
    for (int k = 0; k < cl.size; ++k)
      res = std::max(res, std::abs(lam[k] - cs.lambda - e * di.increments[k]));
    rep.perturbed.push_back(lam);
    rep.residual.push_back(res);
  }
  rep.slope = fitted_log_slope(rep.eps, rep.residual);
  return rep;
}

}  // namespace stabopt
