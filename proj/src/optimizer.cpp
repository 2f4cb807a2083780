#include "stabopt/optimizer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "stabopt/errors.hpp"
#include "stabopt/sensitivity.hpp"

namespace stabopt {

Penalties continuation_schedule(const ContinuationSchedule& s, int iter) {
  if (!s.enabled) return {s.p_end, s.p_lin_end, s.p_m_end};
  if (iter < 1) throw InputError("continuation schedule: iteration counts from 1");
  const double k = std::floor((iter - 1) / std::max(1, s.every));
  return {std::min(s.p_end, s.p_start + s.step * k), std::min(s.p_lin_end, s.p_lin_start + s.step * k),
          std::min(s.p_m_end, s.p_m_start + s.step * k)};
}

void OptimizationConfig::validate() const {
  if (!(volume_fraction > 0 && volume_fraction < 1))
    throw InputError("volume_fraction must lie in (0, 1)");
  if (!(theta > 0 && theta <= 0.1)) throw InputError("theta must lie in (0, 0.1]");
  if (!(mma_move > 0 && mma_move <= 1)) throw InputError("mma_move must lie in (0, 1]");
  if (num_clusters < 1) throw InputError("num_clusters must be positive");
  if (max_outer < 0) throw InputError("max_outer must be non-negative");
  if (!(filter_radius > 0)) throw InputError("filter_radius must be positive");
}

int count_equality_constraints(const std::vector<int>& multiplicities) {
  int c = 0;
  for (int n : multiplicities) c += n * (n - 1) / 2;
  return c;
}

namespace {

// Euclidean projection onto {E dx = 0} within the box: semismooth Newton on
// the multipliers of d(mu) = clamp(dx - E' mu, lo, hi).
void enforce_equalities(const std::vector<Vec>& E, const Vec& lo, const Vec& hi, Vec& dx) {
  if (E.empty()) return;
  const int k = static_cast<int>(E.size());
  Eigen::MatrixXd M(k, dx.size());
  for (int i = 0; i < k; ++i) M.row(i) = E[i].transpose();
  const Vec target = dx;
  auto point = [&](const Vec& mu) { return Vec((target - M.transpose() * mu).cwiseMax(lo).cwiseMin(hi)); };
  const double scale = M.norm() * std::max(target.norm(), hi.cwiseAbs().maxCoeff()) + 1e-300;
  Vec mu = Vec::Zero(k);
  Vec d = point(mu);
  Vec r = M * d;
  for (int it = 0; it < 50 && r.norm() > 1e-15 * scale; ++it) {
    Vec free = Vec::Zero(dx.size());
    const Vec raw = target - M.transpose() * mu;
    for (Eigen::Index j = 0; j < raw.size(); ++j) free[j] = raw[j] > lo[j] && raw[j] < hi[j];
    Eigen::MatrixXd J = M * free.asDiagonal() * M.transpose();
    J.diagonal().array() += 1e-14 * (J.diagonal().maxCoeff() + 1e-300);
    const Vec step = J.ldlt().solve(r);
    // backtrack on the dual merit |E d(mu)|
    double t = 1.0;
    for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
      const Vec mt = mu + t * step;
      const Vec dt = point(mt);
      const Vec rt = M * dt;
      if (rt.norm() < r.norm() || ls == 29) {
        mu = mt;
        d = dt;
        r = rt;
        break;
      }
    }
  }
  dx = d;
}

double equality_residual(const std::vector<Vec>& E, const Vec& dx) {
  double worst = 0;
  const double dn = dx.norm();
  if (dn == 0) return 0;
  for (const Vec& e : E) {
    const double en = e.norm();
    if (en > 0) worst = std::max(worst, std::abs(e.dot(dx)) / (en * dn));
  }
  return worst;
}

}  // namespace

InnerResult inner_subproblem(const InnerProblem& prob, const OptimizationConfig& cfg) {
  const int n = static_cast<int>(prob.x.size());
  const int nq = static_cast<int>(prob.eig_value.size());
  const int ne = static_cast<int>(prob.equality_gradient.size());
  const int rows = 1 + nq + 2 * ne;
  InnerResult out;
  double theta = cfg.theta;
  for (int attempt = 0; attempt < 2; ++attempt, theta *= 0.5) {
    Vec lo = (-prob.x).cwiseMax(-theta);
    Vec hi = (Vec::Ones(n) - prob.x).cwiseMin(theta);
    Eigen::MatrixXd dfdx(rows, n);
    dfdx.row(0) = prob.volume_gradient.transpose();
    for (int q = 0; q < nq; ++q) dfdx.row(1 + q) = prob.eig_gradient[q].transpose();
    for (int k = 0; k < ne; ++k) {
      dfdx.row(1 + nq + 2 * k) = prob.equality_gradient[k].transpose();
      dfdx.row(2 + nq + 2 * k) = -prob.equality_gradient[k].transpose();
    }
    Vec base(rows);
    base[0] = prob.volume_value;
    base.segment(1, nq) = prob.eig_value;
    base.tail(2 * ne).setZero();

    MmaSettings ms;
    ms.move = cfg.mma_move;
    MmaSolver sub(n, rows, ms);
    sub.set_linear_rows(std::vector<char>(rows, 1));
    Vec dx = Vec::Zero(n);
    double obj = 0;
    int it = 0;
    for (it = 1; it <= cfg.inner_max; ++it) {
      Vec fval = base + dfdx * dx;
      MmaResult r = sub.update(dx, lo, hi, obj, prob.objective_gradient, fval, dfdx);
      const double obj_new = prob.objective_gradient.dot(r.x);
      const double step = (r.x - dx).norm();
      const bool small_obj = obj != 0 && std::abs(obj_new - obj) <= cfg.inner_obj_tol * std::abs(obj);
      dx = r.x;
      obj = obj_new;
      if (small_obj || step <= cfg.inner_dx_tol) break;
    }
    dx = dx.cwiseMax(lo).cwiseMin(hi);
    enforce_equalities(prob.equality_gradient, lo, hi, dx);
    out.iterations += std::min(it, cfg.inner_max);
    out.equality_residual = equality_residual(prob.equality_gradient, dx);
    out.theta_used = theta;
    if (out.equality_residual <= 1e-6) {
      out.dx = dx;
      out.feasible = true;
      return out;
    }
  }
  out.dx = Vec::Zero(n);
  out.feasible = false;
  return out;
}

IterationRecord evaluate_design(const Model& model, const Vec& rho, const OptimizationConfig& cfg,
                                const Penalties& pen) {
  Interpolation ip = Interpolation::from(model.interp);
  ip.p = pen.p;
  ip.p_lin = pen.p_lin;
  AnalysisOptions ao;
  ao.num_clusters = cfg.num_clusters;
  ao.tol_mult = cfg.tol_mult;
  ao.mass = cfg.mass;
  ao.mass.p_m = pen.p_m;
  ao.solver = cfg.solver;
  ao.eigen = cfg.eigen;
  StabilityAnalysis a = analyze_stability(model, rho, cfg.gamma, ip, ao);
  IterationRecord rec;
  rec.penalties = pen;
  rec.f0 = a.state.gamma * model.load.dot(a.state.u);
  rec.f1 = volume_constraint(rho, model, cfg.volume_fraction);
  rec.cutoff = a.state.c;
  rec.cutoff_updates = a.state.record.cutoff_updates;
  for (int i = 0; i < a.eig.count(); ++i) rec.eigenvalues.push_back(a.eig.values[i]);
  for (const auto& c : a.eig.clusters) rec.multiplicities.push_back(c.size);
  return rec;
}

OptimizationResult run_optimization(const Model& model, const OptimizationConfig& cfg,
                                    const IterationCallback& callback, const Vec* x0) {
  cfg.validate();
  DesignSpace ds(model, cfg.symmetry, cfg.filter_radius);
  const int n = ds.size();
  OptimizationResult res;
  Vec x = x0 ? *x0 : Vec::Constant(n, cfg.volume_fraction);
  if (x.size() != n) throw InputError("initial design has the wrong length");
  const bool stab = cfg.stability();
  const int m = stab ? cfg.num_clusters : 0;
  const int rows = 1 + m;
  MmaSettings ms;
  ms.move = cfg.mma_move;
  MmaSolver mma(n, rows, ms);
  {
    std::vector<char> lin(rows, 0);
    lin[0] = 1;  // volume is linear in x
    mma.set_linear_rows(lin);
  }
  const Vec xmin = Vec::Zero(n), xmax = Vec::Ones(n);
  const Vec vol_grad = ds.chain_gradient(volume_constraint_gradient(model, cfg.volume_fraction));
  double f0_ref = 0;
  double init_inc = cfg.solver.initial_increment;
  Penalties pen = continuation_schedule(cfg.schedule, 1);

  for (int iter = 1; iter <= cfg.max_outer; ++iter) {
    pen = continuation_schedule(cfg.schedule, iter);
    Interpolation ip = Interpolation::from(model.interp);
    ip.p = pen.p;
    ip.p_lin = pen.p_lin;
    PseudoMassParams mass = cfg.mass;
    mass.p_m = pen.p_m;
    const Vec rho = ds.densities(x);

    IterationRecord rec;
    rec.iter = iter;
    rec.penalties = pen;
    EquilibriumState st;
    try {
      SolverOptions so = cfg.solver;
      so.initial_increment = init_inc;
      st = solve_equilibrium(model, rho, cfg.gamma, ip, so);
    } catch (const Error& e) {
      res.aborted = true;
      res.message = "iteration " + std::to_string(iter) + ": " + e.what();
      break;
    }
    init_inc = st.record.initial_increment_used;
    ip.c = st.c;
    rec.cutoff = st.c;
    rec.cutoff_updates = st.record.cutoff_updates;

    Vec xnew;
    try {
      SensitivityContext ctx(model, rho, ip, st.u, st.gamma, mass);
      rec.f0 = ctx.compliance();
      rec.f1 = volume_constraint(rho, model, cfg.volume_fraction);
      if (f0_ref == 0) f0_ref = std::abs(rec.f0) > 0 ? std::abs(rec.f0) : 1.0;
      const Vec g0 = ds.chain_gradient(ctx.compliance_gradient()) / f0_ref;

      EigenSolution eig;
      if (stab) {
        AnalysisOptions ao;
        ao.num_clusters = m;
        ao.tol_mult = cfg.tol_mult;
        ao.mass = mass;
        ao.eigen = cfg.eigen;
        eig = eigen_at_state(model, rho, ip, st.u, st.gamma, ao);
        for (int i = 0; i < eig.count(); ++i) rec.eigenvalues.push_back(eig.values[i]);
        for (const auto& c : eig.clusters) rec.multiplicities.push_back(c.size);
      }
      rec.inner = stab && !eig.all_simple();

      if (!rec.inner) {
        Vec fval = Vec::Constant(rows, -1.0);
        Eigen::MatrixXd dfdx = Eigen::MatrixXd::Zero(rows, n);
        fval[0] = rec.f1;
        dfdx.row(0) = vol_grad.transpose();
        for (int q = 0; q < std::min(m, eig.count()); ++q) {
          fval[1 + q] = 1.0 - eig.values[q] / cfg.lambda_hat;
          Vec g = ctx.simple_eigenvalue_gradient(eig.vectors.col(q), eig.values[q]);
          dfdx.row(1 + q) = (-ds.chain_gradient(g) / cfg.lambda_hat).transpose();
        }
        rec.stability_rows = m;
        MmaResult r = mma.update(x, xmin, xmax, rec.f0 / f0_ref, g0, fval, dfdx);
        xnew = r.x;
      } else {
        InnerProblem ip2;
        ip2.x = x;
        ip2.objective_gradient = g0;
        ip2.volume_value = rec.f1;
        ip2.volume_gradient = vol_grad;
        std::vector<double> vals;
        for (int c = 0; c < static_cast<int>(eig.clusters.size()); ++c) {
          ClusterSensitivity cs = ctx.cluster_direction_vectors(eig, c);
          for (int s = 0; s < cs.size; ++s) {
            vals.push_back(1.0 - eig.values[cs.begin + s] / cfg.lambda_hat);
            ip2.eig_gradient.push_back(-ds.chain_gradient(cs.zsk(s, s)) / cfg.lambda_hat);
            for (int k = s + 1; k < cs.size; ++k)
              ip2.equality_gradient.push_back(ds.chain_gradient(cs.zsk(s, k)) / cfg.lambda_hat);
          }
        }
        ip2.eig_value = Eigen::Map<Vec>(vals.data(), static_cast<int>(vals.size()));
        rec.equality_rows = static_cast<int>(ip2.equality_gradient.size());
        rec.stability_rows = static_cast<int>(vals.size()) + rec.equality_rows;
        InnerResult ir = inner_subproblem(ip2, cfg);
        xnew = (x + ir.dx).cwiseMax(0.0).cwiseMin(1.0);
        mma.reset();
      }
    } catch (const Error& e) {
      res.aborted = true;
      res.message = "iteration " + std::to_string(iter) + ": " + e.what();
      break;
    }
    rec.change = (xnew - x).cwiseAbs().maxCoeff();
    if (callback) callback(rec, x, rho);
    res.trace.records.push_back(rec);
    x = xnew;
  }
  res.x = x;
  res.rho = ds.densities(x);
  try {
    res.final = evaluate_design(model, res.rho, cfg, pen);
  } catch (const Error& e) {
    res.final.f0 = std::numeric_limits<double>::quiet_NaN();
    res.final.f1 = volume_constraint(res.rho, model, cfg.volume_fraction);
    if (res.message.empty()) res.message = std::string("final analysis failed: ") + e.what();
    res.aborted = true;
  }
  res.final.iter = static_cast<int>(res.trace.records.size());
  return res;
}

}  // namespace stabopt
