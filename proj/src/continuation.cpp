#include "stabopt/continuation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "stabopt/errors.hpp"

namespace stabopt {

namespace {

bool factor(const SpMat& K, SymmetricSolver& s) { return s.factorize(K); }

bool finite(const Vec& v) { return v.allFinite(); }

}  // namespace

PathTracer::PathTracer(const Model& model, const Vec& rho, const Interpolation& ip, const PathOptions& opts)
    : model_(&model), rho_(rho), ip_(ip), opts_(opts), asmb_(model) {
  if (rho.size() != model.num_elements()) throw InputError("density length does not match the mesh");
  load_norm_ = model.load.norm();
  if (!(load_norm_ > 0)) throw InputError("path tracing needs a nonzero load pattern");
  if (opts_.use_pseudo_mass)
    mass_ = assemble_pseudo_mass(model, rho, opts_.mass);
  else
    mass_ = Vec::Ones(model.num_dofs());
  if (opts_.monitor_dof < 0) {
    Eigen::Index k = 0;
    model.load.cwiseAbs().maxCoeff(&k);
    opts_.monitor_dof = static_cast<int>(k);
  }
  SpMat K0 = tangent(Vec::Zero(model.num_dofs()));
  k_scale_ = K0.diagonal().cwiseAbs().maxCoeff();
}

Vec PathTracer::residual(const Vec& u, double gamma, const Vec* Ps, double gamma_s) const {
  Vec R;
  asmb_.assemble(u, rho_, ip_, gamma, &R, nullptr);
  if (Ps) R -= gamma_s * (*Ps);
  return R;
}

SpMat PathTracer::tangent(const Vec& u) const {
  SpMat K;
  asmb_.assemble(u, rho_, ip_, 0.0, nullptr, &K);
  return K;
}

EigenSolution PathTracer::eigen(const Vec& u, int count) const {
  EigenOptions eo = opts_.eigen;
  eo.fixed = &model_->dof_fixed;
  return eigen_lowest(tangent(u), mass_, count, 1e-8, eo);
}

PathPoint PathTracer::make_point(const Vec& u, double gamma) const {
  PathPoint p;
  p.u = u;
  p.gamma = gamma;
  EigenSolution e = eigen(u, std::max(1, opts_.num_eigenvalues));
  const int k = std::min<int>(e.count(), std::max(1, opts_.num_eigenvalues));
  for (int i = 0; i < k; ++i) p.eigenvalues.push_back(e.values[i]);
  p.stable = !p.eigenvalues.empty() && p.eigenvalues[0] > 0;
  return p;
}

bool PathTracer::newton_at_load(Vec& u, double gamma) const {
  SymmetricSolver s;
  int extra = 0;
  for (int it = 0; it < opts_.max_corrector; ++it) {
    Vec R = residual(u, gamma);
    const double r = R.norm() / load_norm_;
    if (!std::isfinite(r)) return false;
    if (r <= opts_.tolerance && (++extra > 2 || r == 0.0)) return true;
    if (!factor(tangent(u), s)) return false;
    u -= s.solve(R);
  }
  return residual_norm(u, gamma) <= opts_.tolerance;
}

double PathTracer::suggest_arc_length(double gamma_ref, double fraction) const {
  SymmetricSolver s;
  if (!factor(tangent(Vec::Zero(model_->num_dofs())), s))
    throw AnalysisError("tangent at the undeformed state is singular");
  return fraction * std::abs(gamma_ref) * s.solve(model_->load).norm();
}

bool PathTracer::arc_step(const Vec& u, double gamma, const Vec& du_pred, double dg_pred, double ell,
                          Vec& u_out, double& g_out) const {
  const double dn = du_pred.norm();
  if (!(dn > 0) || !(ell > 0)) return false;
  Vec du = du_pred * (ell / dn);
  double dg = dg_pred * (ell / dn);
  const Vec& P = model_->load;
  SymmetricSolver s;
  int extra = 0;
  try {
    for (int it = 0; it <= opts_.max_corrector; ++it) {
      const Vec un = u + du;
      const double gn = gamma + dg;
      Vec R = residual(un, gn);
      const double r = R.norm() / load_norm_;
      if (!std::isfinite(r) || r > 1e8) return false;
      if (r <= opts_.tolerance) {
        // a couple of extra corrections keep the converged point well inside
        // the tolerance
        if (++extra > 2 || r <= 1e-3 * opts_.tolerance) {
          u_out = un;
          g_out = gn;
          return true;
        }
      }
      if (it == opts_.max_corrector) break;
      if (!factor(tangent(un), s)) return false;
      const Vec a = -s.solve(R);
      const Vec b = s.solve(P);
      const Vec v = du + a;
      const double A = b.squaredNorm(), B = 2 * b.dot(v), C = v.squaredNorm() - ell * ell;
      const double disc = B * B - 4 * A * C;
      if (!(A > 0) || disc < 0) return false;
      const double sq = std::sqrt(disc);
      const double q = -0.5 * (B + (B >= 0 ? sq : -sq));
      double r1 = q / A, r2 = q != 0 ? C / q : -r1;
      const double c1 = (v + r1 * b).dot(du), c2 = (v + r2 * b).dot(du);
      const double dl = c1 >= c2 ? r1 : r2;
      du = v + dl * b;
      dg += dl;
      if (!finite(du)) return false;
    }
  } catch (const Error&) {
    return false;
  }
  return false;
}

namespace {

int negative_count(const std::vector<double>& v) {
  return static_cast<int>(std::count_if(v.begin(), v.end(), [](double x) { return x <= 0; }));
}

}  // namespace

CriticalPoint PathTracer::locate_critical(const PathPoint& a, const PathPoint& b, double ell,
                                          int index) const {
  const int k = index;
  if (static_cast<int>(std::min(a.eigenvalues.size(), b.eigenvalues.size())) <= k ||
      (a.eigenvalues[k] > 0) == (b.eigenvalues[k] > 0))
    throw AnalysisError("no sign change of the eigenvalue on the segment");
  const Vec dir = b.u - a.u;
  const double dgd = b.gamma - a.gamma;
  const double bracket = std::max(std::abs(a.eigenvalues[k]), std::abs(b.eigenvalues[k]));
  // the relative cap keeps slender members (lambda << |K|) resolved
  const double tol = std::min(opts_.critical_tol * k_scale_, 1e-6 * bracket);
  auto value_at = [&](const Vec& u) { return eigen(u, k + 1).values[k]; };
  double s0 = 0, s1 = ell, l0 = a.eigenvalues[k], l1 = b.eigenvalues[k];
  const bool a_best = std::abs(l0) < std::abs(l1);
  Vec u_best = a_best ? a.u : b.u;
  double g_best = a_best ? a.gamma : b.gamma;
  double l_best = a_best ? l0 : l1;
  int side = 0;
  for (int it = 0; it < 200 && std::abs(l_best) > tol; ++it) {
    // Illinois false position with a bisection guard
    double s = (s0 * l1 - s1 * l0) / (l1 - l0);
    if (!(s > s0 && s < s1) || (it % 8 == 7)) s = 0.5 * (s0 + s1);
    if (s1 - s0 <= 1e-15 * ell) break;
    Vec us;
    double gs;
    if (!arc_step(a.u, a.gamma, dir, dgd, s, us, gs)) {
      s = 0.5 * (s0 + s1);
      if (!arc_step(a.u, a.gamma, dir, dgd, s, us, gs))
        throw AnalysisError("corrector failed while locating a critical point");
    }
    const double ls = value_at(us);
    if (std::abs(ls) < std::abs(l_best)) {
      l_best = ls;
      u_best = us;
      g_best = gs;
    }
    if ((ls > 0) == (l0 > 0)) {
      s0 = s;
      l0 = ls;
      if (side == -1) l1 *= 0.5;
      side = -1;
    } else {
      s1 = s;
      l1 = ls;
      if (side == 1) l0 *= 0.5;
      side = 1;
    }
  }
  CriticalPoint cp;
  cp.u = u_best;
  cp.gamma = g_best;
  cp.index = k;
  EigenSolution e = eigen(u_best, k + 3);
  cp.lambda = e.values[k];
  // cluster of values indistinguishable from zero at this resolution
  const double ztol = std::max(1e-4 * bracket, 10 * std::abs(cp.lambda));
  std::vector<int> members;
  for (int j = 0; j < e.count(); ++j)
    if (std::abs(e.values[j]) <= ztol) members.push_back(j);
  if (members.empty()) members.push_back(k);
  cp.multiplicity = static_cast<int>(members.size());
  cp.modes.resize(cp.u.size(), cp.multiplicity);
  for (int j = 0; j < cp.multiplicity; ++j) {
    Vec v = e.vectors.col(members[j]);
    cp.modes.col(j) = v / v.norm();
  }
  cp.phi = e.vectors.col(k);
  cp.phi /= cp.phi.norm();
  cp.load_alignment = std::abs(cp.phi.dot(model_->load)) / model_->load.norm();
  cp.kind = classify_critical_point(cp.phi, model_->load, opts_.bifurcation_tol);
  if (cp.kind == CriticalKind::Bifurcation) {
    // K is singular on the modes here, so round-off leaves an arbitrary
    // modal component in u; the primary path itself moves orthogonally.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(cp.modes);
    const Eigen::MatrixXd Qm = qr.householderQ() * Eigen::MatrixXd::Identity(cp.u.size(), cp.multiplicity);
    cp.u -= Qm * (Qm.transpose() * (cp.u - a.u));
  }
  return cp;
}

EquilibriumPath PathTracer::trace(const Vec& u0, double gamma0, double ell, const Vec* direction,
                                  double dgamma, int max_points) const {
  const int cap = max_points > 0 ? max_points : opts_.max_points;
  EquilibriumPath path;
  path.arc_length = ell;
  path.monitor_dof = opts_.monitor_dof;
  if (!(ell > 0)) throw InputError("arc length must be positive");
  path.points.push_back(make_point(u0, gamma0));
  Vec du;
  double dg;
  if (direction) {
    du = *direction;
    dg = dgamma;
  } else {
    SymmetricSolver s;
    if (!factor(tangent(u0), s)) throw AnalysisError("singular tangent at the path start");
    du = s.solve(model_->load);
    dg = 1.0;
  }
  double step = ell;
  Vec u = u0;
  double g = gamma0;
  while (static_cast<int>(path.points.size()) < cap) {
    Vec un;
    double gn;
    if (!arc_step(u, g, du, dg, step, un, gn)) {
      step *= 0.5;
      if (step < ell * opts_.min_arc_ratio) {
        path.complete = false;
        path.diagnostic = "corrector failed at the minimum arc length after " +
                          std::to_string(path.points.size()) + " points";
        break;
      }
      continue;
    }
    PathPoint p = make_point(un, gn);
    p.constraint_residual = std::abs((un - u).squaredNorm() - step * step) / (step * step);
    const PathPoint& prev = path.points.back();
    if (opts_.detect_criticals) {
      const int na = negative_count(prev.eigenvalues), nb = negative_count(p.eigenvalues);
      if (na != nb) {
        CriticalPoint cp = locate_critical(prev, p, step, std::min(na, nb));
        cp.segment = static_cast<int>(path.points.size()) - 1;
        path.criticals.push_back(cp);
      }
    }
    du = un - u;
    dg = gn - g;
    u = un;
    g = gn;
    path.points.push_back(std::move(p));
    if (step < ell) step = std::min(ell, 2 * step);
    if (g >= opts_.gamma_max) break;
  }
  return path;
}

EquilibriumPath trace_primary(const Model& model, const Vec& rho, const Interpolation& ip,
                              const PathOptions& opts) {
  PathTracer t(model, rho, ip, opts);
  double ell = opts.arc_length;
  if (!(ell > 0)) {
    const double gref = std::isfinite(opts.gamma_max) && opts.gamma_max < 1e299 ? opts.gamma_max : 1.0;
    ell = t.suggest_arc_length(gref, 1.0 / 25.0);
  }
  return t.trace(Vec::Zero(model.num_dofs()), 0.0, ell);
}

Vec branch_switch_predictor(const Vec& u_cr, const Vec& phi, double tau, int sign) {
  const double pn = phi.norm();
  if (!(pn > 0)) throw InputError("branch switch needs a nonzero mode");
  if (!(tau > 0)) throw InputError("branch switch scale divisor must be positive");
  const double zeta = (sign >= 0 ? 1.0 : -1.0) * u_cr.norm() / tau;
  return u_cr + zeta * phi / pn;
}

BranchSwitchResult branch_switch_simple(const PathTracer& tracer, const CriticalPoint& cp, double tau,
                                        int sign) {
  const double un = cp.u.norm();
  if (!(un > 0)) throw InputError("branch switch needs a nonzero critical displacement");
  const Vec phi = cp.phi / cp.phi.norm();
  BranchSwitchResult res;
  double zeta = (sign >= 0 ? 1.0 : -1.0) * un / tau;
  for (int attempt = 1; attempt <= 5; ++attempt, zeta *= 2) {
    res.attempts = attempt;
    const Vec pred = zeta * phi;
    Vec u;
    double g;
    if (!tracer.arc_step(cp.u, cp.gamma, pred, 0.0, std::abs(zeta), u, g)) continue;
    const Vec d = u - cp.u;
    const double frac = std::abs(phi.dot(d)) / d.norm();
    if (frac < 0.1) continue;  // back on the primary branch
    res.u = u;
    res.gamma = g;
    res.zeta = zeta;
    res.mode_fraction = frac;
    return res;
  }
  throw AnalysisError("branch switch did not leave the primary branch after 5 attempts");
}

Vec disturbance_load(const Model& model, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Vec xi(model.num_dofs());
  for (int i = 0; i < xi.size(); ++i) xi[i] = U(rng);
  for (int i = 0; i < xi.size(); ++i)
    if (model.dof_fixed[i]) xi[i] = 0.0;
  const Vec& P = model.load;
  xi -= (P.dot(xi) / P.squaredNorm()) * P;
  xi -= (P.dot(xi) / P.squaredNorm()) * P;
  return xi / xi.norm();
}

namespace {

// Newton on {F_int - gamma P = 0, |u - c|^2 = r^2} from (u, gamma).
bool refine_on_cylinder(const PathTracer& t, const Vec& center, double r, Vec& u, double& gamma) {
  const Vec& P = t.model().load;
  SymmetricSolver s;
  const double tol = t.options().tolerance;
  int extra = 0;
  for (int it = 0; it < t.options().max_corrector; ++it) {
    Vec R = t.residual(u, gamma);
    const Vec w = u - center;
    const double aux = w.squaredNorm() - r * r;
    const double rn = R.norm() / t.load_norm();
    if (!std::isfinite(rn)) return false;
    if (rn <= tol && std::abs(aux) <= 1e-12 * r * r && (++extra > 2 || rn <= 1e-3 * tol)) return true;
    if (!s.factorize(t.tangent(u))) return false;
    const Vec a = -s.solve(R), b = s.solve(P);
    const double den = 2 * w.dot(b);
    if (den == 0) return false;
    const double dg = (-aux - 2 * w.dot(a)) / den;
    u += a + dg * b;
    gamma += dg;
  }
  return false;
}

}  // namespace

BccResult bcc_traverse(const PathTracer& tracer, const CriticalPoint& cp, const BccOptions& opts) {
  const Model& model = tracer.model();
  const Vec& P = model.load;
  BccResult res;
  const double r = opts.radius > 0 ? opts.radius : opts.radius_factor * cp.u.norm();
  if (!(r > 0)) throw InputError("BCC radius must be positive");
  const double ell0 = opts.arc_fraction * r;
  res.radius = r;
  res.arc_length = ell0;
  const Vec Ps = disturbance_load(model, opts.seed);
  res.disturbance = Ps;
  const double tol = tracer.options().tolerance;

  // start on the primary branch at distance r
  Vec u0;
  double g0;
  {
    SymmetricSolver s;
    if (!s.factorize(tracer.tangent(cp.u))) throw AnalysisError("singular tangent at the critical point");
    Vec b = s.solve(P);
    const Vec phi = cp.phi / cp.phi.norm();
    Vec bt = b - phi.dot(b) * phi;
    if (bt.norm() < 1e-12 * b.norm()) bt = b;
    const double scale = bt.norm() / b.norm();
    if (!tracer.arc_step(cp.u, cp.gamma, bt, scale, r, u0, g0))
      throw AnalysisError("could not reach the BCC from the critical point");
    if (!refine_on_cylinder(tracer, cp.u, r, u0, g0))
      throw AnalysisError("BCC start point did not converge");
  }
  res.crossings.push_back({u0, g0, tracer.residual_norm(u0, g0), 0});

  auto tangent_dir = [&](const Vec& u, Vec& du, double& dgam, double& dgs) {
    SymmetricSolver s;
    if (!s.factorize(tracer.tangent(u))) return false;
    const Vec b = s.solve(P), c = s.solve(Ps);
    const Vec w = u - cp.u;
    dgam = -w.dot(c);
    dgs = w.dot(b);
    du = dgam * b + dgs * c;
    return du.norm() > 0;
  };

  Vec u = u0;
  double g = g0, gs = 0.0;
  Vec du_prev;
  double ell = ell0;
  for (int step = 0; step < opts.max_points; ++step) {
    Vec du;
    double dgam, dgs;
    if (!tangent_dir(u, du, dgam, dgs)) {
      res.diagnostic = "singular tangent on the BCC";
      break;
    }
    const bool flip = du_prev.size() ? du.dot(du_prev) < 0 : dgs < 0;
    if (flip) {
      du = -du;
      dgam = -dgam;
      dgs = -dgs;
    }
    const double sc = ell / du.norm();
    Vec un = u + sc * du;
    double gn = g + sc * dgam, gsn = gs + sc * dgs;
    // corrector on {R_u, R_aux, R_arc}
    bool ok = false;
    SymmetricSolver s;
    int extra = 0;
    try {
      for (int it = 0; it < tracer.options().max_corrector; ++it) {
        Vec R = tracer.residual(un, gn, &Ps, gsn);
        const Vec w = un - cp.u, d = un - u;
        const double aux = w.squaredNorm() - r * r, arc = d.squaredNorm() - ell * ell;
        const double rn = R.norm() / tracer.load_norm();
        if (!std::isfinite(rn) || rn > 1e8) break;
        if (rn <= tol && std::abs(aux) <= 1e-12 * r * r && std::abs(arc) <= 1e-12 * ell * ell &&
            (++extra > 2 || rn <= 1e-3 * tol)) {
          ok = true;
          break;
        }
        if (!s.factorize(tracer.tangent(un))) break;
        const Vec a = -s.solve(R), b = s.solve(P), c = s.solve(Ps);
        Eigen::Matrix2d M;
        M << 2 * w.dot(b), 2 * w.dot(c), 2 * d.dot(b), 2 * d.dot(c);
        Eigen::Vector2d rhs(-aux - 2 * w.dot(a), -arc - 2 * d.dot(a));
        Eigen::Vector2d x = M.fullPivLu().solve(rhs);
        if (!x.allFinite()) break;
        un += a + x[0] * b + x[1] * c;
        gn += x[0];
        gsn += x[1];
      }
    } catch (const Error&) {
      ok = false;
    }
    if (!ok) {
      ell *= 0.5;
      if (ell < ell0 / 64) {
        res.diagnostic = "BCC corrector failed at the minimum arc length";
        break;
      }
      --step;
      continue;
    }
    ++res.steps;
    res.max_aux_residual = std::max(res.max_aux_residual, std::abs((un - cp.u).squaredNorm() - r * r) / (r * r));
    res.max_arc_residual = std::max(res.max_arc_residual, std::abs((un - u).squaredNorm() - ell * ell) / (ell * ell));

    if (gs != 0.0 && (gs > 0) != (gsn > 0)) {
      const double t = gs / (gs - gsn);
      Vec uc = u + t * (un - u);
      double gc = g + t * (gn - g);
      if (refine_on_cylinder(tracer, cp.u, r, uc, gc)) {
        const double scale = r;
        const BranchPoint& first = res.crossings.front();
        if ((uc - first.u).norm() <= opts.match_tol * scale) {
          res.closed = true;
          break;
        }
        bool dup = false;
        for (const auto& c : res.crossings) dup = dup || (uc - c.u).norm() <= opts.match_tol * scale;
        if (!dup) res.crossings.push_back({uc, gc, tracer.residual_norm(uc, gc), res.steps});
      }
    }
    du_prev = un - u;
    u = un;
    g = gn;
    gs = gsn;
    if (ell < ell0) ell = std::min(ell0, 2 * ell);
  }
  if (!res.closed && res.diagnostic.empty()) res.diagnostic = "BCC did not close within the point budget";
  return res;
}

std::vector<EquilibriumPath> trace_post_buckling(const PathTracer& tracer, const CriticalPoint& cp,
                                                 const std::vector<BranchPoint>& points, double ell,
                                                 int max_points) {
  std::vector<EquilibriumPath> out;
  for (size_t i = 0; i < points.size(); ++i) {
    EquilibriumPath p;
    try {
      const Vec dir = points[i].u - cp.u;
      p = tracer.trace(points[i].u, points[i].gamma, ell, &dir, points[i].gamma - cp.gamma, max_points);
    } catch (const Error& e) {
      p.complete = false;
      p.diagnostic = e.what();
    }
    p.branch_id = static_cast<int>(i) + 1;
    p.parent = 0;
    out.push_back(std::move(p));
  }
  return out;
}

Vec reflect_displacement(const Model& model, const Vec& u) {
  if (u.size() != model.num_dofs()) throw InputError("displacement length does not match the mesh");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& c : model.coords) {
    xmin = std::min(xmin, c[0]);
    xmax = std::max(xmax, c[0]);
    ymin = std::min(ymin, c[1]);
    ymax = std::max(ymax, c[1]);
  }
  const double tol = 1e-6 * std::max(xmax - xmin, ymax - ymin);
  std::map<std::pair<long long, long long>, int> index;
  auto key = [&](double x, double y) {
    return std::make_pair(std::llround((x - xmin) / tol), std::llround((y - ymin) / tol));
  };
  for (int n = 0; n < model.num_nodes(); ++n) index[key(model.coords[n][0], model.coords[n][1])] = n;
  Vec out(u.size());
  for (int n = 0; n < model.num_nodes(); ++n) {
    const auto& c = model.coords[n];
    auto it = index.find(key(xmin + xmax - c[0], c[1]));
    if (it == index.end()) throw InputError("mesh is not mirror-symmetric");
    out[2 * it->second] = -u[2 * n];
    out[2 * it->second + 1] = u[2 * n + 1];
  }
  return out;
}

}  // namespace stabopt
