#include "stabopt/stability.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "stabopt/errors.hpp"
#include "stabopt/linear_solver.hpp"

namespace stabopt {

PseudoMass::PseudoMass(const PseudoMassParams& params) : p_(params) {
  if (!(p_.w_low > 0 && p_.w_high > p_.w_low && p_.w_high <= 1.0))
    throw InputError("pseudo-mass cutoffs must satisfy 0 < w_low < w_high <= 1");
  if (!(p_.q >= 1) || !(p_.p_m >= 1) || !(p_.eps_hat > 0 && p_.eps_hat < 1))
    throw InputError("invalid pseudo-mass parameters");
  const double l = p_.w_low, h = p_.w_high, e = p_.eps_hat, pm = p_.p_m;
  Eigen::Matrix4d M;
  M << 1, l, l * l, l * l * l,  //
      0, 1, 2 * l, 3 * l * l,   //
      1, h, h * h, h * h * h,   //
      0, 1, 2 * h, 3 * h * h;
  Eigen::Vector4d rhs(e + (1 - e) * std::pow(l, pm), pm * (1 - e) * std::pow(l, pm - 1), 1.0, 0.0);
  a_ = M.fullPivLu().solve(rhs);
}

double PseudoMass::value(double w) const {
  if (w < p_.w_low) return p_.eps_hat + (1 - p_.eps_hat) * std::pow(std::max(w, 0.0), p_.p_m);
  if (w < p_.w_high) return a_[0] + w * (a_[1] + w * (a_[2] + w * a_[3]));
  return 1.0;
}

double PseudoMass::derivative(double w) const {
  if (w < p_.w_low) return p_.p_m * (1 - p_.eps_hat) * std::pow(std::max(w, 0.0), p_.p_m - 1);
  if (w < p_.w_high) return a_[1] + w * (2 * a_[2] + 3 * w * a_[3]);
  return 0.0;
}

double pseudo_mass_value(double w, const PseudoMassParams& params) {
  return PseudoMass(params).value(w);
}

Vec nodal_pseudo_density(const Vec& rho, const Model& model, double q) {
  Vec w(model.num_nodes());
  for (int i = 0; i < model.num_nodes(); ++i) {
    // scale by the max for a safe power sum
    double mx = 0;
    for (int e : model.node_elements[i]) mx = std::max(mx, rho[e]);
    if (mx <= 0) {
      w[i] = 0;
      continue;
    }
    double s = 0;
    for (int e : model.node_elements[i]) s += std::pow(rho[e] / mx, q);
    w[i] = mx * std::pow(s, 1.0 / q);
  }
  return w;
}

Vec assemble_pseudo_mass(const Model& model, const Vec& rho, const PseudoMassParams& params) {
  PseudoMass pm(params);
  Vec w = nodal_pseudo_density(rho, model, params.q);
  Vec S(model.num_dofs());
  for (int i = 0; i < model.num_nodes(); ++i) S[2 * i] = S[2 * i + 1] = pm.value(w[i]);
  for (int d = 0; d < model.num_dofs(); ++d)
    if (model.dof_fixed[d]) S[d] = 1.0;
  return S;
}

bool EigenSolution::all_simple() const {
  for (const auto& c : clusters)
    if (c.size > 1) return false;
  return true;
}

std::vector<Cluster> cluster_eigenvalues(const Vec& values, double tol) {
  std::vector<Cluster> out;
  for (int i = 0; i < values.size(); ++i) {
    if (!out.empty() && std::abs(values[i] - values[out.back().begin]) <= tol)
      ++out.back().size;
    else
      out.push_back({i, 1});
  }
  return out;
}

void normalize_sign(Eigen::Ref<Vec> v) {
  Eigen::Index k = 0;
  double best = -1;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > best + 1e-12 * best) {
      best = std::abs(v[i]);
      k = i;
    }
  if (v.size() > 0 && v[k] < 0) v = -v;
}

const char* to_string(CriticalKind k) {
  return k == CriticalKind::Bifurcation ? "bifurcation" : "limit";
}

CriticalKind classify_critical_point(const Vec& phi, const Vec& load, double tol) {
  const double denom = phi.norm() * load.norm();
  if (denom == 0) return CriticalKind::Bifurcation;
  return std::abs(phi.dot(load)) / denom <= tol ? CriticalKind::Bifurcation : CriticalKind::Limit;
}

namespace {

struct ShiftedOperator {
  const SpMat& K;
  const Vec& sqrtS;
  const std::vector<char>& fixed;
  SymmetricSolver solver;
  double shift = 0;

  SpMat shifted(double sigma) const {
    SpMat A = K;
    for (int i = 0; i < A.outerSize(); ++i)
      if (!fixed[i]) A.coeffRef(i, i) -= sigma * sqrtS[i] * sqrtS[i];
    return A;
  }

  // Factor K - sigma S; returns the negative pivot count or -1 if singular.
  static int inertia(SymmetricSolver& s, const SpMat& A) {
    if (!s.factorize(A)) return -1;
    return s.negative_pivots();
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& Y) const {
    Eigen::MatrixXd X = sqrtS.asDiagonal() * Y;
    Eigen::MatrixXd Z = solver.solve(X);
    for (int i = 0; i < Z.rows(); ++i)
      if (fixed[i]) Z.row(i).setZero();
    return sqrtS.asDiagonal() * Z;
  }
};

// Choose a shift below the spectrum: K - sigma S must be positive definite.
void choose_shift(ShiftedOperator& op, const Vec& S) {
  double kd = 0, sd = 0;
  for (int i = 0; i < op.K.rows(); ++i)
    if (!op.fixed[i]) {
      kd += std::abs(op.K.coeff(i, i));
      sd += S[i];
    }
  const double scale = sd > 0 ? kd / sd : 1.0;
  double tau = 1e-6 * scale;
  // Keep the shift at least tau away from the lowest eigenvalue: a nearly
  // singular shifted matrix swamps the other Ritz residuals in round-off.
  double sigma = 0;
  if (ShiftedOperator::inertia(op.solver, op.shifted(0.0)) == 0) {
    if (ShiftedOperator::inertia(op.solver, op.shifted(tau)) != 0) sigma = -tau;
  } else {
    int attempt = 0;
    for (; attempt < 200; ++attempt, tau *= 2)
      if (ShiftedOperator::inertia(op.solver, op.shifted(-tau)) == 0) break;
    if (attempt == 200) throw AnalysisError("eigen solver: no positive-definite shift found");
    // Indefinite K: the lowest eigenvalue lies in (-tau, hi]. Narrow the
    // bracket so the shift sits close below it; a shift far from the
    // spectrum separates the Ritz values poorly.
    double lo = -tau, hi = attempt == 0 ? 0.0 : -tau / 2;
    for (int it = 0; it < 6; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (ShiftedOperator::inertia(op.solver, op.shifted(mid)) == 0)
        lo = mid;
      else
        hi = mid;
    }
    sigma = lo - (hi - lo);
  }
  if (ShiftedOperator::inertia(op.solver, op.shifted(sigma)) != 0)
    throw AnalysisError("eigen solver: shifted matrix is not positive definite");
  op.shift = sigma;
}

void orthonormalize_block(Eigen::MatrixXd& V, const Eigen::MatrixXd& Q, int qcols,
                          const std::vector<int>& free, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0, 1);
  for (int j = 0; j < V.cols(); ++j) {
    for (int pass = 0; pass < 3; ++pass) {
      const double before = V.col(j).norm();
      for (int round = 0; round < 2; ++round) {
        if (qcols > 0) V.col(j) -= Q.leftCols(qcols) * (Q.leftCols(qcols).transpose() * V.col(j));
        for (int i = 0; i < j; ++i) V.col(j) -= V.col(i) * V.col(i).dot(V.col(j));
      }
      const double after = V.col(j).norm();
      if (after > 1e-10 * before && after > 0) {
        V.col(j) /= after;
        break;
      }
      V.col(j).setZero();
      for (int i : free) V(i, j) = N(rng);
    }
  }
}

}  // namespace

EigenSolution eigen_lowest(const SpMat& K, const Vec& S, int m, double tol_mult,
                           const EigenOptions& opts) {
  const int n = static_cast<int>(K.rows());
  if (K.cols() != n || S.size() != n) throw InputError("eigen_lowest: size mismatch");
  if (m < 1) throw InputError("eigen_lowest: need at least one cluster");
  std::vector<char> fixed = opts.fixed ? *opts.fixed : std::vector<char>(n, 0);
  if (static_cast<int>(fixed.size()) != n) throw InputError("eigen_lowest: fixed mask size");
  std::vector<int> free;
  for (int i = 0; i < n; ++i)
    if (!fixed[i]) {
      if (!(S[i] > 0)) throw InputError("eigen_lowest: pseudo-mass must be positive");
      free.push_back(i);
    }
  const int nf = static_cast<int>(free.size());
  if (nf == 0) throw InputError("eigen_lowest: no free dofs");

  Vec sqrtS = S.cwiseAbs().cwiseSqrt();
  ShiftedOperator op{K, sqrtS, fixed, SymmetricSolver{}};
  choose_shift(op, S);

  EigenSolution out;
  out.tol = tol_mult;
  out.shift = op.shift;

  // Ritz values theta of the shift-inverted operator map to sigma + 1/theta.
  auto finish = [&](const Vec& lam_all, const Eigen::MatrixXd& Y, int available) {
    std::vector<Cluster> cl = cluster_eigenvalues(lam_all.head(available), tol_mult);
    int ncl = std::min<int>(m, static_cast<int>(cl.size()));
    int cnt = cl[ncl - 1].begin + cl[ncl - 1].size;
    out.values = lam_all.head(cnt);
    out.vectors.resize(n, cnt);
    for (int j = 0; j < cnt; ++j) {
      Vec phi = Y.col(j).cwiseQuotient(sqrtS);
      for (int i = 0; i < n; ++i)
        if (fixed[i]) phi[i] = 0;
      const double nrm = std::sqrt(phi.dot(S.cwiseProduct(phi)));
      phi /= nrm;
      normalize_sign(phi);
      out.vectors.col(j) = phi;
    }
    out.clusters.assign(cl.begin(), cl.begin() + ncl);
    if (cnt < available) out.next_value = lam_all[cnt];
  };

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> N(0, 1);

  auto dense = [&] {
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n, nf);
    for (int j = 0; j < nf; ++j) E(free[j], j) = 1.0;
    Eigen::MatrixXd W = op.apply(E);
    Eigen::MatrixXd H(nf, nf);
    for (int j = 0; j < nf; ++j)
      for (int i = 0; i < nf; ++i) H(i, j) = W(free[i], j);
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    Vec lam(nf);
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, nf);
    int available = 0;
    for (int k = nf - 1; k >= 0; --k) {
      const double th = es.eigenvalues()[k];
      if (!(th > 0)) break;
      lam[available] = op.shift + 1.0 / th;
      for (int i = 0; i < nf; ++i) Y(free[i], available) = es.eigenvectors()(i, k);
      ++available;
    }
    if (available == 0) throw AnalysisError("eigen solver: no positive Ritz values");
    finish(lam, Y, available);
    out.basis_size = nf;
    return out;
  };
  if (nf <= opts.dense_threshold) return dense();

  const int b = std::max(1, std::min(opts.block_size, nf));
  const int kmax = std::min(std::max(opts.max_basis, 4 * b), nf);
  Eigen::MatrixXd Q(n, kmax), W(n, kmax);
  int k = 0;
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, b);
  for (int j = 0; j < b; ++j)
    for (int i : free) V(i, j) = N(rng);
  orthonormalize_block(V, Q, 0, free, rng);

  SymmetricSolver check_solver;
  while (true) {
    const int nb = std::min(b, kmax - k);
    Eigen::MatrixXd Vb = V.leftCols(nb);
    Eigen::MatrixXd Wb = op.apply(Vb);
    Q.middleCols(k, nb) = Vb;
    W.middleCols(k, nb) = Wb;
    k += nb;

    // Rayleigh-Ritz on the current basis.
    Eigen::MatrixXd H = Q.leftCols(k).transpose() * W.leftCols(k);
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    const Vec& th = es.eigenvalues();
    Vec lam(k);
    Eigen::MatrixXd Y(n, k);
    int conv = 0;
    for (int r = k - 1; r >= 0; --r) {
      if (!(th[r] > 0)) break;
      Vec s = es.eigenvectors().col(r);
      Vec y = Q.leftCols(k) * s;
      Vec res = W.leftCols(k) * s - th[r] * y;
      if (k < nf && res.norm() > opts.residual_tol * th[r]) break;
      lam[conv] = op.shift + 1.0 / th[r];
      Y.col(conv) = y;
      ++conv;
    }
    if (conv > 0) {
      std::vector<Cluster> cl = cluster_eigenvalues(lam.head(conv), tol_mult);
      const bool enough = static_cast<int>(cl.size()) > m || (k >= nf && !cl.empty());
      if (enough) {
        bool complete = true;
        if (static_cast<int>(cl.size()) > m) {
          const int cnt = cl[m - 1].begin + cl[m - 1].size;
          const double mid = 0.5 * (lam[cnt - 1] + lam[cnt]);
          int neg = ShiftedOperator::inertia(check_solver, op.shifted(mid));
          complete = neg == cnt;
        }
        if (complete || k >= kmax) {
          if (!complete) throw AnalysisError("eigen solver: inertia check failed");
          finish(lam, Y, conv);
          out.basis_size = k;
          return out;
        }
      }
    }
    if (k >= kmax) {
      if (nf <= opts.dense_fallback) return dense();
      throw AnalysisError("eigen solver: basis limit reached before convergence");
    }

    V = Eigen::MatrixXd::Zero(n, b);
    V.leftCols(nb) = Wb;
    orthonormalize_block(V, Q, k, free, rng);
    for (int j = 0; j < V.cols(); ++j)
      for (int i = 0; i < n; ++i)
        if (fixed[i]) V(i, j) = 0;
  }
}

EigenSolution eigen_at_state(const Model& model, const Vec& rho, const Interpolation& ip,
                             const Vec& u, double gamma, const AnalysisOptions& opts,
                             SpMat* tangent, Vec* mass) {
  SpMat K;
  Assembler(model).assemble(u, rho, ip, gamma, nullptr, &K);
  Vec S = opts.use_pseudo_mass ? assemble_pseudo_mass(model, rho, opts.mass)
                               : Vec(Vec::Ones(model.num_dofs()));
  EigenOptions eo = opts.eigen;
  eo.fixed = &model.dof_fixed;
  EigenSolution es = eigen_lowest(K, S, opts.num_clusters, opts.tol_mult, eo);
  if (tangent) *tangent = std::move(K);
  if (mass) *mass = std::move(S);
  return es;
}

StabilityAnalysis analyze_stability(const Model& model, const Vec& rho, double gamma,
                                    const Interpolation& ip, const AnalysisOptions& opts,
                                    const Vec* u0) {
  StabilityAnalysis a;
  a.state = solve_equilibrium(model, rho, gamma, ip, opts.solver, u0);
  a.ip = ip;
  a.ip.c = a.state.c;
  a.eig = eigen_at_state(model, rho, a.ip, a.state.u, a.state.gamma, opts, &a.tangent, &a.mass);
  return a;
}

}  // namespace stabopt
