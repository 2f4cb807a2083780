#include "stabopt/mma.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "stabopt/errors.hpp"

namespace stabopt {

namespace {

using Eigen::MatrixXd;

// Subproblem data: constraint i reads
//   sum_j P_ij/(upp_j-x_j) + Q_ij/(x_j-low_j) + R_ij x_j - a_i z - y_i <= b_i
struct Subproblem {
  int n, m;
  Vec low, upp, alfa, beta, p0, q0;
  MatrixXd P, Q, R;
  double a0;
  Vec a, b, c, d;
  double epsimin;
};

struct State {
  Vec x, y, lam, xsi, eta, mu, s;
  double z, zet;
};

Vec residual(const Subproblem& sp, const State& v, double epsi) {
  const int n = sp.n, m = sp.m;
  Vec ux1 = sp.upp - v.x, xl1 = v.x - sp.low;
  Vec plam = sp.p0 + sp.P.transpose() * v.lam;
  Vec qlam = sp.q0 + sp.Q.transpose() * v.lam;
  Vec gvec = sp.P * ux1.cwiseInverse() + sp.Q * xl1.cwiseInverse() + sp.R * v.x;
  Vec dpsidx = plam.cwiseQuotient(ux1.cwiseAbs2()) - qlam.cwiseQuotient(xl1.cwiseAbs2()) +
               sp.R.transpose() * v.lam;
  Vec r(3 * n + 4 * m + 2);
  int k = 0;
  r.segment(k, n) = dpsidx - v.xsi + v.eta;
  k += n;
  r.segment(k, m) = sp.c + sp.d.cwiseProduct(v.y) - v.mu - v.lam;
  k += m;
  r[k++] = sp.a0 - v.zet - sp.a.dot(v.lam);
  r.segment(k, m) = gvec - sp.a * v.z - v.y + v.s - sp.b;
  k += m;
  r.segment(k, n) = v.xsi.cwiseProduct(v.x - sp.alfa) - Vec::Constant(n, epsi);
  k += n;
  r.segment(k, n) = v.eta.cwiseProduct(sp.beta - v.x) - Vec::Constant(n, epsi);
  k += n;
  r.segment(k, m) = v.mu.cwiseProduct(v.y) - Vec::Constant(m, epsi);
  k += m;
  r[k++] = v.zet * v.z - epsi;
  r.segment(k, m) = v.lam.cwiseProduct(v.s) - Vec::Constant(m, epsi);
  return r;
}

State subsolve(const Subproblem& sp, int* iterations) {
  const int n = sp.n, m = sp.m;
  State v;
  v.x = 0.5 * (sp.alfa + sp.beta);
  v.y = Vec::Ones(m);
  v.z = 1;
  v.lam = Vec::Ones(m);
  v.xsi = (v.x - sp.alfa).cwiseInverse().cwiseMax(1.0);
  v.eta = (sp.beta - v.x).cwiseInverse().cwiseMax(1.0);
  v.mu = (0.5 * sp.c).cwiseMax(1.0);
  v.zet = 1;
  v.s = Vec::Ones(m);
  double epsi = 1;
  int itera = 0;
  while (epsi > sp.epsimin) {
    Vec res = residual(sp, v, epsi);
    double resnorm = res.norm();
    double resmax = res.cwiseAbs().maxCoeff();
    int ittt = 0;
    while (resmax > 0.9 * epsi && ittt < 200) {
      ++ittt;
      ++itera;
      Vec ux1 = sp.upp - v.x, xl1 = v.x - sp.low;
      Vec ux2 = ux1.cwiseAbs2(), xl2 = xl1.cwiseAbs2();
      Vec ux3 = ux1.cwiseProduct(ux2), xl3 = xl1.cwiseProduct(xl2);
      Vec plam = sp.p0 + sp.P.transpose() * v.lam;
      Vec qlam = sp.q0 + sp.Q.transpose() * v.lam;
      Vec gvec = sp.P * ux1.cwiseInverse() + sp.Q * xl1.cwiseInverse() + sp.R * v.x;
      MatrixXd GG = sp.P * ux2.cwiseInverse().asDiagonal();
      GG -= sp.Q * xl2.cwiseInverse().asDiagonal();
      GG += sp.R;
      Vec dpsidx = plam.cwiseQuotient(ux2) - qlam.cwiseQuotient(xl2) + sp.R.transpose() * v.lam;
      Vec xa = v.x - sp.alfa, bx = sp.beta - v.x;
      Vec delx = dpsidx - epsi * xa.cwiseInverse() + epsi * bx.cwiseInverse();
      Vec dely = sp.c + sp.d.cwiseProduct(v.y) - v.lam - epsi * v.y.cwiseInverse();
      double delz = sp.a0 - sp.a.dot(v.lam) - epsi / v.z;
      Vec dellam = gvec - sp.a * v.z - v.y - sp.b + epsi * v.lam.cwiseInverse();
      Vec diagx = 2 * (plam.cwiseQuotient(ux3) + qlam.cwiseQuotient(xl3)) +
                  v.xsi.cwiseQuotient(xa) + v.eta.cwiseQuotient(bx);
      Vec diagy = sp.d + v.mu.cwiseQuotient(v.y);
      Vec diaglamyi = v.s.cwiseQuotient(v.lam) + diagy.cwiseInverse();
      Vec dx, dlam;
      double dz;
      if (m < n) {
        Vec blam = dellam + dely.cwiseQuotient(diagy) - GG * delx.cwiseQuotient(diagx);
        MatrixXd AA(m + 1, m + 1);
        AA.topLeftCorner(m, m) = GG * diagx.cwiseInverse().asDiagonal() * GG.transpose();
        AA.topLeftCorner(m, m).diagonal() += diaglamyi;
        AA.topRightCorner(m, 1) = sp.a;
        AA.bottomLeftCorner(1, m) = sp.a.transpose();
        AA(m, m) = -v.zet / v.z;
        Vec bb(m + 1);
        bb << blam, delz;
        Vec sol = AA.partialPivLu().solve(bb);
        dlam = sol.head(m);
        dz = sol[m];
        dx = -delx.cwiseQuotient(diagx) - (GG.transpose() * dlam).cwiseQuotient(diagx);
      } else {
        Vec dli = diaglamyi.cwiseInverse();
        Vec dellamyi = dellam + dely.cwiseQuotient(diagy);
        MatrixXd Axx = GG.transpose() * dli.asDiagonal() * GG;
        Axx.diagonal() += diagx;
        const double azz = v.zet / v.z + sp.a.dot(sp.a.cwiseProduct(dli));
        Vec axz = -GG.transpose() * sp.a.cwiseProduct(dli);
        Vec bxv = delx + GG.transpose() * dellamyi.cwiseProduct(dli);
        const double bz = delz - sp.a.dot(dellamyi.cwiseProduct(dli));
        MatrixXd AA(n + 1, n + 1);
        AA.topLeftCorner(n, n) = Axx;
        AA.topRightCorner(n, 1) = axz;
        AA.bottomLeftCorner(1, n) = axz.transpose();
        AA(n, n) = azz;
        Vec bb(n + 1);
        bb << -bxv, -bz;
        Vec sol = AA.partialPivLu().solve(bb);
        dx = sol.head(n);
        dz = sol[n];
        dlam = (GG * dx).cwiseProduct(dli) - dz * sp.a.cwiseProduct(dli) + dellamyi.cwiseProduct(dli);
      }
      Vec dy = -dely.cwiseQuotient(diagy) + dlam.cwiseQuotient(diagy);
      Vec dxsi = -v.xsi + epsi * xa.cwiseInverse() - v.xsi.cwiseProduct(dx).cwiseQuotient(xa);
      Vec deta = -v.eta + epsi * bx.cwiseInverse() + v.eta.cwiseProduct(dx).cwiseQuotient(bx);
      Vec dmu = -v.mu + epsi * v.y.cwiseInverse() - v.mu.cwiseProduct(dy).cwiseQuotient(v.y);
      double dzet = -v.zet + epsi / v.z - v.zet * dz / v.z;
      Vec ds = -v.s + epsi * v.lam.cwiseInverse() - v.s.cwiseProduct(dlam).cwiseQuotient(v.lam);

      double stm = 1.0;
      auto upd = [&stm](const Vec& val, const Vec& dv) {
        for (int i = 0; i < val.size(); ++i) stm = std::max(stm, -1.01 * dv[i] / val[i]);
      };
      upd(v.y, dy);
      upd(v.lam, dlam);
      upd(v.xsi, dxsi);
      upd(v.eta, deta);
      upd(v.mu, dmu);
      upd(v.s, ds);
      stm = std::max({stm, -1.01 * dz / v.z, -1.01 * dzet / v.zet});
      for (int i = 0; i < n; ++i) {
        stm = std::max(stm, -1.01 * dx[i] / xa[i]);
        stm = std::max(stm, 1.01 * dx[i] / bx[i]);
      }
      double steg = 1.0 / stm;
      const State old = v;
      double resinew = 2 * resnorm;
      int itto = 0;
      while (resinew > resnorm && itto < 50) {
        ++itto;
        v.x = old.x + steg * dx;
        v.y = old.y + steg * dy;
        v.z = old.z + steg * dz;
        v.lam = old.lam + steg * dlam;
        v.xsi = old.xsi + steg * dxsi;
        v.eta = old.eta + steg * deta;
        v.mu = old.mu + steg * dmu;
        v.zet = old.zet + steg * dzet;
        v.s = old.s + steg * ds;
        res = residual(sp, v, epsi);
        resinew = res.norm();
        steg /= 2;
      }
      resnorm = resinew;
      resmax = res.cwiseAbs().maxCoeff();
    }
    epsi *= 0.1;
  }
  if (iterations) *iterations = itera;
  return v;
}

}  // namespace

MmaSolver::MmaSolver(int n, int m, const MmaSettings& settings)
    : n_(n), m_(m), set_(settings), linear_(m, 0) {
  if (n < 1 || m < 0) throw InputError("MMA: invalid problem size");
}

void MmaSolver::reset() { iter_ = 0; }

MmaResult MmaSolver::update(const Vec& x, const Vec& xmin, const Vec& xmax, double f0,
                            const Vec& df0, const Vec& fval, const Eigen::MatrixXd& dfdx) {
  (void)f0;
  if (x.size() != n_ || df0.size() != n_ || fval.size() != m_ || dfdx.rows() != m_ ||
      dfdx.cols() != n_)
    throw InputError("MMA: argument sizes do not match the problem");
  if (!df0.allFinite() || !fval.allFinite() || !dfdx.allFinite())
    throw InputError("MMA: non-finite function values or gradients");
  if ((xmax - xmin).minCoeff() < 0) throw InputError("MMA: invalid bounds");
  ++iter_;
  const Vec range = xmax - xmin;
  if (iter_ <= 2) {
    low_ = x - set_.asyinit * range;
    upp_ = x + set_.asyinit * range;
  } else {
    for (int j = 0; j < n_; ++j) {
      const double zzz = (x[j] - xold1_[j]) * (xold1_[j] - xold2_[j]);
      const double f = zzz > 0 ? set_.asyincr : (zzz < 0 ? set_.asydecr : 1.0);
      double lo = x[j] - f * (xold1_[j] - low_[j]);
      double up = x[j] + f * (upp_[j] - xold1_[j]);
      lo = std::clamp(lo, x[j] - 10 * range[j], x[j] - set_.asymin * range[j]);
      up = std::clamp(up, x[j] + set_.asymin * range[j], x[j] + 10 * range[j]);
      low_[j] = lo;
      upp_[j] = up;
    }
  }
  Subproblem sp;
  sp.n = n_;
  sp.m = m_;
  sp.low = low_;
  sp.upp = upp_;
  sp.alfa.resize(n_);
  sp.beta.resize(n_);
  for (int j = 0; j < n_; ++j) {
    sp.alfa[j] = std::max({low_[j] + set_.albefa * (x[j] - low_[j]), x[j] - set_.move * range[j], xmin[j]});
    sp.beta[j] = std::min({upp_[j] - set_.albefa * (upp_[j] - x[j]), x[j] + set_.move * range[j], xmax[j]});
  }
  const Vec xmamiinv = range.cwiseMax(1e-5).cwiseInverse();
  const Vec ux1 = upp_ - x, xl1 = x - low_;
  const Vec ux2 = ux1.cwiseAbs2(), xl2 = xl1.cwiseAbs2();
  Vec p0 = df0.cwiseMax(0.0), q0 = (-df0).cwiseMax(0.0);
  const Vec pq0 = 0.001 * (p0 + q0) + set_.raa0 * xmamiinv;
  sp.p0 = (p0 + pq0).cwiseProduct(ux2);
  sp.q0 = (q0 + pq0).cwiseProduct(xl2);
  sp.P = Eigen::MatrixXd::Zero(m_, n_);
  sp.Q = Eigen::MatrixXd::Zero(m_, n_);
  sp.R = Eigen::MatrixXd::Zero(m_, n_);
  sp.b.resize(m_);
  for (int i = 0; i < m_; ++i) {
    if (i < static_cast<int>(linear_.size()) && linear_[i]) {
      sp.R.row(i) = dfdx.row(i);
      sp.b[i] = dfdx.row(i).dot(x) - fval[i];
      continue;
    }
    for (int j = 0; j < n_; ++j) {
      const double g = dfdx(i, j);
      const double p = std::max(g, 0.0), q = std::max(-g, 0.0);
      const double pq = 0.001 * (p + q) + set_.raa0 * xmamiinv[j];
      sp.P(i, j) = (p + pq) * ux2[j];
      sp.Q(i, j) = (q + pq) * xl2[j];
    }
    sp.b[i] = sp.P.row(i).dot(ux1.cwiseInverse()) + sp.Q.row(i).dot(xl1.cwiseInverse()) - fval[i];
  }
  sp.a0 = set_.a0;
  sp.a = Vec::Constant(m_, set_.a);
  sp.c = Vec::Constant(m_, set_.c);
  sp.d = Vec::Constant(m_, set_.d);
  sp.epsimin = set_.epsimin;

  MmaResult r;
  if (m_ == 0) {
    // add a slack constraint that is never active
    sp.m = 1;
    sp.P = Eigen::MatrixXd::Zero(1, n_);
    sp.Q = Eigen::MatrixXd::Zero(1, n_);
    sp.R = Eigen::MatrixXd::Zero(1, n_);
    sp.b = Vec::Constant(1, 1.0);
    sp.a = Vec::Zero(1);
    sp.c = Vec::Constant(1, set_.c);
    sp.d = Vec::Constant(1, set_.d);
  }
  State v = subsolve(sp, &r.inner_iterations);
  xold2_ = iter_ >= 2 ? xold1_ : x;
  xold1_ = x;
  r.x = v.x.cwiseMax(xmin).cwiseMin(xmax);
  r.y = v.y.head(m_);
  r.z = v.z;
  r.lam = v.lam.head(m_);
  r.xsi = v.xsi;
  r.eta = v.eta;
  r.mu = v.mu.head(m_);
  r.zet = v.zet;
  r.s = v.s.head(m_);
  return r;
}

double mma_kkt_residual(const MmaResult& r, const Vec& xmin, const Vec& xmax, const Vec& df0,
                        const Vec& fval, const Eigen::MatrixXd& dfdx, const MmaSettings& s) {
  const int m = static_cast<int>(fval.size());
  Vec rex = df0 + dfdx.transpose() * r.lam - r.xsi + r.eta;
  Vec rey = Vec::Constant(m, s.c) + s.d * r.y - r.mu - r.lam;
  const double rez = s.a0 - r.zet - s.a * r.lam.sum();
  Vec relam = fval - Vec::Constant(m, s.a * r.z) - r.y + r.s;
  Vec rexsi = r.xsi.cwiseProduct(r.x - xmin);
  Vec reeta = r.eta.cwiseProduct(xmax - r.x);
  Vec remu = r.mu.cwiseProduct(r.y);
  const double rezet = r.zet * r.z;
  Vec res = r.lam.cwiseProduct(r.s);
  return std::sqrt(rex.squaredNorm() + rey.squaredNorm() + rez * rez + relam.squaredNorm() +
                   rexsi.squaredNorm() + reeta.squaredNorm() + remu.squaredNorm() + rezet * rezet +
                   res.squaredNorm());
}

}  // namespace stabopt
