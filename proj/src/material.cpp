#include "stabopt/material.hpp"

#include <Eigen/LU>
#include <cmath>

#include "stabopt/errors.hpp"

namespace stabopt {

namespace {

struct Kinematics {
  double J;
  double Jm23;  // J^{-2/3}
  double I1bar;
  Mat3 G;  // F^{-T}
  Mat3 D;  // d I1bar / dF
};

Kinematics kinematics(const Mat3& F) {
  Kinematics k;
  k.J = F.determinant();
  if (!(k.J > 0)) throw SingularConfigurationError("nonpositive det F");
  k.Jm23 = std::pow(k.J, -2.0 / 3.0);
  k.I1bar = k.Jm23 * F.squaredNorm();
  k.G = F.inverse().transpose();
  k.D = -2.0 / 3.0 * k.I1bar * k.G + 2.0 * k.Jm23 * F;
  return k;
}

inline int i9(int i, int j) { return 3 * i + j; }

}  // namespace

Moduli moduli_from(double E, double nu) {
  return {E / (3.0 * (1.0 - 2.0 * nu)), E / (2.0 * (1.0 + nu))};
}

double simp_modulus(double rho, double E, double p, double eps) {
  return (eps + (1.0 - eps) * std::pow(rho, p)) * E;
}

double simp_modulus_derivative(double rho, double E, double p, double eps) {
  if (rho <= 0.0) return p == 1.0 ? (1.0 - eps) * E : 0.0;
  return p * (1.0 - eps) * std::pow(rho, p - 1.0) * E;
}

double energy_weight(double rho, double beta, double c) {
  double t = beta * (rho - c);
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

double energy_weight_derivative(double rho, double beta, double c) {
  double eta = energy_weight(rho, beta, c);
  return beta * eta * (1.0 - eta);
}

Mat3 embed_plane_strain(const Mat2& F) {
  Mat3 F3 = Mat3::Identity();
  F3.topLeftCorner<2, 2>() = F;
  return F3;
}

double strain_energy(const Mat3& F, const Moduli& m) {
  double J = F.determinant();
  if (!(J > 0)) throw SingularConfigurationError("nonpositive det F");
  double I1bar = std::pow(J, -2.0 / 3.0) * F.squaredNorm();
  return 0.5 * m.kappa * (J - 1.0) * (J - 1.0) + 0.5 * m.mu * (I1bar - 3.0);
}

Mat3 pk1_stress(const Mat3& F, const Moduli& m) {
  Kinematics k = kinematics(F);
  return m.kappa * (k.J - 1.0) * k.J * k.G + 0.5 * m.mu * k.D;
}

Tangent3 tangent_moduli(const Mat3& F, const Moduli& m) {
  Kinematics k = kinematics(F);
  const Mat3& G = k.G;
  const double a = m.kappa * (2.0 * k.J - 1.0) * k.J;
  const double b = -m.kappa * (k.J - 1.0) * k.J + m.mu / 3.0 * k.I1bar;
  Tangent3 A;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int kk = 0; kk < 3; ++kk)
        for (int l = 0; l < 3; ++l) {
          double v = a * G(i, j) * G(kk, l) + b * G(i, l) * G(kk, j);
          v += -m.mu / 3.0 * G(i, j) * k.D(kk, l);
          if (i == kk && j == l) v += m.mu * k.Jm23;
          v += -2.0 / 3.0 * m.mu * k.Jm23 * F(i, j) * G(kk, l);
          A(i9(i, j), i9(kk, l)) = v;
        }
  return A;
}

TangentDerivative3 tangent_moduli_derivative(const Mat3& F, const Moduli& m) {
  Kinematics k = kinematics(F);
  const Mat3& G = k.G;
  const Mat3& D = k.D;
  const double J = k.J, Jm = k.Jm23, I1 = k.I1bar;
  const double kap = m.kappa, mu = m.mu;
  const double a = kap * (2.0 * J - 1.0) * J;
  const double da = kap * (4.0 * J - 1.0) * J;  // times G_pq
  const double b = -kap * (J - 1.0) * J;
  const double db = -kap * (2.0 * J - 1.0) * J;  // times G_pq
  auto d = [](int x, int y) { return x == y ? 1.0 : 0.0; };

  TangentDerivative3 dA;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int kk = 0; kk < 3; ++kk)
        for (int l = 0; l < 3; ++l) {
          const int row = 9 * i9(i, j) + i9(kk, l);
          const double gg = G(i, j) * G(kk, l);
          const double h = G(i, l) * G(kk, j);
          for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q) {
              const double Gpq = G(p, q);
              // d(G_ij G_kl) and d(G_il G_kj) with dG_ab/dF_pq = -G_aq G_pb
              const double dgg = -G(i, q) * G(p, j) * G(kk, l) - G(i, j) * G(kk, q) * G(p, l);
              const double dh = -G(i, q) * G(p, l) * G(kk, j) - G(i, l) * G(kk, q) * G(p, j);
              const double dDkl = -2.0 / 3.0 * D(p, q) * G(kk, l) + 2.0 / 3.0 * I1 * G(kk, q) * G(p, l) +
                                  2.0 * Jm * d(kk, p) * d(l, q) - 4.0 / 3.0 * Jm * F(kk, l) * Gpq;
              double v = da * Gpq * gg + a * dgg;
              v += db * Gpq * h + b * dh;
              v += -mu / 3.0 * (-G(i, q) * G(p, j) * D(kk, l) + G(i, j) * dDkl);
              v += mu / 3.0 * (D(p, q) * h + I1 * dh);
              v += -2.0 / 3.0 * mu * Jm * Gpq * d(i, kk) * d(j, l);
              v += -2.0 / 3.0 * mu * Jm *
                   (-2.0 / 3.0 * Gpq * F(i, j) * G(kk, l) + d(i, p) * d(j, q) * G(kk, l) -
                    F(i, j) * G(kk, q) * G(p, l));
              dA(row, i9(p, q)) = v;
            }
        }
  return dA;
}

Tangent2 restrict_tangent(const Tangent3& A) {
  Tangent2 out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int kk = 0; kk < 2; ++kk)
        for (int l = 0; l < 2; ++l) out(2 * i + j, 2 * kk + l) = A(i9(i, j), i9(kk, l));
  return out;
}

TangentDerivative2 restrict_tangent_derivative(const TangentDerivative3& dA) {
  TangentDerivative2 out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int kk = 0; kk < 2; ++kk)
        for (int l = 0; l < 2; ++l)
          for (int p = 0; p < 2; ++p)
            for (int q = 0; q < 2; ++q)
              out(4 * (2 * i + j) + 2 * kk + l, 2 * p + q) = dA(9 * i9(i, j) + i9(kk, l), i9(p, q));
  return out;
}

Eigen::Matrix3d linear_elasticity_matrix(double E, double nu) {
  const double lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  const double mu = E / (2.0 * (1.0 + nu));
  Eigen::Matrix3d C;
  C << lam + 2 * mu, lam, 0, lam, lam + 2 * mu, 0, 0, 0, mu;
  return C;
}

}  // namespace stabopt
