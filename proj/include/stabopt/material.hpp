#pragma once

#include <Eigen/Core>

namespace stabopt {

using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
// Fourth-order tensors flattened with index 3*i+j (3D) or 2*i+j (in-plane);
// the derivative of a fourth-order tensor has rows (ij,kl) and columns pq.
using Tangent3 = Eigen::Matrix<double, 9, 9>;
using TangentDerivative3 = Eigen::Matrix<double, 81, 9>;
using Tangent2 = Eigen::Matrix<double, 4, 4>;
using TangentDerivative2 = Eigen::Matrix<double, 16, 4>;

struct Moduli {
  double kappa = 0;
  double mu = 0;
};

Moduli moduli_from(double E, double nu);

double simp_modulus(double rho, double E, double p, double eps);
double simp_modulus_derivative(double rho, double E, double p, double eps);

// exp(b*rho) / (exp(b*c) + exp(b*rho)), evaluated without overflow.
double energy_weight(double rho, double beta, double c);
double energy_weight_derivative(double rho, double beta, double c);

// Plane strain embedding: F33 = 1.
Mat3 embed_plane_strain(const Mat2& F);

double strain_energy(const Mat3& F, const Moduli& m);
Mat3 pk1_stress(const Mat3& F, const Moduli& m);
Tangent3 tangent_moduli(const Mat3& F, const Moduli& m);
TangentDerivative3 tangent_moduli_derivative(const Mat3& F, const Moduli& m);

Tangent2 restrict_tangent(const Tangent3& A);
TangentDerivative2 restrict_tangent_derivative(const TangentDerivative3& dA);

// Plane-strain isotropic linear elasticity in Voigt form [e11, e22, 2 e12].
Eigen::Matrix3d linear_elasticity_matrix(double E, double nu);

}  // namespace stabopt
