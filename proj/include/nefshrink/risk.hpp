#pragma once

#include "nefshrink/families.hpp"
#include "nefshrink/types.hpp"

namespace nefshrink {

// (1/np) sum (estimate_ij - theta_ij)^2.
double loss(const Matrix& theta, const Matrix& estimate);

// Column means of Y.
Vector grand_mean(const DataMatrix& data);

// V(Y_ij) / (tau_ij + nu2), the unbiased estimate of Var(Y_ij).
// Throws std::domain_error if any tau_ij + nu2 <= 0.
Matrix variance_estimates(const DataMatrix& data, const FamilySpec& spec);

// Unbiased risk estimate for shrinkage toward a location mu:
//   (1/np) sum [ b_i^2 (Y_ij - mu_j)^2 + (1 - 2 b_i) V(Y_ij)/(tau_ij + nu2) ].
// Not clamped; may be negative.
double ure(const DataMatrix& data, const Vector& b, const Vector& mu, const FamilySpec& spec);

// Unbiased risk estimate for shrinkage toward the grand mean:
//   (1/np) sum [ b_i^2 (Y_ij - Ybar_j)^2 + (1 - 2(1 - 1/n) b_i) V(Y_ij)/(tau_ij + nu2) ].
// Requires n >= 2.
double aure(const DataMatrix& data, const Vector& b, const FamilySpec& spec);

// Exact risk of the location-shrinkage estimator at fixed (b, mu):
//   (1/np) sum [ b_i^2 (theta_ij - mu_j)^2 + (1 - b_i)^2 V(theta_ij)/tau_ij ].
double true_risk(const Matrix& theta, const Vector& b, const Vector& mu, const FamilySpec& spec,
                 const IntMatrix& tau);

}  // namespace nefshrink
