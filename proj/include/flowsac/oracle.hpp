#pragma once

#include <vector>

#include "flowsac/lqr.hpp"

namespace flowsac {

// Closed-form solutions for the entropy-regularized discounted LQR.  These
// are the ground truth that learned policies and critics are measured
// against, so everything here is exact linear algebra plus fixed-point
// iterations with tight tolerances.

// Value functions are V(x) = -x'P x - c; policies are Gaussian with mean
// -K x and covariance sigma.
struct RiccatiSolution {
  Matrix P;
  Matrix K;
  Matrix sigma;
  double c = 0.0;
};

// Fixed point of the discounted Riccati map
//   P <- Q + gamma A'PA - gamma^2 A'PB (R + gamma B'PB)^-1 B'PA
// starting from P = Q.  Only the matrices are involved; used by system
// validation before an LqrSystem exists.
Matrix riccati_fixed_point(const Matrix& A, const Matrix& B, const Matrix& Q,
                           const Matrix& R, double gamma, double tol = 1e-12,
                           int max_iter = 100000);

// Largest absolute entry of riccati_map(P) - P; zero exactly at the fixed
// point, so this certifies a computed P*.
double riccati_residual(const LqrSystem& sys, const Matrix& P);

// Optimal entropy-regularized solution: P* from the Riccati fixed point and
//   K* = gamma (R + gamma B'P*B)^-1 B'P*A,
//   sigma* = (alpha/2) (R + gamma B'P*B)^-1,
// with the value offset c*.  Verifies sqrt(gamma) * rho(A - BK*) < 1.
RiccatiSolution riccati_value_iteration(const LqrSystem& sys,
                                        double tol = 1e-12,
                                        int max_iter = 100000);

// Value of a fixed Gaussian policy: solve the Lyapunov equation
//   P = Q + K'RK + gamma (A - BK)'P(A - BK)
// by iteration and attach the offset c.  Errors if
// sqrt(gamma) * rho(A - BK) >= 1, reporting the radius.
RiccatiSolution policy_value(const LqrSystem& sys,
                             const GaussianPolicy& policy, double tol = 1e-12,
                             int max_iter = 100000);

// Offset of the value function for quadratic coefficient P and action
// covariance sigma:
//   c = [tr((R + gamma B'PB) sigma) - alpha H(sigma) + gamma tr(P Sigma_w)]
//       / (1 - gamma),
// where H is the Gaussian entropy.  With a zero covariance the entropy term
// is dropped (the policy is deterministic and earns no entropy bonus).
double value_offset(const LqrSystem& sys, const Matrix& P,
                    const Matrix& sigma);

// Soft action-value of the policy behind (P, c):
//   Q(x, u) = -(x'M_xx x + u'M_uu u + 2 x'M_xu u) - constant,
// with M_xx = Q + gamma A'PA, M_uu = R + gamma B'PB, M_xu = gamma A'PB and
// constant = gamma (c + tr(P Sigma_w)).
struct SoftQCoefficients {
  Matrix m_xx, m_uu, m_xu;
  double constant = 0.0;
};

SoftQCoefficients soft_q_coefficients(const LqrSystem& sys, const Matrix& P,
                                      double c);
double soft_q_value(const SoftQCoefficients& coeffs, const Vector& x,
                    const Vector& u);

// Exact soft policy improvement: the Boltzmann policy of the soft Q above
// is Gaussian with
//   K+ = gamma (R + gamma B'PB)^-1 B'PA,  sigma+ = (alpha/2) (R + gamma B'PB)^-1.
GaussianPolicy policy_improve_exact(const LqrSystem& sys, const Matrix& P);

// Alternate exact evaluation and improvement from a stabilizing start.
// Element k holds the value of the k-th policy (element 0 evaluates the
// initial policy).  Stops after max_iters improvements or when the gain
// change drops below tol in Frobenius norm.
std::vector<RiccatiSolution> soft_policy_iteration(
    const LqrSystem& sys, const GaussianPolicy& initial, int max_iters,
    double tol = 1e-12);

}  // namespace flowsac
