#include "flowsac/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "flowsac/errors.hpp"

namespace flowsac {

namespace {

Matrix symmetrize(const Matrix& m) {
  Matrix s(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      s(i, j) = 0.5 * (m(i, j) + m(j, i));
  return s;
}

// R + gamma B'PB, the action-space curvature that recurs everywhere.
Matrix action_curvature(const Matrix& B, const Matrix& R, const Matrix& P,
                        double gamma) {
  return R + gamma * matmul(matmul(B.transpose(), P), B);
}

void check_stable(const Matrix& A, const Matrix& B, const Matrix& K,
                  double gamma, const char* who) {
  const double radius =
      std::sqrt(gamma) * spectral_radius(A - matmul(B, K), 1e-10);
  if (!(radius < 1.0)) {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "%s: gain is not stabilizing "
                  "(sqrt(gamma) * spectral radius = %.6f >= 1)",
                  who, radius);
    throw numeric_error(buf);
  }
}

}  // namespace

Matrix riccati_fixed_point(const Matrix& A, const Matrix& B, const Matrix& Q,
                           const Matrix& R, double gamma, double tol,
                           int max_iter) {
  Matrix P = Q;
  for (int iter = 0; iter < max_iter; ++iter) {
    // P_next = Q + gamma A'PA - gamma^2 A'PB (R + gamma B'PB)^-1 B'PA
    const Matrix PA = matmul(P, A);
    const Matrix BtPA = matmul(B.transpose(), PA);
    const Matrix gain = solve_spd(action_curvature(B, R, P, gamma), BtPA);
    Matrix next = Q + gamma * matmul(A.transpose(), PA) -
                  (gamma * gamma) * matmul(BtPA.transpose(), gain);
    next = symmetrize(next);
    const double diff = (next - P).frobenius_norm();
    P = std::move(next);
    if (P.frobenius_norm() > 1e100)
      throw numeric_error(
          "riccati iteration diverged; the pair (A, B) is not stabilizable "
          "at this discount");
    if (diff <= tol * std::max(1.0, P.frobenius_norm())) return P;
  }
  throw numeric_error(
      "riccati iteration did not converge; the pair (A, B) may not be "
      "stabilizable at this discount");
}

double riccati_residual(const LqrSystem& sys, const Matrix& P) {
  const Matrix PA = matmul(P, sys.A);
  const Matrix BtPA = matmul(sys.B.transpose(), PA);
  const Matrix gain = solve_spd(action_curvature(sys.B, sys.R, P, sys.gamma),
                                BtPA);
  const Matrix mapped = sys.Q + sys.gamma * matmul(sys.A.transpose(), PA) -
                        (sys.gamma * sys.gamma) *
                            matmul(BtPA.transpose(), gain);
  double residual = 0.0;
  const Matrix diff = mapped - P;
  for (std::size_t k = 0; k < diff.size(); ++k)
    residual = std::max(residual, std::abs(diff.data()[k]));
  return residual;
}

RiccatiSolution riccati_value_iteration(const LqrSystem& sys, double tol,
                                        int max_iter) {
  RiccatiSolution sol;
  sol.P = riccati_fixed_point(sys.A, sys.B, sys.Q, sys.R, sys.gamma, tol,
                              max_iter);
  const Matrix curv = action_curvature(sys.B, sys.R, sol.P, sys.gamma);
  const Matrix BtPA = matmul(matmul(sys.B.transpose(), sol.P), sys.A);
  sol.K = sys.gamma * solve_spd(curv, BtPA);
  sol.sigma = symmetrize((sys.alpha / 2.0) *
                         solve_spd(curv, Matrix::identity(curv.rows())));
  check_stable(sys.A, sys.B, sol.K, sys.gamma, "riccati_value_iteration");
  sol.c = value_offset(sys, sol.P, sol.sigma);
  return sol;
}

RiccatiSolution policy_value(const LqrSystem& sys,
                             const GaussianPolicy& policy, double tol,
                             int max_iter) {
  if (policy.K.rows() != sys.action_dim() ||
      policy.K.cols() != sys.state_dim())
    throw std::invalid_argument("policy_value: gain dimension mismatch");
  check_stable(sys.A, sys.B, policy.K, sys.gamma, "policy_value");

  // P = Q + K'RK + gamma (A - BK)'P(A - BK), a contraction because the
  // closed loop is stable at this discount.
  const Matrix closed = sys.A - matmul(sys.B, policy.K);
  const Matrix fixed_cost =
      sys.Q + matmul(matmul(policy.K.transpose(), sys.R), policy.K);
  Matrix P = fixed_cost;
  for (int iter = 0; iter < max_iter; ++iter) {
    Matrix next =
        fixed_cost +
        sys.gamma * matmul(matmul(closed.transpose(), P), closed);
    next = symmetrize(next);
    const double diff = (next - P).frobenius_norm();
    P = std::move(next);
    if (diff <= tol * std::max(1.0, P.frobenius_norm())) {
      RiccatiSolution sol;
      sol.P = std::move(P);
      sol.K = policy.K;
      sol.sigma = policy.sigma;
      sol.c = value_offset(sys, sol.P, sol.sigma);
      return sol;
    }
  }
  throw numeric_error("policy_value: Lyapunov iteration did not converge");
}

double value_offset(const LqrSystem& sys, const Matrix& P,
                    const Matrix& sigma) {
  const Matrix curv = action_curvature(sys.B, sys.R, P, sys.gamma);
  double c = trace(matmul(curv, sigma)) +
             sys.gamma * trace(matmul(P, sys.sigma_w));
  // A deterministic policy (zero covariance) collects no entropy bonus.
  if (sigma.frobenius_norm() > 0.0)
    c -= sys.alpha * gaussian_entropy(sigma);
  return c / (1.0 - sys.gamma);
}

SoftQCoefficients soft_q_coefficients(const LqrSystem& sys, const Matrix& P,
                                      double c) {
  SoftQCoefficients q;
  q.m_xx = sys.Q + sys.gamma * matmul(matmul(sys.A.transpose(), P), sys.A);
  q.m_uu = action_curvature(sys.B, sys.R, P, sys.gamma);
  q.m_xu = sys.gamma * matmul(matmul(sys.A.transpose(), P), sys.B);
  q.constant = sys.gamma * (c + trace(matmul(P, sys.sigma_w)));
  return q;
}

double soft_q_value(const SoftQCoefficients& coeffs, const Vector& x,
                    const Vector& u) {
  if (x.dim() != coeffs.m_xx.rows() || u.dim() != coeffs.m_uu.rows())
    throw std::invalid_argument("soft_q_value: dimension mismatch");
  return -(x.dot(coeffs.m_xx * x) + u.dot(coeffs.m_uu * u) +
           2.0 * x.dot(coeffs.m_xu * u)) -
         coeffs.constant;
}

GaussianPolicy policy_improve_exact(const LqrSystem& sys, const Matrix& P) {
  const Matrix curv = action_curvature(sys.B, sys.R, P, sys.gamma);
  const Matrix BtPA = matmul(matmul(sys.B.transpose(), P), sys.A);
  Matrix K = sys.gamma * solve_spd(curv, BtPA);
  Matrix sigma = symmetrize((sys.alpha / 2.0) *
                            solve_spd(curv, Matrix::identity(curv.rows())));
  return make_gaussian_policy(std::move(K), std::move(sigma));
}

std::vector<RiccatiSolution> soft_policy_iteration(
    const LqrSystem& sys, const GaussianPolicy& initial, int max_iters,
    double tol) {
  if (max_iters < 0)
    throw std::invalid_argument("soft_policy_iteration: negative iterations");
  std::vector<RiccatiSolution> iterates;
  iterates.push_back(policy_value(sys, initial));
  for (int k = 0; k < max_iters; ++k) {
    const GaussianPolicy improved =
        policy_improve_exact(sys, iterates.back().P);
    const double gain_change =
        (improved.K - iterates.back().K).frobenius_norm();
    iterates.push_back(policy_value(sys, improved));
    if (gain_change <= tol) break;
  }
  return iterates;
}

}  // namespace flowsac
