#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "flowsac/errors.hpp"
#include "flowsac/oracle.hpp"
#include "flowsac/rng.hpp"
#include "test_helpers.hpp"

using namespace flowsac;
using testutil::scalar_system;
using testutil::shift_coupled_system;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      d = std::max(d, std::abs(a(i, j) - b(i, j)));
  return d;
}

// One application of the discounted Riccati map, written independently of
// the library, for residual checks.
Matrix riccati_map(const LqrSystem& sys, const Matrix& P) {
  const Matrix curv =
      sys.R + sys.gamma * matmul(matmul(sys.B.transpose(), P), sys.B);
  const Matrix BtPA = matmul(matmul(sys.B.transpose(), P), sys.A);
  return sys.Q + sys.gamma * matmul(matmul(sys.A.transpose(), P), sys.A) -
         (sys.gamma * sys.gamma) *
             matmul(BtPA.transpose(), solve_spd(curv, BtPA));
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("scalar riccati solution matches the quadratic formula") {
  // 0.9 P^2 - 0.8 P - 1 = 0  =>  P* = (0.8 + sqrt(4.24)) / 1.8
  const double p_star = (0.8 + std::sqrt(4.24)) / 1.8;
  const LqrSystem sys = scalar_system(1.0);
  const RiccatiSolution sol = riccati_value_iteration(sys);
  CHECK(sol.P(0, 0) == doctest::Approx(p_star).epsilon(1e-10));
  CHECK(sol.P(0, 0) == doctest::Approx(1.5884033).epsilon(1e-6));
  CHECK(sol.K(0, 0) == doctest::Approx(p_star - 1.0).epsilon(1e-8));
  CHECK(sol.K(0, 0) == doctest::Approx(0.5884033).epsilon(1e-6));
  CHECK(sol.sigma(0, 0) ==
        doctest::Approx(0.5 / (1.0 + 0.9 * p_star)).epsilon(1e-10));
  CHECK(sol.sigma(0, 0) == doctest::Approx(0.2057981).epsilon(1e-5));

  // Residual at the fixed point.
  CHECK(max_abs_diff(riccati_map(sys, sol.P), sol.P) < 1e-10);
}

TEST_CASE("action covariance scales linearly with alpha; the gain does not") {
  const RiccatiSolution a1 = riccati_value_iteration(scalar_system(1.0));
  const RiccatiSolution a3 = riccati_value_iteration(scalar_system(3.0));
  CHECK(a3.sigma(0, 0) == doctest::Approx(3.0 * a1.sigma(0, 0)).epsilon(1e-10));
  CHECK(a3.K(0, 0) == doctest::Approx(a1.K(0, 0)).epsilon(1e-12));
  CHECK(a3.P(0, 0) == doctest::Approx(a1.P(0, 0)).epsilon(1e-12));
}

TEST_CASE("shift-coupled system: stable optimum with a tiny residual") {
  const LqrSystem sys = shift_coupled_system(1.0);
  const RiccatiSolution sol = riccati_value_iteration(sys);
  CHECK(max_abs_diff(riccati_map(sys, sol.P), sol.P) < 1e-8);
  CHECK(max_abs_diff(sol.P, sol.P.transpose()) == 0.0);
  CHECK(std::sqrt(sys.gamma) *
            spectral_radius(sys.A - matmul(sys.B, sol.K)) < 1.0);
  CHECK(std::isfinite(sol.c));

  // Evaluating the optimal policy reproduces the optimal value function.
  const GaussianPolicy opt = make_gaussian_policy(sol.K, sol.sigma);
  const RiccatiSolution eval = policy_value(sys, opt);
  CHECK(max_abs_diff(eval.P, sol.P) < 1e-8);
  CHECK(eval.c == doctest::Approx(sol.c).epsilon(1e-8));
}

TEST_CASE("fixed-gain evaluation matches the scalar closed form") {
  // K = 0.8: P = (1 + 0.64) / (1 - 0.9 * 0.04) = 1.64 / 0.964
  const LqrSystem sys = scalar_system(1.0);
  const GaussianPolicy pol = make_gaussian_policy(Matrix{{0.8}}, Matrix{{0.1}});
  const RiccatiSolution sol = policy_value(sys, pol);
  CHECK(sol.P(0, 0) == doctest::Approx(1.64 / 0.964).epsilon(1e-10));
  CHECK(sol.P(0, 0) == doctest::Approx(1.7012448).epsilon(1e-6));
}

TEST_CASE("evaluation refuses non-stabilizing gains, reporting the radius") {
  const LqrSystem sys = shift_coupled_system(1.0);
  // K = 0 leaves the open loop: sqrt(0.9) * 1.1 > 1.
  const GaussianPolicy zero =
      make_gaussian_policy(Matrix(5, 5), Matrix::identity(5));
  CHECK_THROWS_WITH_AS(
      (void)policy_value(sys, zero),
      doctest::Contains("not stabilizing"), numeric_error);
}

TEST_CASE("soft q is consistent with the optimal value function") {
  for (const LqrSystem& sys : {scalar_system(1.0), shift_coupled_system(0.7)}) {
    const RiccatiSolution sol = riccati_value_iteration(sys);
    const SoftQCoefficients q = soft_q_coefficients(sys, sol.P, sol.c);
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
      Vector x(sys.state_dim());
      for (std::size_t i = 0; i < x.dim(); ++i) x[i] = rng.normal();
      // E_{u ~ pi*}[Q(x, u)] + alpha H(sigma*) = V*(x) = -x'P*x - c*.
      const Vector mean_u = -1.0 * (sol.K * x);
      const double expected_q =
          soft_q_value(q, x, mean_u) - trace(matmul(q.m_uu, sol.sigma));
      const double lhs = expected_q + sys.alpha * gaussian_entropy(sol.sigma);
      const double rhs = -x.dot(sol.P * x) - sol.c;
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));

      // The mean action maximizes Q(x, .).
      const double at_mean = soft_q_value(q, x, mean_u);
      for (int k = 0; k < 3; ++k) {
        Vector off = mean_u;
        off[static_cast<std::size_t>(k) % off.dim()] += 0.1;
        CHECK(at_mean >= soft_q_value(q, x, off));
      }
    }
  }
}

TEST_CASE("improving on the optimal value returns the optimal policy") {
  const LqrSystem sys = shift_coupled_system(2.0);
  const RiccatiSolution sol = riccati_value_iteration(sys);
  const GaussianPolicy improved = policy_improve_exact(sys, sol.P);
  CHECK(max_abs_diff(improved.K, sol.K) < 1e-9);
  CHECK(max_abs_diff(improved.sigma, sol.sigma) < 1e-9);
}

TEST_CASE("soft policy iteration converges monotonically to the optimum") {
  const LqrSystem sys = scalar_system(1.0);
  const RiccatiSolution target = riccati_value_iteration(sys);
  const GaussianPolicy start =
      make_gaussian_policy(Matrix{{0.9}}, Matrix{{0.3}});
  const auto iterates = soft_policy_iteration(sys, start, 50, 1e-12);
  REQUIRE(iterates.size() >= 2);
  CHECK(max_abs_diff(iterates.back().K, target.K) < 1e-6);
  // Improvement can only shrink the quadratic cost coefficient.
  for (std::size_t k = 0; k + 1 < iterates.size(); ++k) {
    const SymEig gap = sym_eig(iterates[k].P - iterates[k + 1].P);
    CHECK(gap.values[0] >= -1e-9);
  }
}

TEST_CASE("monte carlo returns agree with the closed-form values") {
  // Deterministic optimal policy, no noise: J(x0) = -P* x0^2.
  const double p_star = (0.8 + std::sqrt(4.24)) / 1.8;
  const LqrSystem quiet = scalar_system(1.0, 0.0);
  const double k_star = p_star - 1.0;
  const ActionSampler det = [&](const Vector& x, Rng&) {
    return Vector{-k_star * x[0]};
  };
  const MeanStderr dj = discounted_return(quiet, det, 300, 2, Rng(41));
  CHECK(dj.mean == doctest::Approx(-p_star).epsilon(0.01));
  CHECK(dj.std_err == 0.0);

  // Deterministic gain on the noisy system, no entropy bonus:
  // J = -P* x0^2 - gamma tr(P* Sigma_w)/(1 - gamma).
  const LqrSystem noisy = scalar_system(1.0, 1.0);
  const double c_det = 0.9 * p_star / 0.1;
  const MeanStderr nj = discounted_return(noisy, det, 200, 4000, Rng(43));
  CHECK(nj.mean ==
        doctest::Approx(-p_star - c_det).epsilon(0.02).scale(p_star + c_det));

  // Entropy-regularized return of the optimal stochastic policy matches
  // -x0' P* x0 - c* from the closed-form offset.
  const RiccatiSolution sol = riccati_value_iteration(noisy);
  const GaussianPolicy opt = make_gaussian_policy(sol.K, sol.sigma);
  const ActionSampler stoch = [&](const Vector& x, Rng& rng) {
    return sample_gaussian_action(opt, x, rng);
  };
  const double h = gaussian_entropy(sol.sigma);
  const MeanStderr ej = discounted_return(
      noisy, stoch, 200, 4000, Rng(47), [&](const Vector&) { return h; });
  const double expected = -p_star - sol.c;
  CHECK(ej.mean ==
        doctest::Approx(expected).epsilon(0.02).scale(std::abs(expected)));
  CHECK(std::abs(ej.mean - expected) < 4.0 * ej.std_err + 0.02);
}

TEST_CASE("value offset drops the entropy bonus for deterministic policies") {
  const LqrSystem sys = scalar_system(1.0, 1.0);
  const double p = 2.0;
  // c = [tr((R + gamma B'PB) * 0) + gamma * P * sigma_w] / (1 - gamma)
  CHECK(value_offset(sys, Matrix{{p}}, Matrix{{0.0}}) ==
        doctest::Approx(0.9 * p / 0.1).epsilon(1e-12));
}

}  // TEST_SUITE
