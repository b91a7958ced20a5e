#pragma once

#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include "flowsac/linalg.hpp"
#include "flowsac/rng.hpp"
#include "flowsac/stats.hpp"

namespace flowsac {

// Discounted linear-quadratic control with additive Gaussian noise,
//
//   x' = A x + B u + w,   w ~ N(0, Sigma_w),   r(x, u) = -(x'Q x + u'R u),
//
// under the entropy-regularized objective
// J = E sum_t gamma^t (r_t + alpha * H(pi(.|x_t))).

struct GaussianInit {
  Vector mean;
  Matrix cov;
};

using InitState = std::variant<Vector, GaussianInit>;

struct LqrSystem {
  Matrix A, B, Q, R;
  Matrix sigma_w;
  double gamma = 0.9;
  double alpha = 1.0;
  InitState init;

  // cached factors (filled by make_lqr_system)
  Matrix noise_factor;      // sym_psd_sqrt(sigma_w)
  Matrix init_cov_factor;   // sym_psd_sqrt(init cov) for Gaussian inits

  std::size_t state_dim() const { return A.rows(); }
  std::size_t action_dim() const { return B.cols(); }
};

// Validates shapes, positive definiteness of Q and R, positive
// semidefiniteness of sigma_w, gamma in (0, 1), alpha > 0, and that the
// discounted Riccati iteration converges (i.e. the pair (A, B) is
// stabilizable at this discount).
LqrSystem make_lqr_system(Matrix A, Matrix B, Matrix Q, Matrix R,
                          Matrix sigma_w, double gamma, double alpha,
                          InitState init);

Vector draw_init_state(const LqrSystem& sys, Rng& rng);

struct Transition {
  Vector x;
  Vector u;
  double r = 0.0;
  Vector x_next;
};

Transition env_step(const LqrSystem& sys, const Vector& x, const Vector& u,
                    Rng& rng);

// Linear-Gaussian policy u = -K x + xi, xi ~ N(0, sigma).
struct GaussianPolicy {
  Matrix K;
  Matrix sigma;
  Matrix noise_factor;  // cached sym_psd_sqrt(sigma)
};

GaussianPolicy make_gaussian_policy(Matrix K, Matrix sigma);

Vector sample_gaussian_action(const GaussianPolicy& policy, const Vector& x,
                              Rng& rng);

// Differential entropy of N(mu, sigma): d/2 log(2 pi e) + 1/2 log det sigma.
double gaussian_entropy(const Matrix& sigma);

using ActionSampler = std::function<Vector(const Vector& x, Rng& rng)>;
using EntropyFn = std::function<double(const Vector& x)>;

// Monte Carlo estimate of the discounted return over n_traj independent
// rollouts of the given horizon.  If entropy_fn is set, each step adds
// alpha * entropy_fn(x_t) to the reward.  Trajectory t uses the child
// stream rng.split(t), so the estimate is independent of thread count.
MeanStderr discounted_return(const LqrSystem& sys,
                             const ActionSampler& sample_action, int horizon,
                             std::size_t n_traj, const Rng& rng,
                             const EntropyFn& entropy_fn = nullptr);

// Wasserstein-2 distance between Gaussians:
//   W2^2 = |mu1 - mu2|^2 + tr(s1 + s2 - 2 (s2^1/2 s1 s2^1/2)^1/2).
double w2_gaussians(const Vector& mu1, const Matrix& sigma1,
                    const Vector& mu2, const Matrix& sigma2);

// Monte Carlo Renyi divergence of order 4,
//   D4(p || q) = (1/3) log E_q[(p/q)^4],
// from n draws of q, computed with a log-sum-exp shift.  The estimator has
// finite variance only if p^4/q^3 is integrable; when the effective sample
// size of the ratio weights collapses below 1e-3 * n the estimate is
// flagged divergent and should not be trusted.
struct Renyi4Estimate {
  double value = 0.0;
  double std_error = 0.0;
  double ess = 0.0;
  bool divergent = false;
};

using LogDensity = std::function<double(const Vector&)>;

Renyi4Estimate renyi4_mc(const LogDensity& log_p, const LogDensity& log_q,
                         const std::function<Vector(Rng&)>& sample_q,
                         std::size_t n, const Rng& rng);

}  // namespace flowsac
