#include "flowsac/lqr.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "flowsac/errors.hpp"
#include "flowsac/oracle.hpp"
#include "flowsac/parallel.hpp"

namespace flowsac {

namespace {

void require(bool ok, const char* message) {
  if (!ok) throw std::invalid_argument(message);
}

void require_spd(const Matrix& m, const char* name) {
  try {
    (void)cholesky(m);
  } catch (const numeric_error&) {
    throw std::invalid_argument(std::string(name) +
                                " must be symmetric positive definite");
  }
}

Matrix psd_factor(const Matrix& m, const char* name) {
  try {
    return sym_psd_sqrt(m);
  } catch (const numeric_error&) {
    throw std::invalid_argument(std::string(name) +
                                " must be positive semidefinite");
  }
}

}  // namespace

LqrSystem make_lqr_system(Matrix A, Matrix B, Matrix Q, Matrix R,
                          Matrix sigma_w, double gamma, double alpha,
                          InitState init) {
  const std::size_t n = A.rows();
  const std::size_t m = B.cols();
  require(n > 0 && A.cols() == n, "A must be square and nonempty");
  require(B.rows() == n && m > 0, "B must have a row per state dimension");
  require(Q.rows() == n && Q.cols() == n, "Q must match the state dimension");
  require(R.rows() == m && R.cols() == m, "R must match the action dimension");
  require(sigma_w.rows() == n && sigma_w.cols() == n,
          "sigma_w must match the state dimension");
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
  require(alpha > 0.0, "alpha must be positive");
  require_spd(Q, "Q");
  require_spd(R, "R");

  LqrSystem sys;
  sys.noise_factor = psd_factor(sigma_w, "sigma_w");
  if (const auto* fixed = std::get_if<Vector>(&init)) {
    require(fixed->dim() == n, "initial state must match the state dimension");
  } else {
    const auto& g = std::get<GaussianInit>(init);
    require(g.mean.dim() == n && g.cov.rows() == n && g.cov.cols() == n,
            "initial distribution must match the state dimension");
    sys.init_cov_factor = psd_factor(g.cov, "initial covariance");
  }
  sys.A = std::move(A);
  sys.B = std::move(B);
  sys.Q = std::move(Q);
  sys.R = std::move(R);
  sys.sigma_w = std::move(sigma_w);
  sys.gamma = gamma;
  sys.alpha = alpha;
  sys.init = std::move(init);

  // Stabilizability probe: the discounted Riccati iteration diverges or
  // stalls exactly when no stabilizing gain exists at this discount.
  (void)riccati_fixed_point(sys.A, sys.B, sys.Q, sys.R, sys.gamma, 1e-9,
                            100000);
  return sys;
}

Vector draw_init_state(const LqrSystem& sys, Rng& rng) {
  if (const auto* fixed = std::get_if<Vector>(&sys.init)) return *fixed;
  const auto& g = std::get<GaussianInit>(sys.init);
  Vector z(sys.state_dim());
  for (std::size_t i = 0; i < z.dim(); ++i) z[i] = rng.normal();
  return g.mean + sys.init_cov_factor * z;
}

Transition env_step(const LqrSystem& sys, const Vector& x, const Vector& u,
                    Rng& rng) {
  if (x.dim() != sys.state_dim())
    throw std::invalid_argument("env_step: state dimension mismatch");
  if (u.dim() != sys.action_dim())
    throw std::invalid_argument("env_step: action dimension mismatch");
  if (!x.all_finite() || !u.all_finite())
    throw numeric_error("env_step: non-finite state or action");

  Transition t;
  t.r = -(x.dot(sys.Q * x) + u.dot(sys.R * u));
  Vector z(sys.state_dim());
  for (std::size_t i = 0; i < z.dim(); ++i) z[i] = rng.normal();
  t.x_next = sys.A * x + sys.B * u + sys.noise_factor * z;
  if (!t.x_next.all_finite() || !std::isfinite(t.r))
    throw numeric_error("env_step: transition produced non-finite values");
  t.x = x;
  t.u = u;
  return t;
}

GaussianPolicy make_gaussian_policy(Matrix K, Matrix sigma) {
  if (K.rows() != sigma.rows() || sigma.rows() != sigma.cols())
    throw std::invalid_argument(
        "gaussian policy: sigma must be square with a row per action");
  GaussianPolicy p;
  p.noise_factor = psd_factor(sigma, "action covariance");
  p.K = std::move(K);
  p.sigma = std::move(sigma);
  return p;
}

Vector sample_gaussian_action(const GaussianPolicy& policy, const Vector& x,
                              Rng& rng) {
  if (x.dim() != policy.K.cols())
    throw std::invalid_argument("gaussian policy: state dimension mismatch");
  Vector z(policy.K.rows());
  for (std::size_t i = 0; i < z.dim(); ++i) z[i] = rng.normal();
  Vector u = policy.noise_factor * z;
  const Vector mean = policy.K * x;
  for (std::size_t i = 0; i < u.dim(); ++i) u[i] -= mean[i];
  return u;
}

double gaussian_entropy(const Matrix& sigma) {
  // 1/2 log det(2 pi e sigma)
  constexpr double kLog2PiE = 2.8378770664093454835606594728112;
  return 0.5 * (static_cast<double>(sigma.rows()) * kLog2PiE +
                logdet_spd(sigma));
}

MeanStderr discounted_return(const LqrSystem& sys,
                             const ActionSampler& sample_action, int horizon,
                             std::size_t n_traj, const Rng& rng,
                             const EntropyFn& entropy_fn) {
  if (horizon < 1)
    throw std::invalid_argument("discounted_return: horizon must be >= 1");
  if (n_traj < 2)
    throw std::invalid_argument(
        "discounted_return: need at least two trajectories");

  std::vector<double> returns(n_traj);
  parallel_for(static_cast<std::int64_t>(n_traj), [&](std::int64_t t) {
    Rng child = rng.split(static_cast<std::uint64_t>(t));
    Vector x = draw_init_state(sys, child);
    double total = 0.0;
    double disc = 1.0;
    for (int step = 0; step < horizon; ++step) {
      const Vector u = sample_action(x, child);
      const Transition tr = env_step(sys, x, u, child);
      double reward = tr.r;
      if (entropy_fn) reward += sys.alpha * entropy_fn(x);
      total += disc * reward;
      disc *= sys.gamma;
      x = tr.x_next;
    }
    returns[static_cast<std::size_t>(t)] = total;
  });
  return mean_stderr(returns);
}

double w2_gaussians(const Vector& mu1, const Matrix& sigma1,
                    const Vector& mu2, const Matrix& sigma2) {
  if (mu1.dim() != mu2.dim() || sigma1.rows() != mu1.dim() ||
      sigma2.rows() != mu2.dim())
    throw std::invalid_argument("w2_gaussians: dimension mismatch");
  const Matrix root2 = sym_psd_sqrt(sigma2);
  const Matrix cross = sym_psd_sqrt(matmul(matmul(root2, sigma1), root2));
  double d2 = (mu1 - mu2).sq_norm() + trace(sigma1) + trace(sigma2) -
              2.0 * trace(cross);
  return std::sqrt(std::max(0.0, d2));
}

Renyi4Estimate renyi4_mc(const LogDensity& log_p, const LogDensity& log_q,
                         const std::function<Vector(Rng&)>& sample_q,
                         std::size_t n, const Rng& rng) {
  if (n < 2)
    throw std::invalid_argument("renyi4_mc: need at least two samples");

  std::vector<double> s(n);
  parallel_for(static_cast<std::int64_t>(n), [&](std::int64_t i) {
    Rng child = rng.split(static_cast<std::uint64_t>(i));
    const Vector x = sample_q(child);
    const double lp = log_p(x), lq = log_q(x);
    if (!std::isfinite(lp) || !std::isfinite(lq))
      throw numeric_error("renyi4_mc: non-finite log density");
    s[static_cast<std::size_t>(i)] = 4.0 * (lp - lq);
  });

  double max_s = s[0];
  for (double v : s) max_s = std::max(max_s, v);
  double sum_r = 0.0, sum_r2 = 0.0;
  for (double v : s) {
    const double r = std::exp(v - max_s);
    sum_r += r;
    sum_r2 += r * r;
  }
  const double nd = static_cast<double>(n);
  const double mean_r = sum_r / nd;
  double var_r = 0.0;
  for (double v : s) {
    const double d = std::exp(v - max_s) - mean_r;
    var_r += d * d;
  }
  var_r /= (nd - 1.0);

  Renyi4Estimate out;
  out.value = (max_s + std::log(mean_r)) / 3.0;
  // Delta method on log of the sample mean, divided by the Renyi order - 1.
  out.std_error = std::sqrt(var_r / nd) / (mean_r * 3.0);
  out.ess = (sum_r * sum_r) / sum_r2;
  out.divergent = out.ess < 1e-3 * nd;
  return out;
}

}  // namespace flowsac
