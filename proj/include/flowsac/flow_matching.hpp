#pragma once

#include <cstdint>
#include <vector>

#include "flowsac/flow.hpp"
#include "flowsac/linalg.hpp"
#include "flowsac/net.hpp"
#include "flowsac/rng.hpp"

namespace flowsac {

// Conditional flow matching with straight-line (constant-velocity) paths:
// given a data point u1 and noise eps, the point on the path at time tau is
// tau*u1 + (1-tau)*eps and the regression target is the constant velocity
// u1 - eps.  The importance-sampled variant reweights samples so a flow can
// be fit to a distribution only accessible through a proposal.

struct CondOtSample {
  Vector u_tau;   // tau*u1 + (1-tau)*eps
  Vector target;  // u1 - eps
  double tau = 0.0;
};

// Requires tau in [0, 1) and matching dimensions.
CondOtSample condot_pair(const Vector& u1, const Vector& eps, double tau);

// Path times are drawn uniformly from [0, 1 - 1e-3]; the endpoint is
// excluded so the regression never conditions exactly on the data point.
inline constexpr double kCondOtTauMax = 1.0 - 1e-3;

// Self-normalized weights w_i proportional to exp(q_i/alpha - log_pi_i).
// The exponents are shifted by their maximum and clamped to [-40, 0] before
// exponentiation, so the output is finite, nonnegative and sums to one.
std::vector<double> importance_weights(const std::vector<double>& q_values,
                                       const std::vector<double>& log_pi,
                                       double alpha);

struct WeightedAction {
  Vector action;
  double weight = 0.0;
};

// One state with candidate actions and normalized weights.
struct WeightedBatch {
  Vector x;
  std::vector<WeightedAction> items;
};

// Validates dimensions and that weights are nonnegative, sum to one within
// 1e-9, and are not all zero.
WeightedBatch make_weighted_batch(Vector x, std::vector<Vector> actions,
                                  std::vector<double> weights);

struct LossGrad {
  double loss = 0.0;
  GradientBundle grad;
};

// One sample's flow-matching term: average over mc_pairs draws of
// ||v_theta(x, tau, u_tau) - (u1 - eps)||^2, with eps ~ N(0, I) and tau
// uniform on [0, kCondOtTauMax], drawn from sample_rng in that order per
// pair.  The gradient, scaled by `weight`, is accumulated into accum; the
// returned value is unweighted.
double condot_term(const MlpParams& theta, const Vector& x, const Vector& u1,
                   int mc_pairs, Rng& sample_rng, double weight,
                   GradientBundle& accum);

// Mean flow-matching loss over equally weighted actions at one state.
// Sample i draws from rng.split(i), so results are reproducible and
// independent of thread count.
LossGrad fm_loss(const MlpParams& theta, const Vector& x,
                 const std::vector<Vector>& actions, int mc_pairs,
                 const Rng& rng);

// Importance-weighted flow-matching loss sum_i w_i * term_i.  With uniform
// weights 1/n this reproduces fm_loss bitwise (same child streams, same
// arithmetic).  Zero-weight items are skipped entirely.
LossGrad isfm_loss(const MlpParams& theta, const WeightedBatch& batch,
                   int mc_pairs, const Rng& rng);

// A self-contained one-dimensional fitting problem used by the benchmark
// command and the end-to-end checks: fit a state-free flow to
// N(target_mean, target_var) given only draws from
// N(sampling_mean, sampling_sigma^2), reweighted by exact density ratios.
struct StaticIsfmSpec {
  double target_mean = 1.0;
  double target_var = 0.25;
  double sampling_mean = 0.0;
  double sampling_sigma = 1.0;
  std::size_t n_samples = 256;
  int train_steps = 2000;
  int mc_pairs = 4;
  std::size_t hidden_width = 16;
  std::size_t hidden_layers = 2;
  double learning_rate = 3e-3;
  int ode_steps = 64;            // used when sampling the fitted flow
  std::size_t eval_samples = 10000;
  std::uint64_t seed = 0;
};

struct StaticIsfmResult {
  FlowPolicy policy;  // state_dim = 0
  double fitted_mean = 0.0;
  double fitted_std = 0.0;
  double w2 = 0.0;         // 1-dim Wasserstein-2 distance to the target
  double weight_ess = 0.0;  // effective sample size of the weights
  double final_loss = 0.0;
};

StaticIsfmResult train_static_isfm(const StaticIsfmSpec& spec);

struct IsfmBenchConfig {
  // Target and training settings; n_samples, sampling_sigma and seed are
  // overridden per sweep cell.
  StaticIsfmSpec base;
  std::vector<std::size_t> n_values{64, 256, 1024};
  std::vector<double> sampling_sigmas{1.0, 2.0, 4.0};
  std::size_t n_seeds = 5;
  std::size_t d4_samples = 20000;  // Monte Carlo draws for the divergence
  std::uint64_t seed = 0;
};

struct IsfmBenchCell {
  std::size_t n_samples = 0;
  double sampling_sigma = 1.0;
  // Renyi-4 divergence of the target from the proposal; the theory predicts
  // the weighted fit degrades like exp(3 D4 / 4) / sqrt(N).
  double d4 = 0.0;
  bool d4_divergent = false;  // estimator ESS collapsed; value untrustworthy
  double mean_w2sq = 0.0;     // across seeds
  double std_w2sq = 0.0;
  double mean_w2 = 0.0;
};

// Full sweep: for every (sampling width, N) cell, train n_seeds fresh flows
// and aggregate the squared Wasserstein-2 error against the analytic
// target.  Rows are ordered width-major, then N ascending.
std::vector<IsfmBenchCell> run_isfm_bench(const IsfmBenchConfig& cfg);

}  // namespace flowsac
