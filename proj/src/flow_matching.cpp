#include "flowsac/flow_matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "flowsac/errors.hpp"
#include "flowsac/lqr.hpp"
#include "flowsac/parallel.hpp"

namespace flowsac {

CondOtSample condot_pair(const Vector& u1, const Vector& eps, double tau) {
  if (u1.dim() != eps.dim())
    throw std::invalid_argument("condot_pair: dimension mismatch");
  if (!(tau >= 0.0 && tau < 1.0))
    throw std::invalid_argument("condot_pair: tau must lie in [0, 1)");
  CondOtSample s;
  s.tau = tau;
  s.u_tau = Vector(u1.dim());
  s.target = Vector(u1.dim());
  for (std::size_t i = 0; i < u1.dim(); ++i) {
    s.u_tau[i] = tau * u1[i] + (1.0 - tau) * eps[i];
    s.target[i] = u1[i] - eps[i];
  }
  return s;
}

std::vector<double> importance_weights(const std::vector<double>& q_values,
                                       const std::vector<double>& log_pi,
                                       double alpha) {
  if (q_values.empty() || q_values.size() != log_pi.size())
    throw std::invalid_argument(
        "importance_weights: need matching, nonempty inputs");
  if (!(alpha > 0.0))
    throw std::invalid_argument("importance_weights: alpha must be positive");

  const std::size_t n = q_values.size();
  std::vector<double> w(n);
  double max_logw = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(q_values[i]) || !std::isfinite(log_pi[i]))
      throw numeric_error("importance_weights: non-finite input");
    w[i] = q_values[i] / alpha - log_pi[i];
    max_logw = std::max(max_logw, w[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::exp(std::max(w[i] - max_logw, -40.0));
    sum += w[i];
  }
  for (std::size_t i = 0; i < n; ++i) w[i] /= sum;
  return w;
}

WeightedBatch make_weighted_batch(Vector x, std::vector<Vector> actions,
                                  std::vector<double> weights) {
  if (actions.empty() || actions.size() != weights.size())
    throw std::invalid_argument(
        "weighted batch: need matching, nonempty actions and weights");
  const std::size_t d_u = actions.front().dim();
  double sum = 0.0;
  bool any_positive = false;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i].dim() != d_u)
      throw std::invalid_argument("weighted batch: ragged action dimensions");
    if (!(weights[i] >= 0.0))
      throw std::invalid_argument("weighted batch: weights must be >= 0");
    any_positive = any_positive || weights[i] > 0.0;
    sum += weights[i];
  }
  if (!any_positive)
    throw std::invalid_argument("weighted batch: all weights are zero");
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("weighted batch: weights must sum to one");
  WeightedBatch b;
  b.x = std::move(x);
  b.items.resize(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i)
    b.items[i] = {std::move(actions[i]), weights[i]};
  return b;
}

double condot_term(const MlpParams& theta, const Vector& x, const Vector& u1,
                   int mc_pairs, Rng& sample_rng, double weight,
                   GradientBundle& accum) {
  if (mc_pairs < 1)
    throw std::invalid_argument("condot_term: mc_pairs must be >= 1");
  const std::size_t d_x = x.dim();
  const std::size_t d_u = u1.dim();
  if (theta.input_dim() != d_x + 1 + d_u || theta.output_dim() != d_u)
    throw std::invalid_argument("condot_term: network shape mismatch");

  const double inv_mc = 1.0 / mc_pairs;
  const double cot_scale = 2.0 * weight * inv_mc;
  double term = 0.0;
  Vector in(d_x + 1 + d_u);
  for (std::size_t i = 0; i < d_x; ++i) in[i] = x[i];
  for (int m = 0; m < mc_pairs; ++m) {
    // Draw order per pair: eps components, then tau.
    Vector target(d_u);
    Vector eps(d_u);
    for (std::size_t j = 0; j < d_u; ++j) eps[j] = sample_rng.normal();
    const double tau = sample_rng.uniform(0.0, kCondOtTauMax);
    in[d_x] = tau;
    for (std::size_t j = 0; j < d_u; ++j) {
      in[d_x + 1 + j] = tau * u1[j] + (1.0 - tau) * eps[j];
      target[j] = u1[j] - eps[j];
    }
    const std::vector<Vector> acts = mlp_activations(theta, in);
    Vector residual = acts.back();
    residual -= target;
    term += inv_mc * residual.sq_norm();
    residual *= cot_scale;
    mlp_backward_into(theta, acts, residual, accum);
  }
  return term;
}

namespace {

LossGrad weighted_condot_loss(const MlpParams& theta, const Vector& x,
                              const std::vector<const Vector*>& actions,
                              const std::vector<double>& weights, int mc_pairs,
                              const Rng& rng) {
  const std::int64_t n = static_cast<std::int64_t>(actions.size());
  const int chunks =
      static_cast<int>(std::min<std::int64_t>(kReduceChunks, n));
  std::vector<double> part_loss(chunks, 0.0);
  std::vector<GradientBundle> part_grad(chunks);
  for (int c = 0; c < chunks; ++c)
    part_grad[c] = GradientBundle::zeros_like(theta);

  parallel_for(chunks, [&](std::int64_t c) {
    const auto [lo, hi] = chunk_range(n, static_cast<int>(c), chunks);
    for (std::int64_t i = lo; i < hi; ++i) {
      const double w = weights[static_cast<std::size_t>(i)];
      if (w == 0.0) continue;  // zero-weight samples contribute nothing
      Rng child = rng.split(static_cast<std::uint64_t>(i));
      part_loss[c] += w * condot_term(theta, x,
                                      *actions[static_cast<std::size_t>(i)],
                                      mc_pairs, child, w, part_grad[c]);
    }
  });

  LossGrad out;
  out.grad = std::move(part_grad[0]);
  out.loss = part_loss[0];
  for (int c = 1; c < chunks; ++c) {
    out.loss += part_loss[c];
    out.grad.add_scaled(part_grad[c], 1.0);
  }
  if (!std::isfinite(out.loss) || !out.grad.all_finite())
    throw numeric_error("flow-matching loss became non-finite");
  return out;
}

}  // namespace

LossGrad fm_loss(const MlpParams& theta, const Vector& x,
                 const std::vector<Vector>& actions, int mc_pairs,
                 const Rng& rng) {
  if (actions.empty())
    throw std::invalid_argument("fm_loss: need at least one action");
  std::vector<const Vector*> ptrs(actions.size());
  std::vector<double> weights(actions.size(),
                              1.0 / static_cast<double>(actions.size()));
  for (std::size_t i = 0; i < actions.size(); ++i) ptrs[i] = &actions[i];
  return weighted_condot_loss(theta, x, ptrs, weights, mc_pairs, rng);
}

LossGrad isfm_loss(const MlpParams& theta, const WeightedBatch& batch,
                   int mc_pairs, const Rng& rng) {
  if (batch.items.empty())
    throw std::invalid_argument("isfm_loss: empty batch");
  double sum = 0.0;
  std::vector<const Vector*> ptrs(batch.items.size());
  std::vector<double> weights(batch.items.size());
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    if (!(batch.items[i].weight >= 0.0))
      throw std::invalid_argument("isfm_loss: weights must be >= 0");
    ptrs[i] = &batch.items[i].action;
    weights[i] = batch.items[i].weight;
    sum += weights[i];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("isfm_loss: weights must sum to one");
  return weighted_condot_loss(theta, batch.x, ptrs, weights, mc_pairs, rng);
}

StaticIsfmResult train_static_isfm(const StaticIsfmSpec& spec) {
  if (!(spec.target_var > 0.0) || !(spec.sampling_sigma > 0.0))
    throw std::invalid_argument("static isfm: variances must be positive");
  if (spec.n_samples < 2 || spec.eval_samples < 2)
    throw std::invalid_argument("static isfm: need at least two samples");

  const Rng base(spec.seed);
  Rng draw_rng = base.split(1);
  Rng init_rng = base.split(2);
  const Rng condot_rng = base.split(3);
  const Rng eval_rng = base.split(4);

  // Proposal draws and exact log densities under proposal and target.
  const double target_sigma = std::sqrt(spec.target_var);
  auto normal_logpdf = [](double u, double mean, double sigma) {
    const double z = (u - mean) / sigma;
    return -0.5 * z * z - std::log(sigma) - 0.918938533204672741780329736406;
  };
  std::vector<Vector> actions(spec.n_samples);
  std::vector<double> log_target(spec.n_samples), log_prop(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const double u = spec.sampling_mean + spec.sampling_sigma * draw_rng.normal();
    actions[i] = Vector{u};
    log_target[i] = normal_logpdf(u, spec.target_mean, target_sigma);
    log_prop[i] = normal_logpdf(u, spec.sampling_mean, spec.sampling_sigma);
  }
  // Density-ratio weights: alpha = 1 turns q/alpha - log_pi into
  // log target - log proposal.
  const std::vector<double> weights =
      importance_weights(log_target, log_prop, 1.0);

  double ess = 0.0;
  for (double w : weights) ess += w * w;
  ess = 1.0 / ess;

  FlowPolicy policy = make_flow_policy(0, 1, spec.hidden_width,
                                       spec.hidden_layers, spec.ode_steps,
                                       init_rng);
  const WeightedBatch batch = make_weighted_batch(
      Vector(0), std::move(actions), weights);

  AdamState adam = AdamState::init(policy.net, spec.learning_rate);
  double last_loss = 0.0;
  for (int step = 0; step < spec.train_steps; ++step) {
    const LossGrad lg =
        isfm_loss(policy.net, batch, spec.mc_pairs,
                  condot_rng.split(static_cast<std::uint64_t>(step)));
    adam_step(policy.net, lg.grad, adam);
    last_loss = lg.loss;
  }

  // Moments of the fitted flow, estimated from fresh samples.
  const std::vector<FlowSample> fitted =
      sample_actions(policy, Vector(0), spec.eval_samples, eval_rng);
  double mean = 0.0;
  for (const FlowSample& s : fitted) mean += s.action[0];
  mean /= static_cast<double>(fitted.size());
  double ss = 0.0;
  for (const FlowSample& s : fitted)
    ss += (s.action[0] - mean) * (s.action[0] - mean);
  const double stddev =
      std::sqrt(ss / static_cast<double>(fitted.size() - 1));

  StaticIsfmResult out;
  out.policy = std::move(policy);
  out.fitted_mean = mean;
  out.fitted_std = stddev;
  // For one-dimensional Gaussians W2^2 = (mean gap)^2 + (std gap)^2.
  out.w2 = std::hypot(mean - spec.target_mean, stddev - target_sigma);
  out.weight_ess = ess;
  out.final_loss = last_loss;
  return out;
}

std::vector<IsfmBenchCell> run_isfm_bench(const IsfmBenchConfig& cfg) {
  if (cfg.n_values.empty() || cfg.sampling_sigmas.empty())
    throw std::invalid_argument("isfm bench: empty sweep axes");
  if (cfg.n_seeds < 2)
    throw std::invalid_argument("isfm bench: need at least two seeds");
  for (double s : cfg.sampling_sigmas)
    if (!(s > 0.0))
      throw std::invalid_argument("isfm bench: sampling widths must be > 0");

  const double target_sigma = std::sqrt(cfg.base.target_var);
  const Rng master(cfg.seed);
  std::vector<IsfmBenchCell> cells;
  cells.reserve(cfg.n_values.size() * cfg.sampling_sigmas.size());

  for (std::size_t si = 0; si < cfg.sampling_sigmas.size(); ++si) {
    const double sigma = cfg.sampling_sigmas[si];

    // One divergence estimate per sampling width; it does not depend on N.
    const LogDensity log_target = [&](const Vector& u) {
      const double z = (u[0] - cfg.base.target_mean) / target_sigma;
      return -0.5 * z * z - std::log(target_sigma) - 0.9189385332046727;
    };
    const LogDensity log_proposal = [&](const Vector& u) {
      const double z = (u[0] - cfg.base.sampling_mean) / sigma;
      return -0.5 * z * z - std::log(sigma) - 0.9189385332046727;
    };
    const Renyi4Estimate d4 = renyi4_mc(
        log_target, log_proposal,
        [&](Rng& r) {
          return Vector{cfg.base.sampling_mean + sigma * r.normal()};
        },
        cfg.d4_samples, master.split(1000 + si));

    for (std::size_t ni = 0; ni < cfg.n_values.size(); ++ni) {
      IsfmBenchCell cell;
      cell.n_samples = cfg.n_values[ni];
      cell.sampling_sigma = sigma;
      cell.d4 = d4.value;
      cell.d4_divergent = d4.divergent;

      std::vector<double> w2sq(cfg.n_seeds), w2(cfg.n_seeds);
      const std::uint64_t cell_id = si * cfg.n_values.size() + ni;
      for (std::size_t rep = 0; rep < cfg.n_seeds; ++rep) {
        StaticIsfmSpec spec = cfg.base;
        spec.sampling_sigma = sigma;
        spec.n_samples = cfg.n_values[ni];
        spec.seed = master.split(cell_id).split(rep).seed();
        const StaticIsfmResult res = train_static_isfm(spec);
        w2[rep] = res.w2;
        w2sq[rep] = res.w2 * res.w2;
      }
      for (std::size_t rep = 0; rep < cfg.n_seeds; ++rep) {
        cell.mean_w2sq += w2sq[rep] / static_cast<double>(cfg.n_seeds);
        cell.mean_w2 += w2[rep] / static_cast<double>(cfg.n_seeds);
      }
      double ss = 0.0;
      for (std::size_t rep = 0; rep < cfg.n_seeds; ++rep)
        ss += (w2sq[rep] - cell.mean_w2sq) * (w2sq[rep] - cell.mean_w2sq);
      cell.std_w2sq = std::sqrt(ss / static_cast<double>(cfg.n_seeds - 1));
      cells.push_back(cell);
    }
  }
  return cells;
}

}  // namespace flowsac
