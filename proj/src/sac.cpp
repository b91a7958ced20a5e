#include "flowsac/sac.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <stdexcept>
#include <utility>

#include "flowsac/errors.hpp"
#include "flowsac/parallel.hpp"

namespace flowsac {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0)
    throw std::invalid_argument("replay buffer: capacity must be >= 1");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::operator[](std::size_t i) const {
  if (i >= items_.size())
    throw std::out_of_range("replay buffer: index out of range");
  const std::size_t phys =
      items_.size() < capacity_ ? i : (head_ + i) % capacity_;
  return items_[phys];
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch,
                                             Rng& rng) const {
  if (batch == 0)
    throw std::invalid_argument("replay buffer: batch must be >= 1");
  if (batch > items_.size())
    throw std::invalid_argument(
        "replay buffer: batch exceeds stored transitions");
  // Floyd's sampling: `batch` distinct indices, uniform over [0, size).
  std::set<std::size_t> chosen;
  for (std::size_t k = items_.size() - batch; k < items_.size(); ++k) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (k + 1));
    if (!chosen.insert(j).second) chosen.insert(k);
  }
  std::vector<Transition> out;
  out.reserve(batch);
  for (std::size_t idx : chosen) out.push_back((*this)[idx]);
  return out;
}

void validate_sac_config(const SacConfig& cfg) {
  const auto fail = [](const char* what) {
    throw std::invalid_argument(std::string("sac config: ") + what);
  };
  if (cfg.rollout_len == 0) fail("rollout_len must be >= 1");
  if (cfg.batch_size == 0) fail("batch_size must be >= 1");
  if (cfg.buffer_capacity < cfg.batch_size)
    fail("buffer_capacity must be >= batch_size");
  if (cfg.n_actions == 0) fail("n_actions must be >= 1");
  if (cfg.mc_pairs < 1) fail("mc_pairs must be >= 1");
  if (!(cfg.lr_policy > 0.0) || !(cfg.lr_q > 0.0))
    fail("learning rates must be positive");
  if (!(cfg.polyak_tau > 0.0) || cfg.polyak_tau > 1.0)
    fail("polyak_tau must lie in (0, 1]");
  if (!(cfg.q_offset_rate >= 0.0) || cfg.q_offset_rate > 1.0)
    fail("q_offset_rate must lie in [0, 1]");
  if (cfg.hidden_width == 0 || cfg.hidden_layers == 0)
    fail("hidden_width and hidden_layers must be >= 1");
  if (cfg.train_ode_steps < 1 || cfg.eval_ode_steps < 1)
    fail("ode step counts must be >= 1");
  if (cfg.eval_every > 0) {
    if (cfg.eval_trajectories < 2)
      fail("eval_trajectories must be >= 2 when evaluation is enabled");
    if (cfg.eval_horizon < 1) fail("eval_horizon must be >= 1");
  }
  if (!(cfg.state_clip > 0.0)) fail("state_clip must be positive");
}

SacState make_sac_state(const LqrSystem& sys, const SacConfig& cfg, Rng& rng) {
  validate_sac_config(cfg);
  SacState s;
  s.policy = make_flow_policy(sys.state_dim(), sys.action_dim(),
                              cfg.hidden_width, cfg.hidden_layers,
                              cfg.train_ode_steps, rng);
  std::vector<std::size_t> q_dims;
  q_dims.push_back(sys.state_dim() + sys.action_dim());
  for (std::size_t i = 0; i < cfg.hidden_layers; ++i)
    q_dims.push_back(cfg.hidden_width);
  q_dims.push_back(1);
  s.q = make_mlp(q_dims, rng);
  s.target_policy = s.policy;
  s.q_bar = s.q;
  s.policy_adam = AdamState::init(s.policy.net, cfg.lr_policy);
  s.q_adam = AdamState::init(s.q, cfg.lr_q);
  return s;
}

namespace {

Vector concat(const Vector& x, const Vector& u) {
  Vector in(x.dim() + u.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) in[i] = x[i];
  for (std::size_t j = 0; j < u.dim(); ++j) in[x.dim() + j] = u[j];
  return in;
}

}  // namespace

double q_value(const MlpParams& q, const Vector& x, const Vector& u) {
  if (q.input_dim() != x.dim() + u.dim() || q.output_dim() != 1)
    throw std::invalid_argument("q_value: network shape mismatch");
  return mlp_forward(q, concat(x, u))[0];
}

std::vector<std::vector<ActionSample>> sample_next_actions(
    const FlowPolicy& policy, const std::vector<Transition>& batch,
    std::size_t n, const Rng& rng) {
  if (n == 0)
    throw std::invalid_argument("sample_next_actions: n must be >= 1");
  validate_flow_policy(policy);
  std::vector<std::vector<ActionSample>> out(batch.size());
  parallel_for(static_cast<std::int64_t>(batch.size()), [&](std::int64_t b) {
    const std::size_t bi = static_cast<std::size_t>(b);
    const Vector& x = batch[bi].x_next;
    if (x.dim() != policy.state_dim)
      throw std::invalid_argument(
          "sample_next_actions: state dimension mismatch");
    const NetVelocityField field(policy.net, x, policy.action_dim);
    std::vector<ActionSample>& dst = out[bi];
    dst.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      Rng child = rng.split(static_cast<std::uint64_t>(bi) * n + i);
      Vector u0(policy.action_dim);
      for (std::size_t j = 0; j < policy.action_dim; ++j)
        u0[j] = child.normal();
      FlowIntegration integ = integrate_flow(
          field, u0, policy.ode_steps, /*want_divergence=*/true,
          /*want_path=*/false);
      dst[i].log_prob =
          std_normal_log_density(u0) - integ.divergence_integral;
      dst[i].action = std::move(integ.end);
    }
  });
  return out;
}

std::vector<std::vector<double>> next_action_q_values(
    const MlpParams& q, const std::vector<Transition>& batch,
    const std::vector<std::vector<ActionSample>>& next_actions) {
  if (next_actions.size() != batch.size())
    throw std::invalid_argument(
        "next_action_q_values: one sample set per transition required");
  std::vector<std::vector<double>> out(batch.size());
  parallel_for(static_cast<std::int64_t>(batch.size()), [&](std::int64_t b) {
    const std::size_t bi = static_cast<std::size_t>(b);
    const std::vector<ActionSample>& samples = next_actions[bi];
    out[bi].resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
      out[bi][i] = q_value(q, batch[bi].x_next, samples[i].action);
  });
  return out;
}

PolicyEvalResult policy_eval_loss(
    const MlpParams& q, const MlpParams& q_bar, double gamma, double alpha,
    const std::vector<Transition>& batch,
    const std::vector<std::vector<ActionSample>>& next_actions,
    double target_offset, double q_bar_offset) {
  if (batch.empty())
    throw std::invalid_argument("policy_eval_loss: empty batch");
  if (next_actions.size() != batch.size())
    throw std::invalid_argument(
        "policy_eval_loss: one sample set per transition required");

  const std::int64_t n = static_cast<std::int64_t>(batch.size());
  const int chunks = static_cast<int>(std::min<std::int64_t>(kReduceChunks, n));
  std::vector<double> part_loss(chunks, 0.0);
  std::vector<double> part_target(chunks, 0.0);
  std::vector<GradientBundle> part_grad(chunks);

  parallel_for(chunks, [&](std::int64_t c) {
    const auto [lo, hi] = chunk_range(n, static_cast<int>(c), chunks);
    GradientBundle g = GradientBundle::zeros_like(q);
    double loss = 0.0;
    double target_sum = 0.0;
    for (std::int64_t b = lo; b < hi; ++b) {
      const Transition& t = batch[static_cast<std::size_t>(b)];
      const std::vector<ActionSample>& samples =
          next_actions[static_cast<std::size_t>(b)];
      if (samples.empty())
        throw std::invalid_argument(
            "policy_eval_loss: need at least one action sample per state");
      // Bellman target; a constant with respect to the online parameters.
      double future = 0.0;
      for (const ActionSample& s : samples)
        future += q_value(q_bar, t.x_next, s.action) + q_bar_offset -
                  alpha * s.log_prob;
      const double target =
          t.r + gamma * future / static_cast<double>(samples.size());
      if (!std::isfinite(target)) {
        char buf[96];
        std::snprintf(buf, sizeof buf,
                      "policy_eval_loss: non-finite target at batch index %lld",
                      static_cast<long long>(b));
        throw numeric_error(buf);
      }
      target_sum += target;
      const std::vector<Vector> acts = mlp_activations(q, concat(t.x, t.u));
      const double diff = acts.back()[0] - (target - target_offset);
      loss += diff * diff;
      Vector cot(1);
      cot[0] = 2.0 * diff;
      mlp_backward_into(q, acts, cot, g);
    }
    part_loss[c] = loss;
    part_target[c] = target_sum;
    part_grad[c] = std::move(g);
  });

  PolicyEvalResult out;
  out.grad = GradientBundle::zeros_like(q);
  for (int c = 0; c < chunks; ++c) {
    out.loss += part_loss[c];
    out.target_mean += part_target[c];
    out.grad.add_scaled(part_grad[c], 1.0);
  }
  out.target_mean /= static_cast<double>(n);
  if (!std::isfinite(out.loss))
    throw numeric_error("policy_eval_loss: loss is not finite");
  return out;
}

PolicyImproveResult policy_improve_loss(
    const MlpParams& theta, const std::vector<Transition>& batch,
    const std::vector<std::vector<ActionSample>>& next_actions,
    const std::vector<std::vector<double>>& q_values, double alpha,
    int mc_pairs, const Rng& rng) {
  if (batch.empty())
    throw std::invalid_argument("policy_improve_loss: empty batch");
  if (next_actions.size() != batch.size() || q_values.size() != batch.size())
    throw std::invalid_argument(
        "policy_improve_loss: one sample set and Q row per transition "
        "required");

  // Self-normalized weights per next state, plus their mean entropy.
  const std::size_t bsz = batch.size();
  std::vector<std::vector<double>> weights(bsz);
  std::vector<std::size_t> offset(bsz + 1, 0);
  double entropy_sum = 0.0;
  for (std::size_t b = 0; b < bsz; ++b) {
    if (q_values[b].size() != next_actions[b].size())
      throw std::invalid_argument(
          "policy_improve_loss: Q values do not match action samples");
    std::vector<double> log_pi(next_actions[b].size());
    for (std::size_t i = 0; i < log_pi.size(); ++i)
      log_pi[i] = next_actions[b][i].log_prob;
    weights[b] = importance_weights(q_values[b], log_pi, alpha);
    for (double w : weights[b])
      if (w > 0.0) entropy_sum -= w * std::log(w);
    offset[b + 1] = offset[b] + weights[b].size();
  }

  const std::int64_t total = static_cast<std::int64_t>(offset[bsz]);
  const int chunks =
      static_cast<int>(std::min<std::int64_t>(kReduceChunks, total));
  std::vector<double> part_loss(chunks, 0.0);
  std::vector<GradientBundle> part_grad(chunks);

  parallel_for(chunks, [&](std::int64_t c) {
    const auto [lo, hi] = chunk_range(total, static_cast<int>(c), chunks);
    GradientBundle g = GradientBundle::zeros_like(theta);
    double loss = 0.0;
    std::size_t b = static_cast<std::size_t>(
        std::upper_bound(offset.begin(), offset.end(),
                         static_cast<std::size_t>(lo)) -
        offset.begin() - 1);
    for (std::int64_t f = lo; f < hi; ++f) {
      while (static_cast<std::size_t>(f) >= offset[b + 1]) ++b;
      const std::size_t i = static_cast<std::size_t>(f) - offset[b];
      const double w = weights[b][i];
      if (w == 0.0) continue;
      Rng child = rng.split(static_cast<std::uint64_t>(f));
      loss += w * condot_term(theta, batch[b].x_next,
                              next_actions[b][i].action, mc_pairs, child, w, g);
    }
    part_loss[c] = loss;
    part_grad[c] = std::move(g);
  });

  PolicyImproveResult out;
  out.grad = GradientBundle::zeros_like(theta);
  for (int c = 0; c < chunks; ++c) {
    out.loss += part_loss[c];
    out.grad.add_scaled(part_grad[c], 1.0);
  }
  out.weight_entropy = entropy_sum / static_cast<double>(bsz);
  if (!std::isfinite(out.loss))
    throw numeric_error("policy_improve_loss: loss is not finite");
  return out;
}

void polyak_update(MlpParams& target, const MlpParams& online, double tau) {
  if (!(tau > 0.0) || tau > 1.0)
    throw std::invalid_argument("polyak_update: tau must lie in (0, 1]");
  if (target.layers.size() != online.layers.size())
    throw std::invalid_argument("polyak_update: parameter shapes differ");
  for (std::size_t l = 0; l < target.layers.size(); ++l) {
    MlpLayer& t = target.layers[l];
    const MlpLayer& o = online.layers[l];
    if (t.w.rows() != o.w.rows() || t.w.cols() != o.w.cols() ||
        t.b.dim() != o.b.dim())
      throw std::invalid_argument("polyak_update: parameter shapes differ");
    for (std::size_t k = 0; k < t.w.size(); ++k)
      t.w.data()[k] = tau * o.w.data()[k] + (1.0 - tau) * t.w.data()[k];
    for (std::size_t k = 0; k < t.b.dim(); ++k)
      t.b.data()[k] = tau * o.b.data()[k] + (1.0 - tau) * t.b.data()[k];
  }
}

namespace {

// Fixed-purpose child streams of the master seed; every episode re-splits
// its own substream, so no stage's draw count affects any other stage.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kRolloutStream = 1;
constexpr std::uint64_t kBufferStream = 2;
constexpr std::uint64_t kActionStream = 3;
constexpr std::uint64_t kPathStream = 4;
constexpr std::uint64_t kEvalStream = 5;

}  // namespace

TrainingLog train(const LqrSystem& sys, const SacConfig& cfg, const Rng& rng,
                  const EvalObserver& on_eval, SacState* final_state) {
  validate_sac_config(cfg);
  Rng init_rng = rng.split(kInitStream);
  SacState state = make_sac_state(sys, cfg, init_rng);
  ReplayBuffer buffer(cfg.buffer_capacity);
  TrainingLog log;

  const double nan = std::numeric_limits<double>::quiet_NaN();
  double last_loss_q = nan, last_loss_pi = nan, last_weight_entropy = nan;
  double last_grad_q = nan, last_grad_pi = nan;

  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    try {
      // Each episode is a fresh trajectory from the initial distribution;
      // leaving the clip region restarts it early (runaway early policies).
      Rng roll = rng.split(kRolloutStream).split(ep);
      Vector x = draw_init_state(sys, roll);
      for (std::size_t s = 0; s < cfg.rollout_len; ++s) {
        const Vector u = rollout_action(state.policy, x, roll);
        Transition t = env_step(sys, x, u, roll);
        x = t.x_next;
        buffer.push(std::move(t));
        if (x.norm() > cfg.state_clip) x = draw_init_state(sys, roll);
      }

      if (buffer.size() >= cfg.batch_size) {
        Rng draw = rng.split(kBufferStream).split(ep);
        const std::vector<Transition> batch =
            buffer.sample(cfg.batch_size, draw);

        const FlowPolicy& actor = cfg.use_target_policy_for_eval_actions
                                      ? state.target_policy
                                      : state.policy;
        const auto samples = sample_next_actions(
            actor, batch, cfg.n_actions, rng.split(kActionStream).split(ep));

        const PolicyEvalResult ql = policy_eval_loss(
            state.q, state.q_bar, sys.gamma, sys.alpha, batch, samples,
            state.q_offset, state.q_offset_bar);
        adam_step(state.q, ql.grad, state.q_adam);
        state.q_offset +=
            cfg.q_offset_rate * (ql.target_mean - state.q_offset);
        polyak_update(state.q_bar, state.q, cfg.polyak_tau);
        state.q_offset_bar +=
            cfg.polyak_tau * (state.q_offset - state.q_offset_bar);
        last_loss_q = ql.loss;
        last_grad_q = ql.grad.norm();

        if (ep >= cfg.q_warmup_episodes) {
          // Weights come from the just-updated Q network.
          const auto q_vals = next_action_q_values(state.q, batch, samples);
          const PolicyImproveResult pl = policy_improve_loss(
              state.policy.net, batch, samples, q_vals, sys.alpha,
              cfg.mc_pairs, rng.split(kPathStream).split(ep));
          adam_step(state.policy.net, pl.grad, state.policy_adam);
          polyak_update(state.target_policy.net, state.policy.net,
                        cfg.polyak_tau);
          last_loss_pi = pl.loss;
          last_weight_entropy = pl.weight_entropy;
          last_grad_pi = pl.grad.norm();
        }
      }
    } catch (const numeric_error& e) {
      char buf[320];
      std::snprintf(buf, sizeof buf,
                    "training aborted at episode %zu: %s (last loss_q=%.6g, "
                    "loss_pi=%.6g, weight_entropy=%.6g)",
                    ep + 1, e.what(), last_loss_q, last_loss_pi,
                    last_weight_entropy);
      throw numeric_error(buf);
    }
    state.episode = ep + 1;

    if (cfg.eval_every > 0 &&
        ((ep + 1) % cfg.eval_every == 0 || ep + 1 == cfg.episodes)) {
      FlowPolicy eval_policy = state.policy;
      eval_policy.ode_steps = cfg.eval_ode_steps;
      const ActionSampler sampler = [&](const Vector& xs, Rng& r) {
        return rollout_action(eval_policy, xs, r);
      };
      const MeanStderr ret =
          discounted_return(sys, sampler, cfg.eval_horizon,
                            cfg.eval_trajectories,
                            rng.split(kEvalStream).split(ep));
      TrainingLogRow row;
      row.episode = ep + 1;
      row.eval_return_mean = ret.mean;
      row.eval_return_stderr = ret.std_err;
      row.loss_q = last_loss_q;
      row.loss_pi = last_loss_pi;
      row.weight_entropy = last_weight_entropy;
      row.grad_norm_q = last_grad_q;
      row.grad_norm_pi = last_grad_pi;
      log.rows.push_back(row);
      if (on_eval) on_eval(state, row);
    }
  }
  if (final_state) *final_state = std::move(state);
  return log;
}

}  // namespace flowsac
