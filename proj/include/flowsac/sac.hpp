#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "flowsac/flow.hpp"
#include "flowsac/flow_matching.hpp"
#include "flowsac/lqr.hpp"
#include "flowsac/net.hpp"
#include "flowsac/rng.hpp"

namespace flowsac {

// Soft actor-critic with a flow policy.  Each episode interleaves a short
// environment rollout with one off-policy update: the Q network regresses
// onto the entropy-regularized Bellman target
//
//   r + gamma * mean_i [ Qbar(x', u_i) - alpha * log pi(u_i | x') ],
//
// and the velocity network descends the importance-weighted flow-matching
// loss whose weights are proportional to exp(Q(x', u_i)/alpha - log pi_i),
// i.e. a regression of the flow onto the current Boltzmann improvement of
// its own samples.  Target copies of both networks trail their online
// counterparts by Polyak averaging.
//
// The Q function is represented as net(x, u) + offset, where the scalar
// offset tracks the running mean of the Bellman targets.  Discounting puts
// the target's constant part at scale mean-reward / (1 - gamma); making a
// tanh net express that constant drives every hidden unit into saturation
// and flattens the function, so the constant lives in the offset and the
// net only fits the centered structure.  The improvement weights are
// self-normalized per state, so they are invariant to the offset and read
// the bare net.

// FIFO transition store over a fixed-capacity ring.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }

  // Appends, evicting the oldest transition once full.
  void push(Transition t);

  // i = 0 is the oldest retained transition.
  const Transition& operator[](std::size_t i) const;

  // `batch` distinct transitions, uniformly without replacement, returned
  // in retention order.  Requires batch <= size.
  std::vector<Transition> sample(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // physical slot of the oldest item once full
  std::vector<Transition> items_;
};

struct SacConfig {
  std::size_t episodes = 20000;
  // Critic warmup: for the first q_warmup_episodes only the Q network is
  // updated while the policy stays at its initialization.  A freshly
  // initialized Q is flat in the action, which turns the improvement
  // weights into pure 1/pi tail-chasing and inflates the policy's variance
  // without bound; warming the critic on the stationary initial policy
  // first lets the weights rank actions by value from the first policy
  // step.
  std::size_t q_warmup_episodes = 1000;
  std::size_t rollout_len = 10;  // environment steps per episode
  std::size_t buffer_capacity = 100000;
  std::size_t batch_size = 64;
  std::size_t n_actions = 16;  // action samples per next state
  int mc_pairs = 4;            // path-time draws per weighted action
  double lr_policy = 3e-4;
  double lr_q = 3e-4;
  double polyak_tau = 0.005;
  // Tracking rate of the scalar Q offset toward the batch-mean Bellman
  // target (0 disables centering and the net must carry the constant).
  double q_offset_rate = 0.05;
  std::size_t hidden_width = 32;  // both networks
  std::size_t hidden_layers = 2;
  int train_ode_steps = 16;
  int eval_ode_steps = 64;
  std::size_t eval_every = 500;  // episodes between evaluations; 0 = never
  std::size_t eval_trajectories = 100;
  int eval_horizon = 100;
  double state_clip = 100.0;  // rollout resets when |x| exceeds this
  // Draw the N next-state actions from the Polyak-averaged policy instead
  // of the online one (their log-probs always come from the drawing policy).
  bool use_target_policy_for_eval_actions = false;
};

// Throws std::invalid_argument on out-of-range fields.
void validate_sac_config(const SacConfig& cfg);

struct SacState {
  FlowPolicy policy;         // online velocity net
  FlowPolicy target_policy;  // Polyak average
  MlpParams q;               // online Q net, input [x, u], scalar output
  MlpParams q_bar;           // Polyak average
  // Scalar parts of the Q functions: full value = net(x, u) + offset.
  double q_offset = 0.0;
  double q_offset_bar = 0.0;
  AdamState policy_adam;
  AdamState q_adam;
  std::size_t episode = 0;  // completed episodes
};

// Fresh networks (targets start as exact copies) and optimizer states.
SacState make_sac_state(const LqrSystem& sys, const SacConfig& cfg, Rng& rng);

// Scalar Q network evaluation on the concatenated [x, u] input.
double q_value(const MlpParams& q, const Vector& x, const Vector& u);

// One candidate next-state action with the log density it was drawn at.
struct ActionSample {
  Vector action;
  double log_prob = 0.0;
};

// N action samples per transition's next state; sample (b, i) uses the
// child stream rng.split(b * n + i), so the result is independent of
// thread count.
std::vector<std::vector<ActionSample>> sample_next_actions(
    const FlowPolicy& policy, const std::vector<Transition>& batch,
    std::size_t n, const Rng& rng);

// Q values of every next-state action sample under the given Q network.
std::vector<std::vector<double>> next_action_q_values(
    const MlpParams& q, const std::vector<Transition>& batch,
    const std::vector<std::vector<ActionSample>>& next_actions);

struct PolicyEvalResult {
  double loss = 0.0;
  GradientBundle grad;
  double target_mean = 0.0;  // batch mean of the (uncentered) Bellman targets
};

// Sum over the batch of (net(x, u) - (target - target_offset))^2 with the
// Bellman target held constant, plus its gradient with respect to the
// online Q parameters.  The target reads the trailing Q function as
// q_bar(x', u) + q_bar_offset.  Throws numeric_error naming the batch index
// if a target is not finite.
PolicyEvalResult policy_eval_loss(
    const MlpParams& q, const MlpParams& q_bar, double gamma, double alpha,
    const std::vector<Transition>& batch,
    const std::vector<std::vector<ActionSample>>& next_actions,
    double target_offset = 0.0, double q_bar_offset = 0.0);

struct PolicyImproveResult {
  double loss = 0.0;
  GradientBundle grad;
  // Mean over the batch of the weight entropy -sum_i w_i log w_i; log N
  // means uniform weights, 0 means total collapse onto one sample.
  double weight_entropy = 0.0;
};

// Importance-weighted flow-matching loss summed over the batch: weights are
// self-normalized per next state from the supplied Q values and the samples'
// log-probs, and each weighted action contributes its conditional-path
// regression term.  Gradients flow only through the velocity network.
// Sample (b, i) draws its paths from rng.split(flat index of (b, i)).
PolicyImproveResult policy_improve_loss(
    const MlpParams& theta, const std::vector<Transition>& batch,
    const std::vector<std::vector<ActionSample>>& next_actions,
    const std::vector<std::vector<double>>& q_values, double alpha,
    int mc_pairs, const Rng& rng);

// target <- tau * online + (1 - tau) * target, elementwise.
void polyak_update(MlpParams& target, const MlpParams& online, double tau);

struct TrainingLogRow {
  std::size_t episode = 0;  // completed episodes at evaluation time
  double eval_return_mean = 0.0;
  double eval_return_stderr = 0.0;
  // Most recent update diagnostics (NaN before the first update).
  double loss_q = 0.0;
  double loss_pi = 0.0;
  double weight_entropy = 0.0;
  double grad_norm_q = 0.0;
  double grad_norm_pi = 0.0;
};

struct TrainingLog {
  std::vector<TrainingLogRow> rows;
};

// Called after each evaluation with the current state and the appended row;
// used for checkpointing.
using EvalObserver = std::function<void(const SacState&, const TrainingLogRow&)>;

// Run cfg.episodes episodes of rollout + update, evaluating the
// unregularized discounted return every cfg.eval_every episodes (and at the
// final episode).  Each episode is a fresh trajectory from the system's
// initial distribution.  All randomness derives from `rng` through
// fixed-purpose child streams, so a given (system, config, seed) reproduces
// the log bitwise.  Aborts with a numeric_error carrying an episode-stamped
// diagnostic if a loss becomes non-finite.  When final_state is non-null it
// receives the networks as of the last episode.
TrainingLog train(const LqrSystem& sys, const SacConfig& cfg, const Rng& rng,
                  const EvalObserver& on_eval = nullptr,
                  SacState* final_state = nullptr);

}  // namespace flowsac
