#include "flowsac/flow.hpp"

#include <stdexcept>

#include "flowsac/parallel.hpp"

namespace flowsac {

FlowPolicy make_flow_policy(std::size_t state_dim, std::size_t action_dim,
                            std::size_t hidden_width,
                            std::size_t hidden_layers, int ode_steps,
                            Rng& rng) {
  if (action_dim == 0)
    throw std::invalid_argument("make_flow_policy: action_dim must be >= 1");
  std::vector<std::size_t> dims;
  dims.push_back(state_dim + 1 + action_dim);
  for (std::size_t i = 0; i < hidden_layers; ++i) dims.push_back(hidden_width);
  dims.push_back(action_dim);
  FlowPolicy policy;
  policy.net = make_mlp(dims, rng);
  policy.state_dim = state_dim;
  policy.action_dim = action_dim;
  policy.ode_steps = ode_steps;
  return policy;
}

void validate_flow_policy(const FlowPolicy& policy) {
  if (policy.action_dim == 0)
    throw std::invalid_argument("flow policy: action_dim must be >= 1");
  if (policy.ode_steps < 1)
    throw std::invalid_argument("flow policy: ode_steps must be >= 1");
  if (policy.net.layers.empty() ||
      policy.net.input_dim() != policy.state_dim + 1 + policy.action_dim ||
      policy.net.output_dim() != policy.action_dim) {
    throw std::invalid_argument(
        "flow policy: network shape disagrees with declared dimensions");
  }
}

NetVelocityField::NetVelocityField(const MlpParams& net, const Vector& x,
                                   std::size_t action_dim)
    : net_(net), x_(x), action_dim_(action_dim) {
  const std::size_t in_dim = x.dim() + 1 + action_dim;
  if (net.input_dim() != in_dim || net.output_dim() != action_dim)
    throw std::invalid_argument("velocity field: network shape mismatch");
  dirs_.reserve(action_dim);
  for (std::size_t j = 0; j < action_dim; ++j) {
    Vector e(in_dim);
    e[x.dim() + 1 + j] = 1.0;
    dirs_.push_back(std::move(e));
  }
}

Vector NetVelocityField::assemble(double tau, const Vector& u) const {
  Vector in(x_.dim() + 1 + action_dim_);
  for (std::size_t i = 0; i < x_.dim(); ++i) in[i] = x_[i];
  in[x_.dim()] = tau;
  for (std::size_t j = 0; j < action_dim_; ++j) in[x_.dim() + 1 + j] = u[j];
  return in;
}

Vector NetVelocityField::velocity(double tau, const Vector& u) const {
  return mlp_forward(net_, assemble(tau, u));
}

Vector NetVelocityField::velocity_with_divergence(double tau, const Vector& u,
                                                  double* div) const {
  std::vector<Vector> jvps;
  Vector v = mlp_forward_with_jvps(net_, assemble(tau, u), dirs_, jvps);
  double d = 0.0;
  for (std::size_t j = 0; j < action_dim_; ++j) d += jvps[j][j];
  *div = d;
  return v;
}

FlowSample sample_action(const FlowPolicy& policy, const Vector& x, Rng& rng) {
  Vector u0(policy.action_dim);
  for (std::size_t j = 0; j < policy.action_dim; ++j) u0[j] = rng.normal();
  return sample_action_from(policy, x, u0);
}

FlowSample sample_action_from(const FlowPolicy& policy, const Vector& x,
                              const Vector& u0) {
  validate_flow_policy(policy);
  if (x.dim() != policy.state_dim)
    throw std::invalid_argument("sample_action: state dimension mismatch");
  if (u0.dim() != policy.action_dim)
    throw std::invalid_argument("sample_action: base draw dimension mismatch");
  const NetVelocityField field(policy.net, x, policy.action_dim);
  return sample_flow(field, u0, policy.ode_steps);
}

Vector rollout_action(const FlowPolicy& policy, const Vector& x, Rng& rng) {
  validate_flow_policy(policy);
  if (x.dim() != policy.state_dim)
    throw std::invalid_argument("rollout_action: state dimension mismatch");
  Vector u0(policy.action_dim);
  for (std::size_t j = 0; j < policy.action_dim; ++j) u0[j] = rng.normal();
  const NetVelocityField field(policy.net, x, policy.action_dim);
  return integrate_flow(field, u0, policy.ode_steps, /*want_divergence=*/false,
                        /*want_path=*/false)
      .end;
}

double log_prob(const FlowPolicy& policy, const Vector& x,
                const FlowSample& sample) {
  return sample_action_from(policy, x, sample.u0).log_prob;
}

std::vector<FlowSample> sample_actions(const FlowPolicy& policy,
                                       const Vector& x, std::size_t n,
                                       const Rng& rng) {
  validate_flow_policy(policy);
  if (x.dim() != policy.state_dim)
    throw std::invalid_argument("sample_actions: state dimension mismatch");
  std::vector<FlowSample> out(n);
  const NetVelocityField field(policy.net, x, policy.action_dim);
  parallel_for(static_cast<std::int64_t>(n), [&](std::int64_t i) {
    Rng child = rng.split(static_cast<std::uint64_t>(i));
    Vector u0(policy.action_dim);
    for (std::size_t j = 0; j < policy.action_dim; ++j) u0[j] = child.normal();
    out[static_cast<std::size_t>(i)] =
        sample_flow(field, std::move(u0), policy.ode_steps);
  });
  return out;
}

MeanStderr entropy_estimate(const FlowPolicy& policy, const Vector& x,
                            std::size_t n, const Rng& rng) {
  if (n < 2)
    throw std::invalid_argument("entropy_estimate: need at least two draws");
  const std::vector<FlowSample> samples = sample_actions(policy, x, n, rng);
  std::vector<double> neg_logp(n);
  for (std::size_t i = 0; i < n; ++i) neg_logp[i] = -samples[i].log_prob;
  return mean_stderr(neg_logp);
}

}  // namespace flowsac
