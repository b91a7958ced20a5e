#pragma once

#include <cmath>
#include <cstdio>
#include <utility>
#include <vector>

#include "flowsac/errors.hpp"
#include "flowsac/linalg.hpp"
#include "flowsac/net.hpp"
#include "flowsac/rng.hpp"
#include "flowsac/stats.hpp"

namespace flowsac {

// Stochastic policies realized as flows: an action is produced by drawing
// u0 ~ N(0, I) and integrating du/dtau = v(x, tau, u) from tau = 0 to 1.
// The exact density of the result follows from the instantaneous
// change-of-variables identity
//
//   log pi(u1 | x) = log N(u0; 0, I) - integral_0^1 div_u v(x, tau, u) dtau,
//
// so sampling and likelihood evaluation share one ODE pass.

struct FlowPolicy {
  MlpParams net;  // input layout [x, tau, u], output has action dimension
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  int ode_steps = 16;
};

FlowPolicy make_flow_policy(std::size_t state_dim, std::size_t action_dim,
                            std::size_t hidden_width,
                            std::size_t hidden_layers, int ode_steps,
                            Rng& rng);

// Throws if the network shape disagrees with the declared dimensions.
void validate_flow_policy(const FlowPolicy& policy);

struct FlowSample {
  Vector u0;        // base draw
  Vector action;    // endpoint of the flow
  double log_prob;  // exact log density of the action
  std::vector<std::pair<double, Vector>> path;  // (tau, u) at step bounds
};

struct FlowIntegration {
  Vector end;
  double divergence_integral;
  std::vector<std::pair<double, Vector>> path;
};

// Integrate du/dtau = field.velocity(tau, u) with the explicit midpoint rule
// over `steps` equal steps, accumulating the divergence at the midpoints
// (midpoint quadrature).  Endpoint and divergence integral are both
// second-order accurate in the step size.
//
// Field requirements:
//   Vector velocity(double tau, const Vector& u) const;
//   Vector velocity_with_divergence(double tau, const Vector& u,
//                                   double* div) const;
template <typename Field>
FlowIntegration integrate_flow(const Field& field, const Vector& u0,
                               int steps, bool want_divergence = true,
                               bool want_path = true) {
  if (steps < 1)
    throw std::invalid_argument("integrate_flow: steps must be >= 1");
  const double h = 1.0 / steps;
  FlowIntegration out;
  out.divergence_integral = 0.0;
  if (want_path) {
    out.path.reserve(static_cast<std::size_t>(steps) + 1);
    out.path.emplace_back(0.0, u0);
  }
  Vector u = u0;
  for (int k = 0; k < steps; ++k) {
    const double tau = h * k;
    const Vector k1 = field.velocity(tau, u);
    Vector mid = u;
    mid += (0.5 * h) * k1;
    double div = 0.0;
    const Vector k2 =
        want_divergence
            ? field.velocity_with_divergence(tau + 0.5 * h, mid, &div)
            : field.velocity(tau + 0.5 * h, mid);
    out.divergence_integral += h * div;
    u += h * k2;
    if (!u.all_finite()) {
      char buf[64];
      std::snprintf(buf, sizeof(buf),
                    "integrate_flow: state diverged at tau=%.4f", tau + h);
      throw numeric_error(buf);
    }
    if (want_path) out.path.emplace_back(h * (k + 1), u);
  }
  out.end = std::move(u);
  return out;
}

// log N(u; 0, I)
inline double std_normal_log_density(const Vector& u) {
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  return -0.5 * (static_cast<double>(u.dim()) * kLog2Pi + u.sq_norm());
}

// The policy network viewed as a velocity field over actions, with the
// state fixed.  Divergence is taken with respect to u only, via one forward
// pass carrying action_dim tangent directions.
class NetVelocityField {
 public:
  NetVelocityField(const MlpParams& net, const Vector& x,
                   std::size_t action_dim);
  Vector velocity(double tau, const Vector& u) const;
  Vector velocity_with_divergence(double tau, const Vector& u,
                                  double* div) const;

 private:
  Vector assemble(double tau, const Vector& u) const;

  const MlpParams& net_;
  Vector x_;
  std::size_t action_dim_;
  std::vector<Vector> dirs_;  // unit tangents for the u block
};

// Integrate a field from a given base point and attach the exact log
// density of the endpoint.  This is the common core of sample_action and
// of the analytic-field tests.
template <typename Field>
FlowSample sample_flow(const Field& field, Vector u0, int steps) {
  FlowIntegration integ = integrate_flow(field, u0, steps);
  FlowSample s;
  s.log_prob = std_normal_log_density(u0) - integ.divergence_integral;
  s.u0 = std::move(u0);
  s.action = std::move(integ.end);
  s.path = std::move(integ.path);
  return s;
}

// Draw u0 ~ N(0, I) and push it through the policy flow.
FlowSample sample_action(const FlowPolicy& policy, const Vector& x, Rng& rng);

// Deterministic variant for a given base draw.
FlowSample sample_action_from(const FlowPolicy& policy, const Vector& x,
                              const Vector& u0);

// Draw an action without the divergence pass; cheaper when the density is
// not needed (plain rollouts).  Consumes the same rng draws as
// sample_action and returns the identical endpoint.
Vector rollout_action(const FlowPolicy& policy, const Vector& x, Rng& rng);

// Recompute the log density of a recorded sample by re-integrating from its
// base draw; with unchanged parameters this reproduces sample.log_prob
// bitwise.
double log_prob(const FlowPolicy& policy, const Vector& x,
                const FlowSample& sample);

// Draw n actions for one state; item i uses the child stream rng.split(i),
// so the result does not depend on thread count.
std::vector<FlowSample> sample_actions(const FlowPolicy& policy,
                                       const Vector& x, std::size_t n,
                                       const Rng& rng);

// Monte Carlo entropy estimate: mean and standard error of -log pi over n
// fresh action draws.
MeanStderr entropy_estimate(const FlowPolicy& policy, const Vector& x,
                            std::size_t n, const Rng& rng);

}  // namespace flowsac
