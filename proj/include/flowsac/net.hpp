#pragma once

#include <cstddef>
#include <vector>

#include "flowsac/linalg.hpp"
#include "flowsac/rng.hpp"

namespace flowsac {

// Small fully connected networks with tanh hidden layers and an affine
// output layer.  Gradients are computed by hand-rolled reverse mode
// (parameters, inputs) and forward mode (input directional derivatives);
// both are exercised against finite differences and against each other in
// the tests.

enum class Activation { Tanh };

struct MlpLayer {
  Matrix w;
  Vector b;
};

struct MlpParams {
  std::vector<MlpLayer> layers;
  Activation activation = Activation::Tanh;

  std::size_t input_dim() const { return layers.front().w.cols(); }
  std::size_t output_dim() const { return layers.back().w.rows(); }
  std::size_t parameter_count() const;
};

// dims = {input, hidden..., output}; at least one layer.  Weights and biases
// are uniform in +-1/sqrt(fan_in); the output layer is scaled by 0.01 so a
// fresh network starts close to the zero map.
MlpParams make_mlp(const std::vector<std::size_t>& dims, Rng& rng);

Vector mlp_forward(const MlpParams& p, const Vector& x);

// Parameter gradients, stored with the same shapes as the parameters.
struct GradientBundle {
  std::vector<MlpLayer> layers;

  static GradientBundle zeros_like(const MlpParams& p);
  void add_scaled(const GradientBundle& other, double s);
  void scale(double s);
  double sq_norm() const;
  double norm() const;
  bool all_finite() const;
};

// Post-activation values of every layer: acts[0] = x, acts.back() is the
// network output.  Feeding these to mlp_backward_into avoids re-running the
// forward pass when the cotangent depends on the output.
std::vector<Vector> mlp_activations(const MlpParams& p, const Vector& x);

// Reverse mode: gradients of output_cotangent . f(x) with respect to the
// parameters; if input_grad is non-null it receives the gradient with
// respect to x.
GradientBundle mlp_backward(const MlpParams& p, const Vector& x,
                            const Vector& output_cotangent,
                            Vector* input_grad = nullptr);

// Same, but accumulates (adds) into an existing bundle and reuses recorded
// activations.
void mlp_backward_into(const MlpParams& p, const std::vector<Vector>& acts,
                       const Vector& output_cotangent, GradientBundle& accum,
                       Vector* input_grad = nullptr);

// Forward mode: J(x) . dir, the directional derivative of the output.
Vector mlp_input_jvp(const MlpParams& p, const Vector& x, const Vector& dir);

// Primal output plus J(x) . dir for every direction in one pass; the primal
// activations are shared across directions.  jvps is resized to dirs.size().
Vector mlp_forward_with_jvps(const MlpParams& p, const Vector& x,
                             const std::vector<Vector>& dirs,
                             std::vector<Vector>& jvps);

struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  GradientBundle m;  // first moment
  GradientBundle v;  // second moment

  static AdamState init(const MlpParams& p, double lr);
};

// In-place bias-corrected Adam update.  Non-finite gradient entries raise a
// numeric_error naming the offending tensor.
void adam_step(MlpParams& p, const GradientBundle& g, AdamState& state);

}  // namespace flowsac
