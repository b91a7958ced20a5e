#include "flowsac/net.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "flowsac/errors.hpp"

namespace flowsac {

std::vector<Vector> mlp_activations(const MlpParams& p, const Vector& x) {
  if (x.dim() != p.input_dim())
    throw std::invalid_argument("mlp_activations: input dimension mismatch");
  const std::size_t n_layers = p.layers.size();
  std::vector<Vector> acts;
  acts.reserve(n_layers + 1);
  acts.push_back(x);
  for (std::size_t i = 0; i < n_layers; ++i) {
    const MlpLayer& layer = p.layers[i];
    Vector z = layer.w * acts.back() + layer.b;
    if (i + 1 < n_layers) {
      for (std::size_t k = 0; k < z.dim(); ++k) z[k] = std::tanh(z[k]);
    }
    acts.push_back(std::move(z));
  }
  return acts;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const MlpLayer& layer : layers)
    n += layer.w.rows() * layer.w.cols() + layer.b.dim();
  return n;
}

MlpParams make_mlp(const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2)
    throw std::invalid_argument("make_mlp: need at least input and output");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t fan_in = dims[i], fan_out = dims[i + 1];
    if (fan_in == 0 || fan_out == 0)
      throw std::invalid_argument("make_mlp: zero layer width");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    const double gain = (i + 2 == dims.size()) ? 0.01 : 1.0;
    MlpLayer layer;
    layer.w = Matrix(fan_out, fan_in);
    layer.b = Vector(fan_out);
    for (std::size_t r = 0; r < fan_out; ++r)
      for (std::size_t c = 0; c < fan_in; ++c)
        layer.w(r, c) = gain * rng.uniform(-bound, bound);
    for (std::size_t r = 0; r < fan_out; ++r)
      layer.b[r] = gain * rng.uniform(-bound, bound);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Vector mlp_forward(const MlpParams& p, const Vector& x) {
  if (x.dim() != p.input_dim())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  Vector h = x;
  const std::size_t n_layers = p.layers.size();
  for (std::size_t i = 0; i < n_layers; ++i) {
    const MlpLayer& layer = p.layers[i];
    Vector z = layer.w * h + layer.b;
    if (i + 1 < n_layers) {
      for (std::size_t k = 0; k < z.dim(); ++k) z[k] = std::tanh(z[k]);
    }
    h = std::move(z);
  }
  return h;
}

GradientBundle GradientBundle::zeros_like(const MlpParams& p) {
  GradientBundle g;
  g.layers.reserve(p.layers.size());
  for (const MlpLayer& layer : p.layers) {
    g.layers.push_back(
        {Matrix(layer.w.rows(), layer.w.cols()), Vector(layer.b.dim())});
  }
  return g;
}

void GradientBundle::add_scaled(const GradientBundle& other, double s) {
  if (layers.size() != other.layers.size())
    throw std::invalid_argument("add_scaled: shape mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    MlpLayer& mine = layers[i];
    const MlpLayer& theirs = other.layers[i];
    for (std::size_t k = 0; k < mine.w.size(); ++k)
      mine.w.data()[k] += s * theirs.w.data()[k];
    for (std::size_t k = 0; k < mine.b.dim(); ++k)
      mine.b[k] += s * theirs.b[k];
  }
}

void GradientBundle::scale(double s) {
  for (MlpLayer& layer : layers) {
    layer.w *= s;
    layer.b *= s;
  }
}

double GradientBundle::sq_norm() const {
  double s = 0.0;
  for (const MlpLayer& layer : layers) {
    for (double v : layer.w.entries()) s += v * v;
    s += layer.b.sq_norm();
  }
  return s;
}

double GradientBundle::norm() const { return std::sqrt(sq_norm()); }

bool GradientBundle::all_finite() const {
  for (const MlpLayer& layer : layers)
    if (!layer.w.all_finite() || !layer.b.all_finite()) return false;
  return true;
}

GradientBundle mlp_backward(const MlpParams& p, const Vector& x,
                            const Vector& output_cotangent,
                            Vector* input_grad) {
  GradientBundle g = GradientBundle::zeros_like(p);
  mlp_backward_into(p, mlp_activations(p, x), output_cotangent, g, input_grad);
  return g;
}

void mlp_backward_into(const MlpParams& p, const std::vector<Vector>& acts,
                       const Vector& output_cotangent, GradientBundle& accum,
                       Vector* input_grad) {
  if (output_cotangent.dim() != p.output_dim())
    throw std::invalid_argument("mlp_backward: cotangent dimension mismatch");
  if (acts.size() != p.layers.size() + 1 ||
      accum.layers.size() != p.layers.size())
    throw std::invalid_argument("mlp_backward: activation/bundle mismatch");

  Vector delta = output_cotangent;  // gradient wrt pre-activation of layer i
  for (std::size_t ii = p.layers.size(); ii-- > 0;) {
    const MlpLayer& layer = p.layers[ii];
    const Vector& input = acts[ii];
    MlpLayer& grad = accum.layers[ii];
    for (std::size_t r = 0; r < layer.w.rows(); ++r) {
      const double d = delta[r];
      double* grow = grad.w.data() + r * grad.w.cols();
      for (std::size_t c = 0; c < layer.w.cols(); ++c) grow[c] += d * input[c];
      grad.b[r] += d;
    }
    if (ii == 0 && input_grad == nullptr) break;
    // Pull the cotangent through w, then through tanh (whose output is the
    // stored activation, so tanh' = 1 - act^2).
    Vector down(layer.w.cols());
    for (std::size_t r = 0; r < layer.w.rows(); ++r) {
      const double d = delta[r];
      const double* wrow = layer.w.row(r);
      for (std::size_t c = 0; c < layer.w.cols(); ++c) down[c] += wrow[c] * d;
    }
    if (ii == 0) {
      *input_grad = std::move(down);
      break;
    }
    for (std::size_t c = 0; c < down.dim(); ++c)
      down[c] *= 1.0 - input[c] * input[c];
    delta = std::move(down);
  }
}

Vector mlp_input_jvp(const MlpParams& p, const Vector& x, const Vector& dir) {
  std::vector<Vector> jvps;
  (void)mlp_forward_with_jvps(p, x, {dir}, jvps);
  return jvps.front();
}

Vector mlp_forward_with_jvps(const MlpParams& p, const Vector& x,
                             const std::vector<Vector>& dirs,
                             std::vector<Vector>& jvps) {
  if (x.dim() != p.input_dim())
    throw std::invalid_argument("mlp_forward_with_jvps: input mismatch");
  for (const Vector& d : dirs)
    if (d.dim() != x.dim())
      throw std::invalid_argument("mlp_forward_with_jvps: direction mismatch");

  Vector h = x;
  std::vector<Vector> t(dirs.begin(), dirs.end());
  const std::size_t n_layers = p.layers.size();
  for (std::size_t i = 0; i < n_layers; ++i) {
    const MlpLayer& layer = p.layers[i];
    Vector z = layer.w * h + layer.b;
    for (Vector& tk : t) tk = layer.w * tk;
    if (i + 1 < n_layers) {
      for (std::size_t k = 0; k < z.dim(); ++k) z[k] = std::tanh(z[k]);
      for (Vector& tk : t)
        for (std::size_t k = 0; k < z.dim(); ++k)
          tk[k] *= 1.0 - z[k] * z[k];
    }
    h = std::move(z);
  }
  jvps = std::move(t);
  return h;
}

AdamState AdamState::init(const MlpParams& p, double lr) {
  AdamState s;
  s.lr = lr;
  s.m = GradientBundle::zeros_like(p);
  s.v = GradientBundle::zeros_like(p);
  return s;
}

void adam_step(MlpParams& p, const GradientBundle& g, AdamState& state) {
  if (g.layers.size() != p.layers.size())
    throw std::invalid_argument("adam_step: gradient shape mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);

  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto update = [&](double& param, double grad, double& m, double& v,
                      const char* tensor) {
      if (!std::isfinite(grad)) {
        char buf[96];
        std::snprintf(buf, sizeof(buf),
                      "adam_step: non-finite gradient in layer %zu %s", i + 1,
                      tensor);
        throw numeric_error(buf);
      }
      m = state.beta1 * m + (1.0 - state.beta1) * grad;
      v = state.beta2 * v + (1.0 - state.beta2) * grad * grad;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      param -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    };
    MlpLayer& layer = p.layers[i];
    const MlpLayer& grad = g.layers[i];
    MlpLayer& m = state.m.layers[i];
    MlpLayer& v = state.v.layers[i];
    for (std::size_t r = 0; r < layer.w.rows(); ++r)
      for (std::size_t c = 0; c < layer.w.cols(); ++c)
        update(layer.w(r, c), grad.w(r, c), m.w(r, c), v.w(r, c), "weights");
    for (std::size_t k = 0; k < layer.b.dim(); ++k)
      update(layer.b[k], grad.b[k], m.b[k], v.b[k], "bias");
  }
}

}  // namespace flowsac
