#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pubc/rng.hpp"

namespace pubc {

struct StructuralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Activation { Relu, Tanh, Sigmoid, Identity };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "identity") return Activation::Identity;
  throw StructuralError("unknown activation: " + s);
}

// Clamped on both tails so a sigmoid head stays strictly inside (0,1)
// even for saturating pre-activations.
inline double stable_sigmoid(double x) {
  double v;
  if (x >= 0.0) {
    v = 1.0 / (1.0 + std::exp(-x));
  } else {
    double e = std::exp(x);
    v = e / (1.0 + e);
  }
  if (v < 1e-12) v = 1e-12;
  if (v > 1.0 - 1e-12) v = 1.0 - 1e-12;
  return v;
}

struct Layer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;  // out
  Activation act = Activation::Identity;
};

struct DenseNet {
  std::vector<Layer> layers;

  int input_dim() const {
    return layers.empty() ? 0 : static_cast<int>(layers.front().w.cols());
  }
  int output_dim() const {
    return layers.empty() ? 0 : static_cast<int>(layers.back().w.rows());
  }
};

// Glorot uniform init: +-sqrt(6/(fan_in+fan_out)).
inline DenseNet make_dense_net(const std::vector<int>& dims,
                               Activation hidden, Activation final_act,
                               Rng& rng) {
  if (dims.size() < 2) throw StructuralError("need at least 2 layer dims");
  DenseNet net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Layer layer;
    int in = dims[i], out = dims[i + 1];
    double lim = std::sqrt(6.0 / static_cast<double>(in + out));
    layer.w.resize(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.w(r, c) = rng.uniform(-lim, lim);
    layer.b = Eigen::VectorXd::Zero(out);
    layer.act = (i + 2 == dims.size()) ? final_act : hidden;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

struct GradBundle {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
};

inline GradBundle zeros_like(const DenseNet& net) {
  GradBundle g;
  for (const auto& l : net.layers) {
    g.w.push_back(Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()));
    g.b.push_back(Eigen::VectorXd::Zero(l.b.size()));
  }
  return g;
}

inline void apply_activation(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::Relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::Tanh:
      z = z.array().tanh().matrix();
      break;
    case Activation::Sigmoid:
      z = z.unaryExpr([](double x) { return stable_sigmoid(x); });
      break;
    case Activation::Identity:
      break;
  }
}

// Derivative expressed through the post-activation value a (and pre z for relu).
inline double activation_deriv(Activation act, double z, double a) {
  switch (act) {
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: return 1.0 - a * a;
    case Activation::Sigmoid: return a * (1.0 - a);
    case Activation::Identity: return 1.0;
  }
  return 0.0;
}

// Per-layer pre-activations and outputs; act[0] is the input batch.
// Columns are samples.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;
  std::vector<Eigen::MatrixXd> act;
};

inline Eigen::MatrixXd forward_batch(const DenseNet& net,
                                     const Eigen::MatrixXd& input,
                                     ForwardCache* cache = nullptr) {
  if (input.rows() != net.input_dim())
    throw StructuralError("forward: input dim " + std::to_string(input.rows()) +
                          " != net input dim " +
                          std::to_string(net.input_dim()));
  Eigen::MatrixXd a = input;
  if (cache) {
    cache->pre.clear();
    cache->act.clear();
    cache->act.push_back(a);
  }
  for (const auto& layer : net.layers) {
    Eigen::MatrixXd z = layer.w * a;
    z.colwise() += layer.b;
    if (cache) cache->pre.push_back(z);
    apply_activation(layer.act, z);
    a = std::move(z);
    if (cache) cache->act.push_back(a);
  }
  if (!a.allFinite()) throw NumericError("forward: non-finite output");
  return a;
}

inline Eigen::VectorXd forward(const DenseNet& net,
                               const Eigen::VectorXd& input) {
  if (!input.allFinite()) throw NumericError("forward: non-finite input");
  return forward_batch(net, input);
}

// Backpropagates upstream (out_dim x batch) through the cached forward pass.
// Accumulates parameter gradients into grads; returns gradient w.r.t. input.
inline Eigen::MatrixXd backward_batch(const DenseNet& net,
                                      const ForwardCache& cache,
                                      const Eigen::MatrixXd& upstream,
                                      GradBundle& grads) {
  if (upstream.rows() != net.output_dim())
    throw StructuralError("backward: upstream dim mismatch");
  Eigen::MatrixXd delta = upstream;
  for (int i = static_cast<int>(net.layers.size()) - 1; i >= 0; --i) {
    const Layer& layer = net.layers[i];
    const Eigen::MatrixXd& z = cache.pre[i];
    const Eigen::MatrixXd& a = cache.act[i + 1];
    for (Eigen::Index c = 0; c < delta.cols(); ++c)
      for (Eigen::Index r = 0; r < delta.rows(); ++r)
        delta(r, c) *= activation_deriv(layer.act, z(r, c), a(r, c));
    grads.w[i].noalias() += delta * cache.act[i].transpose();
    grads.b[i].noalias() += delta.rowwise().sum();
    delta = layer.w.transpose() * delta;
  }
  return delta;
}

inline GradBundle backward(const DenseNet& net, const Eigen::VectorXd& input,
                           const Eigen::VectorXd& upstream_grad) {
  ForwardCache cache;
  forward_batch(net, input, &cache);
  GradBundle g = zeros_like(net);
  backward_batch(net, cache, upstream_grad, g);
  return g;
}

// Binary cross entropy on a single probability; prob clamped to
// [eps, 1-eps] with eps = 1e-7 before the log.
inline std::pair<double, double> bce_loss_and_grad(double prob, int label) {
  constexpr double eps = 1e-7;
  double p = prob;
  if (p < eps) p = eps;
  if (p > 1.0 - eps) p = 1.0 - eps;
  if (label == 1) return {-std::log(p), -1.0 / p};
  return {-std::log(1.0 - p), 1.0 / (1.0 - p)};
}

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState make_adam(const DenseNet& net, double lr = 1e-3) {
  AdamState s;
  s.lr = lr;
  for (const auto& l : net.layers) {
    s.mw.push_back(Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()));
    s.vw.push_back(Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()));
    s.mb.push_back(Eigen::VectorXd::Zero(l.b.size()));
    s.vb.push_back(Eigen::VectorXd::Zero(l.b.size()));
  }
  return s;
}

namespace detail {
template <typename P, typename M>
void adam_update(P& param, const M& grad, M& m, M& v, const AdamState& s,
                 double corr1, double corr2) {
  m = s.beta1 * m + (1.0 - s.beta1) * grad;
  v = s.beta2 * v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
  auto mhat = m.array() / corr1;
  auto vhat = v.array() / corr2;
  param.array() -= s.lr * mhat / (vhat.sqrt() + s.eps);
}
}  // namespace detail

inline void adam_step(DenseNet& net, const GradBundle& grads, AdamState& s) {
  if (grads.w.size() != net.layers.size())
    throw StructuralError("adam_step: gradient/parameter shape mismatch");
  s.step += 1;
  double corr1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  double corr2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (grads.w[i].rows() != net.layers[i].w.rows() ||
        grads.w[i].cols() != net.layers[i].w.cols())
      throw StructuralError("adam_step: gradient/parameter shape mismatch");
    detail::adam_update(net.layers[i].w, grads.w[i], s.mw[i], s.vw[i], s,
                        corr1, corr2);
    detail::adam_update(net.layers[i].b, grads.b[i], s.mb[i], s.vb[i], s,
                        corr1, corr2);
  }
}

// Central finite differences over every parameter against the supplied
// analytic gradients. Returns the max relative deviation; per-component
// denominator floored at 1e-3 so near-zero components compare absolutely.
inline double grad_check(const DenseNet& net,
                         const std::function<double(const DenseNet&)>& loss_fn,
                         const GradBundle& analytic, double step = 1e-5) {
  DenseNet work = net;
  double max_err = 0.0;
  auto probe = [&](double& p, double g) {
    double orig = p;
    p = orig + step;
    double up = loss_fn(work);
    p = orig - step;
    double down = loss_fn(work);
    p = orig;
    double fd = (up - down) / (2.0 * step);
    double denom = std::max(std::abs(fd), 1e-3);
    double err = std::abs(g - fd) / denom;
    if (err > max_err) max_err = err;
  };
  for (std::size_t i = 0; i < work.layers.size(); ++i) {
    auto& l = work.layers[i];
    for (Eigen::Index r = 0; r < l.w.rows(); ++r)
      for (Eigen::Index c = 0; c < l.w.cols(); ++c)
        probe(l.w(r, c), analytic.w[i](r, c));
    for (Eigen::Index r = 0; r < l.b.size(); ++r)
      probe(l.b(r), analytic.b[i](r));
  }
  return max_err;
}

}  // namespace pubc
