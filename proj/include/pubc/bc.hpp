#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "pubc/data.hpp"
#include "pubc/env.hpp"
#include "pubc/nn.hpp"
#include "pubc/rng.hpp"

namespace pubc {

// Deterministic mean-action policy; the Gaussian likelihood with fixed
// sigma exists only so that -log pi reduces to scaled squared error.
struct Policy {
  DenseNet net;  // state_dim -> action_dim, identity output
  Eigen::VectorXd action_lo;
  Eigen::VectorXd action_hi;
  double sigma = 0.1;

  int state_dim() const { return net.input_dim(); }
  int action_dim() const { return net.output_dim(); }
};

inline Eigen::VectorXd act(const Policy& p, const Eigen::VectorXd& state) {
  Eigen::VectorXd raw = forward(p.net, state);
  Eigen::VectorXd center = 0.5 * (p.action_lo + p.action_hi);
  Eigen::VectorXd half = 0.5 * (p.action_hi - p.action_lo);
  Eigen::VectorXd a(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    a(i) = center(i) + half(i) * std::tanh(raw(i));
  return a;
}

struct BcConfig {
  int epochs = 200;
  int batch_size = 100;
  double learning_rate = 1e-3;
  double sigma = 0.1;
};

// Behavioral cloning on the given subset (all trajectories when ids is
// empty): minimize the Gaussian NLL of recorded actions under the
// tanh-squashed mean. Returns per-epoch mean NLL.
inline std::pair<Policy, std::vector<double>> train_bc(
    const Dataset& data, const std::vector<long>& ids, const BcConfig& cfg,
    std::uint64_t seed) {
  std::vector<const Trajectory*> subset;
  if (ids.empty()) {
    for (const auto& t : data.trajectories) subset.push_back(&t);
  } else {
    for (long id : ids) subset.push_back(&data.by_id(id));
  }
  if (subset.empty()) throw StructuralError("train_bc: empty subset");

  Rng rng(derive_seed(seed, 0xbc));
  Policy policy;
  policy.net = make_dense_net({data.state_dim, 64, 64, data.action_dim},
                              Activation::Tanh, Activation::Identity, rng);
  policy.action_lo = data.action_bounds.lo;
  policy.action_hi = data.action_bounds.hi;
  policy.sigma = cfg.sigma;

  struct Sample { const Eigen::VectorXd* s; const Eigen::VectorXd* a; };
  std::vector<Sample> pool;
  for (const auto* t : subset)
    for (const auto& tr : t->transitions) pool.push_back({&tr.state, &tr.action});

  Eigen::VectorXd center = 0.5 * (policy.action_lo + policy.action_hi);
  Eigen::VectorXd half = 0.5 * (policy.action_hi - policy.action_lo);
  for (Eigen::Index i = 0; i < half.size(); ++i)
    if (half(i) <= 0.0) half(i) = 1e-12;  // degenerate bound dimension

  AdamState adam = make_adam(policy.net, cfg.learning_rate);
  double inv_var = 1.0 / (cfg.sigma * cfg.sigma);
  double log_norm = std::log(cfg.sigma * std::sqrt(2.0 * M_PI));

  std::vector<double> history;
  Eigen::MatrixXd states, targets;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(pool);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < pool.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(pool.size(),
                                 start + static_cast<std::size_t>(cfg.batch_size));
      std::size_t n = end - start;
      states.resize(data.state_dim, n);
      targets.resize(data.action_dim, n);
      for (std::size_t i = 0; i < n; ++i) {
        states.col(i) = *pool[start + i].s;
        targets.col(i) = *pool[start + i].a;
      }
      ForwardCache cache;
      Eigen::MatrixXd raw = forward_batch(policy.net, states, &cache);
      Eigen::MatrixXd upstream(raw.rows(), raw.cols());
      for (Eigen::Index col = 0; col < raw.cols(); ++col) {
        for (Eigen::Index d = 0; d < raw.rows(); ++d) {
          double th = std::tanh(raw(d, col));
          double mu = center(d) + half(d) * th;
          double diff = mu - targets(d, col);
          epoch_loss += 0.5 * diff * diff * inv_var + log_norm;
          upstream(d, col) = diff * inv_var * half(d) * (1.0 - th * th) /
                             static_cast<double>(n);
        }
      }
      GradBundle grads = zeros_like(policy.net);
      backward_batch(policy.net, cache, upstream, grads);
      adam_step(policy.net, grads, adam);
    }
    history.push_back(epoch_loss / static_cast<double>(pool.size()));
  }
  return {std::move(policy), std::move(history)};
}

struct EvalReport {
  std::vector<double> returns;
  double mean_return = 0.0;
  double normalized = 0.0;
  int episodes = 0;
};

// Closed-loop evaluation of any action source act_fn(state, rng) -> action.
// Each episode gets its own derived rng stream, so results are independent
// of episode order and evaluation batch size.
template <typename ActFn>
EvalReport evaluate_with(ActFn&& act_fn, int episodes, std::uint64_t seed,
                         double score_min, double score_max) {
  if (episodes < 1) throw StructuralError("evaluate: episodes must be >= 1");
  EvalReport report;
  report.episodes = episodes;
  for (int ep = 0; ep < episodes; ++ep) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(ep)));
    Eigen::VectorXd s = PointMassEnv::reset(rng);
    double ret = 0.0;
    for (int t = 0; t < PointMassEnv::kEpisodeLen; ++t) {
      auto [next, reward] = PointMassEnv::step(s, act_fn(s, rng));
      ret += reward;
      s = next;
    }
    report.returns.push_back(ret);
    report.mean_return += ret;
  }
  report.mean_return /= static_cast<double>(episodes);
  report.normalized = normalized_score(report.mean_return, score_min, score_max);
  return report;
}

inline EvalReport evaluate(const Policy& policy, int episodes,
                           std::uint64_t seed, double score_min,
                           double score_max) {
  return evaluate_with(
      [&policy](const Eigen::VectorXd& s, Rng&) { return act(policy, s); },
      episodes, seed, score_min, score_max);
}

inline void save_policy(const Policy& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "pubc-policy 1\n";
  out << p.state_dim() << " " << p.action_dim() << " " << fmt_double(p.sigma)
      << "\n";
  auto vec_line = [&](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
      out << (i ? " " : "") << fmt_double(v(i));
    out << "\n";
  };
  vec_line(p.action_lo);
  vec_line(p.action_hi);
  out << p.net.layers.size() << "\n";
  for (const auto& l : p.net.layers) {
    out << l.w.rows() << " " << l.w.cols() << " " << activation_name(l.act)
        << "\n";
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c)
        out << (c ? " " : "") << fmt_double(l.w(r, c));
      out << "\n";
    }
    vec_line(l.b);
  }
  if (!out) throw IoError("write failed: " + path);
}

inline Policy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "pubc-policy" || version != "1")
    throw ParseError("bad policy file header: " + path);
  Policy p;
  int sdim, adim;
  in >> sdim >> adim >> p.sigma;
  p.action_lo.resize(adim);
  p.action_hi.resize(adim);
  for (int i = 0; i < adim; ++i) in >> p.action_lo(i);
  for (int i = 0; i < adim; ++i) in >> p.action_hi(i);
  std::size_t nlayers;
  in >> nlayers;
  p.net.layers.resize(nlayers);
  for (auto& l : p.net.layers) {
    Eigen::Index rows, cols;
    std::string act;
    in >> rows >> cols >> act;
    l.act = activation_from_name(act);
    l.w.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) in >> l.w(r, c);
    l.b.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) in >> l.b(r);
  }
  if (in.fail()) throw ParseError("truncated policy file: " + path);
  return p;
}

}  // namespace pubc
