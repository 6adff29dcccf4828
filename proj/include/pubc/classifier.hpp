#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <string>
#include <vector>

#include "pubc/negatives.hpp"
#include "pubc/nn.hpp"

namespace pubc {

// F(s,a): the state is first compressed to a latent of width comparable
// to the action, otherwise the head learns to ignore the action entirely
// when the state dimension dominates.
struct ExpertClassifier {
  DenseNet encoder;  // state_dim -> latent_dim, tanh
  DenseNet head;     // latent_dim + action_dim -> 1, sigmoid output
  int state_dim = 0;
  int action_dim = 0;
  int latent_dim = 0;
};

inline ExpertClassifier make_expert_classifier(int state_dim, int action_dim,
                                               Rng& rng, int latent_dim = 16) {
  ExpertClassifier c;
  c.state_dim = state_dim;
  c.action_dim = action_dim;
  c.latent_dim = latent_dim;
  c.encoder = make_dense_net({state_dim, 64, latent_dim}, Activation::Tanh,
                             Activation::Tanh, rng);
  c.head = make_dense_net({latent_dim + action_dim, 64, 64, 1},
                          Activation::Relu, Activation::Sigmoid, rng);
  return c;
}

// Probabilities for a batch; states and actions hold one sample per column.
inline Eigen::RowVectorXd predict_batch(const ExpertClassifier& c,
                                        const Eigen::MatrixXd& states,
                                        const Eigen::MatrixXd& actions,
                                        ForwardCache* enc_cache = nullptr,
                                        ForwardCache* head_cache = nullptr) {
  if (states.rows() != c.state_dim || actions.rows() != c.action_dim ||
      states.cols() != actions.cols())
    throw StructuralError("predict_batch: dimension mismatch");
  Eigen::MatrixXd latent = forward_batch(c.encoder, states, enc_cache);
  Eigen::MatrixXd head_in(c.latent_dim + c.action_dim, states.cols());
  head_in.topRows(c.latent_dim) = latent;
  head_in.bottomRows(c.action_dim) = actions;
  Eigen::MatrixXd probs = forward_batch(c.head, head_in, head_cache);
  return probs.row(0);
}

inline double predict(const ExpertClassifier& c, const Eigen::VectorXd& state,
                      const Eigen::VectorXd& action) {
  return predict_batch(c, state, action)(0);
}

// Given dL/dprob per sample, accumulates gradients for head and encoder.
inline void backprop_through(const ExpertClassifier& c,
                             const ForwardCache& enc_cache,
                             const ForwardCache& head_cache,
                             const Eigen::RowVectorXd& dprob,
                             GradBundle& enc_grads, GradBundle& head_grads) {
  Eigen::MatrixXd upstream = dprob;
  Eigen::MatrixXd dhead_in =
      backward_batch(c.head, head_cache, upstream, head_grads);
  Eigen::MatrixXd dlatent = dhead_in.topRows(c.latent_dim);
  backward_batch(c.encoder, enc_cache, dlatent, enc_grads);
}

enum class LossVariant { Bce, Unbiased, Nonneg };

inline LossVariant loss_variant_from_name(const std::string& s) {
  if (s == "bce" || s == "pubc") return LossVariant::Bce;
  if (s == "unbiased") return LossVariant::Unbiased;
  if (s == "nonneg") return LossVariant::Nonneg;
  throw StructuralError("unknown loss variant: " + s);
}

struct PuTrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 1024;
  int epochs = 20;
  LossVariant variant = LossVariant::Bce;
  double class_prior = 0.004;  // delta, used by Unbiased/Nonneg
};

namespace detail {

constexpr double kProbEps = 1e-7;

inline double clamp_prob(double p) {
  if (p < kProbEps) return kProbEps;
  if (p > 1.0 - kProbEps) return 1.0 - kProbEps;
  return p;
}

}  // namespace detail

// Minimizes the plain BCE objective: positives toward 1, synthetic
// negatives toward 0. Returns the per-epoch mean training loss.
inline std::vector<double> train_bce(ExpertClassifier& c,
                                     const std::vector<StateActionPair>& positives,
                                     const std::vector<StateActionPair>& negatives,
                                     const PuTrainConfig& cfg, Rng& rng) {
  if (positives.empty() || negatives.empty())
    throw StructuralError("train_bce: empty training pool");
  AdamState enc_adam = make_adam(c.encoder, cfg.learning_rate);
  AdamState head_adam = make_adam(c.head, cfg.learning_rate);

  struct Sample { const StateActionPair* pair; int label; };
  std::vector<Sample> pool;
  pool.reserve(positives.size() + negatives.size());
  for (const auto& p : positives) pool.push_back({&p, 1});
  for (const auto& p : negatives) pool.push_back({&p, 0});

  std::vector<double> history;
  Eigen::MatrixXd states, actions;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(pool);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < pool.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(pool.size(),
                                 start + static_cast<std::size_t>(cfg.batch_size));
      std::size_t n = end - start;
      states.resize(c.state_dim, n);
      actions.resize(c.action_dim, n);
      for (std::size_t i = 0; i < n; ++i) {
        states.col(i) = pool[start + i].pair->state;
        actions.col(i) = pool[start + i].pair->action;
      }
      ForwardCache enc_cache, head_cache;
      Eigen::RowVectorXd probs =
          predict_batch(c, states, actions, &enc_cache, &head_cache);
      Eigen::RowVectorXd dprob(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto [loss, grad] = bce_loss_and_grad(probs(i), pool[start + i].label);
        epoch_loss += loss;
        dprob(i) = grad / static_cast<double>(n);
      }
      GradBundle enc_grads = zeros_like(c.encoder);
      GradBundle head_grads = zeros_like(c.head);
      backprop_through(c, enc_cache, head_cache, dprob, enc_grads, head_grads);
      adam_step(c.encoder, enc_grads, enc_adam);
      adam_step(c.head, head_grads, head_adam);
    }
    history.push_back(epoch_loss / static_cast<double>(pool.size()));
  }
  return history;
}

struct PuLossResult {
  double loss = 0.0;
  GradBundle encoder_grads;
  GradBundle head_grads;
};

// Unbiased / non-negative PU risk over a positive pool and an unlabeled
// pool treated as negatives, reweighted by the class prior delta:
//   L = d*E+[-log F] + E_u[-log(1-F)] - d*E+[-log(1-F)]
// with the trailing pair clipped at zero for the non-negative variant
// (no gradient flows from a clipped term).
inline PuLossResult pu_loss_and_grads(const ExpertClassifier& c,
                                      const std::vector<StateActionPair>& positives,
                                      const std::vector<StateActionPair>& unlabeled,
                                      double delta, bool nonneg) {
  if (positives.empty() || unlabeled.empty())
    throw StructuralError("pu_loss: empty pool");
  if (delta < 0.0 || delta > 1.0)
    throw StructuralError("pu_loss: class prior outside [0,1]");

  PuLossResult res;
  res.encoder_grads = zeros_like(c.encoder);
  res.head_grads = zeros_like(c.head);

  auto batch_of = [&](const std::vector<StateActionPair>& pairs,
                      Eigen::MatrixXd& s, Eigen::MatrixXd& a) {
    s.resize(c.state_dim, pairs.size());
    a.resize(c.action_dim, pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      s.col(i) = pairs[i].state;
      a.col(i) = pairs[i].action;
    }
  };

  Eigen::MatrixXd ps, pa, us, ua;
  batch_of(positives, ps, pa);
  batch_of(unlabeled, us, ua);
  ForwardCache p_enc, p_head, u_enc, u_head;
  Eigen::RowVectorXd fp = predict_batch(c, ps, pa, &p_enc, &p_head);
  Eigen::RowVectorXd fu = predict_batch(c, us, ua, &u_enc, &u_head);

  double np = static_cast<double>(positives.size());
  double nu = static_cast<double>(unlabeled.size());

  double pos_term = 0.0;       // E+[-log F]
  double pos_neg_term = 0.0;   // E+[-log(1-F)]
  double unl_term = 0.0;       // E_u[-log(1-F)]
  for (Eigen::Index i = 0; i < fp.size(); ++i) {
    double p = detail::clamp_prob(fp(i));
    pos_term += -std::log(p) / np;
    pos_neg_term += -std::log(1.0 - p) / np;
  }
  for (Eigen::Index i = 0; i < fu.size(); ++i)
    unl_term += -std::log(1.0 - detail::clamp_prob(fu(i))) / nu;

  double inner = unl_term - delta * pos_neg_term;
  bool clipped = nonneg && inner < 0.0;
  res.loss = delta * pos_term + (clipped ? 0.0 : inner);

  Eigen::RowVectorXd dfp(fp.size()), dfu(fu.size());
  for (Eigen::Index i = 0; i < fp.size(); ++i) {
    double p = detail::clamp_prob(fp(i));
    double g = delta * (-1.0 / p) / np;           // from delta*E+[-log F]
    if (!clipped)
      g += -delta * (1.0 / (1.0 - p)) / np;       // from -delta*E+[-log(1-F)]
    dfp(i) = g;
  }
  for (Eigen::Index i = 0; i < fu.size(); ++i) {
    double p = detail::clamp_prob(fu(i));
    dfu(i) = clipped ? 0.0 : (1.0 / (1.0 - p)) / nu;
  }
  backprop_through(c, p_enc, p_head, dfp, res.encoder_grads, res.head_grads);
  backprop_through(c, u_enc, u_head, dfu, res.encoder_grads, res.head_grads);
  return res;
}

inline PuLossResult unbiased_pu_loss(const ExpertClassifier& c,
                                     const std::vector<StateActionPair>& positives,
                                     const std::vector<StateActionPair>& unlabeled,
                                     double delta) {
  return pu_loss_and_grads(c, positives, unlabeled, delta, false);
}

inline PuLossResult nonneg_pu_loss(const ExpertClassifier& c,
                                   const std::vector<StateActionPair>& positives,
                                   const std::vector<StateActionPair>& unlabeled,
                                   double delta) {
  return pu_loss_and_grads(c, positives, unlabeled, delta, true);
}

// Baseline PU training: the whole positive pool plus unlabeled minibatches,
// risk per cfg.variant. Per-batch clipping for the non-negative variant.
inline std::vector<double> train_pu(ExpertClassifier& c,
                                    const std::vector<StateActionPair>& positives,
                                    const std::vector<StateActionPair>& unlabeled,
                                    const PuTrainConfig& cfg, Rng& rng) {
  if (positives.empty() || unlabeled.empty())
    throw StructuralError("train_pu: empty training pool");
  AdamState enc_adam = make_adam(c.encoder, cfg.learning_rate);
  AdamState head_adam = make_adam(c.head, cfg.learning_rate);
  bool nonneg = cfg.variant == LossVariant::Nonneg;

  std::vector<std::size_t> order(unlabeled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(order.size(),
                                 start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<StateActionPair> ubatch;
      ubatch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i)
        ubatch.push_back(unlabeled[order[i]]);
      PuLossResult r = pu_loss_and_grads(c, positives, ubatch,
                                         cfg.class_prior, nonneg);
      adam_step(c.encoder, r.encoder_grads, enc_adam);
      adam_step(c.head, r.head_grads, head_adam);
      epoch_loss += r.loss;
      ++batches;
    }
    history.push_back(epoch_loss / static_cast<double>(batches));
  }
  return history;
}

inline void save_classifier(const ExpertClassifier& c, std::ostream& out) {
  auto dump_net = [&](const DenseNet& net) {
    out << net.layers.size() << "\n";
    for (const auto& l : net.layers) {
      out << l.w.rows() << " " << l.w.cols() << " " << activation_name(l.act)
          << "\n";
      for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
        for (Eigen::Index cc = 0; cc < l.w.cols(); ++cc)
          out << (cc ? " " : "") << fmt_double(l.w(r, cc));
        out << "\n";
      }
      for (Eigen::Index r = 0; r < l.b.size(); ++r)
        out << (r ? " " : "") << fmt_double(l.b(r));
      out << "\n";
    }
  };
  out << "pubc-classifier 1\n";
  out << c.state_dim << " " << c.action_dim << " " << c.latent_dim << "\n";
  dump_net(c.encoder);
  dump_net(c.head);
}

inline ExpertClassifier load_classifier(std::istream& in) {
  std::string magic, version;
  in >> magic >> version;
  if (magic != "pubc-classifier" || version != "1")
    throw ParseError("bad classifier file header");
  ExpertClassifier c;
  in >> c.state_dim >> c.action_dim >> c.latent_dim;
  auto read_net = [&](DenseNet& net) {
    std::size_t nlayers;
    in >> nlayers;
    net.layers.resize(nlayers);
    for (auto& l : net.layers) {
      Eigen::Index rows, cols;
      std::string act;
      in >> rows >> cols >> act;
      l.act = activation_from_name(act);
      l.w.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index cc = 0; cc < cols; ++cc) in >> l.w(r, cc);
      l.b.resize(rows);
      for (Eigen::Index r = 0; r < rows; ++r) in >> l.b(r);
    }
  };
  read_net(c.encoder);
  read_net(c.head);
  if (in.fail()) throw ParseError("truncated classifier file");
  return c;
}

}  // namespace pubc
