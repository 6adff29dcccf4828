#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "pubc/classifier.hpp"

using namespace pubc;

namespace {

std::vector<StateActionPair> gaussian_pool(int n, int sdim, int adim,
                                           double s_center, double a_center,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<StateActionPair> pool;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd s(sdim), a(adim);
    for (int k = 0; k < sdim; ++k) s(k) = rng.normal(s_center, 0.3);
    for (int k = 0; k < adim; ++k) a(k) = rng.normal(a_center, 0.3);
    pool.push_back({s, a});
  }
  return pool;
}

// Direct term-by-term evaluation of the reweighted PU risk.
double pu_loss_oracle(const ExpertClassifier& c,
                      const std::vector<StateActionPair>& pos,
                      const std::vector<StateActionPair>& unl, double delta,
                      bool nonneg) {
  auto clamp = [](double p) {
    return std::min(std::max(p, 1e-7), 1.0 - 1e-7);
  };
  double pos_term = 0, pos_neg = 0, unl_term = 0;
  for (const auto& p : pos) {
    double f = clamp(predict(c, p.state, p.action));
    pos_term += -std::log(f) / pos.size();
    pos_neg += -std::log(1 - f) / pos.size();
  }
  for (const auto& p : unl)
    unl_term += -std::log(1 - clamp(predict(c, p.state, p.action))) / unl.size();
  double inner = unl_term - delta * pos_neg;
  if (nonneg) inner = std::max(0.0, inner);
  return delta * pos_term + inner;
}

}  // namespace

TEST_CASE("predict: zero-weight networks output 0.5") {
  Rng rng(1);
  ExpertClassifier c = make_expert_classifier(4, 2, rng);
  for (auto& l : c.encoder.layers) { l.w.setZero(); l.b.setZero(); }
  for (auto& l : c.head.layers) { l.w.setZero(); l.b.setZero(); }
  Eigen::VectorXd s(4), a(2);
  s << 1, -2, 3, 0.5;
  a << -1, 1;
  REQUIRE(predict(c, s, a) == Catch::Approx(0.5));
}

TEST_CASE("predict: deterministic for fixed weights and input") {
  Rng rng(2);
  ExpertClassifier c = make_expert_classifier(3, 2, rng);
  Eigen::VectorXd s(3), a(2);
  s << 0.2, -0.4, 0.9;
  a << 0.1, -0.1;
  REQUIRE(predict(c, s, a) == predict(c, s, a));
}

TEST_CASE("predict equals the hand-composed encoder/head chain") {
  Rng rng(3);
  ExpertClassifier c = make_expert_classifier(5, 2, rng);
  Eigen::VectorXd s(5), a(2);
  for (int i = 0; i < 5; ++i) s(i) = 0.1 * i - 0.2;
  a << 0.3, -0.6;
  Eigen::VectorXd latent = forward(c.encoder, s);
  Eigen::VectorXd head_in(latent.size() + 2);
  head_in << latent, a;
  REQUIRE(predict(c, s, a) == Catch::Approx(forward(c.head, head_in)(0)));
}

TEST_CASE("predict: dimension mismatch throws") {
  Rng rng(4);
  ExpertClassifier c = make_expert_classifier(3, 2, rng);
  Eigen::VectorXd s(2), a(2);
  s.setZero();
  a.setZero();
  REQUIRE_THROWS_AS(predict(c, s, a), StructuralError);
}

TEST_CASE("train_bce separates linearly separable pools") {
  auto pos = gaussian_pool(100, 2, 1, 1.0, 1.0, 10);
  auto neg = gaussian_pool(100, 2, 1, -1.0, -1.0, 11);
  Rng rng(12);
  ExpertClassifier c = make_expert_classifier(2, 1, rng, 2);
  PuTrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 64;
  auto history = train_bce(c, pos, neg, cfg, rng);
  REQUIRE(history.back() < history.front());
  int correct = 0;
  for (const auto& p : pos)
    if (predict(c, p.state, p.action) > 0.5) ++correct;
  for (const auto& p : neg)
    if (predict(c, p.state, p.action) < 0.5) ++correct;
  REQUIRE(static_cast<double>(correct) / 200.0 >= 0.99);
}

TEST_CASE("train_bce on identical point sets plateaus at ln 2 or above") {
  auto pool = gaussian_pool(60, 2, 1, 0.0, 0.0, 20);
  Rng rng(21);
  ExpertClassifier c = make_expert_classifier(2, 1, rng, 2);
  PuTrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 32;
  auto history = train_bce(c, pool, pool, cfg, rng);
  REQUIRE(history.back() >= std::log(2.0) - 1e-6);
}

TEST_CASE("train_bce: single positive above single negative") {
  std::vector<StateActionPair> pos{{Eigen::VectorXd::Constant(1, 1.0),
                                    Eigen::VectorXd::Constant(1, 1.0)}};
  std::vector<StateActionPair> neg{{Eigen::VectorXd::Constant(1, 0.0),
                                    Eigen::VectorXd::Constant(1, 0.0)}};
  Rng rng(22);
  ExpertClassifier c = make_expert_classifier(1, 1, rng, 1);
  PuTrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 2;
  train_bce(c, pos, neg, cfg, rng);
  REQUIRE(predict(c, pos[0].state, pos[0].action) >
          predict(c, neg[0].state, neg[0].action));
}

TEST_CASE("train_bce rejects empty pools") {
  Rng rng(23);
  ExpertClassifier c = make_expert_classifier(2, 1, rng);
  auto pool = gaussian_pool(5, 2, 1, 0, 0, 24);
  PuTrainConfig cfg;
  REQUIRE_THROWS_AS(train_bce(c, {}, pool, cfg, rng), StructuralError);
  REQUIRE_THROWS_AS(train_bce(c, pool, {}, cfg, rng), StructuralError);
}

TEST_CASE("pu losses match the summation oracle") {
  Rng rng(30);
  for (int trial = 0; trial < 20; ++trial) {
    ExpertClassifier c = make_expert_classifier(3, 2, rng, 2);
    auto pos = gaussian_pool(7, 3, 2, 0.5, 0.2, 100 + trial);
    auto unl = gaussian_pool(13, 3, 2, -0.1, 0.0, 200 + trial);
    double delta = rng.uniform(0, 1);
    double u = unbiased_pu_loss(c, pos, unl, delta).loss;
    double n = nonneg_pu_loss(c, pos, unl, delta).loss;
    REQUIRE(u == Catch::Approx(pu_loss_oracle(c, pos, unl, delta, false))
                     .margin(1e-10));
    REQUIRE(n == Catch::Approx(pu_loss_oracle(c, pos, unl, delta, true))
                     .margin(1e-10));
  }
}

TEST_CASE("pu loss identities") {
  Rng rng(31);
  ExpertClassifier c = make_expert_classifier(2, 1, rng, 2);
  auto pos = gaussian_pool(9, 2, 1, 0.4, 0.1, 300);
  auto unl = gaussian_pool(15, 2, 1, -0.2, 0.0, 301);

  // delta = 0 reduces to BCE with the unlabeled pool as negatives.
  double at_zero = unbiased_pu_loss(c, pos, unl, 0.0).loss;
  double bce = 0.0;
  for (const auto& p : unl)
    bce += bce_loss_and_grad(predict(c, p.state, p.action), 0).first /
           unl.size();
  REQUIRE(at_zero == Catch::Approx(bce).margin(1e-10));
  REQUIRE(nonneg_pu_loss(c, pos, unl, 0.0).loss ==
          Catch::Approx(bce).margin(1e-10));

  // Constant output 0.5 gives exactly ln 2 for any delta.
  ExpertClassifier zero = c;
  for (auto& l : zero.encoder.layers) { l.w.setZero(); l.b.setZero(); }
  for (auto& l : zero.head.layers) { l.w.setZero(); l.b.setZero(); }
  for (double delta : {0.0, 0.3, 0.9}) {
    REQUIRE(unbiased_pu_loss(zero, pos, unl, delta).loss ==
            Catch::Approx(std::log(2.0)).margin(1e-12));
  }

  // nonneg >= delta * E+[-log F] and equals unbiased when unclipped.
  for (int trial = 0; trial < 30; ++trial) {
    ExpertClassifier cc = make_expert_classifier(2, 1, rng, 2);
    double delta = rng.uniform(0, 1);
    double u = unbiased_pu_loss(cc, pos, unl, delta).loss;
    double n = nonneg_pu_loss(cc, pos, unl, delta).loss;
    double floor = 0.0;
    for (const auto& p : pos) {
      double f = std::min(std::max(predict(cc, p.state, p.action), 1e-7),
                          1.0 - 1e-7);
      floor += -std::log(f) / pos.size();
    }
    REQUIRE(n >= delta * floor - 1e-12);
    if (n == u) SUCCEED();
    else REQUIRE(u < n);  // differ only when the unbiased inner term went negative
  }
}

TEST_CASE("pu loss gradients pass finite differences") {
  Rng rng(40);
  auto pos = gaussian_pool(5, 2, 1, 0.3, 0.1, 400);
  auto unl = gaussian_pool(8, 2, 1, -0.1, 0.0, 401);
  for (bool nonneg : {false, true}) {
    ExpertClassifier c = make_expert_classifier(2, 1, rng, 2);
    double delta = 0.35;
    PuLossResult res = pu_loss_and_grads(c, pos, unl, delta, nonneg);
    // Check the head; the encoder shares the same backprop path.
    double err = grad_check(
        c.head,
        [&](const DenseNet& head) {
          ExpertClassifier probe = c;
          probe.head = head;
          return pu_loss_and_grads(probe, pos, unl, delta, nonneg).loss;
        },
        res.head_grads);
    REQUIRE(err < 1e-4);
    double enc_err = grad_check(
        c.encoder,
        [&](const DenseNet& enc) {
          ExpertClassifier probe = c;
          probe.encoder = enc;
          return pu_loss_and_grads(probe, pos, unl, delta, nonneg).loss;
        },
        res.encoder_grads);
    REQUIRE(enc_err < 1e-4);
  }
}

TEST_CASE("training is reproducible from the seed") {
  auto pos = gaussian_pool(40, 2, 1, 0.5, 0.5, 500);
  auto neg = gaussian_pool(40, 2, 1, -0.5, -0.5, 501);
  auto run = [&] {
    Rng rng(60);
    ExpertClassifier c = make_expert_classifier(2, 1, rng, 2);
    PuTrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 16;
    train_bce(c, pos, neg, cfg, rng);
    return c;
  };
  ExpertClassifier a = run(), b = run();
  for (std::size_t i = 0; i < a.head.layers.size(); ++i)
    REQUIRE(a.head.layers[i].w == b.head.layers[i].w);
  for (std::size_t i = 0; i < a.encoder.layers.size(); ++i)
    REQUIRE(a.encoder.layers[i].w == b.encoder.layers[i].w);
}

TEST_CASE("classifier serialization round-trips") {
  Rng rng(70);
  ExpertClassifier c = make_expert_classifier(4, 2, rng);
  std::stringstream buf;
  save_classifier(c, buf);
  ExpertClassifier back = load_classifier(buf);
  Eigen::VectorXd s(4), a(2);
  s << 0.1, 0.2, -0.3, 0.4;
  a << -0.5, 0.6;
  REQUIRE(predict(back, s, a) == predict(c, s, a));
}
