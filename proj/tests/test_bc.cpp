#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "pubc/bc.hpp"
#include "pubc/env.hpp"
#include "pubc/filter.hpp"

using namespace pubc;

namespace {

// Dataset whose actions are a fixed linear map of the state, well inside
// the action bounds, so the regression target is exactly realizable.
Dataset linear_map_dataset(int n_traj, int steps, std::uint64_t seed) {
  Eigen::MatrixXd w(2, 3);
  w << 0.3, -0.2, 0.1,
       0.05, 0.25, -0.15;
  Dataset d;
  d.state_dim = 3;
  d.action_dim = 2;
  Rng rng(seed);
  for (long id = 0; id < n_traj; ++id) {
    Trajectory t;
    t.id = id;
    for (int i = 0; i < steps; ++i) {
      Eigen::VectorXd s(3);
      for (int j = 0; j < 3; ++j) s(j) = rng.uniform(-1, 1);
      t.transitions.push_back({s, w * s, 0.0});
    }
    t.refresh_return();
    d.trajectories.push_back(std::move(t));
  }
  compute_bounds(d);
  // Widen action bounds so the tanh squash is not pinned near saturation.
  d.action_bounds.lo.setConstant(-1.0);
  d.action_bounds.hi.setConstant(1.0);
  return d;
}

double subset_mse(const Policy& p, const Dataset& d) {
  double mse = 0.0;
  long n = 0;
  for (const auto& t : d.trajectories)
    for (const auto& tr : t.transitions) {
      mse += (act(p, tr.state) - tr.action).squaredNorm();
      ++n;
    }
  return mse / static_cast<double>(n);
}

}  // namespace

TEST_CASE("realizable linear target is fit to MSE < 1e-3") {
  Dataset d = linear_map_dataset(20, 50, 1);
  BcConfig cfg;
  auto [policy, history] = train_bc(d, {}, cfg, 2);
  REQUIRE(subset_mse(policy, d) < 1e-3);
  REQUIRE(history.size() == 200);
}

TEST_CASE("BC loss decreases on a realizable dataset") {
  Dataset d = linear_map_dataset(10, 40, 3);
  BcConfig cfg;
  cfg.epochs = 50;
  auto [policy, history] = train_bc(d, {}, cfg, 4);
  REQUIRE(history.back() < history.front());
}

TEST_CASE("conflicting actions for one state regress to their average") {
  // The same state appears with two different recorded actions; the MSE
  // minimizer is their mean. This is the regression-ambiguity failure mode
  // that motivates filtering multi-expert data before cloning.
  Dataset d;
  d.state_dim = 2;
  d.action_dim = 2;
  Eigen::VectorXd s0(2);
  s0 << 0.4, -0.3;
  Eigen::VectorXd a0(2), a1(2);
  a0 << 0.6, -0.2;
  a1 << -0.2, 0.4;
  for (long id = 0; id < 2; ++id) {
    Trajectory t;
    t.id = id;
    for (int i = 0; i < 100; ++i)
      t.transitions.push_back({s0, id == 0 ? a0 : a1, 0.0});
    t.refresh_return();
    d.trajectories.push_back(std::move(t));
  }
  compute_bounds(d);
  d.action_bounds.lo.setConstant(-1.0);
  d.action_bounds.hi.setConstant(1.0);
  BcConfig cfg;
  auto [policy, history] = train_bc(d, {}, cfg, 5);
  Eigen::VectorXd mid = 0.5 * (a0 + a1);
  REQUIRE((act(policy, s0) - mid).norm() < 0.02);
}

TEST_CASE("train_bc rejects an empty subset") {
  Dataset d;
  d.state_dim = 2;
  d.action_dim = 2;
  BcConfig cfg;
  REQUIRE_THROWS_AS(train_bc(d, {}, cfg, 1), StructuralError);
}

TEST_CASE("identical seeds give identical policies") {
  Dataset d = linear_map_dataset(5, 30, 6);
  BcConfig cfg;
  cfg.epochs = 20;
  auto [p1, h1] = train_bc(d, {}, cfg, 7);
  auto [p2, h2] = train_bc(d, {}, cfg, 7);
  REQUIRE(h1 == h2);
  for (std::size_t l = 0; l < p1.net.layers.size(); ++l) {
    REQUIRE(p1.net.layers[l].w == p2.net.layers[l].w);
    REQUIRE(p1.net.layers[l].b == p2.net.layers[l].b);
  }
}

TEST_CASE("act: zero-weight net emits the bounds midpoint") {
  Policy p;
  Rng rng(8);
  p.net = make_dense_net({6, 8, 2}, Activation::Tanh, Activation::Identity, rng);
  for (auto& l : p.net.layers) {
    l.w.setZero();
    l.b.setZero();
  }
  p.action_lo = Eigen::VectorXd::Constant(2, -1.0);
  p.action_hi = Eigen::VectorXd::Constant(2, 1.0);
  Eigen::VectorXd s = Eigen::VectorXd::Random(6);
  REQUIRE(act(p, s).norm() == 0.0);
}

TEST_CASE("act is deterministic and always within bounds") {
  Policy p;
  Rng rng(9);
  p.net = make_dense_net({6, 32, 2}, Activation::Tanh, Activation::Identity, rng);
  for (auto& l : p.net.layers) l.w *= 20.0;  // push tanh toward saturation
  p.action_lo = Eigen::VectorXd::Constant(2, -1.0);
  p.action_hi = Eigen::VectorXd::Constant(2, 1.0);
  for (int i = 0; i < 10000; ++i) {
    Eigen::VectorXd s(6);
    for (int j = 0; j < 6; ++j) s(j) = rng.uniform(-3, 3);
    Eigen::VectorXd a = act(p, s);
    REQUIRE(a.minCoeff() >= -1.0);
    REQUIRE(a.maxCoeff() <= 1.0);
    REQUIRE(act(p, s) == a);
  }
}

TEST_CASE("evaluate: single episode reports one return equal to its mean") {
  Policy p;
  Rng rng(10);
  p.net = make_dense_net({6, 8, 2}, Activation::Tanh, Activation::Identity, rng);
  p.action_lo = Eigen::VectorXd::Constant(2, -1.0);
  p.action_hi = Eigen::VectorXd::Constant(2, 1.0);
  EvalReport r = evaluate(p, 1, 11, -100.0, 0.0);
  REQUIRE(r.returns.size() == 1);
  REQUIRE(r.mean_return == r.returns[0]);
  REQUIRE(r.episodes == 1);
}

TEST_CASE("evaluate: mean and normalized score are consistent") {
  Policy p;
  Rng rng(12);
  p.net = make_dense_net({6, 8, 2}, Activation::Tanh, Activation::Identity, rng);
  p.action_lo = Eigen::VectorXd::Constant(2, -1.0);
  p.action_hi = Eigen::VectorXd::Constant(2, 1.0);
  EvalReport r = evaluate(p, 25, 13, -100.0, -10.0);
  double mean = 0.0;
  for (double ret : r.returns) mean += ret / 25.0;
  REQUIRE(r.mean_return == Catch::Approx(mean).margin(1e-9));
  REQUIRE(r.normalized ==
          Catch::Approx(normalized_score(mean, -100.0, -10.0)).margin(1e-12));
}

TEST_CASE("scripted expert evaluated closed-loop regenerates its data returns") {
  const int n = 100;
  EvalReport r = evaluate_with(
      [](const Eigen::VectorXd& s, Rng& rng) {
        return scripted_action(PolicyKind::ExpertA, s, rng);
      },
      n, 42, -100.0, 0.0);
  double data_mean = 0.0;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(42, static_cast<std::uint64_t>(i)));
    data_mean += rollout_scripted(PolicyKind::ExpertA, i, rng).ret / n;
  }
  REQUIRE(std::abs(r.mean_return - data_mean) <= 0.05 * std::abs(data_mean));
}

TEST_CASE("uniform-random policy scores below the weak policy") {
  auto eval_kind = [](PolicyKind k) {
    return evaluate_with(
               [k](const Eigen::VectorXd& s, Rng& rng) {
                 return scripted_action(k, s, rng);
               },
               100, 17, -100.0, 0.0)
        .mean_return;
  };
  REQUIRE(eval_kind(PolicyKind::Noise) < eval_kind(PolicyKind::Weak));
}

TEST_CASE("policy serialization round-trips actions exactly") {
  Dataset d = linear_map_dataset(5, 30, 14);
  BcConfig cfg;
  cfg.epochs = 10;
  auto [p, hist] = train_bc(d, {}, cfg, 15);
  std::string path = "bc_roundtrip_policy.txt";
  save_policy(p, path);
  Policy q = load_policy(path);
  std::remove(path.c_str());
  Rng rng(16);
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd s(3);
    for (int j = 0; j < 3; ++j) s(j) = rng.uniform(-1, 1);
    REQUIRE(act(p, s) == act(q, s));
  }
}

TEST_CASE("filtering E+W before cloning improves the evaluated return") {
  Dataset d = compose_dataset("E+W", 50, 19);
  std::vector<long> seeds = top_fraction_by_return(d, 0.10, 5);
  FilterConfig fcfg;
  FilterResult r = run_pubc_filter(d, seeds, fcfg, 20);
  std::vector<long> pos(r.partition.positives.begin(),
                        r.partition.positives.end());
  BcConfig bcfg;
  bcfg.epochs = 60;
  for (std::uint64_t bs : {1, 2, 3}) {
    auto [pf, hf] = train_bc(d, pos, bcfg, bs);
    auto [pm, hm] = train_bc(d, {}, bcfg, bs);
    double rf = evaluate(pf, 40, 500 + bs, -106.0, -22.8).mean_return;
    double rm = evaluate(pm, 40, 500 + bs, -106.0, -22.8).mean_return;
    REQUIRE(rf > rm);
  }
}
