#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "pubc/env.hpp"

using namespace pubc;

namespace {

double mean_return(PolicyKind kind, int n, std::uint64_t seed) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    total += rollout_scripted(kind, i, rng).ret;
  }
  return total / n;
}

}  // namespace

TEST_CASE("step integrates velocity with drag and clamps the action") {
  Eigen::VectorXd s(6);
  s << 0.1, -0.2, 0.3, 0.4, 0.5, 0.6;
  Eigen::VectorXd a(2);
  a << 2.0, -0.5;  // x component exceeds the actuator bound
  auto [next, reward] = PointMassEnv::step(s, a);
  // Hand-computed: vel' = (vel + clamp(a)*dt) * (1 - drag), pos' = pos + vel'*dt.
  double vx = (0.3 + 1.0 * 0.05) * 0.98;
  double vy = (0.4 - 0.5 * 0.05) * 0.98;
  double px = 0.1 + vx * 0.05;
  double py = -0.2 + vy * 0.05;
  REQUIRE(next(0) == Catch::Approx(px).margin(1e-15));
  REQUIRE(next(1) == Catch::Approx(py).margin(1e-15));
  REQUIRE(next(2) == Catch::Approx(vx).margin(1e-15));
  REQUIRE(next(3) == Catch::Approx(vy).margin(1e-15));
  REQUIRE(next(4) == 0.5);
  REQUIRE(next(5) == 0.6);
  double dist = std::hypot(px - 0.5, py - 0.6);
  REQUIRE(reward == Catch::Approx(-dist).margin(1e-15));
}

TEST_CASE("reset state layout and ranges") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd s = PointMassEnv::reset(rng);
    REQUIRE(s.size() == 6);
    REQUIRE(s(2) == 0.0);  // starts at rest
    REQUIRE(s(3) == 0.0);
    for (int j : {0, 1, 4, 5}) {
      REQUIRE(s(j) >= -1.0);
      REQUIRE(s(j) <= 1.0);
    }
  }
}

TEST_CASE("ExpertA at the goal with zero velocity commands a near-zero action") {
  Eigen::VectorXd s(6);
  s << 0.3, -0.4, 0.0, 0.0, 0.3, -0.4;
  Rng rng(1);
  Eigen::VectorXd a = scripted_action(PolicyKind::ExpertA, s, rng);
  REQUIRE(a.norm() == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("all scripted actions respect the actuator bounds") {
  Rng rng(17);
  for (PolicyKind k : {PolicyKind::ExpertA, PolicyKind::ExpertB,
                       PolicyKind::Weak, PolicyKind::Noise}) {
    for (int i = 0; i < 20; ++i) {
      Trajectory t = rollout_scripted(k, i, rng);
      for (const Transition& tr : t.transitions) {
        REQUIRE(tr.action.minCoeff() >= -1.0);
        REQUIRE(tr.action.maxCoeff() <= 1.0);
      }
    }
  }
}

TEST_CASE("rollout has full length, source label, and cached return") {
  Rng rng(9);
  Trajectory t = rollout_scripted(PolicyKind::Weak, 41, rng);
  REQUIRE(t.id == 41);
  REQUIRE(t.source_label == "Weak");
  REQUIRE(t.transitions.size() == static_cast<std::size_t>(PointMassEnv::kEpisodeLen));
  double sum = 0.0;
  for (const Transition& tr : t.transitions) sum += tr.reward;
  REQUIRE(t.ret == Catch::Approx(sum).margin(1e-12));
}

TEST_CASE("policy skill ordering holds with the calibrated margins") {
  const int n = 200;
  double a = mean_return(PolicyKind::ExpertA, n, 42);
  double b = mean_return(PolicyKind::ExpertB, n, 42);
  double w = mean_return(PolicyKind::Weak, n, 42);
  double z = mean_return(PolicyKind::Noise, n, 42);
  // Experts are interchangeable in skill: mean returns within 10%.
  REQUIRE(std::abs(a - b) <= 0.10 * std::min(std::abs(a), std::abs(b)));
  // Both experts beat Weak by at least 50% (cost-magnitude ratio).
  REQUIRE(std::abs(w) >= 1.5 * std::abs(a));
  REQUIRE(std::abs(w) >= 1.5 * std::abs(b));
  REQUIRE(w > z);
}

TEST_CASE("dataset_kind_sources composition table") {
  REQUIRE(dataset_kind_sources("E") ==
          std::vector<PolicyKind>{PolicyKind::ExpertA});
  REQUIRE(dataset_kind_sources("E+E+W+N").size() == 4);
  REQUIRE_THROWS_AS(dataset_kind_sources("bogus"), StructuralError);
}

TEST_CASE("compose_dataset: kind=E count=50 is all ExpertA") {
  Dataset d = compose_dataset("E", 50, 5);
  REQUIRE(d.trajectories.size() == 50);
  for (const Trajectory& t : d.trajectories) REQUIRE(t.source_label == "ExpertA");
}

TEST_CASE("compose_dataset: four-source mix has 50 per source") {
  Dataset d = compose_dataset("E+E+W+N", 50, 5);
  REQUIRE(d.trajectories.size() == 200);
  for (const char* lbl : {"ExpertA", "ExpertB", "Weak", "Noise"})
    REQUIRE(ids_with_label(d, lbl).size() == 50);
  // Every id appears exactly once.
  std::set<long> ids;
  for (const Trajectory& t : d.trajectories) ids.insert(t.id);
  REQUIRE(ids.size() == 200);
}

TEST_CASE("compose_dataset is reproducible and seed-sensitive") {
  Dataset d1 = compose_dataset("E+N", 20, 77);
  Dataset d2 = compose_dataset("E+N", 20, 77);
  Dataset d3 = compose_dataset("E+N", 20, 78);
  REQUIRE(dataset_equal(d1, d2));
  REQUIRE_FALSE(dataset_equal(d1, d3));
}

TEST_CASE("E+N composition: expert return mean exceeds noise return mean") {
  Dataset d = compose_dataset("E+N", 100, 42);
  double e = 0.0, n = 0.0;
  for (const Trajectory& t : d.trajectories)
    (t.source_label == "ExpertA" ? e : n) += t.ret / 100.0;
  REQUIRE(e > n);
}

TEST_CASE("compose_dataset rejects non-positive counts") {
  REQUIRE_THROWS_AS(compose_dataset("E", 0, 1), StructuralError);
}
