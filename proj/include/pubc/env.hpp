#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pubc/data.hpp"
#include "pubc/rng.hpp"

namespace pubc {

// 2-D point mass with velocity drag, accelerating toward a goal.
// State [px, py, vx, vy, gx, gy]; action = acceleration in [-1,1]^2.
struct PointMassEnv {
  static constexpr int kStateDim = 6;
  static constexpr int kActionDim = 2;
  static constexpr double kDt = 0.05;
  static constexpr double kDrag = 0.02;
  static constexpr int kEpisodeLen = 100;

  static Eigen::VectorXd reset(Rng& rng) {
    Eigen::VectorXd s(kStateDim);
    s << rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0, 0.0,
        rng.uniform(-1, 1), rng.uniform(-1, 1);
    return s;
  }

  // Reward is the negated distance to goal after the move.
  static std::pair<Eigen::VectorXd, double> step(const Eigen::VectorXd& s,
                                                 const Eigen::VectorXd& a) {
    Eigen::Vector2d pos = s.segment<2>(0);
    Eigen::Vector2d vel = s.segment<2>(2);
    Eigen::Vector2d goal = s.segment<2>(4);
    Eigen::Vector2d acc = a.cwiseMax(-1.0).cwiseMin(1.0);
    vel = (vel + acc * kDt) * (1.0 - kDrag);
    pos += vel * kDt;
    Eigen::VectorXd next(kStateDim);
    next << pos, vel, goal;
    return {next, -(pos - goal).norm()};
  }
};

enum class PolicyKind { ExpertA, ExpertB, Weak, Noise };

inline const char* policy_kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::ExpertA: return "ExpertA";
    case PolicyKind::ExpertB: return "ExpertB";
    case PolicyKind::Weak: return "Weak";
    case PolicyKind::Noise: return "Noise";
  }
  return "?";
}

// Scripted data-collection policies of graded skill. ExpertB matches
// ExpertA's skill but approaches with a perpendicular curl habit.
inline Eigen::VectorXd scripted_action(PolicyKind kind,
                                       const Eigen::VectorXd& s, Rng& rng) {
  Eigen::Vector2d pos = s.segment<2>(0);
  Eigen::Vector2d vel = s.segment<2>(2);
  Eigen::Vector2d goal = s.segment<2>(4);
  Eigen::Vector2d err = goal - pos;
  Eigen::Vector2d a;
  switch (kind) {
    case PolicyKind::ExpertA:
      a = 4.0 * err - 2.0 * vel;
      break;
    case PolicyKind::ExpertB: {
      // Constant-magnitude curl: the habit stays visible during the final
      // approach instead of vanishing with the tracking error.
      Eigen::Vector2d perp(-err.y(), err.x());
      a = 4.0 * err - 2.0 * vel + 0.15 * perp / (err.norm() + 1e-6);
      break;
    }
    case PolicyKind::Weak:
      a = 1.0 * err - 0.2 * vel;
      a.x() += rng.normal(0.0, 0.3);
      a.y() += rng.normal(0.0, 0.3);
      break;
    case PolicyKind::Noise:
      a = Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1));
      break;
  }
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

inline Trajectory rollout_scripted(PolicyKind kind, long id, Rng& rng) {
  Trajectory traj;
  traj.id = id;
  traj.source_label = policy_kind_name(kind);
  Eigen::VectorXd s = PointMassEnv::reset(rng);
  for (int t = 0; t < PointMassEnv::kEpisodeLen; ++t) {
    Eigen::VectorXd a = scripted_action(kind, s, rng);
    auto [next, reward] = PointMassEnv::step(s, a);
    traj.transitions.push_back({s, a, reward});
    s = next;
  }
  traj.refresh_return();
  return traj;
}

inline std::vector<PolicyKind> dataset_kind_sources(const std::string& kind) {
  if (kind == "E") return {PolicyKind::ExpertA};
  if (kind == "E+E") return {PolicyKind::ExpertA, PolicyKind::ExpertB};
  if (kind == "E+W") return {PolicyKind::ExpertA, PolicyKind::Weak};
  if (kind == "E+N") return {PolicyKind::ExpertA, PolicyKind::Noise};
  if (kind == "E+E+W+N")
    return {PolicyKind::ExpertA, PolicyKind::ExpertB, PolicyKind::Weak,
            PolicyKind::Noise};
  throw StructuralError("unknown dataset kind: " + kind);
}

// Equal trajectory counts per constituent source, shuffled, fully labeled.
inline Dataset compose_dataset(const std::string& kind, int per_source_count,
                               std::uint64_t seed) {
  if (per_source_count < 1)
    throw StructuralError("compose_dataset: per_source_count must be >= 1");
  std::vector<PolicyKind> sources = dataset_kind_sources(kind);
  Dataset d;
  d.state_dim = PointMassEnv::kStateDim;
  d.action_dim = PointMassEnv::kActionDim;
  long id = 0;
  for (PolicyKind src : sources) {
    for (int i = 0; i < per_source_count; ++i) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(id)));
      d.trajectories.push_back(rollout_scripted(src, id, rng));
      ++id;
    }
  }
  Rng shuffle_rng(derive_seed(seed, 0xfffffffull));
  shuffle_rng.shuffle(d.trajectories);
  compute_bounds(d);
  return d;
}

inline std::set<long> ids_with_label(const Dataset& d,
                                     const std::string& label) {
  std::set<long> ids;
  for (const auto& t : d.trajectories)
    if (t.source_label == label) ids.insert(t.id);
  return ids;
}

}  // namespace pubc
