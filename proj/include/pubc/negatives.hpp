#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "pubc/data.hpp"
#include "pubc/rng.hpp"

namespace pubc {

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StateActionPair {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
};

// Seven source combinations for synthetic negatives:
//   1 (s+, a_mix)  2 (s+, a~)  3 (s_mix, a+)  4 (s_mix, a~)
//   5 (s~, a+)     6 (s~, a_mix)  7 (s~, a~)
// where + draws from the positive pool, mix from the full mixed pool and
// ~ is uniform within the per-dimension bounds.
struct NegativeMixSpec {
  std::array<long, 7> counts{};
  long total = 0;

  static NegativeMixSpec equal_split(long total) {
    NegativeMixSpec s;
    s.total = total;
    long base = total / 7;
    long rem = total % 7;
    for (int i = 0; i < 7; ++i) s.counts[i] = base + (i < rem ? 1 : 0);
    return s;
  }

  static NegativeMixSpec explicit_counts(const std::array<long, 7>& c) {
    NegativeMixSpec s;
    s.counts = c;
    s.total = 0;
    for (long v : c) s.total += v;
    return s;
  }
};

inline Eigen::VectorXd sample_uniform_vector(const Bounds& b, Rng& rng) {
  if (b.lo.size() != b.hi.size() || (b.lo.array() > b.hi.array()).any())
    throw StructuralError("sample_uniform_vector: invalid bounds");
  Eigen::VectorXd v(b.lo.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v(i) = rng.uniform(b.lo(i), b.hi(i));
  return v;
}

inline Eigen::VectorXd sample_uniform_state(const Bounds& state_bounds,
                                            Rng& rng) {
  return sample_uniform_vector(state_bounds, rng);
}
inline Eigen::VectorXd sample_uniform_action(const Bounds& action_bounds,
                                             Rng& rng) {
  return sample_uniform_vector(action_bounds, rng);
}

struct NegativePair {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  int source_combo = 0;  // 1..7
};

namespace detail {

// Key of the concatenated (s,a) vector quantized at 1e-9, the resolution
// of the distinctness predicate. Exact duplicates always collide.
inline std::uint64_t pair_key(const Eigen::VectorXd& s,
                              const Eigen::VectorXd& a) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto mix = [&](double x) {
    auto q = static_cast<std::int64_t>(std::llround(x * 1e9));
    auto u = static_cast<std::uint64_t>(q);
    for (int i = 0; i < 8; ++i) {
      h ^= (u >> (8 * i)) & 0xffull;
      h *= 1099511628211ull;
    }
  };
  for (Eigen::Index i = 0; i < s.size(); ++i) mix(s(i));
  for (Eigen::Index i = 0; i < a.size(); ++i) mix(a(i));
  return h;
}

}  // namespace detail

// Fabricates spec.total state-action pairs that almost surely represent
// non-expert behavior, by mismatching states and actions across pools.
// Every emitted pair is checked against the raw pairs of both pools;
// a pair that reproduces one is resampled (at most 100 attempts).
inline std::vector<NegativePair> generate_negatives(
    const std::vector<StateActionPair>& d_plus,
    const std::vector<StateActionPair>& d_mix, const NegativeMixSpec& spec,
    const Bounds& state_bounds, const Bounds& action_bounds, Rng& rng) {
  if (spec.total < 1)
    throw StructuralError("generate_negatives: spec.total must be >= 1");
  long check = 0;
  for (long c : spec.counts) {
    if (c < 0) throw StructuralError("generate_negatives: negative count");
    check += c;
  }
  if (check != spec.total)
    throw StructuralError("generate_negatives: counts do not sum to total");

  std::unordered_set<std::uint64_t> raw_keys;
  raw_keys.reserve(2 * (d_plus.size() + d_mix.size()));
  for (const auto& p : d_plus) raw_keys.insert(detail::pair_key(p.state, p.action));
  for (const auto& p : d_mix) raw_keys.insert(detail::pair_key(p.state, p.action));

  auto plus_state = [&]() -> const Eigen::VectorXd& {
    if (d_plus.empty()) throw StructuralError("generate_negatives: empty D+ pool");
    return d_plus[rng.next_index(d_plus.size())].state;
  };
  auto plus_action = [&]() -> const Eigen::VectorXd& {
    if (d_plus.empty()) throw StructuralError("generate_negatives: empty D+ pool");
    return d_plus[rng.next_index(d_plus.size())].action;
  };
  auto mix_state = [&]() -> const Eigen::VectorXd& {
    if (d_mix.empty()) throw StructuralError("generate_negatives: empty Dmix pool");
    return d_mix[rng.next_index(d_mix.size())].state;
  };
  auto mix_action = [&]() -> const Eigen::VectorXd& {
    if (d_mix.empty()) throw StructuralError("generate_negatives: empty Dmix pool");
    return d_mix[rng.next_index(d_mix.size())].action;
  };

  std::vector<NegativePair> out;
  out.reserve(static_cast<std::size_t>(spec.total));
  for (int combo = 1; combo <= 7; ++combo) {
    for (long n = 0; n < spec.counts[combo - 1]; ++n) {
      NegativePair pair;
      pair.source_combo = combo;
      int attempts = 0;
      for (;;) {
        switch (combo) {
          case 1: pair.state = plus_state(); pair.action = mix_action(); break;
          case 2: pair.state = plus_state();
                  pair.action = sample_uniform_action(action_bounds, rng); break;
          case 3: pair.state = mix_state(); pair.action = plus_action(); break;
          case 4: pair.state = mix_state();
                  pair.action = sample_uniform_action(action_bounds, rng); break;
          case 5: pair.state = sample_uniform_state(state_bounds, rng);
                  pair.action = plus_action(); break;
          case 6: pair.state = sample_uniform_state(state_bounds, rng);
                  pair.action = mix_action(); break;
          case 7: pair.state = sample_uniform_state(state_bounds, rng);
                  pair.action = sample_uniform_action(action_bounds, rng); break;
        }
        if (!raw_keys.count(detail::pair_key(pair.state, pair.action))) break;
        if (++attempts >= 100)
          throw GenerationError(
              "generate_negatives: 100 resampling attempts exhausted for "
              "combo " + std::to_string(combo) +
              " (degenerate dataset?)");
      }
      out.push_back(std::move(pair));
    }
  }
  return out;
}

}  // namespace pubc
