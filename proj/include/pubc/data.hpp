#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pubc/nn.hpp"

namespace pubc {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  double reward = 0.0;
};

struct Trajectory {
  long id = 0;
  std::vector<Transition> transitions;
  double ret = 0.0;                 // cached sum of rewards
  std::string source_label;         // empty = no ground truth

  void refresh_return() {
    ret = 0.0;
    for (const auto& t : transitions) ret += t.reward;
  }
};

struct Bounds {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

struct Dataset {
  int state_dim = 0;
  int action_dim = 0;
  Bounds state_bounds;
  Bounds action_bounds;
  std::vector<Trajectory> trajectories;

  const Trajectory& by_id(long id) const {
    for (const auto& t : trajectories)
      if (t.id == id) return t;
    throw StructuralError("unknown trajectory id " + std::to_string(id));
  }
};

struct MembershipPartition {
  std::set<long> positives;
  std::set<long> unlabeled;
  int iteration = 0;
};

// Full round-trip precision; also the fixed numeric format for every
// emitted file, so equal runs produce byte-equal output.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void compute_bounds(Dataset& d) {
  bool any = false;
  for (const auto& t : d.trajectories)
    if (!t.transitions.empty()) any = true;
  if (!any) throw StructuralError("compute_bounds: empty dataset");
  d.state_bounds.lo = Eigen::VectorXd::Constant(d.state_dim, 1e300);
  d.state_bounds.hi = Eigen::VectorXd::Constant(d.state_dim, -1e300);
  d.action_bounds.lo = Eigen::VectorXd::Constant(d.action_dim, 1e300);
  d.action_bounds.hi = Eigen::VectorXd::Constant(d.action_dim, -1e300);
  for (const auto& t : d.trajectories) {
    for (const auto& tr : t.transitions) {
      d.state_bounds.lo = d.state_bounds.lo.cwiseMin(tr.state);
      d.state_bounds.hi = d.state_bounds.hi.cwiseMax(tr.state);
      d.action_bounds.lo = d.action_bounds.lo.cwiseMin(tr.action);
      d.action_bounds.hi = d.action_bounds.hi.cwiseMax(tr.action);
    }
  }
}

// Format: text header (magic, dims, bounds, count) followed by one line
// per trajectory: id, label or "-", length, then flat states/actions/rewards.
inline void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "pubc-dataset 1\n";
  out << "dims " << d.state_dim << " " << d.action_dim << "\n";
  auto bounds_line = [&](const char* name, const Bounds& b, int dim) {
    out << name;
    for (int i = 0; i < dim; ++i) out << " " << fmt_double(b.lo(i));
    for (int i = 0; i < dim; ++i) out << " " << fmt_double(b.hi(i));
    out << "\n";
  };
  bounds_line("state_bounds", d.state_bounds, d.state_dim);
  bounds_line("action_bounds", d.action_bounds, d.action_dim);
  out << "trajectories " << d.trajectories.size() << "\n";
  for (const auto& t : d.trajectories) {
    out << t.id << " " << (t.source_label.empty() ? "-" : t.source_label)
        << " " << t.transitions.size();
    for (const auto& tr : t.transitions)
      for (int i = 0; i < d.state_dim; ++i)
        out << " " << fmt_double(tr.state(i));
    for (const auto& tr : t.transitions)
      for (int i = 0; i < d.action_dim; ++i)
        out << " " << fmt_double(tr.action(i));
    for (const auto& tr : t.transitions) out << " " << fmt_double(tr.reward);
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  Dataset d;
  std::string line, tok;

  auto need_line = [&](const char* what) {
    if (!std::getline(in, line))
      throw ParseError(std::string("unexpected end of file, expected ") +
                       what);
  };
  need_line("magic");
  if (line != "pubc-dataset 1")
    throw ParseError("bad magic line: " + line);
  need_line("dims");
  {
    std::istringstream ss(line);
    ss >> tok >> d.state_dim >> d.action_dim;
    if (tok != "dims" || ss.fail() || d.state_dim < 1 || d.action_dim < 1)
      throw ParseError("bad dims line: " + line);
  }
  auto read_bounds = [&](const char* name, Bounds& b, int dim) {
    need_line(name);
    std::istringstream ss(line);
    ss >> tok;
    if (tok != name) throw ParseError(std::string("expected ") + name);
    b.lo.resize(dim);
    b.hi.resize(dim);
    for (int i = 0; i < dim; ++i) ss >> b.lo(i);
    for (int i = 0; i < dim; ++i) ss >> b.hi(i);
    if (ss.fail()) throw ParseError(std::string("bad ") + name + " line");
  };
  read_bounds("state_bounds", d.state_bounds, d.state_dim);
  read_bounds("action_bounds", d.action_bounds, d.action_dim);
  need_line("trajectories");
  std::size_t count = 0;
  {
    std::istringstream ss(line);
    ss >> tok >> count;
    if (tok != "trajectories" || ss.fail())
      throw ParseError("bad trajectories line: " + line);
  }
  std::set<long> seen;
  for (std::size_t rec = 1; rec <= count; ++rec) {
    need_line("trajectory record");
    std::istringstream ss(line);
    Trajectory t;
    std::string label;
    std::size_t len = 0;
    ss >> t.id >> label >> len;
    if (ss.fail() || len < 1)
      throw ParseError("record " + std::to_string(rec) +
                       ": bad id/label/length");
    if (!seen.insert(t.id).second)
      throw ParseError("record " + std::to_string(rec) +
                       ": duplicate trajectory id " + std::to_string(t.id));
    t.source_label = (label == "-") ? "" : label;
    t.transitions.resize(len);
    for (auto& tr : t.transitions) {
      tr.state.resize(d.state_dim);
      for (int i = 0; i < d.state_dim; ++i) ss >> tr.state(i);
    }
    for (auto& tr : t.transitions) {
      tr.action.resize(d.action_dim);
      for (int i = 0; i < d.action_dim; ++i) ss >> tr.action(i);
    }
    for (auto& tr : t.transitions) ss >> tr.reward;
    if (ss.fail())
      throw ParseError("record " + std::to_string(rec) +
                       ": truncated or malformed value array");
    double trailing;
    if (ss >> trailing)
      throw ParseError("record " + std::to_string(rec) +
                       ": trailing values (dimension mismatch?)");
    t.refresh_return();
    d.trajectories.push_back(std::move(t));
  }
  return d;
}

inline bool dataset_equal(const Dataset& a, const Dataset& b) {
  if (a.state_dim != b.state_dim || a.action_dim != b.action_dim) return false;
  if (a.trajectories.size() != b.trajectories.size()) return false;
  auto veq = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    return x.size() == y.size() && x == y;
  };
  if (!veq(a.state_bounds.lo, b.state_bounds.lo) ||
      !veq(a.state_bounds.hi, b.state_bounds.hi) ||
      !veq(a.action_bounds.lo, b.action_bounds.lo) ||
      !veq(a.action_bounds.hi, b.action_bounds.hi))
    return false;
  for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
    const auto& ta = a.trajectories[i];
    const auto& tb = b.trajectories[i];
    if (ta.id != tb.id || ta.source_label != tb.source_label) return false;
    if (ta.transitions.size() != tb.transitions.size()) return false;
    for (std::size_t j = 0; j < ta.transitions.size(); ++j) {
      if (!veq(ta.transitions[j].state, tb.transitions[j].state)) return false;
      if (!veq(ta.transitions[j].action, tb.transitions[j].action))
        return false;
      if (ta.transitions[j].reward != tb.transitions[j].reward) return false;
    }
  }
  return true;
}

// Ids of the ceil(fraction*N) highest-return trajectories, never fewer
// than min_count. Ties broken toward the smaller id.
inline std::vector<long> top_fraction_by_return(const Dataset& d,
                                                double fraction,
                                                std::size_t min_count = 1) {
  if (d.trajectories.empty())
    throw StructuralError("top_fraction_by_return: empty dataset");
  if (fraction <= 0.0 || fraction > 1.0)
    throw StructuralError("top_fraction_by_return: fraction out of (0,1]");
  std::vector<const Trajectory*> sorted;
  for (const auto& t : d.trajectories) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(),
            [](const Trajectory* a, const Trajectory* b) {
              if (a->ret != b->ret) return a->ret > b->ret;
              return a->id < b->id;
            });
  std::size_t n = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(sorted.size())));
  n = std::max(n, min_count);
  n = std::min(n, sorted.size());
  std::vector<long> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(sorted[i]->id);
  return ids;
}

struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  long total() const { return tp + fp + fn + tn; }
};

inline ConfusionCounts classification_accuracy(
    const MembershipPartition& part, const std::set<long>& expert_ids) {
  ConfusionCounts c;
  for (long id : part.positives) {
    if (expert_ids.count(id)) ++c.tp;
    else ++c.fp;
  }
  for (long id : part.unlabeled) {
    if (expert_ids.count(id)) ++c.fn;
    else ++c.tn;
  }
  long total = c.total();
  if (total == 0) throw StructuralError("classification_accuracy: empty partition");
  c.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
  return c;
}

inline double normalized_score(double score, double score_min,
                               double score_max) {
  if (!(score_max > score_min))
    throw StructuralError("normalized_score: score_max must exceed score_min");
  return (score - score_min) / (score_max - score_min);
}

}  // namespace pubc
