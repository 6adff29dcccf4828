#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "pubc/classifier.hpp"
#include "pubc/data.hpp"
#include "pubc/negatives.hpp"
#include "pubc/polyfit.hpp"
#include "pubc/rng.hpp"

namespace pubc {

struct FilterCollapseError : std::runtime_error {
  int iteration;
  explicit FilterCollapseError(int iter)
      : std::runtime_error("filter collapse: no positives identified at "
                           "iteration " + std::to_string(iter)),
        iteration(iter) {}
};

enum class DecisionVariant { Mean, LogSum };

inline DecisionVariant decision_variant_from_name(const std::string& s) {
  if (s == "mean") return DecisionVariant::Mean;
  if (s == "logsum") return DecisionVariant::LogSum;
  throw StructuralError("unknown decision variant: " + s);
}

struct FilterConfig {
  int ensemble_size = 3;          // K, odd
  int epochs_per_iteration = 20;
  int batch_size = 1024;
  double learning_rate = 1e-3;
  int poly_order = 10;
  int hist_bins = 50;
  double tolerance = 0.02;        // membership-change fraction
  int max_iterations = 10;
  double seed_fraction = 0.004;
  std::size_t seed_floor = 5;
  NegativeMixSpec negative_mix;   // total 0 = size to the positive subset
  DecisionVariant variant = DecisionVariant::Mean;
  LossVariant method = LossVariant::Bce;
  double class_prior = 0.004;
  bool pin_seed = false;
};

// Soft voting: mean of per-step expert probabilities.
inline double trajectory_confidence(const ExpertClassifier& c,
                                    const Trajectory& traj) {
  if (traj.transitions.empty())
    throw StructuralError("trajectory_confidence: empty trajectory");
  Eigen::MatrixXd s(c.state_dim, traj.transitions.size());
  Eigen::MatrixXd a(c.action_dim, traj.transitions.size());
  for (std::size_t i = 0; i < traj.transitions.size(); ++i) {
    s.col(i) = traj.transitions[i].state;
    a.col(i) = traj.transitions[i].action;
  }
  return predict_batch(c, s, a).mean();
}

struct ConfidenceHistogram {
  std::vector<double> bin_centers;
  std::vector<double> counts;
  std::vector<double> confidences;
};

inline ConfidenceHistogram make_histogram(const std::vector<double>& conf,
                                          int bins) {
  ConfidenceHistogram h;
  h.confidences = conf;
  h.bin_centers.resize(bins);
  h.counts.assign(bins, 0.0);
  for (int i = 0; i < bins; ++i) h.bin_centers[i] = (i + 0.5) / bins;
  for (double v : conf) {
    int idx = static_cast<int>(v * bins);
    idx = std::clamp(idx, 0, bins - 1);
    h.counts[idx] += 1.0;
  }
  return h;
}

// Minimum depth, as a fraction of the fitted curve's critical-value range,
// that a histogram valley must have below the peaks flanking it before it
// is accepted as the decision threshold.
inline constexpr double kThresholdProminence = 0.20;

struct ThresholdFit {
  std::vector<double> coefficients;
  double threshold = 0.5;
  bool fallback = false;
  int fitted_order = 0;
};

// Threshold = rightmost prominent local minimum of an order-P polynomial
// fitted to the confidence histogram; 0.5 with the fallback flag set when
// the fit has no such minimum or the confidences are degenerate.
inline ThresholdFit fit_adaptive_threshold(const std::vector<double>& conf,
                                           int poly_order, int bins,
                                           ConfidenceHistogram* hist_out = nullptr) {
  ThresholdFit fit;
  std::set<double> distinct(conf.begin(), conf.end());
  ConfidenceHistogram h = make_histogram(conf, bins);
  if (hist_out) *hist_out = h;
  if (distinct.size() < 2) {
    fit.fallback = true;
    return fit;
  }
  int order = std::min(poly_order, bins - 1);
  fit.fitted_order = order;
  fit.coefficients = polyfit(h.bin_centers, h.counts, order);
  double x;
  if (prominent_rightmost_minimum(fit.coefficients, 0.0, 1.0,
                                  kThresholdProminence, x)) {
    fit.threshold = std::clamp(x, 0.0, 1.0);
  } else {
    fit.fallback = true;
    fit.threshold = 0.5;
  }
  return fit;
}

// Majority vote over per-classifier confidences: positive iff
// strictly more than K/2 members individually clear the threshold.
inline bool decide_from_confidences(const std::vector<double>& member_conf,
                                    double th_conf) {
  int votes = 0;
  for (double c : member_conf)
    if (c >= th_conf) ++votes;
  return votes > static_cast<int>(member_conf.size()) / 2;
}

struct Ensemble {
  std::vector<ExpertClassifier> members;
};

inline bool ensemble_decide(const Ensemble& ens, const Trajectory& traj,
                            double th_conf,
                            DecisionVariant variant = DecisionVariant::Mean) {
  int votes = 0;
  double len = static_cast<double>(traj.transitions.size());
  for (const auto& m : ens.members) {
    bool vote;
    if (variant == DecisionVariant::Mean) {
      vote = trajectory_confidence(m, traj) >= th_conf;
    } else {
      // Product-of-probabilities variant: sum of log F against the
      // threshold mapped to the log scale, scaled by trajectory length.
      Eigen::MatrixXd s(m.state_dim, traj.transitions.size());
      Eigen::MatrixXd a(m.action_dim, traj.transitions.size());
      for (std::size_t i = 0; i < traj.transitions.size(); ++i) {
        s.col(i) = traj.transitions[i].state;
        a.col(i) = traj.transitions[i].action;
      }
      Eigen::RowVectorXd probs = predict_batch(m, s, a);
      double log_sum = 0.0;
      for (Eigen::Index i = 0; i < probs.size(); ++i)
        log_sum += std::log(probs(i));
      vote = log_sum >= len * std::log(std::max(th_conf, 1e-12));
    }
    if (vote) ++votes;
  }
  return votes > static_cast<int>(ens.members.size()) / 2;
}

struct IterationDiag {
  int iteration = 0;
  long positives = 0;
  double threshold = 0.5;
  bool threshold_fallback = false;
  double membership_change = 0.0;  // symmetric difference / N
  ConfidenceHistogram histogram;   // pooled mean confidences
  std::vector<double> fitted;      // polynomial value per bin center
  bool has_truth = false;
  ConfusionCounts confusion;
};

struct FilterResult {
  MembershipPartition partition;
  std::vector<IterationDiag> diagnostics;
  bool converged = false;
  int iterations = 0;
  Ensemble final_ensemble;
};

namespace detail {

inline std::vector<StateActionPair> pairs_of_ids(const Dataset& d,
                                                 const std::vector<long>& ids) {
  std::vector<StateActionPair> out;
  for (long id : ids) {
    const Trajectory& t = d.by_id(id);
    for (const auto& tr : t.transitions) out.push_back({tr.state, tr.action});
  }
  return out;
}

inline std::vector<StateActionPair> all_pairs(const Dataset& d) {
  std::vector<StateActionPair> out;
  for (const auto& t : d.trajectories)
    for (const auto& tr : t.transitions) out.push_back({tr.state, tr.action});
  return out;
}

}  // namespace detail

// One full run of the iterative PU filter. Every iteration trains K fresh
// classifiers on bootstrap resamples of the current positive set (BCE on
// synthetic negatives, or a baseline PU risk on the unlabeled pool),
// rescores all trajectories, refits the adaptive threshold and replaces
// the positive membership wholesale. Stops when the membership change
// fraction drops to the tolerance or max_iterations is hit. Baseline
// methods (unbiased/nonneg) run a single iteration: they are one-shot PU
// classifiers, not iterative refiners.
inline FilterResult run_pubc_filter(const Dataset& data,
                                    const std::vector<long>& seed_ids,
                                    const FilterConfig& cfg, std::uint64_t seed,
                                    const std::set<long>* expert_truth = nullptr) {
  if (seed_ids.empty())
    throw StructuralError("run_pubc_filter: empty seed positive set");
  if (cfg.ensemble_size < 1 || cfg.ensemble_size % 2 == 0)
    throw StructuralError("run_pubc_filter: ensemble size must be odd and >= 1");
  if (!(cfg.tolerance > 0.0 && cfg.tolerance < 1.0))
    throw StructuralError("run_pubc_filter: tolerance outside (0,1)");

  const std::size_t n_traj = data.trajectories.size();
  std::vector<StateActionPair> mix_pairs = detail::all_pairs(data);

  FilterResult result;
  result.partition.iteration = 0;
  std::set<long> positives(seed_ids.begin(), seed_ids.end());
  bool baseline = cfg.method != LossVariant::Bce;
  int max_iters = baseline ? 1 : cfg.max_iterations;

  for (int iter = 1; iter <= max_iters; ++iter) {
    std::vector<long> pos_ids(positives.begin(), positives.end());

    Ensemble ensemble;
    for (int k = 0; k < cfg.ensemble_size; ++k) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(iter) * 1000 + k));
      // Bootstrap resample of the current positive trajectories.
      std::vector<long> boot(pos_ids.size());
      for (auto& id : boot) id = pos_ids[rng.next_index(pos_ids.size())];
      std::vector<StateActionPair> pos_pairs = detail::pairs_of_ids(data, boot);

      ExpertClassifier clf =
          make_expert_classifier(data.state_dim, data.action_dim, rng);
      PuTrainConfig tc;
      tc.learning_rate = cfg.learning_rate;
      tc.batch_size = cfg.batch_size;
      tc.epochs = cfg.epochs_per_iteration;
      tc.variant = cfg.method;
      tc.class_prior = cfg.class_prior;
      if (!baseline) {
        NegativeMixSpec spec = cfg.negative_mix.total > 0
                                   ? cfg.negative_mix
                                   : NegativeMixSpec::equal_split(
                                         static_cast<long>(pos_pairs.size()));
        std::vector<NegativePair> negs =
            generate_negatives(pos_pairs, mix_pairs, spec, data.state_bounds,
                               data.action_bounds, rng);
        std::vector<StateActionPair> neg_pairs;
        neg_pairs.reserve(negs.size());
        for (auto& n : negs) neg_pairs.push_back({std::move(n.state),
                                                  std::move(n.action)});
        train_bce(clf, pos_pairs, neg_pairs, tc, rng);
      } else {
        train_pu(clf, pos_pairs, mix_pairs, tc, rng);
      }
      ensemble.members.push_back(std::move(clf));
    }

    // Score everything; the adaptive threshold is fitted once, on the
    // ensemble-mean confidences.
    std::vector<std::vector<double>> member_conf(
        ensemble.members.size(), std::vector<double>(n_traj));
    std::vector<double> mean_conf(n_traj, 0.0);
    for (std::size_t k = 0; k < ensemble.members.size(); ++k) {
      for (std::size_t i = 0; i < n_traj; ++i) {
        double c = trajectory_confidence(ensemble.members[k],
                                         data.trajectories[i]);
        member_conf[k][i] = c;
        mean_conf[i] += c / static_cast<double>(ensemble.members.size());
      }
    }
    IterationDiag diag;
    diag.iteration = iter;
    ThresholdFit fit = fit_adaptive_threshold(mean_conf, cfg.poly_order,
                                              cfg.hist_bins, &diag.histogram);
    diag.threshold = fit.threshold;
    diag.threshold_fallback = fit.fallback;
    for (double bc : diag.histogram.bin_centers)
      diag.fitted.push_back(fit.coefficients.empty()
                                ? 0.0
                                : poly_eval(fit.coefficients, bc));

    std::set<long> new_positives;
    for (std::size_t i = 0; i < n_traj; ++i) {
      std::vector<double> confs(ensemble.members.size());
      for (std::size_t k = 0; k < ensemble.members.size(); ++k)
        confs[k] = member_conf[k][i];
      bool positive;
      if (cfg.variant == DecisionVariant::Mean) {
        positive = decide_from_confidences(confs, fit.threshold);
      } else {
        positive = ensemble_decide(ensemble, data.trajectories[i],
                                   fit.threshold, cfg.variant);
      }
      if (positive) new_positives.insert(data.trajectories[i].id);
    }
    if (cfg.pin_seed)
      for (long id : seed_ids) new_positives.insert(id);
    // An empty positive set is fatal for the iterative loop (nothing left
    // to train on next round) but a valid, if useless, verdict from a
    // one-shot baseline.
    if (new_positives.empty() && !baseline) throw FilterCollapseError(iter);

    std::size_t sym_diff = 0;
    for (long id : new_positives)
      if (!positives.count(id)) ++sym_diff;
    for (long id : positives)
      if (!new_positives.count(id)) ++sym_diff;
    diag.membership_change =
        static_cast<double>(sym_diff) / static_cast<double>(n_traj);

    positives = std::move(new_positives);
    diag.positives = static_cast<long>(positives.size());

    MembershipPartition part;
    part.iteration = iter;
    part.positives = positives;
    for (const auto& t : data.trajectories)
      if (!positives.count(t.id)) part.unlabeled.insert(t.id);
    if (expert_truth) {
      diag.has_truth = true;
      diag.confusion = classification_accuracy(part, *expert_truth);
    }
    result.diagnostics.push_back(std::move(diag));
    result.partition = std::move(part);
    result.iterations = iter;
    result.final_ensemble = std::move(ensemble);

    if (result.diagnostics.back().membership_change <= cfg.tolerance) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace pubc
