// Command-line front end for the PUBC pipeline: synthetic data generation,
// PU filtering, behavioral cloning and policy evaluation.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pubc/bc.hpp"
#include "pubc/data.hpp"
#include "pubc/env.hpp"
#include "pubc/filter.hpp"

namespace fs = std::filesystem;
using namespace pubc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitPipeline = 4;

// Nominal normalized-score anchors for the point-mass task: mean returns
// of the scripted Noise and ExpertA policies over the calibration run
// (see test_env.cpp, which pins the ordering these anchors rely on).
constexpr double kDefaultScoreMin = -106.0;
constexpr double kDefaultScoreMax = -22.8;

void write_effective_config(const fs::path& dir, const std::string& verb,
                            const std::map<std::string, std::string>& kv) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream out(dir / (verb + "_config.txt"));
  if (!out) throw IoError("cannot write effective config in " + dir.string());
  for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

std::vector<long> load_membership(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read membership file " + path);
  std::vector<long> ids;
  long id;
  while (in >> id) ids.push_back(id);
  return ids;
}

void save_membership(const std::vector<long>& ids, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (long id : ids) out << id << "\n";
}

std::set<long> expert_ids_from_labels(const Dataset& d,
                                      const std::vector<std::string>& labels) {
  std::set<long> ids;
  for (const auto& t : d.trajectories)
    for (const auto& l : labels)
      if (t.source_label == l) ids.insert(t.id);
  return ids;
}

bool has_labels(const Dataset& d) {
  for (const auto& t : d.trajectories)
    if (!t.source_label.empty()) return true;
  return false;
}

struct FilterCmdOptions {
  std::string data_path;
  std::string out_dir = "filter_out";
  std::uint64_t seed = 1;
  std::string method = "pubc";
  bool naive = false;
  double top_fraction = 0.004;
  bool top_fraction_set = false;
  int k = 3;
  int poly_order = 10;
  int epochs = 20;
  int max_iters = 10;
  double tolerance = 0.02;
  int bins = 50;
  int batch = 1024;
  double lr = 1e-3;
  double delta = 0.004;
  std::string variant = "mean";
  std::string seed_label;
  std::vector<std::string> expert_labels{"ExpertA"};
  bool pin_seed = false;
};

int run_filter(const FilterCmdOptions& opt) {
  Dataset data = load_dataset(opt.data_path);
  fs::create_directories(opt.out_dir);

  std::map<std::string, std::string> cfg_echo = {
      {"data", opt.data_path},
      {"seed", std::to_string(opt.seed)},
      {"method", opt.naive ? "naive" : opt.method},
      {"top_fraction", fmt_double(opt.top_fraction)},
      {"k", std::to_string(opt.k)},
      {"poly_order", std::to_string(opt.poly_order)},
      {"epochs", std::to_string(opt.epochs)},
      {"max_iters", std::to_string(opt.max_iters)},
      {"tolerance", fmt_double(opt.tolerance)},
      {"bins", std::to_string(opt.bins)},
      {"batch", std::to_string(opt.batch)},
      {"lr", fmt_double(opt.lr)},
      {"delta", fmt_double(opt.delta)},
      {"variant", opt.variant},
      {"seed_label", opt.seed_label},
      {"pin_seed", opt.pin_seed ? "1" : "0"}};
  write_effective_config(opt.out_dir, "filter", cfg_echo);

  std::set<long> expert_truth = expert_ids_from_labels(data, opt.expert_labels);
  bool truth_available = has_labels(data) && !expert_truth.empty();

  if (opt.naive) {
    // Reward-based baseline: keep the top-return fraction, no learning.
    double frac = opt.top_fraction_set ? opt.top_fraction : 0.10;
    std::vector<long> ids = top_fraction_by_return(data, frac);
    save_membership(ids, fs::path(opt.out_dir) / "membership.txt");
    std::cout << "naive filter kept " << ids.size() << " of "
              << data.trajectories.size() << " trajectories\n";
    if (truth_available) {
      MembershipPartition part;
      part.positives.insert(ids.begin(), ids.end());
      for (const auto& t : data.trajectories)
        if (!part.positives.count(t.id)) part.unlabeled.insert(t.id);
      ConfusionCounts c = classification_accuracy(part, expert_truth);
      std::cout << "accuracy " << fmt_double(c.accuracy) << " (TP " << c.tp
                << " FP " << c.fp << " FN " << c.fn << " TN " << c.tn << ")\n";
    }
    return kExitOk;
  }

  // Seed positives: highest-return trajectories, optionally restricted to
  // one source label, floored at 5 so tiny datasets still train.
  std::vector<long> seed_ids;
  if (opt.seed_label.empty()) {
    seed_ids = top_fraction_by_return(data, opt.top_fraction, 5);
  } else {
    Dataset restricted;
    restricted.state_dim = data.state_dim;
    restricted.action_dim = data.action_dim;
    restricted.state_bounds = data.state_bounds;
    restricted.action_bounds = data.action_bounds;
    for (const auto& t : data.trajectories)
      if (t.source_label == opt.seed_label) restricted.trajectories.push_back(t);
    if (restricted.trajectories.empty())
      throw StructuralError("no trajectories labeled " + opt.seed_label);
    double frac = opt.top_fraction * data.trajectories.size() /
                  restricted.trajectories.size();
    seed_ids = top_fraction_by_return(restricted, std::min(frac, 1.0), 5);
  }

  FilterConfig fc;
  fc.ensemble_size = opt.k;
  fc.epochs_per_iteration = opt.epochs;
  fc.batch_size = opt.batch;
  fc.learning_rate = opt.lr;
  fc.poly_order = opt.poly_order;
  fc.hist_bins = opt.bins;
  fc.tolerance = opt.tolerance;
  fc.max_iterations = opt.max_iters;
  fc.seed_fraction = opt.top_fraction;
  fc.variant = decision_variant_from_name(opt.variant);
  fc.method = loss_variant_from_name(opt.method);
  fc.class_prior = opt.delta;
  fc.pin_seed = opt.pin_seed;

  FilterResult result = run_pubc_filter(
      data, seed_ids, fc, opt.seed, truth_available ? &expert_truth : nullptr);

  std::vector<long> positives(result.partition.positives.begin(),
                              result.partition.positives.end());
  save_membership(positives, fs::path(opt.out_dir) / "membership.txt");

  {
    std::ofstream conv(fs::path(opt.out_dir) / "convergence.csv");
    conv << "iteration,TP,FP,FN,TN,threshold,positives\n";
    for (const auto& d : result.diagnostics) {
      conv << d.iteration << ",";
      if (d.has_truth)
        conv << d.confusion.tp << "," << d.confusion.fp << ","
             << d.confusion.fn << "," << d.confusion.tn << ",";
      else
        conv << ",,,,";
      conv << fmt_double(d.threshold) << "," << d.positives << "\n";
    }
  }
  for (const auto& d : result.diagnostics) {
    std::ofstream hist(fs::path(opt.out_dir) /
                       ("hist_iter" + std::to_string(d.iteration) + ".csv"));
    hist << "bin_center,count,fitted_value\n";
    for (std::size_t i = 0; i < d.histogram.bin_centers.size(); ++i)
      hist << fmt_double(d.histogram.bin_centers[i]) << ","
           << fmt_double(d.histogram.counts[i]) << ","
           << fmt_double(d.fitted[i]) << "\n";
  }

  std::cout << "filter " << (result.converged ? "converged" : "stopped")
            << " after " << result.iterations << " iteration(s); "
            << positives.size() << " positives of "
            << data.trajectories.size() << " trajectories\n";
  if (truth_available && !result.diagnostics.empty()) {
    const auto& c = result.diagnostics.back().confusion;
    std::cout << "accuracy " << fmt_double(c.accuracy) << " (TP " << c.tp
              << " FP " << c.fp << " FN " << c.fn << " TN " << c.tn << ")\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PUBC: positive-unlabeled filtering and behavioral cloning "
               "for mixed-quality offline control datasets"};
  app.require_subcommand(1);

  // --- gen-data ---
  auto* gen = app.add_subcommand(
      "gen-data", "Generate a labeled mixed-quality point-mass dataset");
  std::string gen_kind = "E+N";
  int gen_count = 50;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "dataset.txt";
  gen->add_option("--kind", gen_kind,
                  "Composition: E, E+E, E+W, E+N or E+E+W+N");
  gen->add_option("--count", gen_count, "Trajectories per source");
  gen->add_option("--seed", gen_seed, "Run seed");
  gen->add_option("--out", gen_out, "Output dataset path");
  gen->set_config("--config");

  // --- filter ---
  auto* filter = app.add_subcommand(
      "filter", "Identify expert trajectories via iterative PU learning");
  FilterCmdOptions fopt;
  filter->add_option("--data", fopt.data_path, "Input dataset")->required();
  filter->add_option("--out-dir", fopt.out_dir, "Output directory");
  filter->add_option("--seed", fopt.seed, "Run seed");
  filter->add_option("--method", fopt.method,
                     "pubc, unbiased, nonneg or naive");
  filter->add_flag("--naive", fopt.naive,
                   "Reward-based top-fraction baseline (same as --method naive)");
  auto* tf = filter->add_option("--top-fraction", fopt.top_fraction,
                                "Seed-positive fraction (naive: kept fraction)");
  filter->add_option("--k", fopt.k, "Ensemble size (odd)");
  filter->add_option("--poly-order", fopt.poly_order,
                     "Adaptive threshold polynomial order");
  filter->add_option("--epochs", fopt.epochs, "Epochs per iteration");
  filter->add_option("--max-iters", fopt.max_iters, "Iteration cap");
  filter->add_option("--tolerance", fopt.tolerance,
                     "Membership-change convergence fraction");
  filter->add_option("--bins", fopt.bins, "Histogram bin count");
  filter->add_option("--batch", fopt.batch, "Minibatch size");
  filter->add_option("--lr", fopt.lr, "Learning rate");
  filter->add_option("--delta", fopt.delta,
                     "Class prior for unbiased/nonneg baselines");
  filter->add_option("--variant", fopt.variant,
                     "Trajectory decision rule: mean or logsum");
  filter->add_option("--seed-label", fopt.seed_label,
                     "Restrict seed positives to one source label");
  filter->add_option("--expert-label", fopt.expert_labels,
                     "Label(s) counted as expert ground truth");
  filter->add_flag("--pin-seed", fopt.pin_seed,
                   "Keep seed positives in every iteration");
  filter->set_config("--config");

  // --- train-bc ---
  auto* train = app.add_subcommand("train-bc",
                                   "Behavioral cloning on a dataset subset");
  std::string bc_data, bc_membership, bc_out = "policy.txt";
  std::uint64_t bc_seed = 1;
  BcConfig bc_cfg;
  train->add_option("--data", bc_data, "Input dataset")->required();
  train->add_option("--membership", bc_membership,
                    "Positive-id file restricting the training subset");
  train->add_option("--out", bc_out, "Output policy path");
  train->add_option("--seed", bc_seed, "Run seed");
  train->add_option("--epochs", bc_cfg.epochs, "Training epochs");
  train->add_option("--batch", bc_cfg.batch_size, "Minibatch size");
  train->add_option("--lr", bc_cfg.learning_rate, "Learning rate");
  train->set_config("--config");

  // --- eval ---
  auto* eval_cmd = app.add_subcommand("eval",
                                      "Closed-loop policy evaluation");
  std::string eval_policy, eval_out = "eval.csv";
  int eval_episodes = 100;
  std::uint64_t eval_seed = 1;
  double score_min = kDefaultScoreMin, score_max = kDefaultScoreMax;
  eval_cmd->add_option("--policy", eval_policy, "Policy file")->required();
  eval_cmd->add_option("--episodes", eval_episodes, "Evaluation episodes");
  eval_cmd->add_option("--seed", eval_seed, "Run seed");
  eval_cmd->add_option("--score-min", score_min, "Normalization minimum");
  eval_cmd->add_option("--score-max", score_max, "Normalization maximum");
  eval_cmd->add_option("--out", eval_out, "Per-episode CSV path");
  eval_cmd->set_config("--config");

  // --- report ---
  auto* report = app.add_subcommand(
      "report", "Emit a metrics row for a membership against ground truth");
  std::string rep_data, rep_membership, rep_name = "dataset", rep_out;
  std::vector<std::string> rep_labels{"ExpertA"};
  report->add_option("--data", rep_data, "Input dataset")->required();
  report->add_option("--membership", rep_membership, "Positive-id file")
      ->required();
  report->add_option("--name", rep_name, "Dataset name for the report row");
  report->add_option("--expert-label", rep_labels,
                     "Label(s) counted as expert ground truth");
  report->add_option("--out", rep_out, "Report CSV path (default stdout)");
  report->set_config("--config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      try {
        dataset_kind_sources(gen_kind);
      } catch (const StructuralError& e) {
        std::cerr << "error: " << e.what() << "\n" << gen->help();
        return kExitUsage;
      }
      Dataset d = compose_dataset(gen_kind, gen_count, gen_seed);
      save_dataset(d, gen_out);
      std::map<std::string, long> per_label;
      std::map<std::string, double> label_ret;
      for (const auto& t : d.trajectories) {
        per_label[t.source_label] += 1;
        label_ret[t.source_label] += t.ret;
      }
      std::cout << "wrote " << d.trajectories.size() << " trajectories to "
                << gen_out << "\n";
      for (const auto& [label, n] : per_label)
        std::cout << "  " << label << ": " << n << " trajectories, mean return "
                  << fmt_double(label_ret[label] / n) << "\n";
      write_effective_config(fs::path(gen_out).parent_path().empty()
                                 ? fs::path(".")
                                 : fs::path(gen_out).parent_path(),
                             "gen-data",
                             {{"kind", gen_kind},
                              {"count", std::to_string(gen_count)},
                              {"seed", std::to_string(gen_seed)},
                              {"out", gen_out}});
      return kExitOk;
    }
    if (filter->parsed()) {
      fopt.top_fraction_set = tf->count() > 0;
      if (fopt.method == "naive") fopt.naive = true;
      if (!fopt.naive) loss_variant_from_name(fopt.method);  // validate
      return run_filter(fopt);
    }
    if (train->parsed()) {
      Dataset data = load_dataset(bc_data);
      std::vector<long> ids;
      if (!bc_membership.empty()) {
        ids = load_membership(bc_membership);
        if (ids.empty())
          throw std::runtime_error("membership file selects no trajectories: " +
                                   bc_membership);
        for (long id : ids) data.by_id(id);  // validate, throws on unknown id
      }
      auto [policy, history] = train_bc(data, ids, bc_cfg, bc_seed);
      save_policy(policy, bc_out);
      std::ofstream loss_csv(bc_out + ".loss.csv");
      loss_csv << "epoch,loss\n";
      for (std::size_t i = 0; i < history.size(); ++i)
        loss_csv << (i + 1) << "," << fmt_double(history[i]) << "\n";
      std::cout << "trained on "
                << (ids.empty() ? data.trajectories.size() : ids.size())
                << " trajectories; final NLL "
                << fmt_double(history.empty() ? 0.0 : history.back()) << "\n";
      return kExitOk;
    }
    if (eval_cmd->parsed()) {
      Policy policy = load_policy(eval_policy);
      EvalReport rep = evaluate(policy, eval_episodes, eval_seed, score_min,
                                score_max);
      std::ofstream out(eval_out);
      if (!out) throw IoError("cannot write " + eval_out);
      out << "episode,return\n";
      for (int i = 0; i < rep.episodes; ++i)
        out << (i + 1) << "," << fmt_double(rep.returns[i]) << "\n";
      std::ofstream summary(eval_out + ".summary.csv");
      summary << "episodes,mean_return,normalized_score\n";
      summary << rep.episodes << "," << fmt_double(rep.mean_return) << ","
              << fmt_double(rep.normalized) << "\n";
      std::cout << "mean return " << fmt_double(rep.mean_return)
                << ", normalized score " << fmt_double(rep.normalized)
                << " over " << rep.episodes << " episodes\n";
      return kExitOk;
    }
    if (report->parsed()) {
      Dataset data = load_dataset(rep_data);
      std::vector<long> ids = load_membership(rep_membership);
      MembershipPartition part;
      for (long id : ids) {
        data.by_id(id);
        part.positives.insert(id);
      }
      for (const auto& t : data.trajectories)
        if (!part.positives.count(t.id)) part.unlabeled.insert(t.id);
      ConfusionCounts c =
          classification_accuracy(part, expert_ids_from_labels(data, rep_labels));
      std::ostringstream row;
      row << "dataset,TP,FP,FN,TN,accuracy\n";
      row << rep_name << "," << c.tp << "," << c.fp << "," << c.fn << ","
          << c.tn << "," << fmt_double(c.accuracy) << "\n";
      if (rep_out.empty()) {
        std::cout << row.str();
      } else {
        std::ofstream out(rep_out);
        if (!out) throw IoError("cannot write " + rep_out);
        out << row.str();
      }
      return kExitOk;
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FilterCollapseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPipeline;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPipeline;
  }
  return kExitUsage;
}
