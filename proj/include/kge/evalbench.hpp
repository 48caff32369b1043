#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "kge/dataset.hpp"
#include "kge/embednet.hpp"
#include "kge/knowledge.hpp"

namespace kge {

struct SyntheticGroup {
  std::string name;
  std::size_t count = 0;
  std::vector<std::pair<double, double>> ranges;  // one [lo, hi] per dimension
};

struct SyntheticSpec {
  std::vector<SyntheticGroup> groups;
  std::size_t dims = 0;
  std::uint64_t seed = 0;

  void validate() const;  // throws InvalidRange

  // Four groups of 250 five-dimensional samples. Per dimension every range is
  // one unit wide: B overlaps A on 60% of the width, C on 40%, D not at all.
  static SyntheticSpec four_groups(std::uint64_t seed);

  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

struct SyntheticData {
  Dataset dataset;
  std::vector<int> labels;  // group index per row
};

// Rows are x1..x<dims> (embedding features) plus a categorical "group"
// descriptive column; samples are uniform within their group's box.
SyntheticData gen_synthetic(const SyntheticSpec& spec);

// Fraction of rows whose k-means cluster maps to their true class under the
// optimal one-to-one cluster/class matching.
double clustering_accuracy(const Eigen::MatrixXd& points, const std::vector<int>& truth, int k, std::uint64_t seed);
double matched_accuracy(const std::vector<int>& clusters, const std::vector<int>& truth, int k);

// Mean pairwise distance within classes over mean pairwise distance across
// classes; lower means tighter, better separated classes.
double intra_inter_ratio(const Eigen::MatrixXd& points, const std::vector<int>& labels);
// Per-class mean rows.
Eigen::MatrixXd class_centroids(const Eigen::MatrixXd& points, const std::vector<int>& labels, int k);

struct TimingStats {
  double median = 0;
  double q1 = 0;
  double q3 = 0;
  std::vector<double> seconds;
  double iqr() const { return q3 - q1; }
};

// Wall-clock seconds for a full train() on uniform random features with
// random labels; data generation is outside the timed region.
TimingStats bench_train(std::size_t n, std::size_t dims, const Hyperparams& hp, std::size_t repeats, std::size_t classes = 10);

// Hyperparameters of the reproducible experiments. The library defaults are
// tuned for interactive use; these converge within the fixed epoch budgets of
// the desk-scale protocols.
Hyperparams experiment_profile();

// Labels from a one-level knowledge tree on `attr`: every bin of `attr` is
// its own class unless `bin_to_group` merges some.
LabelAssignment labels_by_attribute(const Dataset& ds, std::string_view attr, const std::vector<int>& bin_to_group = {});
std::vector<int> dense_labels(const LabelAssignment& la);

struct SyntheticOutcome {
  std::uint64_t seed = 0;
  double accuracy = 0;  // 4-means on H
  double dist_ab = 0, dist_bc = 0, dist_bd = 0;
  double seconds = 0;
};
// Correct four-class labels; hp.alpha and hp.epochs are used as given, the
// seed drives both the data and the model.
SyntheticOutcome synthetic_run(std::uint64_t seed, const Hyperparams& hp);

// C and D share one class; returns 2-means accuracy on H restricted to C and D.
double merged_run(std::uint64_t seed, const Hyperparams& hp);

struct CompactionOutcome {
  std::uint64_t seed = 0;
  double ratio_low = 0;   // projected intra/inter distance ratio at alpha_low
  double ratio_high = 0;  // ... at alpha_high
};
CompactionOutcome compaction_run(std::uint64_t seed, const Hyperparams& hp, double alpha_low, double alpha_high);

// Trains on `ds` with labels from `label_attr` and clusters H into as many
// groups as there are classes.
double accuracy_run(const Dataset& ds, std::string_view label_attr, const Hyperparams& hp);

struct ExperimentReport {
  std::vector<std::filesystem::path> files;
  bool all_passed = true;
  nlohmann::json manifest;
};

// Runs every experiment in the config and writes <name>.csv files plus
// manifest.json into `out_dir`. Only experiments of `kind` (synth, accuracy,
// timing) run when it is set. Relative dataset paths resolve against `base`.
// Throws ConfigError on a malformed config.
ExperimentReport run_experiment(const nlohmann::json& config, const std::filesystem::path& out_dir, std::uint64_t seed,
                                const std::string& kind = {}, const std::filesystem::path& base = {});

}  // namespace kge
