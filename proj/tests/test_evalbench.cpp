#include <algorithm>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>

#include "doctest.h"
#include "kge/error.hpp"
#include "kge/evalbench.hpp"
#include "test_support.hpp"

using namespace kge;
using nlohmann::json;

namespace {

// Best accuracy over every cluster-to-class bijection.
double permutation_accuracy(const std::vector<int>& clusters, const std::vector<int>& truth, int k) {
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
      if (perm[static_cast<std::size_t>(clusters[i])] == truth[i]) ++hit;
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(truth.size());
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::InvalidArgument;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("kge_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("four-group synthetic data honours its box overlaps") {
  const auto data = gen_synthetic(SyntheticSpec::four_groups(3));
  REQUIRE(data.dataset.n() == 1000);
  CHECK(data.dataset.d() == 5);
  std::vector<std::vector<std::pair<double, double>>> seen(4, std::vector<std::pair<double, double>>(5, {1e9, -1e9}));
  for (std::size_t r = 0; r < 1000; ++r)
    for (std::size_t j = 0; j < 5; ++j) {
      auto& [lo, hi] = seen[static_cast<std::size_t>(data.labels[r])][j];
      lo = std::min(lo, data.dataset.numeric(j)[r]);
      hi = std::max(hi, data.dataset.numeric(j)[r]);
    }
  // Observed per-dimension overlap of B with A, C and D, as a fraction of B's width.
  auto overlap = [&](int g, std::size_t j) {
    const auto [blo, bhi] = seen[1][j];
    const auto [glo, ghi] = seen[static_cast<std::size_t>(g)][j];
    return std::max(0.0, std::min(bhi, ghi) - std::max(blo, glo)) / (bhi - blo);
  };
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(overlap(0, j) == doctest::Approx(0.6).epsilon(0.02));
    CHECK(overlap(2, j) == doctest::Approx(0.4).epsilon(0.02));
    CHECK(overlap(3, j) == 0.0);
  }
  CHECK(std::count(data.labels.begin(), data.labels.end(), 2) == 250);
  // Same seed, same table.
  CHECK(gen_synthetic(SyntheticSpec::four_groups(3)).dataset.embedding_features() == data.dataset.embedding_features());

  auto bad = SyntheticSpec::four_groups(0);
  bad.groups[1].ranges[2] = {1.0, 1.0};
  CHECK(code_of([&] { gen_synthetic(bad); }) == Errc::InvalidRange);
  const auto round = SyntheticSpec::from_json(SyntheticSpec::four_groups(7).to_json());
  CHECK(round.to_json() == SyntheticSpec::four_groups(7).to_json());
}

TEST_CASE("matched accuracy equals the best permutation") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + trial % 5;
    std::uniform_int_distribution<int> pick(0, k - 1);
    std::vector<int> clusters(40), truth(40);
    for (auto& c : clusters) c = pick(rng);
    for (auto& t : truth) t = pick(rng);
    REQUIRE(matched_accuracy(clusters, truth, k) == doctest::Approx(permutation_accuracy(clusters, truth, k)));
  }
}

TEST_CASE("clustering accuracy on separated blobs and the intra/inter ratio") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.1);
  Eigen::MatrixXd pts(90, 3);
  std::vector<int> truth;
  for (int i = 0; i < 90; ++i) {
    truth.push_back(i % 3);
    for (int c = 0; c < 3; ++c) pts(i, c) = (c == i % 3 ? 10.0 : 0.0) + g(rng);
  }
  CHECK(clustering_accuracy(pts, truth, 3, 0) == 1.0);

  // Direct oracle for the ratio on a tiny layout: two classes on a line.
  Eigen::MatrixXd line(4, 1);
  line << 0, 1, 10, 12;
  const std::vector<int> lab{0, 0, 1, 1};
  const double intra = (1.0 + 2.0) / 2, inter = (10.0 + 12.0 + 9.0 + 11.0) / 4;
  CHECK(intra_inter_ratio(line, lab) == doctest::Approx(intra / inter));
  CHECK(code_of([&] { intra_inter_ratio(line, {0, 0, 0, 0}); }) == Errc::TooFewSamples);

  const auto c = class_centroids(line, lab, 2);
  CHECK(c(0, 0) == 0.5);
  CHECK(c(1, 0) == 11.0);
}

TEST_CASE("labels from one attribute, with merged bins") {
  const auto data = gen_synthetic(SyntheticSpec::four_groups(1));
  const auto four = labels_by_attribute(data.dataset, "group");
  CHECK(four.num_classes() == 4);
  CHECK(dense_labels(four) == data.labels);
  const auto merged = labels_by_attribute(data.dataset, "group", {0, 1, 2, 2});
  REQUIRE(merged.num_classes() == 3);
  CHECK(merged.class_sizes == std::vector<std::size_t>{250, 250, 500});
  const auto dense = dense_labels(merged);
  for (std::size_t r = 0; r < dense.size(); ++r) CHECK(dense[r] == std::min(data.labels[r], 2));
}

TEST_CASE("experiment profile is valid and differs from the defaults only where declared") {
  const auto p = experiment_profile();
  CHECK_NOTHROW(p.validate());
  const Hyperparams d;
  CHECK(p.alpha == d.alpha);
  CHECK(p.epochs == d.epochs);
  CHECK(d.eta == 0.05);
  CHECK(d.batch_size == 32);
  CHECK(d.embed_dim == 16);
}

TEST_CASE("run_experiment: empty list, config errors, reproducible CSV") {
  const auto out = scratch_dir("bench");
  const auto empty = run_experiment(json{{"experiments", json::array()}}, out, 0);
  CHECK(empty.all_passed);
  CHECK(empty.manifest.at("experiments").empty());
  CHECK(std::filesystem::exists(out / "manifest.json"));

  CHECK(code_of([&] { run_experiment(json::object(), out, 0); }) == Errc::ConfigError);
  CHECK(code_of([&] { run_experiment(json{{"experiments", json::array()}}, out, 0, "nope"); }) == Errc::ConfigError);
  CHECK(code_of([&] { run_experiment(json{{"experiments", {{{"kind", "synth"}}}}}, out, 0); }) == Errc::ConfigError);
  CHECK(code_of([&] { run_experiment(json{{"experiments", {{{"name", "../x"}, {"kind", "synth"}}}}}, out, 0); }) ==
        Errc::ConfigError);
  CHECK(code_of([&] {
          run_experiment(json{{"profile", {{"eta", -1.0}}}, {"experiments", json::array()}}, out, 0);
        }) == Errc::ConfigError);
  CHECK(code_of([&] {
          run_experiment(json{{"experiments", {{{"name", "t"}, {"kind", "timing"}, {"repeats", 1}}}}}, out, 0);
        }) == Errc::ConfigError);

  const json config = {{"experiments",
                        {{{"name", "covid"},
                          {"kind", "accuracy"},
                          {"csv", "covid_mini.csv"},
                          {"schema", "covid_mini.schema.json"},
                          {"label", "continent"},
                          {"clr", {0, 50}},
                          {"epochs", 5},
                          {"seeds", 2},
                          {"hyperparams", {{"batchSize", 4}}},
                          {"minFinal", 0.0},
                          {"maxSeconds", 60}}}}};
  const auto a = run_experiment(config, out, 11, "accuracy", KGE_DATA_DIR);
  const std::string first = testing::read_file((out / "covid.csv").string());
  const auto b = run_experiment(config, out, 11, "accuracy", KGE_DATA_DIR);
  CHECK(testing::read_file((out / "covid.csv").string()) == first);
  CHECK(a.manifest.at("experiments")[0].at("seeds") == b.manifest.at("experiments")[0].at("seeds"));
  CHECK(first.rfind("clr", 0) == 0);
  // Filtering by kind skips the accuracy run.
  CHECK(run_experiment(config, out, 11, "synth", KGE_DATA_DIR).manifest.at("experiments").empty());
}
