#include "kge/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "kge/cluster.hpp"
#include "kge/projection.hpp"
#include "kge/version.hpp"

namespace kge {

void SyntheticSpec::validate() const {
  if (dims < 1) throw Error(Errc::InvalidRange, "dims must be at least 1");
  if (groups.empty()) throw Error(Errc::InvalidRange, "need at least one group");
  for (const auto& g : groups) {
    if (g.count < 1) throw Error(Errc::InvalidRange, "group '" + g.name + "' is empty");
    if (g.ranges.size() != dims) throw Error(Errc::InvalidRange, "group '" + g.name + "' needs one range per dimension");
    for (const auto& [lo, hi] : g.ranges)
      if (!(lo < hi)) throw Error(Errc::InvalidRange, "group '" + g.name + "' has an empty range");
  }
}

SyntheticSpec SyntheticSpec::four_groups(std::uint64_t seed) {
  SyntheticSpec s;
  s.dims = 5;
  s.seed = seed;
  // Width 1 per range: |A∩B| = 0.6, |B∩C| = 0.4, |B∩D| = 0.
  const std::pair<double, double> a{0.0, 1.0}, b{0.4, 1.4}, c{1.0, 2.0}, d{3.0, 4.0};
  for (const auto& [name, r] : {std::pair{"A", a}, std::pair{"B", b}, std::pair{"C", c}, std::pair{"D", d}})
    s.groups.push_back({name, 250, std::vector<std::pair<double, double>>(5, r)});
  return s;
}

nlohmann::json SyntheticSpec::to_json() const {
  auto groups_json = nlohmann::json::array();
  for (const auto& g : groups) groups_json.push_back({{"name", g.name}, {"count", g.count}, {"ranges", g.ranges}});
  return {{"dims", dims}, {"seed", seed}, {"groups", groups_json}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  try {
    SyntheticSpec s;
    s.dims = j.at("dims").get<std::size_t>();
    s.seed = j.value("seed", std::uint64_t{0});
    for (const auto& g : j.at("groups"))
      s.groups.push_back({g.at("name").get<std::string>(), g.at("count").get<std::size_t>(),
                          g.at("ranges").get<std::vector<std::pair<double, double>>>()});
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, std::string("bad synthetic spec: ") + e.what());
  }
}

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  Schema schema;
  for (std::size_t j = 0; j < spec.dims; ++j)
    schema.push_back({"x" + std::to_string(j + 1), AttributeKind::Numeric, AttributeRole::Embedding});
  schema.push_back({"group", AttributeKind::Categorical, AttributeRole::Descriptive});
  std::vector<std::vector<double>> numeric(schema.size());
  std::vector<std::vector<std::string>> categorical(schema.size());
  std::vector<int> labels;
  for (std::size_t g = 0; g < spec.groups.size(); ++g) {
    const auto& grp = spec.groups[g];
    for (std::size_t i = 0; i < grp.count; ++i) {
      for (std::size_t j = 0; j < spec.dims; ++j) {
        std::uniform_real_distribution<double> u(grp.ranges[j].first, grp.ranges[j].second);
        numeric[j].push_back(u(rng));
      }
      categorical[spec.dims].push_back(grp.name);
      labels.push_back(static_cast<int>(g));
    }
  }
  return {Dataset(std::move(schema), std::move(numeric), std::move(categorical)), std::move(labels)};
}

double matched_accuracy(const std::vector<int>& clusters, const std::vector<int>& truth, int k) {
  if (clusters.size() != truth.size()) throw Error(Errc::LengthMismatch, "cluster and label counts differ");
  int classes = 0;
  for (int t : truth) classes = std::max(classes, t + 1);
  const int side = std::max(k, classes);
  Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(side, side);
  for (std::size_t i = 0; i < clusters.size(); ++i) overlap(clusters[i], truth[i]) += 1.0;
  const auto match = max_weight_assignment(overlap);
  double hit = 0;
  for (int c = 0; c < side; ++c) hit += overlap(c, match[static_cast<std::size_t>(c)]);
  return hit / static_cast<double>(clusters.size());
}

double clustering_accuracy(const Eigen::MatrixXd& points, const std::vector<int>& truth, int k, std::uint64_t seed) {
  if (static_cast<Eigen::Index>(truth.size()) != points.rows()) throw Error(Errc::LengthMismatch, "label count mismatch");
  if (k < 1 || points.rows() < k)
    throw Error(Errc::TooFewSamples, std::to_string(points.rows()) + " samples cannot form " + std::to_string(k) + " clusters");
  KMeansOptions opt;
  opt.restarts = 10;
  const auto km = kmeans(points, k, seed, opt);
  return matched_accuracy(km.assignment, truth, k);
}

double intra_inter_ratio(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
  double intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index j = i + 1; j < points.rows(); ++j) {
      const double dist = (points.row(i) - points.row(j)).norm();
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        intra += dist;
        ++n_intra;
      } else {
        inter += dist;
        ++n_inter;
      }
    }
  if (n_intra == 0 || n_inter == 0 || inter == 0) throw Error(Errc::TooFewSamples, "need pairs within and across classes");
  return (intra / static_cast<double>(n_intra)) / (inter / static_cast<double>(n_inter));
}

Eigen::MatrixXd class_centroids(const Eigen::MatrixXd& points, const std::vector<int>& labels, int k) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(k, points.cols());
  std::vector<double> cnt(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    c.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
    cnt[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] += 1;
  }
  for (int y = 0; y < k; ++y)
    if (cnt[static_cast<std::size_t>(y)] > 0) c.row(y) /= cnt[static_cast<std::size_t>(y)];
  return c;
}

namespace {

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}


double time_training(std::size_t n, std::size_t dims, const Hyperparams& hp, std::size_t rep, std::size_t classes) {
  std::mt19937_64 rng(hp.seed + 1000003 * rep);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FeatureMatrix fm;
  fm.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
  for (Eigen::Index i = 0; i < fm.values.size(); ++i) fm.values.data()[i] = u(rng);
  fm.ranges.assign(dims, {0.0, 1.0});
  LabelAssignment la;
  la.class_sizes.assign(classes, 0);
  la.class_nodes.assign(classes, -1);
  for (std::size_t i = 0; i < n; ++i) {
    // Round-robin before shuffling keeps every class populated.
    const int y = static_cast<int>(i % classes);
    la.labels.emplace_back(y);
  }
  std::shuffle(la.labels.begin(), la.labels.end(), rng);
  for (const auto& l : la.labels) ++la.class_sizes[static_cast<std::size_t>(*l)];
  la.active_count = n;

  Hyperparams run = hp;
  run.seed = hp.seed + rep;
  auto model = init_model(n, dims, run);
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = train(std::move(model), fm, la, run);
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

TimingStats timing_stats(std::vector<double> seconds) {
  TimingStats st;
  st.seconds = std::move(seconds);
  st.median = quantile(st.seconds, 0.5);
  st.q1 = quantile(st.seconds, 0.25);
  st.q3 = quantile(st.seconds, 0.75);
  return st;
}

}  // namespace

TimingStats bench_train(std::size_t n, std::size_t dims, const Hyperparams& hp, std::size_t repeats, std::size_t classes) {
  if (repeats < 3) throw Error(Errc::InvalidArgument, "timing needs at least 3 repeats");
  std::vector<double> seconds;
  for (std::size_t rep = 0; rep < repeats; ++rep) seconds.push_back(time_training(n, dims, hp, rep, classes));
  return timing_stats(std::move(seconds));
}

Hyperparams experiment_profile() {
  Hyperparams hp;
  hp.eta = 1.5;
  hp.batch_size = 8;
  hp.embed_dim = 24;
  hp.hidden_dim = 64;
  return hp;
}

LabelAssignment labels_by_attribute(const Dataset& ds, std::string_view attr, const std::vector<int>& bin_to_group) {
  const auto bins = discretize(ds, attr, 1);
  std::vector<int> groups = bin_to_group;
  if (groups.empty()) {
    groups.resize(bins.size());
    std::iota(groups.begin(), groups.end(), 0);
  }
  return derive_labels(create_classes(KnowledgeTree(ds.n()), ds, 0, bins, groups), ds);
}

std::vector<int> dense_labels(const LabelAssignment& la) {
  std::vector<int> out;
  out.reserve(la.labels.size());
  for (const auto& l : la.labels) {
    if (!l) throw Error(Errc::InvalidArgument, "every sample needs a label");
    out.push_back(*l);
  }
  return out;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

EmbeddingModel fit(const Dataset& ds, const LabelAssignment& la, const Hyperparams& hp) {
  return train(init_model(ds.n(), ds.d(), hp), normalize_features(ds), la, hp).model;
}

}  // namespace

SyntheticOutcome synthetic_run(std::uint64_t seed, const Hyperparams& hp) {
  const auto data = gen_synthetic(SyntheticSpec::four_groups(seed));
  Hyperparams run = hp;
  run.seed = seed;
  const auto la = labels_by_attribute(data.dataset, "group");
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = fit(data.dataset, la, run);
  SyntheticOutcome out;
  out.seconds = seconds_since(t0);
  out.seed = seed;
  out.accuracy = clustering_accuracy(model.H, data.labels, 4, seed);
  const auto c = class_centroids(model.H, data.labels, 4);
  out.dist_ab = (c.row(0) - c.row(1)).norm();
  out.dist_bc = (c.row(1) - c.row(2)).norm();
  out.dist_bd = (c.row(1) - c.row(3)).norm();
  return out;
}

double merged_run(std::uint64_t seed, const Hyperparams& hp) {
  const auto data = gen_synthetic(SyntheticSpec::four_groups(seed));
  Hyperparams run = hp;
  run.seed = seed;
  // Bins of "group" are the sorted names A, B, C, D.
  const auto model = fit(data.dataset, labels_by_attribute(data.dataset, "group", {0, 1, 2, 2}), run);
  std::vector<Eigen::Index> rows;
  std::vector<int> truth;
  for (std::size_t i = 0; i < data.labels.size(); ++i)
    if (data.labels[i] >= 2) {
      rows.push_back(static_cast<Eigen::Index>(i));
      truth.push_back(data.labels[i] - 2);
    }
  return clustering_accuracy(model.H(rows, Eigen::all), truth, 2, seed);
}

CompactionOutcome compaction_run(std::uint64_t seed, const Hyperparams& hp, double alpha_low, double alpha_high) {
  const auto data = gen_synthetic(SyntheticSpec::four_groups(seed));
  const auto la = labels_by_attribute(data.dataset, "group");
  CompactionOutcome out;
  out.seed = seed;
  for (const double alpha : {alpha_low, alpha_high}) {
    Hyperparams run = hp;
    run.seed = seed;
    run.alpha = alpha;
    const auto model = fit(data.dataset, la, run);
    const auto proj = project(model.H, ProjectionMethod::Neighbor, {}, seed);
    (alpha == alpha_low ? out.ratio_low : out.ratio_high) = intra_inter_ratio(proj.coords, data.labels);
  }
  return out;
}

double accuracy_run(const Dataset& ds, std::string_view label_attr, const Hyperparams& hp) {
  const auto la = labels_by_attribute(ds, label_attr);
  const auto model = fit(ds, la, hp);
  return clustering_accuracy(model.H, dense_labels(la), static_cast<int>(la.num_classes()), hp.seed);
}

namespace {

using nlohmann::json;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::ConfigError, "cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Csv {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void write(const std::filesystem::path& p) const {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(Errc::ConfigError, "cannot write " + p.string());
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
      out << "\n";
    };
    line(columns);
    for (const auto& r : rows) line(r);
  }
};

json check(const std::string& name, bool passed, double value, const std::string& threshold) {
  return {{"name", name}, {"passed", passed}, {"value", value}, {"threshold", threshold}};
}

std::vector<std::uint64_t> seed_list(const json& e, std::uint64_t base, std::size_t fallback) {
  const auto count = e.value("seeds", fallback);
  std::vector<std::uint64_t> seeds(count);
  std::iota(seeds.begin(), seeds.end(), base);
  return seeds;
}

Hyperparams with_overrides(Hyperparams hp, const json& e) {
  if (e.contains("hyperparams")) {
    json merged = hp.to_json();
    merged.update(e.at("hyperparams"));
    hp = Hyperparams::from_json(merged);
  }
  return hp;
}

// Each runner fills the CSV and returns the checks; a check failing does not
// stop the remaining experiments.
json run_synth(const json& e, const Hyperparams& profile, std::uint64_t base, Csv& csv, json& info) {
  const std::string variant = e.value("variant", "labels");
  Hyperparams hp = with_overrides(profile, e);
  hp.epochs = e.value("epochs", std::size_t{200});
  const auto seeds = seed_list(e, base, variant == "compaction" ? 5 : 3);
  info["seeds"] = seeds;
  info["variant"] = variant;
  info["syntheticSpec"] = SyntheticSpec::four_groups(base).to_json();
  json checks = json::array();
  if (variant == "labels") {
    hp.alpha = e.value("alpha", 0.2);
    const double min_acc = e.value("minAccuracy", 0.95);
    const double max_s = e.value("maxSeconds", 60.0);
    csv.columns = {"seed", "alpha", "epochs", "accuracy", "dist_ab", "dist_bc", "dist_bd"};
    json runtimes = json::array();
    for (auto seed : seeds) {
      const auto r = synthetic_run(seed, hp);
      csv.rows.push_back({std::to_string(seed), num(hp.alpha), std::to_string(hp.epochs), num(r.accuracy), num(r.dist_ab),
                          num(r.dist_bc), num(r.dist_bd)});
      runtimes.push_back(r.seconds);
      const std::string tag = "seed " + std::to_string(seed);
      checks.push_back(check(tag + " accuracy", r.accuracy >= min_acc, r.accuracy, ">= " + num(min_acc)));
      checks.push_back(check(tag + " dist(A,B) < dist(B,C) < dist(B,D)", r.dist_ab < r.dist_bc && r.dist_bc < r.dist_bd,
                             r.dist_bc, "ordered"));
      checks.push_back(check(tag + " runtime", r.seconds < max_s, r.seconds, "< " + num(max_s) + " s"));
    }
    info["runtimeSeconds"] = runtimes;
  } else if (variant == "merged") {
    hp.alpha = e.value("alpha", 0.2);
    const double min_acc = e.value("minAccuracy", 0.9);
    csv.columns = {"seed", "alpha", "epochs", "merged_accuracy"};
    for (auto seed : seeds) {
      const double acc = merged_run(seed, hp);
      csv.rows.push_back({std::to_string(seed), num(hp.alpha), std::to_string(hp.epochs), num(acc)});
      checks.push_back(check("seed " + std::to_string(seed) + " C/D split", acc >= min_acc, acc, ">= " + num(min_acc)));
    }
  } else if (variant == "compaction") {
    const double lo = e.value("alphaLow", 0.0), hi = e.value("alphaHigh", 0.9);
    csv.columns = {"seed", "alpha_low", "alpha_high", "ratio_low", "ratio_high"};
    for (auto seed : seeds) {
      const auto r = compaction_run(seed, hp, lo, hi);
      csv.rows.push_back({std::to_string(seed), num(lo), num(hi), num(r.ratio_low), num(r.ratio_high)});
      checks.push_back(check("seed " + std::to_string(seed) + " compaction", r.ratio_high < r.ratio_low, r.ratio_high,
                             "< " + num(r.ratio_low)));
    }
  } else {
    throw Error(Errc::ConfigError, "unknown synth variant '" + variant + "'");
  }
  info["hyperparams"] = hp.to_json();
  return checks;
}

json run_accuracy(const json& e, const Hyperparams& profile, std::uint64_t base, const std::filesystem::path& dir, Csv& csv,
                  json& info) {
  const auto csv_path = dir / e.at("csv").get<std::string>();
  const auto schema_path = dir / e.at("schema").get<std::string>();
  const auto ds = load_dataset(read_text(csv_path), parse_schema(read_text(schema_path)));
  const std::string label = e.at("label").get<std::string>();
  const auto clrs = e.value("clr", std::vector<double>{10, 50, 90});
  Hyperparams hp = with_overrides(profile, e);
  hp.epochs = e.value("epochs", std::size_t{100});
  const auto seeds = seed_list(e, base, 3);
  info["seeds"] = seeds;
  info["dataset"] = {{"csv", e.at("csv")}, {"schema", e.at("schema")}, {"rows", ds.n()}, {"dims", ds.d()}};
  info["hyperparams"] = hp.to_json();

  csv.columns = {"clr", "seed", "accuracy"};
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> medians;
  for (double clr : clrs) {
    std::vector<double> accs;
    for (auto seed : seeds) {
      Hyperparams run = hp;
      run.alpha = Hyperparams::alpha_from_clr_percent(clr);
      run.seed = seed;
      accs.push_back(accuracy_run(ds, label, run));
      csv.rows.push_back({num(clr), std::to_string(seed), num(accs.back())});
    }
    medians.push_back(median_of(accs));
  }
  const double total = seconds_since(t0);
  info["medians"] = medians;
  info["runtimeSeconds"] = total;

  json checks = json::array();
  bool increasing = true;
  for (std::size_t i = 1; i < medians.size(); ++i) increasing = increasing && medians[i] > medians[i - 1];
  checks.push_back(check("medians strictly increase with CLR", increasing, medians.empty() ? 0.0 : medians.back(), "increasing"));
  if (e.contains("minFinal"))
    checks.push_back(check("highest-CLR median", !medians.empty() && medians.back() >= e.at("minFinal").get<double>(),
                           medians.empty() ? 0.0 : medians.back(), ">= " + num(e.at("minFinal").get<double>())));
  if (e.contains("maxSeconds"))
    checks.push_back(check("runtime", total < e.at("maxSeconds").get<double>(), total, "< " + num(e.at("maxSeconds").get<double>()) + " s"));
  return checks;
}

json run_timing(const json& e, const Hyperparams& profile, std::uint64_t base, Csv& csv, json& info) {
  const auto ns = e.value("n", std::vector<std::size_t>{100, 500, 1000});
  const auto dims = e.value("dims", std::vector<std::size_t>{1000, 5000, 10000});
  const auto repeats = e.value("repeats", std::size_t{3});
  const auto classes = e.value("classes", std::size_t{10});
  const auto range = e.value("ratioRange", std::vector<double>{2.0, 10.0});
  if (ns.empty() || dims.empty() || range.size() != 2) throw Error(Errc::ConfigError, "timing needs n, dims and a 2-value ratioRange");
  Hyperparams hp = with_overrides(profile, e);
  hp.epochs = e.value("epochs", std::size_t{10});
  hp.alpha = e.value("alpha", 0.5);
  hp.seed = base;
  info["hyperparams"] = hp.to_json();
  info["repeats"] = repeats;

  csv.columns = {"n", "dims", "median_s", "q1_s", "q3_s", "iqr_s"};
  if (repeats < 3) throw Error(Errc::ConfigError, "timing needs at least 3 repeats");
  // Repeats are interleaved across the grid so that slow phases of a shared
  // machine spread over all cells instead of skewing one of them.
  std::vector<std::vector<std::vector<double>>> seconds(ns.size(), std::vector<std::vector<double>>(dims.size()));
  for (std::size_t rep = 0; rep < repeats; ++rep)
    for (std::size_t i = 0; i < ns.size(); ++i)
      for (std::size_t j = 0; j < dims.size(); ++j) seconds[i][j].push_back(time_training(ns[i], dims[j], hp, rep, classes));
  std::vector<std::vector<double>> med(ns.size(), std::vector<double>(dims.size()));
  for (std::size_t i = 0; i < ns.size(); ++i)
    for (std::size_t j = 0; j < dims.size(); ++j) {
      const auto st = timing_stats(seconds[i][j]);
      med[i][j] = st.median;
      csv.rows.push_back({std::to_string(ns[i]), std::to_string(dims[j]), num(st.median), num(st.q1), num(st.q3), num(st.iqr())});
    }
  bool mono = true;
  for (std::size_t i = 0; i < ns.size(); ++i)
    for (std::size_t j = 0; j < dims.size(); ++j) {
      if (i > 0) mono = mono && med[i][j] >= med[i - 1][j];
      if (j > 0) mono = mono && med[i][j] >= med[i][j - 1];
    }
  const double ratio = med.back().back() / med.back().front();
  json checks = json::array();
  checks.push_back(check("median time nondecreasing along n and dims", mono, ratio, "monotone"));
  checks.push_back(check("dims ratio at largest n", ratio >= range[0] && ratio <= range[1], ratio,
                         "[" + num(range[0]) + ", " + num(range[1]) + "]"));
  return checks;
}

}  // namespace

ExperimentReport run_experiment(const nlohmann::json& config, const std::filesystem::path& out_dir, std::uint64_t seed,
                                const std::string& kind, const std::filesystem::path& base) {
  if (!kind.empty() && kind != "synth" && kind != "accuracy" && kind != "timing")
    throw Error(Errc::ConfigError, "unknown experiment kind '" + kind + "'");
  if (!config.is_object() || !config.contains("experiments") || !config.at("experiments").is_array())
    throw Error(Errc::ConfigError, "config needs an \"experiments\" array");

  ExperimentReport report;
  std::filesystem::create_directories(out_dir);
  Hyperparams profile = experiment_profile();
  try {
    if (config.contains("profile")) {
      json merged = profile.to_json();
      merged.update(config.at("profile"));
      profile = Hyperparams::from_json(merged);
    }
    profile.validate();
  } catch (const json::exception& ex) {
    throw Error(Errc::ConfigError, std::string("bad profile: ") + ex.what());
  } catch (const Error& ex) {
    throw Error(Errc::ConfigError, std::string("bad profile: ") + ex.what());
  }

  json runs = json::array();
  for (const auto& e : config.at("experiments")) {
    std::string name, ekind;
    try {
      name = e.at("name").get<std::string>();
      ekind = e.at("kind").get<std::string>();
    } catch (const json::exception& ex) {
      throw Error(Errc::ConfigError, std::string("experiment needs name and kind: ") + ex.what());
    }
    if (name.empty() || name.find_first_of("/\\") != std::string::npos) throw Error(Errc::ConfigError, "bad experiment name '" + name + "'");
    if (!kind.empty() && ekind != kind) continue;

    Csv csv;
    json info{{"name", name}, {"kind", ekind}};
    json checks;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (ekind == "synth")
        checks = run_synth(e, profile, seed, csv, info);
      else if (ekind == "accuracy")
        checks = run_accuracy(e, profile, seed, base, csv, info);
      else if (ekind == "timing")
        checks = run_timing(e, profile, seed, csv, info);
      else
        throw Error(Errc::ConfigError, "unknown experiment kind '" + ekind + "'");
    } catch (const json::exception& ex) {
      throw Error(Errc::ConfigError, "experiment '" + name + "': " + ex.what());
    }
    const auto file = out_dir / (name + ".csv");
    csv.write(file);
    report.files.push_back(file);
    bool passed = true;
    for (const auto& c : checks) passed = passed && c.at("passed").get<bool>();
    report.all_passed = report.all_passed && passed;
    info["file"] = file.filename().string();
    info["columns"] = csv.columns;
    info["checks"] = checks;
    info["passed"] = passed;
    info["wallSeconds"] = seconds_since(t0);
    runs.push_back(info);
  }

  report.manifest = {{"tool", "kge bench"},  {"version", kVersion},         {"seed", seed},
                     {"kind", kind.empty() ? "all" : kind}, {"profile", profile.to_json()}, {"experiments", runs},
                     {"allPassed", report.all_passed}};
  const auto manifest = out_dir / "manifest.json";
  std::ofstream(manifest, std::ios::binary) << report.manifest.dump(2) << "\n";
  report.files.push_back(manifest);
  return report;
}

}  // namespace kge
