#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "kge/embednet.hpp"
#include "oracles.hpp"

using namespace kge;
using testing::labels_from;

namespace {

EmbeddingModel model_with_h(const Eigen::MatrixXd& h) {
  Hyperparams hp;
  hp.embed_dim = static_cast<std::size_t>(h.cols());
  hp.hidden_dim = 2;
  auto m = init_model(static_cast<std::size_t>(h.rows()), 1, hp);
  m.H = h;
  return m;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

}  // namespace

TEST_CASE("init_model") {
  Hyperparams hp;
  hp.seed = 42;
  const auto a = init_model(10, 4, hp);
  const auto b = init_model(10, 4, hp);
  CHECK(a == b);

  hp.embed_dim = 2;
  const auto tiny = init_model(2, 3, hp);
  CHECK(tiny.H.rows() == 2);
  CHECK(tiny.H.cols() == 2);
  CHECK(tiny.H.cwiseAbs().maxCoeff() <= 0.1);
  CHECK(tiny.b1.isZero());
  CHECK(tiny.b2.isZero());

  hp = Hyperparams{};
  const auto big = init_model(1000, 50, hp);
  const std::size_t m = hp.embed_dim, h = hp.hidden_dim;
  CHECK(big.parameter_count() == 1000 * m + m * h + h + h * 50 + 50);

  Hyperparams bad;
  bad.epochs = 0;
  CHECK_THROWS_AS(init_model(5, 2, bad), Error);
  bad = Hyperparams{};
  bad.alpha = 1.5;
  CHECK_THROWS_AS(init_model(5, 2, bad), Error);
  CHECK_THROWS_AS(init_model(1, 2, Hyperparams{}), Error);
}

TEST_CASE("decode") {
  Hyperparams hp;
  hp.embed_dim = 2;
  hp.hidden_dim = 3;
  auto m = init_model(2, 4, hp);
  m.W1.setZero();
  m.W2.setZero();
  CHECK(decode(m, Eigen::Vector2d(0.3, -0.7)).isZero());

  Hyperparams one;
  one.embed_dim = 2;
  one.hidden_dim = 1;
  auto unit = init_model(2, 1, one);
  unit.W1 << 1, 0;
  unit.W2 << 1;
  CHECK(decode(unit, Eigen::Vector2d(0.5, 0.9))(0) == doctest::Approx(0.5));
  CHECK(decode(unit, Eigen::Vector2d(-0.5, 0.9))(0) == 0.0);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Hyperparams p;
    p.embed_dim = 5;
    p.hidden_dim = 7;
    auto net = init_model(3, 6, p);
    net.W1 = random_matrix(5, 7, rng);
    net.b1 = random_matrix(7, 1, rng);
    net.W2 = random_matrix(7, 6, rng);
    net.b2 = random_matrix(6, 1, rng);
    const Eigen::VectorXd h = random_matrix(5, 1, rng);
    // Naive triple loop.
    std::vector<double> hidden(7), out(6);
    for (int j = 0; j < 7; ++j) {
      double s = net.b1(j);
      for (int i = 0; i < 5; ++i) s += net.W1(i, j) * h(i);
      hidden[static_cast<std::size_t>(j)] = s > 0 ? s : 0;
    }
    for (int k = 0; k < 6; ++k) {
      double s = net.b2(k);
      for (int j = 0; j < 7; ++j) s += net.W2(j, k) * hidden[static_cast<std::size_t>(j)];
      out[static_cast<std::size_t>(k)] = s;
    }
    const auto got = decode(net, h);
    for (int k = 0; k < 6; ++k) CHECK(std::abs(got(k) - out[static_cast<std::size_t>(k)]) < 1e-9);
  }
}

TEST_CASE("recon_loss") {
  CHECK(recon_loss(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(1, 2, 3)) == 0.0);
  CHECK(recon_loss(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 0)) == 0.5);
  CHECK_THROWS_AS(recon_loss(Eigen::Vector2d(1, 0), Eigen::Vector3d(0, 0, 0)), Error);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd a = random_matrix(9, 1, rng), b = random_matrix(9, 1, rng);
    double s = 0;
    for (int i = 0; i < 9; ++i) s += (a(i) - b(i)) * (a(i) - b(i));
    CHECK(recon_loss(a, b) == doctest::Approx(s / 9).epsilon(1e-14));
  }
}

TEST_CASE("similarity") {
  const Eigen::Vector3d v(0.3, -2, 1);
  CHECK(similarity(v, v) == doctest::Approx(1.0));
  CHECK(similarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)) == 0.0);
  CHECK(similarity(Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 1)) == 0.0);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd a = random_matrix(6, 1, rng), b = random_matrix(6, 1, rng);
    CHECK(std::abs(similarity(a, b) - oracle::cosine(a, b)) < 1e-12);
  }
}

TEST_CASE("group_similarity") {
  Eigen::MatrixXd h(3, 2);
  h << 1, 1, 1, 1, 0, 1;
  auto m = model_with_h(h);
  CHECK(group_similarity(m, 0, 0, labels_from({0, 0, 1})) == doctest::Approx(1.0));
  try {
    group_similarity(m, 2, 1, labels_from({0, 0, 1}));
    FAIL("expected EmptyGroupAfterExclusion");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyGroupAfterExclusion);
  }

  Eigen::MatrixXd g(4, 2);
  g << 1, 0, 1, 0, 1, 0, 0, 1;
  CHECK(group_similarity(model_with_h(g), 3, 0, labels_from({0, 0, 0, 1})) == 0.0);

  std::mt19937_64 rng(4);
  const Eigen::MatrixXd r = random_matrix(60, 5, rng);
  std::vector<int> ids(60, 1);
  for (int i = 0; i < 50; ++i) ids[static_cast<std::size_t>(i)] = 0;
  const auto labels = labels_from(ids);
  const auto rm = model_with_h(r);
  for (std::size_t i : {0u, 17u, 55u}) {
    double s = 0;
    int c = 0;
    for (int p = 0; p < 50; ++p) {
      if (static_cast<std::size_t>(p) == i) continue;
      s += oracle::cosine(r.row(p).transpose(), r.row(static_cast<Eigen::Index>(i)).transpose());
      ++c;
    }
    CHECK(std::abs(group_similarity(rm, i, 0, labels) - s / c) < 1e-12);
  }
}

TEST_CASE("predict_label and class_loss") {
  Eigen::MatrixXd h(5, 2);
  h << 1, 0, 1, 0, 1, 0, 0, 1, 0, 1;
  const auto m = model_with_h(h);
  const auto labels = labels_from({0, 0, 0, 1, 1});
  CHECK(predict_label(m, 0, labels) == 0);
  CHECK(class_loss(m, 0, labels) == 0.0);

  // Exact tie between the two groups: lower id wins.
  Eigen::MatrixXd t(5, 2);
  t << 1, 1, 1, 0, 1, 0, 0, 1, 0, 1;
  const auto tied = model_with_h(t);
  CHECK(predict_label(tied, 0, labels_from({1, 0, 0, 1, 1})) == 0);

  // Mislabeled sample: loss is the similarity gap.
  const auto wrong = labels_from({1, 0, 0, 1, 1});
  CHECK(predict_label(m, 0, wrong) == 0);
  CHECK(class_loss(m, 0, wrong) == doctest::Approx(1.0));

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd r = random_matrix(24, 4, rng);
    std::vector<int> ids(24);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(rng() % 4);
    const auto la = labels_from(ids);
    if (std::any_of(la.class_sizes.begin(), la.class_sizes.end(), [](std::size_t c) { return c < 2; })) continue;
    const auto rm = model_with_h(r);
    for (std::size_t i = 0; i < 24; ++i) {
      // Enumerate all classes with the explicit-loop group similarity.
      std::vector<double> sims(4);
      for (int y = 0; y < 4; ++y) {
        double s = 0;
        int c = 0;
        for (std::size_t p = 0; p < 24; ++p)
          if (p != i && ids[p] == y) {
            s += oracle::cosine(r.row(static_cast<Eigen::Index>(p)).transpose(), r.row(static_cast<Eigen::Index>(i)).transpose());
            ++c;
          }
        sims[static_cast<std::size_t>(y)] = s / c;
      }
      const int best = static_cast<int>(std::max_element(sims.begin(), sims.end()) - sims.begin());
      CHECK(predict_label(rm, i, la) == best);
      const double lc = class_loss(rm, i, la);
      CHECK(lc >= 0.0);
      CHECK(std::abs(lc - (sims[static_cast<std::size_t>(best)] - sims[static_cast<std::size_t>(ids[i])])) < 1e-12);
      CHECK((lc == 0.0) == (best == ids[i]));
    }
  }
}

TEST_CASE("joint_loss") {
  CHECK(joint_loss(0.7, 123.0, 0.0) == 0.7);
  CHECK(joint_loss(0.7, 0.25, 1.0) == 0.25);
  CHECK(joint_loss(1.0, 2.0, 0.2) == doctest::Approx(1.2));
  CHECK(joint_loss(3.0, 1.0, 0.0) == joint_loss(3.0, -50.0, 0.0));
  CHECK(joint_loss(3.0, 1.0, 1.0) == joint_loss(-9.0, 1.0, 1.0));
  try {
    joint_loss(1, 1, -0.1);
    FAIL("expected AlphaOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::AlphaOutOfRange);
  }
}

TEST_CASE("evaluate_batch agrees with the per-sample definitions") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto t = testing::random_toy(seed, 9);
    const auto ev = evaluate_batch(t.model, t.model.H, t.features, t.labels, t.batch, t.alpha, false);
    double lr = 0, lc = 0;
    for (auto i : t.batch) {
      lr += recon_loss(decode(t.model, t.model.H.row(static_cast<Eigen::Index>(i)).transpose()),
                       t.features.values.row(static_cast<Eigen::Index>(i)).transpose());
      lc += class_loss(t.model, i, t.labels);
    }
    CHECK(ev.recon == doctest::Approx(lr).epsilon(1e-12));
    CHECK(ev.cls == doctest::Approx(lc).epsilon(1e-12));
    const double k = static_cast<double>(t.batch.size());
    CHECK(std::abs(ev.loss - joint_loss(lr / k, lc / k, t.alpha)) < 1e-9);
  }
}

TEST_CASE("analytic gradients match central differences") {
  std::size_t with_class_loss = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto t = testing::random_toy(seed);
    const auto res = testing::gradient_check(t.model, t.features, t.labels, t.batch, t.alpha);
    CHECK(res.max_rel_error < 1e-4);
    if (evaluate_batch(t.model, t.model.H, t.features, t.labels, t.batch, t.alpha, false).cls > 0) ++with_class_loss;
  }
  CHECK(with_class_loss > 0);
}

namespace {

struct TrainingFixture {
  FeatureMatrix features;
  LabelAssignment labels;
};

TrainingFixture two_blobs(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 0.2);
  TrainingFixture f;
  f.features.values.resize(static_cast<Eigen::Index>(2 * per_class), 4);
  std::vector<int> ids;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int c = i < per_class ? 0 : 1;
    for (Eigen::Index j = 0; j < 4; ++j) f.features.values(static_cast<Eigen::Index>(i), j) = u(rng) + (c == 0 ? 0.0 : 0.8);
    ids.push_back(c);
  }
  f.features.ranges.assign(4, {0.0, 1.0});
  f.labels = labels_from(ids);
  return f;
}

}  // namespace

TEST_CASE("training with alpha = 0 lowers the reconstruction loss") {
  const auto f = two_blobs(4, 1);
  Hyperparams hp;
  hp.alpha = 0.0;
  hp.eta = 0.05;
  hp.batch_size = 4;
  hp.epochs = 200;
  hp.seed = 3;
  auto model = init_model(8, 4, hp);
  std::vector<double> recon;
  for (std::size_t e = 0; e < 10; ++e) recon.push_back(train_epoch(model, f.features, f.labels, hp, e).recon);
  for (std::size_t e = 1; e < recon.size(); ++e) CHECK(recon[e] < recon[e - 1]);
  const auto rest = train(model, f.features, f.labels, hp);
  CHECK(rest.reports.back().recon < recon.front());
  CHECK(rest.model.all_finite());
}

TEST_CASE("training with alpha = 1 separates two classes") {
  const auto f = two_blobs(20, 2);
  Hyperparams hp;
  hp.alpha = 1.0;
  hp.batch_size = 8;
  hp.epochs = 50;
  hp.seed = 9;
  const auto res = train(init_model(40, 4, hp), f.features, f.labels, hp);
  double best = 0;
  for (const auto& r : res.reports) best = std::max(best, r.train_accuracy);
  CHECK(best == 1.0);
  for (const auto& r : res.reports) CHECK(r.cls >= 0.0);
}

TEST_CASE("train is deterministic, cancellable and checks its inputs") {
  const auto f = two_blobs(10, 3);
  Hyperparams hp;
  hp.alpha = 0.4;
  hp.batch_size = 6;
  hp.epochs = 15;
  hp.seed = 21;
  const auto a = train(init_model(20, 4, hp), f.features, f.labels, hp);
  const auto b = train(init_model(20, 4, hp), f.features, f.labels, hp);
  CHECK(a.model == b.model);
  CHECK(a.model.step == 15 * 4);
  for (const auto& r : a.reports) CHECK(std::abs(r.total - joint_loss(r.recon, r.cls, hp.alpha)) < 1e-9);

  std::size_t seen = 0;
  try {
    train(init_model(20, 4, hp), f.features, f.labels, hp, [&](const LossReport&, const EmbeddingModel&) { return ++seen < 3; });
    FAIL("expected Cancelled");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Cancelled);
  }
  CHECK(seen == 3);

  Hyperparams big = hp;
  big.batch_size = 21;
  CHECK_THROWS_AS(train(init_model(20, 4, hp), f.features, f.labels, big), Error);

  Hyperparams wild = hp;
  wild.eta = 1e200;
  try {
    train(init_model(20, 4, hp), f.features, f.labels, wild);
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLossError& e) {
    CHECK(e.epoch() <= 1);
  }
}

TEST_CASE("permuting samples permutes the trained embeddings") {
  const auto f = two_blobs(4, 5);
  Hyperparams hp;
  hp.alpha = 0.5;
  hp.batch_size = 3;
  hp.epochs = 5;
  hp.seed = 8;
  const std::size_t n = 8;
  auto base = init_model(n, 4, hp);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(99);
  std::shuffle(perm.begin(), perm.end(), rng);  // new row r holds old sample perm[r]
  std::vector<std::size_t> inverse(n);
  for (std::size_t r = 0; r < n; ++r) inverse[perm[r]] = r;

  auto permuted = base;
  FeatureMatrix pf = f.features;
  std::vector<int> ids(n);
  for (std::size_t r = 0; r < n; ++r) {
    permuted.H.row(static_cast<Eigen::Index>(r)) = base.H.row(static_cast<Eigen::Index>(perm[r]));
    pf.values.row(static_cast<Eigen::Index>(r)) = f.features.values.row(static_cast<Eigen::Index>(perm[r]));
    ids[r] = *f.labels.labels[perm[r]];
  }
  const auto pl = labels_from(ids);

  for (std::size_t e = 0; e < hp.epochs; ++e) {
    const auto order = epoch_order(f.labels, hp.seed, e);
    std::vector<std::size_t> mapped(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) mapped[i] = inverse[order[i]];
    train_epoch(base, f.features, f.labels, hp, e, order);
    train_epoch(permuted, pf, pl, hp, e, mapped);
  }
  double diff = 0;
  for (std::size_t r = 0; r < n; ++r)
    diff = std::max(diff, (permuted.H.row(static_cast<Eigen::Index>(r)) - base.H.row(static_cast<Eigen::Index>(perm[r]))).cwiseAbs().maxCoeff());
  CHECK(diff < 1e-12);
}

TEST_CASE("checkpoint round trip is exact") {
  const auto f = two_blobs(5, 6);
  Hyperparams hp;
  hp.alpha = 0.3;
  hp.batch_size = 5;
  hp.epochs = 3;
  hp.seed = 1;
  const auto res = train(init_model(10, 4, hp), f.features, f.labels, hp);
  const auto text = res.model.to_json().dump();
  const auto back = EmbeddingModel::from_json(nlohmann::json::parse(text));
  CHECK(back == res.model);
  CHECK_THROWS_AS(EmbeddingModel::from_json(nlohmann::json::parse(R"({"format":"other"})")), Error);
}
