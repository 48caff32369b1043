#include "kge/embednet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace kge {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

void check_labels(const EmbeddingModel& model, const LabelAssignment& labels) {
  if (labels.labels.size() != model.n())
    throw Error(Errc::LengthMismatch, "label count " + std::to_string(labels.labels.size()) + " != model rows " +
                                          std::to_string(model.n()));
}

// Unit-length copy of every row; zero rows stay zero.
Eigen::MatrixXd row_normalized(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (Index r = 0; r < m.rows(); ++r) {
    const double nrm = m.row(r).norm();
    if (nrm > 0) out.row(r) /= nrm;
    else out.row(r).setZero();
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

void Hyperparams::validate() const {
  auto fail = [](const std::string& msg) { throw Error(Errc::InvalidHyperparams, msg); };
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (!(eta > 0.0) || !std::isfinite(eta)) fail("learning rate must be positive");
  if (batch_size < 1) fail("batch size must be at least 1");
  if (epochs < 1) fail("epochs must be at least 1");
  if (embed_dim < 2) fail("embedding dimension must be at least 2");
  if (hidden_dim < 1) fail("hidden dimension must be at least 1");
}

nlohmann::json Hyperparams::to_json() const {
  return {{"alpha", alpha},         {"eta", eta},           {"batchSize", batch_size}, {"epochs", epochs},
          {"embedDim", embed_dim}, {"hiddenDim", hidden_dim}, {"seed", seed}};
}

Hyperparams Hyperparams::from_json(const nlohmann::json& j) {
  Hyperparams hp;
  hp.alpha = j.value("alpha", hp.alpha);
  hp.eta = j.value("eta", hp.eta);
  hp.batch_size = j.value("batchSize", hp.batch_size);
  hp.epochs = j.value("epochs", hp.epochs);
  hp.embed_dim = j.value("embedDim", hp.embed_dim);
  hp.hidden_dim = j.value("hiddenDim", hp.hidden_dim);
  hp.seed = j.value("seed", hp.seed);
  return hp;
}

bool EmbeddingModel::all_finite() const {
  return H.allFinite() && W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite();
}

bool EmbeddingModel::operator==(const EmbeddingModel& o) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || (a.array() == b.array()).all());
  };
  return hp == o.hp && step == o.step && same(H, o.H) && same(W1, o.W1) && same(b1, o.b1) && same(W2, o.W2) && same(b2, o.b2);
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols)
    throw Error(Errc::InvalidArgument, "matrix payload size mismatch");
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  return m;
}

nlohmann::json EmbeddingModel::to_json() const {
  return {{"format", "kge-model"},
          {"version", 1},
          {"hp", hp.to_json()},
          {"step", step},
          {"H", matrix_to_json(H)},
          {"W1", matrix_to_json(W1)},
          {"b1", matrix_to_json(b1)},
          {"W2", matrix_to_json(W2)},
          {"b2", matrix_to_json(b2)}};
}

EmbeddingModel EmbeddingModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "kge-model" || j.at("version") != 1) throw Error(Errc::InvalidArgument, "unsupported checkpoint");
    EmbeddingModel m;
    m.hp = Hyperparams::from_json(j.at("hp"));
    m.step = j.at("step").get<std::uint64_t>();
    m.H = matrix_from_json(j.at("H"));
    m.W1 = matrix_from_json(j.at("W1"));
    m.b1 = matrix_from_json(j.at("b1"));
    m.W2 = matrix_from_json(j.at("W2"));
    m.b2 = matrix_from_json(j.at("b2"));
    if (m.W1.rows() != m.H.cols() || m.b1.size() != m.W1.cols() || m.W2.rows() != m.W1.cols() || m.b2.size() != m.W2.cols())
      throw Error(Errc::InvalidArgument, "checkpoint tensor shapes disagree");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed checkpoint: ") + e.what());
  }
}

EmbeddingModel init_model(std::size_t n, std::size_t d, const Hyperparams& hp) {
  hp.validate();
  if (n < 2) throw Error(Errc::InvalidHyperparams, "need at least two samples");
  if (d < 1) throw Error(Errc::InvalidHyperparams, "need at least one feature");
  const std::size_t m = hp.embed_dim, h = hp.hidden_dim;
  std::mt19937_64 rng(hp.seed);
  auto fill = [&rng](Eigen::MatrixXd& mat, double limit) {
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Index r = 0; r < mat.rows(); ++r)
      for (Index c = 0; c < mat.cols(); ++c) mat(r, c) = u(rng);
  };
  EmbeddingModel model;
  model.hp = hp;
  model.H.resize(idx(n), idx(m));
  model.W1.resize(idx(m), idx(h));
  model.W2.resize(idx(h), idx(d));
  fill(model.H, 0.1);
  fill(model.W1, std::sqrt(6.0 / static_cast<double>(m + h)));
  fill(model.W2, std::sqrt(6.0 / static_cast<double>(h + d)));
  model.b1 = Eigen::VectorXd::Zero(idx(h));
  model.b2 = Eigen::VectorXd::Zero(idx(d));
  return model;
}

Eigen::VectorXd decode(const EmbeddingModel& model, const Eigen::Ref<const Eigen::VectorXd>& h) {
  const Eigen::VectorXd hidden = (model.W1.transpose() * h + model.b1).cwiseMax(0.0);
  return model.W2.transpose() * hidden + model.b2;
}

double recon_loss(const Eigen::Ref<const Eigen::VectorXd>& predicted, const Eigen::Ref<const Eigen::VectorXd>& truth) {
  if (predicted.size() != truth.size())
    throw Error(Errc::LengthMismatch, std::to_string(predicted.size()) + " vs " + std::to_string(truth.size()));
  if (predicted.size() == 0) return 0.0;
  return (predicted - truth).squaredNorm() / static_cast<double>(predicted.size());
}

double similarity(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& h) {
  if (p.size() != h.size()) throw Error(Errc::LengthMismatch, "similarity of vectors with different lengths");
  const double np = p.norm(), nh = h.norm();
  if (np == 0 || nh == 0) return 0.0;
  return p.dot(h) / (np * nh);
}

double group_similarity(const EmbeddingModel& model, std::size_t i, int y, const LabelAssignment& labels) {
  check_labels(model, labels);
  if (y < 0 || static_cast<std::size_t>(y) >= labels.num_classes())
    throw Error(Errc::InvalidArgument, "unknown class " + std::to_string(y));
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < labels.labels.size(); ++p) {
    if (p == i || labels.labels[p] != y) continue;
    sum += similarity(model.H.row(idx(p)).transpose(), model.H.row(idx(i)).transpose());
    ++count;
  }
  if (count == 0)
    throw Error(Errc::EmptyGroupAfterExclusion, "sample " + std::to_string(i) + " is the only member of class " + std::to_string(y));
  return sum / static_cast<double>(count);
}

int predict_label(const EmbeddingModel& model, std::size_t i, const LabelAssignment& labels) {
  check_labels(model, labels);
  int best = -1;
  double best_s = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < labels.num_classes(); ++y) {
    const bool own = labels.labels[i] == static_cast<int>(y);
    if (labels.class_sizes[y] - (own ? 1 : 0) == 0) continue;
    const double s = group_similarity(model, i, static_cast<int>(y), labels);
    if (s > best_s) {
      best_s = s;
      best = static_cast<int>(y);
    }
  }
  if (best < 0) throw Error(Errc::EmptyGroupAfterExclusion, "no class has members other than sample " + std::to_string(i));
  return best;
}

double class_loss(const EmbeddingModel& model, std::size_t i, const LabelAssignment& labels) {
  check_labels(model, labels);
  if (!labels.labels[i]) throw Error(Errc::InvalidArgument, "sample " + std::to_string(i) + " is not labeled");
  const int truth = *labels.labels[i];
  const double own = group_similarity(model, i, truth, labels);
  const int predicted = predict_label(model, i, labels);
  if (predicted == truth) return 0.0;
  return group_similarity(model, i, predicted, labels) - own;
}

double joint_loss(double recon, double cls, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::AlphaOutOfRange, "alpha=" + std::to_string(alpha));
  if (alpha == 0.0) return recon;
  if (alpha == 1.0) return cls;
  return alpha * cls + (1.0 - alpha) * recon;
}

namespace {

// Fills `ev` in place so training can reuse its buffers. With `w2_step` set,
// the W2 step (-eta * dW2) is applied straight to *w2_step instead of being
// materialized; it is the widest matrix and dominates time at large d.
// `x` holds the normalized features, one row per sample, in either storage
// order; training passes a row-major copy so batch rows are contiguous.
template <class Features>
void evaluate_into(BatchEvaluation& ev, const EmbeddingModel& model, const Eigen::MatrixXd& snapshot, const Features& x,
                   const LabelAssignment& labels, std::span<const std::size_t> batch, double alpha, bool with_gradients,
                   Eigen::MatrixXd* w2_step = nullptr, double eta = 0) {
  check_labels(model, labels);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::AlphaOutOfRange, "alpha=" + std::to_string(alpha));
  if (static_cast<std::size_t>(x.rows()) != model.n() || x.cols() != model.W2.cols())
    throw Error(Errc::LengthMismatch, "feature matrix does not match the model");
  const Index k = idx(batch.size());
  const Index m = model.H.cols();
  const Index d = model.W2.cols();
  ev.loss = ev.recon = ev.cls = 0;
  ev.correct = 0;
  if (k == 0) return;

  Eigen::MatrixXd hb(k, m);
  for (Index r = 0; r < k; ++r) hb.row(r) = model.H.row(idx(batch[static_cast<std::size_t>(r)]));

  // Decoder forward pass.
  Eigen::MatrixXd z1 = hb * model.W1;
  z1.rowwise() += model.b1.transpose();
  const Eigen::MatrixXd a1 = z1.cwiseMax(0.0);
  const double kd = static_cast<double>(k);
  const double out_scale = (1.0 - alpha) * 2.0 / (static_cast<double>(d) * kd);

  Eigen::VectorXd recon = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd resid;
  Eigen::MatrixXd dz(k, a1.cols());
  if (w2_step) {
    // Training step: forward, backward and the W2 update in one sweep over
    // column blocks of W2, so the weights stream through cache once.
    constexpr Index kBlock = 256;
    dz.setZero();
    ev.db2.resize(d);
    Eigen::MatrixXd blk(k, std::min(kBlock, d));
    for (Index j = 0; j < d; j += kBlock) {
      const Index w = std::min(kBlock, d - j);
      auto W = w2_step->middleCols(j, w);
      auto o = blk.leftCols(w);
      o.noalias() = a1 * W;
      for (Index r = 0; r < k; ++r)
        o.row(r) += model.b2.segment(j, w).transpose() - x.row(idx(batch[static_cast<std::size_t>(r)])).segment(j, w);
      recon += o.rowwise().squaredNorm();
      o *= out_scale;  // now d loss / d out
      ev.db2.segment(j, w) = o.colwise().sum().transpose();
      dz.noalias() += o * W.transpose();
      W.noalias() -= eta * (a1.transpose() * o);
    }
  } else {
    resid.resize(k, d);
    resid.noalias() = a1 * model.W2;
    for (Index r = 0; r < k; ++r)
      resid.row(r) += model.b2.transpose() - x.row(idx(batch[static_cast<std::size_t>(r)]));
    recon = resid.rowwise().squaredNorm();
  }
  recon /= static_cast<double>(d);

  // Classification term against the snapshot.
  const std::size_t classes = labels.num_classes();
  Eigen::VectorXd cls = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd dcls = Eigen::MatrixXd::Zero(k, m);
  if (classes > 0) {
    const Eigen::MatrixXd unit = row_normalized(snapshot);
    Eigen::MatrixXd class_sum = Eigen::MatrixXd::Zero(idx(classes), m);
    for (std::size_t p = 0; p < labels.labels.size(); ++p)
      if (labels.labels[p]) class_sum.row(*labels.labels[p]) += unit.row(idx(p));

    for (Index r = 0; r < k; ++r) {
      const std::size_t i = batch[static_cast<std::size_t>(r)];
      if (!labels.labels[i]) throw Error(Errc::InvalidArgument, "batch contains unlabeled sample " + std::to_string(i));
      const int truth = *labels.labels[i];
      const Eigen::RowVectorXd h = hb.row(r);
      const double hn = h.norm();

      // Mean unit vector of each group with sample i excluded.
      Eigen::MatrixXd centre(idx(classes), m);
      std::vector<double> count(classes);
      for (std::size_t y = 0; y < classes; ++y) {
        const bool own = static_cast<int>(y) == truth;
        count[y] = static_cast<double>(labels.class_sizes[y]) - (own ? 1.0 : 0.0);
        centre.row(idx(y)) = class_sum.row(idx(y));
        if (own) centre.row(idx(y)) -= unit.row(idx(i));
        if (count[y] > 0) centre.row(idx(y)) /= count[y];
      }
      if (count[static_cast<std::size_t>(truth)] == 0) continue;  // singleton class: no group to compare with

      auto group_sim = [&](std::size_t y) { return hn > 0 ? centre.row(idx(y)).dot(h) / hn : 0.0; };
      int predicted = -1;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t y = 0; y < classes; ++y) {
        if (count[y] == 0) continue;
        const double s = group_sim(y);
        if (s > best) {
          best = s;
          predicted = static_cast<int>(y);
        }
      }
      if (predicted == truth) {
        ++ev.correct;
        continue;
      }
      const double s_true = group_sim(static_cast<std::size_t>(truth));
      cls(r) = best - s_true;
      if (with_gradients && hn > 0) {
        // d/dh (u.h / |h|) = u/|h| - (u.h) h / |h|^3
        auto grad = [&](std::size_t y, double s) -> Eigen::RowVectorXd {
          return centre.row(idx(y)) / hn - s * h / (hn * hn);
        };
        dcls.row(r) = grad(static_cast<std::size_t>(predicted), best) - grad(static_cast<std::size_t>(truth), s_true);
      }
    }
  }

  ev.recon = recon.sum();
  ev.cls = cls.sum();
  ev.loss = (alpha * ev.cls + (1.0 - alpha) * ev.recon) / kd;
  if (!with_gradients) return;

  if (!w2_step) {
    const Eigen::MatrixXd dout = resid * out_scale;
    ev.db2 = dout.colwise().sum().transpose();
    dz.noalias() = dout * model.W2.transpose();
    ev.dW2.resize(a1.cols(), d);
    ev.dW2.noalias() = a1.transpose() * dout;
  }
  dz = (z1.array() > 0.0).select(dz, 0.0);
  ev.dW1.noalias() = hb.transpose() * dz;
  ev.db1 = dz.colwise().sum().transpose();
  ev.dH.noalias() = dz * model.W1.transpose();
  ev.dH += dcls * (alpha / kd);
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

LossReport run_epoch(EmbeddingModel& model, const RowMatrix& x, const LabelAssignment& labels, const Hyperparams& hp,
                     std::size_t epoch, std::span<const std::size_t> order) {
  hp.validate();
  check_labels(model, labels);
  if (labels.active_count == 0) throw Error(Errc::NoActiveSamples, "no labeled samples to train on");
  if (hp.batch_size > labels.active_count)
    throw Error(Errc::InvalidHyperparams, "batch size " + std::to_string(hp.batch_size) + " exceeds " +
                                              std::to_string(labels.active_count) + " active samples");
  LossReport rep;
  rep.epoch = epoch;
  BatchEvaluation ev;
  for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
    const auto batch = order.subspan(start, std::min(hp.batch_size, order.size() - start));
    // H is not touched until the batch is evaluated, so it is its own snapshot.
    evaluate_into(ev, model, model.H, x, labels, batch, hp.alpha, true, &model.W2, hp.eta);
    if (!std::isfinite(ev.loss)) throw NonFiniteLossError(epoch);
    for (std::size_t r = 0; r < batch.size(); ++r) model.H.row(idx(batch[r])) -= hp.eta * ev.dH.row(idx(r));
    model.W1 -= hp.eta * ev.dW1;
    model.b1 -= hp.eta * ev.db1;
    model.b2 -= hp.eta * ev.db2;
    ++model.step;
    rep.recon += ev.recon;
    rep.cls += ev.cls;
    rep.train_accuracy += static_cast<double>(ev.correct);
  }
  if (!model.all_finite()) throw NonFiniteLossError(epoch);
  const double count = static_cast<double>(order.size());
  rep.recon /= count;
  rep.cls /= count;
  rep.train_accuracy /= count;
  rep.total = hp.alpha * rep.cls + (1.0 - hp.alpha) * rep.recon;
  return rep;
}

}  // namespace

BatchEvaluation evaluate_batch(const EmbeddingModel& model, const Eigen::MatrixXd& snapshot, const FeatureMatrix& features,
                               const LabelAssignment& labels, std::span<const std::size_t> batch, double alpha,
                               bool with_gradients) {
  BatchEvaluation ev;
  evaluate_into(ev, model, snapshot, features.values, labels, batch, alpha, with_gradients);
  return ev;
}

std::vector<std::size_t> epoch_order(const LabelAssignment& labels, std::uint64_t seed, std::size_t epoch) {
  auto order = labels.active_rows();
  std::mt19937_64 rng(mix_seed(seed, epoch));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

LossReport train_epoch(EmbeddingModel& model, const FeatureMatrix& features, const LabelAssignment& labels,
                       const Hyperparams& hp, std::size_t epoch) {
  const auto order = epoch_order(labels, hp.seed, epoch);
  return train_epoch(model, features, labels, hp, epoch, order);
}

LossReport train_epoch(EmbeddingModel& model, const FeatureMatrix& features, const LabelAssignment& labels,
                       const Hyperparams& hp, std::size_t epoch, std::span<const std::size_t> order) {
  return run_epoch(model, features.values, labels, hp, epoch, order);
}

TrainResult train(EmbeddingModel model, const FeatureMatrix& features, const LabelAssignment& labels, const Hyperparams& hp,
                  const ProgressCallback& progress) {
  hp.validate();
  const RowMatrix x = features.values;  // one copy for all epochs
  TrainResult res;
  res.reports.reserve(hp.epochs);
  for (std::size_t e = 0; e < hp.epochs; ++e) {
    res.reports.push_back(run_epoch(model, x, labels, hp, e, epoch_order(labels, hp.seed, e)));
    if (progress && !progress(res.reports.back(), model))
      throw Error(Errc::Cancelled, "training cancelled after epoch " + std::to_string(e));
  }
  res.model = std::move(model);
  return res;
}

}  // namespace kge
