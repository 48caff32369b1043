#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "kge/dataset.hpp"
#include "kge/knowledge.hpp"

namespace kge {

struct Hyperparams {
  double alpha = 0.0;  // weight of the classification loss in [0, 1]
  double eta = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 64;
  std::uint64_t seed = 0;

  // alpha from the UI's classification-loss-ratio percentage.
  static double alpha_from_clr_percent(double percent) { return percent / 100.0; }
  void validate() const;  // throws InvalidHyperparams

  nlohmann::json to_json() const;
  static Hyperparams from_json(const nlohmann::json& j);
  bool operator==(const Hyperparams&) const = default;
};

// Encoder-free embedding network. The per-sample embeddings H are trainable
// inputs of a one-hidden-layer decoder; there is no inference pass, the
// embeddings are read straight out of H.
struct EmbeddingModel {
  Hyperparams hp;
  Eigen::MatrixXd H;   // n x m
  Eigen::MatrixXd W1;  // m x hidden
  Eigen::VectorXd b1;
  Eigen::MatrixXd W2;  // hidden x d
  Eigen::VectorXd b2;
  std::uint64_t step = 0;

  std::size_t n() const { return static_cast<std::size_t>(H.rows()); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(H.size() + W1.size() + b1.size() + W2.size() + b2.size());
  }
  bool all_finite() const;

  nlohmann::json to_json() const;
  static EmbeddingModel from_json(const nlohmann::json& j);
  bool operator==(const EmbeddingModel& o) const;
};

struct LossReport {
  std::size_t epoch = 0;
  double recon = 0;           // mean reconstruction loss
  double cls = 0;             // mean classification loss
  double total = 0;           // mean joint loss
  double train_accuracy = 0;  // fraction of active samples whose predicted class is their own
};

EmbeddingModel init_model(std::size_t n, std::size_t d, const Hyperparams& hp);

Eigen::VectorXd decode(const EmbeddingModel& model, const Eigen::Ref<const Eigen::VectorXd>& h);
double recon_loss(const Eigen::Ref<const Eigen::VectorXd>& predicted, const Eigen::Ref<const Eigen::VectorXd>& truth);
// Cosine similarity; a zero vector is dissimilar (0) to everything.
double similarity(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& h);

// Mean similarity between h_i and the other members of class y.
double group_similarity(const EmbeddingModel& model, std::size_t i, int y, const LabelAssignment& labels);
// Class whose members are most similar to h_i on average; ties go to the lowest id.
int predict_label(const EmbeddingModel& model, std::size_t i, const LabelAssignment& labels);
double class_loss(const EmbeddingModel& model, std::size_t i, const LabelAssignment& labels);
double joint_loss(double recon, double cls, double alpha);

// Loss and gradients of one mini-batch. Group similarities are measured
// against `snapshot` (the embeddings at batch start); gradients reach only
// the batch rows of H and the decoder.
struct BatchEvaluation {
  double loss = 0;
  double recon = 0;  // sums over the batch
  double cls = 0;
  std::size_t correct = 0;
  Eigen::MatrixXd dH;  // batch.size() x m, row r belongs to batch[r]
  Eigen::MatrixXd dW1;
  Eigen::VectorXd db1;
  Eigen::MatrixXd dW2;
  Eigen::VectorXd db2;
};

BatchEvaluation evaluate_batch(const EmbeddingModel& model, const Eigen::MatrixXd& snapshot, const FeatureMatrix& features,
                               const LabelAssignment& labels, std::span<const std::size_t> batch, double alpha,
                               bool with_gradients = true);

// Seeded visiting order of the active rows for one epoch.
std::vector<std::size_t> epoch_order(const LabelAssignment& labels, std::uint64_t seed, std::size_t epoch);

LossReport train_epoch(EmbeddingModel& model, const FeatureMatrix& features, const LabelAssignment& labels,
                       const Hyperparams& hp, std::size_t epoch);
LossReport train_epoch(EmbeddingModel& model, const FeatureMatrix& features, const LabelAssignment& labels,
                       const Hyperparams& hp, std::size_t epoch, std::span<const std::size_t> order);

// Returning false from the callback cancels training (Errc::Cancelled).
using ProgressCallback = std::function<bool(const LossReport&, const EmbeddingModel&)>;

struct TrainResult {
  EmbeddingModel model;
  std::vector<LossReport> reports;
};

TrainResult train(EmbeddingModel model, const FeatureMatrix& features, const LabelAssignment& labels, const Hyperparams& hp,
                  const ProgressCallback& progress = {});

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

}  // namespace kge
