#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "tgia/graph.hpp"
#include "tgia/text.hpp"

namespace tgia {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Â = D̃^{-1/2}(A+I)D̃^{-1/2} over the (possibly filtered) edge set.
struct PropagationCache {
  SparseMatrix adj;
};

/// Per-edge keep flags, parallel to TextGraph::edges().
using EdgeMask = std::vector<char>;

PropagationCache normalize_adjacency(const TextGraph& graph);
PropagationCache normalize_adjacency(const TextGraph& graph, const EdgeMask& keep);

/// Homophily guard: keeps edge (u,v) iff cosine(X_u, X_v) >= tau. Zero-norm
/// rows have similarity 0.
EdgeMask guard_filter(const Matrix& features, const TextGraph& graph, double tau);

struct GcnConfig {
  int hidden = 64;
  double learning_rate = 0.01;
  int epochs = 400;
  int patience = 100;
  double dropout = 0.5;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct DenseLayer {
  Matrix weight;  // in x out
  Vector bias;    // out
};

/// Three graph-convolution layers F -> hidden -> hidden -> C with ReLU between
/// layers and a softmax head.
struct GcnModel {
  std::vector<DenseLayer> layers;
  GcnConfig config;

  Eigen::Index input_dim() const { return layers.front().weight.rows(); }
  Eigen::Index num_classes() const { return layers.back().weight.cols(); }
  std::size_t parameter_count() const;
};

/// Glorot-uniform weights and zero biases from config.seed.
GcnModel init_model(Eigen::Index input_dim, Eigen::Index num_classes, const GcnConfig& config);

struct TrainReport {
  int best_epoch = -1;       // -1 when no epoch ran
  double best_val_accuracy = 0.0;
  int epochs_run = 0;
};

/// Adam on mean cross-entropy over the train split; returns the checkpoint
/// with the best validation accuracy (ties keep the earlier epoch).
GcnModel train(const TextGraph& graph, const Matrix& features, const PropagationCache& cache,
               const GcnConfig& config, TrainReport* report = nullptr);

/// Logits (pre-softmax) with dropout disabled.
Matrix forward_logits(const GcnModel& model, const Matrix& features, const PropagationCache& cache);
/// Row-stochastic class probabilities with dropout disabled.
Matrix forward(const GcnModel& model, const Matrix& features, const PropagationCache& cache);
Matrix softmax_rows(const Matrix& logits);
std::vector<int> argmax_rows(const Matrix& probs);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels,
                std::span<const NodeId> nodes);

/// Mean cross-entropy of `probs` against `labels` over `nodes` (0 when empty).
double cross_entropy(const Matrix& probs, std::span<const NodeId> nodes, std::span<const int> labels);

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
  Matrix features;  // dL/dX, N x F
  double loss = 0.0;
};

/// Loss = mean CE over `nodes` against `labels` (indexed by node id), plus
/// analytic gradients for every parameter and every input feature.
/// Dropout is disabled.
Gradients loss_gradients(const GcnModel& model, const Matrix& features,
                         const PropagationCache& cache, std::span<const NodeId> nodes,
                         std::span<const int> labels);

/// dJ/dX for rows [first_row, N), J = mean CE between current predictions on
/// `targets` and the original predicted classes `y_orig` (indexed by node id).
/// The attacker ascends J.
Matrix grad_features(const GcnModel& model, const Matrix& features, const PropagationCache& cache,
                     std::span<const NodeId> targets, std::span<const int> y_orig,
                     NodeId first_row);

/// Checkpoint: one text header line then little-endian float32 parameters, per
/// layer weight (row-major) followed by bias.
void save_checkpoint(const GcnModel& model, const std::filesystem::path& path,
                     const std::string& config_hash);
GcnModel load_checkpoint(const std::filesystem::path& path);

}  // namespace tgia
