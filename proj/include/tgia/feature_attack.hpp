#pragma once

#include <span>
#include <vector>

#include "tgia/gcn.hpp"

namespace tgia {

struct FgsmConfig {
  double sparsity = 0.06;  // S
  int batch = 1;           // B, flips per step
  int max_steps = 100000;

  /// F' = floor(S * F); throws ValidationError when it underflows to zero.
  int word_budget(Eigen::Index num_features) const;
};

enum class PgdMode { Projected, Riemannian };

struct PgdConfig {
  double learning_rate = 0.01;
  int epochs = 500;
  int patience = 100;
  double hao_weight = 0.0;  // γ
  bool normalize = true;
  PgdMode mode = PgdMode::Projected;
};

/// The attack problem seen by a feature updater: the attacked graph whose last
/// `inj.rows()` nodes are the rows being optimized, and the features of every
/// other node.
struct AttackProblem {
  const GcnModel& model;
  const TextGraph& graph;
  const PropagationCache& cache;
  const Matrix& fixed;  // rows [0, graph.node_count() - inj.rows())
  std::span<const NodeId> targets;
  std::span<const int> y_orig;  // original predicted class per node id
};

struct FgsmStats {
  int steps = 0;
  int flips = 0;
};

/// Row-wise constrained binary FGSM. Each step flips the global top-B entries
/// by first-order benefit (+g for a 0-entry, -g for a 1-entry), skipping rows
/// that exhausted their flip budget and 0->1 flips in rows already holding F'
/// ones. Stops when no positive-benefit flip remains.
Matrix fgsm_binary(const AttackProblem& problem, Matrix inj, const FgsmConfig& cfg,
                   FgsmStats* stats = nullptr);

/// Gradient ascent on L_pred + γ·L_HAO, projecting rows onto the unit sphere
/// after every step when cfg.normalize is set. Early-stops when target accuracy
/// (agreement with y_orig) has not decreased for cfg.patience epochs.
Matrix pgd_continuous(const AttackProblem& problem, Matrix inj, const PgdConfig& cfg);

/// Mean over rows [first_row, N) of cos(X_i, (Â X)_i). Zero-norm rows count 0.
double hao_term(const Matrix& features, const SparseMatrix& adj, NodeId first_row);

/// dL_HAO/dX for rows [first_row, N).
Matrix hao_gradient(const Matrix& features, const SparseMatrix& adj, NodeId first_row);

/// Descent step on the sphere: tangent projection then retraction.
Vector riemannian_step(const Vector& x, const Vector& g, double step);

/// Row-wise projection onto the unit sphere; zero rows are left unchanged.
void project_unit_sphere(Matrix& rows);

}  // namespace tgia
