#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tgia/feature_attack.hpp"
#include "tgia/gcn.hpp"
#include "tgia/graph.hpp"

namespace tgia {

/// Batch sizes of a sequential injection: min(remaining, floor(Δ·st)).
/// Throws ValidationError when floor(Δ·st) = 0 for Δ > 0.
std::vector<NodeId> batch_schedule(NodeId n_inject, double step);

/// score(v) = (1 - maxprob(v)) / (1 + deg(v)) for v in targets, 0 elsewhere.
/// Indexed by node id.
std::vector<double> vulnerable_scores(const Matrix& probs, const TextGraph& graph,
                                      std::span<const NodeId> targets);

struct VictimSelection {
  int target_class = -1;  // -1 when the global fallback was used
  std::vector<NodeId> victims;
};

/// Picks the predicted class whose top-n_t members (n_t = floor(n·γ)) have the
/// highest mean score; victims are those members sorted by score then id.
/// Classes with fewer than n_t members are skipped; if none qualifies, the
/// global top-n_t targets are returned.
VictimSelection select_victims(std::span<const double> scores, std::span<const NodeId> targets,
                               NodeId batch, double gamma, std::span<const int> predicted);

enum class EdgeStrategy { Uniform, Weighted };

/// Each injected node connects to min(degree_cap, |victims|) distinct victims,
/// drawn without replacement uniformly or with probability proportional to the
/// score. Returns (injected index, victim) pairs.
std::vector<std::pair<NodeId, NodeId>> form_edges(NodeId inj_count, std::span<const NodeId> victims,
                                                  std::span<const double> scores, int degree_cap,
                                                  EdgeStrategy strategy, std::uint64_t seed);

enum class InitKind { Zero, UnitSphere };

/// Feature updater: receives the problem with the current batch as trailing
/// rows and returns the updated batch rows.
using FeatureUpdater = std::function<Matrix(const AttackProblem&, Matrix batch, int round)>;

struct InjectionRound {
  NodeId batch = 0;
  int target_class = -1;
  std::vector<NodeId> victims;
  std::vector<Edge> edges;
};

struct InjectionPlan {
  std::vector<InjectionRound> rounds;
  double sequential_step = 0.2;
  double gamma_select = 1.0;

  nlohmann::json to_json() const;
};

struct SequentialAttackConfig {
  EdgeStrategy strategy = EdgeStrategy::Uniform;
  double sequential_step = 0.2;
  double gamma_select = 1.0;
  InitKind init = InitKind::Zero;
  std::uint64_t seed = 0;
};

struct AttackResult {
  TextGraph graph;          // injected texts are empty placeholders
  Matrix injected_features; // Δ x F
  InjectionPlan plan;
};

/// Runs the sequential injection loop: per round, score victims on the current
/// attacked graph, pick a class and victims, initialize batch features, form
/// edges under the degree cap and hand the batch to `updater`.
AttackResult run_sequential_attack(const TextGraph& graph, const Matrix& features,
                                   const AttackBudget& budget, const GcnModel& surrogate,
                                   const FeatureUpdater& updater,
                                   const SequentialAttackConfig& config);

EdgeStrategy parse_edge_strategy(const std::string& name);
std::string to_string(EdgeStrategy s);

}  // namespace tgia
