#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "tgia/gcn.hpp"
#include "tgia/graph.hpp"

namespace tgia {

// ---------------------------------------------------------------------------
// Word budget bound for a single injected binary embedding.
//
// A target uses k vocabulary words; an injected row uses a of those and b
// others, with a + b <= m. Requiring cos(x_t, x_i) = a / (sqrt(k) sqrt(a+b))
// >= c, the largest admissible b is max(floor(m - c sqrt(m k)), 0).
// ---------------------------------------------------------------------------

struct TheoremInstance {
  int k = 1;       // words used by the target
  int m = 0;       // word budget of the injected row
  double c = 0.5;  // cosine threshold
};

int max_b(const TheoremInstance& inst);

/// Exhaustive search over integer (a, b). Throws ValidationError when m > 10000.
int brute_force_max_b(const TheoremInstance& inst);

// ---------------------------------------------------------------------------
// Unnoticeability scores.
// ---------------------------------------------------------------------------

enum class Projector { None, Pca2 };

Projector parse_projector(const std::string& name);
std::string to_string(Projector p);

/// Top-2 principal projection of the rows of `fit`, applied to `rows`.
Matrix pca2_project(const Matrix& fit, const Matrix& rows);

/// Mean pairwise cosine over all injected row pairs. Needs >= 2 rows.
double diversity_score(const Matrix& injected, Projector projector = Projector::None);

/// Mean over injected rows of the Euclidean distance to the nearest original row.
double indistinguishability_score(const Matrix& injected, const Matrix& original,
                                  Projector projector = Projector::None);

struct Unnoticeability {
  double diversity = 0.0;
  double indistinguishability = 0.0;
  Projector projector = Projector::None;
};

/// Both scores, with the projection (if any) fitted on all nodes together.
Unnoticeability unnoticeability(const Matrix& injected, const Matrix& original, Projector projector);

// ---------------------------------------------------------------------------
// Evasion evaluation.
// ---------------------------------------------------------------------------

enum class DefenderKind { Gcn, Guard };

DefenderKind parse_defender(const std::string& name);
std::string to_string(DefenderKind d);

struct DefenderConfig {
  DefenderKind kind = DefenderKind::Gcn;
  GcnConfig gcn;
  double guard_threshold = 0.1;
};

struct DefenderResult {
  std::string name;
  double clean_accuracy = 0.0;
  double attacked_accuracy = 0.0;
  TrainReport training;
};

/// Trains the defender on the subgraph induced by train∪val of the clean graph, then
/// measures accuracy on `budget.targets` over the clean and the attacked graph.
/// Throws ValidationError if the attacked graph fails the budget audit.
DefenderResult evaluate(const DefenderConfig& defender, const TextGraph& clean,
                        const Matrix& clean_features, const TextGraph& attacked,
                        const Matrix& attacked_features, const AttackBudget& budget);

/// Trains a defender on train∪val of `clean` (shared by evaluate and the CLI).
GcnModel train_defender(const DefenderConfig& defender, const TextGraph& clean,
                        const Matrix& clean_features, TrainReport* report = nullptr);

/// Predictions of a trained defender on any graph (guard filtering included).
std::vector<int> defender_predict(const DefenderConfig& defender, const GcnModel& model,
                                  const TextGraph& graph, const Matrix& features);

struct UseRateStats {
  std::size_t count = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t violations = 0;  // texts with at least one prohibited word
};

struct AttackReport {
  std::string attack;
  std::string status = "ok";
  std::vector<DefenderResult> defenders;
  UseRateStats use_rate;
  Unnoticeability unnoticeability;
  bool has_unnoticeability = false;
  BudgetAudit audit;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> config;

  nlohmann::json to_json() const;
  /// CSV header line and one row per defender.
  static std::string csv_header();
  std::string csv_rows() const;
};

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& data);

}  // namespace tgia
