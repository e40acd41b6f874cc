#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tgia/feature_attack.hpp"
#include "tgia/gcn.hpp"
#include "tgia/graph.hpp"
#include "tgia/injector.hpp"
#include "tgia/metrics.hpp"
#include "tgia/text.hpp"
#include "tgia/wordsmith.hpp"

namespace tgia {

enum class AttackKind {
  Fgsm,
  Pgd,
  PgdHao,
  VanillaHeterophily,
  VanillaRandom,
  VanillaMixing,
  Wtgia,
  WtgiaTopic
};

AttackKind parse_attack_kind(const std::string& name);
std::string to_string(AttackKind kind);
const std::vector<AttackKind>& all_attack_kinds();

struct Dataset {
  TextGraph graph;
  std::vector<std::string> class_names;  // may be empty; defaults to "class <i>"
};

struct SynthParams {
  NodeId nodes = 200;
  int classes = 2;
  int keywords_per_class = 10;
  double homophily = 0.9;  // fraction of intra-class edges
  double avg_degree = 4.0;
  int noise_vocabulary = 300;
  std::uint64_t seed = 7;
};

/// Planted-partition text graph: class-keyword plus shared-noise texts,
/// train/val/test = 30/20/50 percent.
Dataset gen_synth(const SynthParams& params);

/// Writes the three graph files plus classes.txt.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
/// Reads a dataset directory (classes.txt optional).
Dataset load_dataset(const std::filesystem::path& dir);

/// Every tunable of one attack run. Defaults follow the published setup:
/// GCN lr 0.01 / hidden 64 / 400 epochs / patience 100 / dropout 0.5, guard
/// threshold 0.1, PGD lr 0.01 for 500 epochs, three correction dialogs.
struct RunConfig {
  std::string data;
  AttackKind attack = AttackKind::Fgsm;
  NodeId n_inject = -1;  // -1: 5% of the original nodes
  int degree_cap = 10;
  double sparsity = 0.06;
  int targets_sample = 0;  // 0: whole test split

  int vocab_size = 500;
  std::string stopwords;   // file; empty uses the built-in list
  std::string embeddings;  // dense features for the continuous attacks
  std::string import_texts;  // externally inverted texts for the continuous attacks

  GcnConfig gcn;
  double guard_threshold = 0.1;

  int fgsm_batch = 1;
  double pgd_lr = 0.01;
  int pgd_epochs = 500;
  int pgd_patience = 100;
  double hao_weight = 10.0;
  bool pgd_normalize = true;
  PgdMode pgd_mode = PgdMode::Projected;

  double sequential_step = 0.2;
  double gamma_select = 1.0;
  EdgeStrategy edge_strategy = EdgeStrategy::Uniform;

  std::string backend = "deterministic";
  std::string llm_model = "gpt-3.5-turbo-1106";
  double temperature = 0.7;
  int max_rounds = 3;
  int max_words = 300;
  int min_words = 50;
  int parallelism = 1;
  int timeout_ms = 60000;

  Projector projector = Projector::None;
  std::uint64_t seed = 0;

  /// Applies one key = value setting; throws ValidationError on an unknown key
  /// or malformed value.
  void set(const std::string& key, const std::string& value);
  /// Flat key = value lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  /// Every setting in canonical (sorted) order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string hash() const;
};

struct AttackRun {
  AttackReport report;
  TextGraph attacked;
  Matrix clean_features;
  Matrix injected_features;  // the rows the defenders see
  Matrix optimized_features; // rows produced by the embedding-level optimizer
  InjectionPlan plan;
  std::vector<GeneratedRecord> generated;
  AttackBudget budget;
  Vocabulary vocab;
};

/// `backend` overrides config.backend (used by tests to inject mocks).
AttackRun run_attack(const Dataset& data, const RunConfig& config,
                     GenerationBackend* backend = nullptr);

/// Attacked graph files, manifest, generated texts, features, plan and report.
void write_attack_outputs(const AttackRun& run, const RunConfig& config,
                          const std::filesystem::path& dir);

/// Nodes suited as prompt examples: correctly classified train nodes with
/// degree at most the mean and token count within the inter-quartile range,
/// ordered by confidence.
std::vector<NodeId> select_example_nodes(const TextGraph& graph, const Matrix& probs);

/// Runs fn(i) for i in [0, count) on up to `workers` threads.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

/// Feature matrix used for a given attack family over `graph`'s texts.
Matrix attack_feature_space(AttackKind kind, const Vocabulary& vocab, const TextGraph& graph,
                            const std::string& embeddings);

std::unique_ptr<GenerationBackend> make_backend(const RunConfig& config);

}  // namespace tgia
