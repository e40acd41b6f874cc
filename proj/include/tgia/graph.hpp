#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tgia/error.hpp"

namespace tgia {

using NodeId = std::int32_t;

// Undirected edge stored canonically with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  Edge() = default;
  Edge(NodeId a, NodeId b) : u(a < b ? a : b), v(a < b ? b : a) {}

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct Splits {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;

  friend bool operator==(const Splits&, const Splits&) = default;
};

/// Text-attributed graph. Nodes [0, injected_from) are original and labelled;
/// nodes [injected_from, node_count) are injected and carry no label.
/// Immutable once constructed.
class TextGraph {
 public:
  TextGraph() = default;

  /// Validates every invariant and canonicalizes the edge set (sorted, u < v,
  /// duplicates removed). `labels` must cover exactly the original nodes.
  TextGraph(std::vector<std::string> texts, std::vector<int> labels, std::vector<Edge> edges,
            Splits splits, std::optional<NodeId> injected_from = std::nullopt);

  NodeId node_count() const { return static_cast<NodeId>(texts_.size()); }
  NodeId injected_from() const { return injected_from_; }
  NodeId injected_count() const { return node_count() - injected_from_; }
  bool is_injected(NodeId v) const { return v >= injected_from_; }

  const std::vector<std::string>& texts() const { return texts_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Splits& splits() const { return splits_; }
  int num_classes() const { return num_classes_; }

  std::vector<int> degrees() const;
  std::vector<std::vector<NodeId>> adjacency_lists() const;
  bool has_edge(NodeId a, NodeId b) const;

  friend bool operator==(const TextGraph&, const TextGraph&) = default;

 private:
  std::vector<std::string> texts_;
  std::vector<int> labels_;
  std::vector<Edge> edges_;
  Splits splits_;
  NodeId injected_from_ = 0;
  int num_classes_ = 0;
};

struct AttackBudget {
  NodeId n_inject = 0;     // Δ
  int degree_cap = 1;      // b
  double sparsity = 1.0;   // S
  std::vector<NodeId> targets;

  /// Throws ValidationError if a field is out of domain or a target is not a
  /// test node of `graph`.
  void validate(const TextGraph& graph) const;
};

struct BudgetViolation {
  enum class Kind { NodeCount, Degree, InjectedEdge };
  Kind kind;
  NodeId node = -1;   // offending injected node, -1 for NodeCount
  long long value = 0;  // observed count or degree
};

struct BudgetAudit {
  bool pass = true;
  std::vector<BudgetViolation> violations;
};

std::string to_string(BudgetViolation::Kind kind);

/// Load from the nodes (JSON lines), edges (CSV "src,dst") and splits (JSON)
/// files. Reversed and duplicate edges collapse to one undirected edge.
/// `injected_from` marks the first injected id when reading an attacked graph;
/// those nodes may carry label -1.
TextGraph load_graph(const std::filesystem::path& nodes_path,
                     const std::filesystem::path& edges_path,
                     const std::filesystem::path& splits_path,
                     std::optional<NodeId> injected_from = std::nullopt);

/// Appends injected nodes. Each pair is (index into inj_texts, original node).
/// Edges touching an injected node on both ends are rejected.
TextGraph inject(const TextGraph& graph, const std::vector<std::string>& inj_texts,
                 const std::vector<std::pair<NodeId, NodeId>>& inj_edges);

/// Drops every injected node and its edges.
TextGraph strip_injected(const TextGraph& graph);

/// Same structure, injected texts replaced (size must equal injected_count).
TextGraph with_injected_texts(const TextGraph& graph, std::vector<std::string> texts);

BudgetAudit validate_budget(const TextGraph& graph, const AttackBudget& budget);

/// Subgraph induced by `nodes` (original nodes only), relabelled densely in
/// the given order. Splits are intersected and remapped.
TextGraph induced_subgraph(const TextGraph& graph, const std::vector<NodeId>& nodes);

struct AttackManifest {
  NodeId original_n = 0;
  NodeId injected_n = 0;
  std::uint64_t seed = 0;
  std::string attack_name;
};

/// Writes nodes.jsonl, edges.csv and splits.json into `dir`.
void save_graph(const TextGraph& graph, const std::filesystem::path& dir);
void save_manifest(const AttackManifest& manifest, const std::filesystem::path& path);
AttackManifest load_manifest(const std::filesystem::path& path);

/// Reads a directory written by save_graph (+ manifest.json when present).
TextGraph load_graph_dir(const std::filesystem::path& dir);

}  // namespace tgia
