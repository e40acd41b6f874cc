#include "tgia/graph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tgia {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_split_ids(const std::vector<NodeId>& ids, NodeId limit, const char* name,
                     std::vector<char>& seen) {
  for (NodeId v : ids) {
    if (v < 0 || v >= limit) {
      throw ValidationError(std::string("split '") + name + "' references node " +
                            std::to_string(v) + " outside the original node range");
    }
    if (seen[static_cast<std::size_t>(v)]) {
      throw ValidationError("overlapping splits at node " + std::to_string(v));
    }
    seen[static_cast<std::size_t>(v)] = 1;
  }
}

std::ifstream open_or_throw(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream create_or_throw(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

TextGraph::TextGraph(std::vector<std::string> texts, std::vector<int> labels,
                     std::vector<Edge> edges, Splits splits, std::optional<NodeId> injected_from)
    : texts_(std::move(texts)), labels_(std::move(labels)), splits_(std::move(splits)) {
  const auto n = static_cast<NodeId>(texts_.size());
  injected_from_ = injected_from.value_or(n);
  if (injected_from_ < 0 || injected_from_ > n) {
    throw ValidationError("injected_from " + std::to_string(injected_from_) +
                          " outside [0, node_count]");
  }
  if (static_cast<NodeId>(labels_.size()) != injected_from_) {
    throw ValidationError("expected " + std::to_string(injected_from_) + " labels, got " +
                          std::to_string(labels_.size()));
  }
  int max_label = -1;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0) {
      throw ValidationError("original node " + std::to_string(i) + " has no label");
    }
    max_label = std::max(max_label, labels_[i]);
  }
  num_classes_ = max_label + 1;

  for (const Edge& e : edges) {
    if (e.u == e.v) throw ValidationError("self-loop at node " + std::to_string(e.u));
    if (e.u < 0 || e.v >= n) {
      throw ValidationError("dangling endpoint in edge (" + std::to_string(e.u) + "," +
                            std::to_string(e.v) + ")");
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);

  std::vector<char> seen(static_cast<std::size_t>(injected_from_), 0);
  check_split_ids(splits_.train, injected_from_, "train", seen);
  check_split_ids(splits_.val, injected_from_, "val", seen);
  check_split_ids(splits_.test, injected_from_, "test", seen);
}

std::vector<int> TextGraph::degrees() const {
  std::vector<int> deg(texts_.size(), 0);
  for (const Edge& e : edges_) {
    ++deg[static_cast<std::size_t>(e.u)];
    ++deg[static_cast<std::size_t>(e.v)];
  }
  return deg;
}

std::vector<std::vector<NodeId>> TextGraph::adjacency_lists() const {
  std::vector<std::vector<NodeId>> adj(texts_.size());
  for (const Edge& e : edges_) {
    adj[static_cast<std::size_t>(e.u)].push_back(e.v);
    adj[static_cast<std::size_t>(e.v)].push_back(e.u);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

bool TextGraph::has_edge(NodeId a, NodeId b) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge(a, b));
}

void AttackBudget::validate(const TextGraph& graph) const {
  if (n_inject < 0) throw ValidationError("n_inject must be >= 0");
  if (degree_cap < 1) throw ValidationError("degree_cap must be >= 1");
  if (!(sparsity > 0.0 && sparsity <= 1.0)) throw ValidationError("sparsity must be in (0, 1]");
  const std::set<NodeId> test(graph.splits().test.begin(), graph.splits().test.end());
  for (NodeId t : targets) {
    if (!test.contains(t)) {
      throw ValidationError("target " + std::to_string(t) + " is not a test node");
    }
  }
}

std::string to_string(BudgetViolation::Kind kind) {
  switch (kind) {
    case BudgetViolation::Kind::NodeCount: return "node_count";
    case BudgetViolation::Kind::Degree: return "degree";
    case BudgetViolation::Kind::InjectedEdge: return "injected_edge";
  }
  return "unknown";
}

TextGraph load_graph(const fs::path& nodes_path, const fs::path& edges_path,
                     const fs::path& splits_path, std::optional<NodeId> injected_from) {
  // Nodes: one JSON object per line, ids dense 0..N-1 in any order.
  std::vector<std::pair<NodeId, std::pair<std::string, int>>> records;
  {
    auto in = open_or_throw(nodes_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::exception& e) {
        throw ParseError(nodes_path.string(), lineno, e.what());
      }
      if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_number_integer() ||
          !obj.contains("text") || !obj["text"].is_string()) {
        throw ParseError(nodes_path.string(), lineno, "record needs integer 'id' and string 'text'");
      }
      int label = -1;
      if (obj.contains("label") && !obj["label"].is_null()) {
        if (!obj["label"].is_number_integer()) {
          throw ParseError(nodes_path.string(), lineno, "'label' must be an integer");
        }
        label = obj["label"].get<int>();
      }
      records.push_back({obj["id"].get<NodeId>(), {obj["text"].get<std::string>(), label}});
    }
  }
  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  const auto n = static_cast<NodeId>(records.size());
  for (NodeId i = 0; i < n; ++i) {
    if (records[static_cast<std::size_t>(i)].first != i) {
      throw ValidationError("node ids must be dense 0.." + std::to_string(n - 1) +
                            "; missing or duplicate id near " + std::to_string(i));
    }
  }
  const NodeId first_injected = injected_from.value_or(n);
  std::vector<std::string> texts;
  std::vector<int> labels;
  texts.reserve(records.size());
  for (auto& [id, rec] : records) {
    texts.push_back(std::move(rec.first));
    if (id < first_injected) labels.push_back(rec.second);
  }

  std::vector<Edge> edges;
  {
    auto in = open_or_throw(edges_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (lineno == 1 && line == "src,dst") continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw ParseError(edges_path.string(), lineno, "expected 'src,dst'");
      long long a = 0;
      long long b = 0;
      try {
        std::size_t pa = 0;
        std::size_t pb = 0;
        const std::string sa = line.substr(0, comma);
        const std::string sb = line.substr(comma + 1);
        a = std::stoll(sa, &pa);
        b = std::stoll(sb, &pb);
        if (pa != sa.size() || pb != sb.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ParseError(edges_path.string(), lineno, "non-integer endpoint in '" + line + "'");
      }
      if (a < 0 || b < 0 || a >= n || b >= n) {
        throw ValidationError("dangling endpoint in edge (" + std::to_string(a) + "," +
                              std::to_string(b) + ") with " + std::to_string(n) + " nodes");
      }
      if (a == b) continue;  // self-loops are dropped; propagation adds its own
      edges.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
    }
  }

  Splits splits;
  {
    auto in = open_or_throw(splits_path);
    json obj;
    try {
      obj = json::parse(in);
    } catch (const json::exception& e) {
      throw ParseError(splits_path.string(), 1, e.what());
    }
    for (const char* key : {"train", "val", "test"}) {
      if (!obj.contains(key) || !obj[key].is_array()) {
        throw ParseError(splits_path.string(), 1, std::string("missing array '") + key + "'");
      }
    }
    try {
      splits.train = obj["train"].get<std::vector<NodeId>>();
      splits.val = obj["val"].get<std::vector<NodeId>>();
      splits.test = obj["test"].get<std::vector<NodeId>>();
    } catch (const json::exception& e) {
      throw ParseError(splits_path.string(), 1, e.what());
    }
  }
  return TextGraph(std::move(texts), std::move(labels), std::move(edges), std::move(splits),
                   first_injected);
}

TextGraph inject(const TextGraph& graph, const std::vector<std::string>& inj_texts,
                 const std::vector<std::pair<NodeId, NodeId>>& inj_edges) {
  const NodeId base = graph.node_count();
  const auto added = static_cast<NodeId>(inj_texts.size());
  std::vector<Edge> edges = graph.edges();
  edges.reserve(edges.size() + inj_edges.size());
  for (const auto& [idx, target] : inj_edges) {
    if (idx < 0 || idx >= added) {
      throw ValidationError("injected index " + std::to_string(idx) + " out of range");
    }
    if (target >= graph.injected_from() && target < base + added) {
      throw ValidationError("O block must stay zero: edge between injected nodes (" +
                            std::to_string(base + idx) + "," + std::to_string(target) + ")");
    }
    if (target < 0 || target >= graph.injected_from()) {
      throw ValidationError("original node " + std::to_string(target) + " out of range");
    }
    edges.emplace_back(base + idx, target);
  }
  std::vector<std::string> texts = graph.texts();
  texts.insert(texts.end(), inj_texts.begin(), inj_texts.end());
  return TextGraph(std::move(texts), graph.labels(), std::move(edges), graph.splits(),
                   graph.injected_from());
}

TextGraph strip_injected(const TextGraph& graph) {
  const NodeId n = graph.injected_from();
  std::vector<std::string> texts(graph.texts().begin(), graph.texts().begin() + n);
  std::vector<Edge> edges;
  for (const Edge& e : graph.edges()) {
    if (e.v < n) edges.push_back(e);
  }
  return TextGraph(std::move(texts), graph.labels(), std::move(edges), graph.splits());
}

TextGraph with_injected_texts(const TextGraph& graph, std::vector<std::string> texts) {
  if (static_cast<NodeId>(texts.size()) != graph.injected_count()) {
    throw ValidationError("expected " + std::to_string(graph.injected_count()) +
                          " injected texts, got " + std::to_string(texts.size()));
  }
  std::vector<std::string> all(graph.texts().begin(),
                               graph.texts().begin() + graph.injected_from());
  all.insert(all.end(), std::make_move_iterator(texts.begin()),
             std::make_move_iterator(texts.end()));
  return TextGraph(std::move(all), graph.labels(), graph.edges(), graph.splits(),
                   graph.injected_from());
}

BudgetAudit validate_budget(const TextGraph& graph, const AttackBudget& budget) {
  BudgetAudit audit;
  const NodeId n0 = graph.injected_from();
  if (graph.injected_count() > budget.n_inject) {
    audit.violations.push_back(
        {BudgetViolation::Kind::NodeCount, -1, static_cast<long long>(graph.injected_count())});
  }
  const auto deg = graph.degrees();
  for (NodeId v = n0; v < graph.node_count(); ++v) {
    if (deg[static_cast<std::size_t>(v)] > budget.degree_cap) {
      audit.violations.push_back(
          {BudgetViolation::Kind::Degree, v, deg[static_cast<std::size_t>(v)]});
    }
  }
  for (const Edge& e : graph.edges()) {
    if (e.u >= n0) audit.violations.push_back({BudgetViolation::Kind::InjectedEdge, e.u, e.v});
  }
  audit.pass = audit.violations.empty();
  return audit;
}

TextGraph induced_subgraph(const TextGraph& graph, const std::vector<NodeId>& nodes) {
  std::vector<NodeId> remap(static_cast<std::size_t>(graph.node_count()), -1);
  std::vector<std::string> texts;
  std::vector<int> labels;
  for (NodeId v : nodes) {
    if (v < 0 || v >= graph.injected_from()) {
      throw ValidationError("induced_subgraph accepts original nodes only");
    }
    if (remap[static_cast<std::size_t>(v)] >= 0) throw ValidationError("duplicate node in subgraph");
    remap[static_cast<std::size_t>(v)] = static_cast<NodeId>(texts.size());
    texts.push_back(graph.texts()[static_cast<std::size_t>(v)]);
    labels.push_back(graph.labels()[static_cast<std::size_t>(v)]);
  }
  std::vector<Edge> edges;
  for (const Edge& e : graph.edges()) {
    const NodeId a = e.u < graph.injected_from() ? remap[static_cast<std::size_t>(e.u)] : -1;
    const NodeId b = e.v < graph.injected_from() ? remap[static_cast<std::size_t>(e.v)] : -1;
    if (a >= 0 && b >= 0) edges.emplace_back(a, b);
  }
  auto map_split = [&](const std::vector<NodeId>& ids) {
    std::vector<NodeId> out;
    for (NodeId v : ids) {
      if (remap[static_cast<std::size_t>(v)] >= 0) out.push_back(remap[static_cast<std::size_t>(v)]);
    }
    return out;
  };
  Splits splits{map_split(graph.splits().train), map_split(graph.splits().val),
                map_split(graph.splits().test)};
  return TextGraph(std::move(texts), std::move(labels), std::move(edges), std::move(splits));
}

void save_graph(const TextGraph& graph, const fs::path& dir) {
  fs::create_directories(dir);
  {
    auto out = create_or_throw(dir / "nodes.jsonl");
    for (NodeId v = 0; v < graph.node_count(); ++v) {
      json rec;
      rec["id"] = v;
      rec["text"] = graph.texts()[static_cast<std::size_t>(v)];
      if (graph.is_injected(v)) {
        rec["label"] = nullptr;
      } else {
        rec["label"] = graph.labels()[static_cast<std::size_t>(v)];
      }
      out << rec.dump() << '\n';
    }
  }
  {
    auto out = create_or_throw(dir / "edges.csv");
    out << "src,dst\n";
    for (const Edge& e : graph.edges()) out << e.u << ',' << e.v << '\n';
  }
  {
    auto out = create_or_throw(dir / "splits.json");
    json obj;
    obj["train"] = graph.splits().train;
    obj["val"] = graph.splits().val;
    obj["test"] = graph.splits().test;
    out << obj.dump() << '\n';
  }
}

void save_manifest(const AttackManifest& manifest, const fs::path& path) {
  json obj;
  obj["original_n"] = manifest.original_n;
  obj["injected_n"] = manifest.injected_n;
  obj["seed"] = manifest.seed;
  obj["attack_name"] = manifest.attack_name;
  auto out = create_or_throw(path);
  out << obj.dump(2) << '\n';
}

AttackManifest load_manifest(const fs::path& path) {
  auto in = open_or_throw(path);
  try {
    const json obj = json::parse(in);
    AttackManifest m;
    m.original_n = obj.at("original_n").get<NodeId>();
    m.injected_n = obj.at("injected_n").get<NodeId>();
    m.seed = obj.at("seed").get<std::uint64_t>();
    m.attack_name = obj.at("attack_name").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 1, e.what());
  }
}

TextGraph load_graph_dir(const fs::path& dir) {
  std::optional<NodeId> injected_from;
  if (fs::exists(dir / "manifest.json")) injected_from = load_manifest(dir / "manifest.json").original_n;
  return load_graph(dir / "nodes.jsonl", dir / "edges.csv", dir / "splits.json", injected_from);
}

}  // namespace tgia
