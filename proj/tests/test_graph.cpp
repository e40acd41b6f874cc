#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "support.hpp"
#include "tgia/graph.hpp"

using namespace tgia;
using testing::TempDir;
using testing::write_file;

namespace {

void write_three_node_files(const TempDir& dir, const std::string& edges) {
  write_file(dir / "nodes.jsonl",
             "{\"id\":0,\"text\":\"alpha\",\"label\":0}\n"
             "{\"id\":1,\"text\":\"beta\",\"label\":1}\n"
             "{\"id\":2,\"text\":\"gamma\",\"label\":0}\n");
  write_file(dir / "edges.csv", edges);
  write_file(dir / "splits.json", R"({"train":[0],"val":[1],"test":[2]})");
}

TextGraph load3(const TempDir& dir) {
  return load_graph(dir / "nodes.jsonl", dir / "edges.csv", dir / "splits.json");
}

TextGraph tiny() {
  return TextGraph({"a", "b", "c"}, {0, 1, 0}, {Edge(0, 1)}, Splits{{0}, {1}, {2}});
}

}  // namespace

TEST_CASE("reversed pair collapses to one undirected edge") {
  TempDir dir;
  write_three_node_files(dir, "src,dst\n0,1\n1,0\n");
  const TextGraph g = load3(dir);
  CHECK(g.node_count() == 3);
  REQUIRE(g.edges().size() == 1);
  CHECK(g.edges()[0] == Edge(0, 1));
  CHECK(g.injected_from() == 3);
  CHECK(g.num_classes() == 2);
}

TEST_CASE("disjoint train/val/test singletons are accepted") {
  TempDir dir;
  write_three_node_files(dir, "src,dst\n0,1\n");
  const TextGraph g = load3(dir);
  CHECK(g.splits().train == std::vector<NodeId>{0});
  CHECK(g.splits().val == std::vector<NodeId>{1});
  CHECK(g.splits().test == std::vector<NodeId>{2});
}

TEST_CASE("edge to a missing node is a dangling endpoint") {
  TempDir dir;
  write_three_node_files(dir, "src,dst\n0,5\n");
  CHECK_THROWS_WITH_AS(load3(dir), doctest::Contains("dangling endpoint"), ValidationError);
}

TEST_CASE("malformed lines cite the line number") {
  TempDir dir;
  write_three_node_files(dir, "src,dst\n0,1\n1;2\n");
  try {
    load3(dir);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);
  }
  write_file(dir / "edges.csv", "src,dst\n0,1\n");
  write_file(dir / "nodes.jsonl", "{\"id\":0,\"text\":\"a\",\"label\":0}\n{broken\n");
  try {
    load3(dir);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
  }
}

TEST_CASE("overlapping splits are rejected") {
  TempDir dir;
  write_three_node_files(dir, "src,dst\n0,1\n");
  write_file(dir / "splits.json", R"({"train":[0,1],"val":[1],"test":[2]})");
  CHECK_THROWS_WITH_AS(load3(dir), doctest::Contains("overlapping"), ValidationError);
}

TEST_CASE("constructor invariants") {
  CHECK_THROWS_AS(TextGraph({"a", "b"}, {0, 1}, {Edge(1, 1)}, Splits{}), ValidationError);
  CHECK_THROWS_AS(TextGraph({"a", "b"}, {0}, {}, Splits{}), ValidationError);
  CHECK_THROWS_AS(TextGraph({"a", "b"}, {0, -1}, {}, Splits{}), ValidationError);
  // split ids must stay inside the original block
  CHECK_THROWS_AS(TextGraph({"a", "b", "x"}, {0, 1}, {}, Splits{{0}, {}, {2}}, 2), ValidationError);
  const TextGraph dup({"a", "b", "c"}, {0, 0, 1}, {Edge(2, 1), Edge(1, 2), Edge(0, 1)}, Splits{});
  CHECK(dup.edges().size() == 2);
  CHECK(dup.has_edge(2, 1));
  CHECK_FALSE(dup.has_edge(0, 2));
}

TEST_CASE("inject one node onto a 3-node graph") {
  const TextGraph g = tiny();
  const TextGraph a = inject(g, {"injected"}, {{0, 2}});
  CHECK(a.node_count() == 4);
  CHECK(a.injected_from() == 3);
  CHECK(a.injected_count() == 1);
  CHECK(a.edges().size() == g.edges().size() + 1);
  CHECK(a.has_edge(3, 2));
  CHECK(a.is_injected(3));
  CHECK_FALSE(a.is_injected(2));
}

TEST_CASE("injected-to-injected edges violate the zero block") {
  const TextGraph g = tiny();
  CHECK_THROWS_WITH_AS(inject(g, {"x", "y"}, {{0, 3}}), doctest::Contains("O block must stay zero"),
                       ValidationError);
  CHECK_THROWS_AS(inject(g, {"x"}, {{1, 0}}), ValidationError);
  CHECK_THROWS_AS(inject(g, {"x"}, {{0, -1}}), ValidationError);
  // also holds when extending an already attacked graph
  const TextGraph a = inject(g, {"x"}, {{0, 0}});
  CHECK_THROWS_AS(inject(a, {"y"}, {{0, 3}}), ValidationError);
}

TEST_CASE("empty injection keeps the graph") {
  const TextGraph g = tiny();
  const TextGraph a = inject(g, {}, {});
  CHECK(a == g);
  CHECK(a.injected_from() == g.node_count());
}

TEST_CASE("budget audit") {
  const TextGraph g = tiny();
  AttackBudget b{1, 1, 0.5, {2}};
  CHECK(validate_budget(g, b).pass);

  const TextGraph ok = inject(g, {"x"}, {{0, 0}});
  CHECK(validate_budget(ok, b).pass);

  const TextGraph heavy = inject(g, {"x"}, {{0, 0}, {0, 2}});
  const BudgetAudit audit = validate_budget(heavy, b);
  CHECK_FALSE(audit.pass);
  REQUIRE(audit.violations.size() == 1);
  CHECK(audit.violations[0].kind == BudgetViolation::Kind::Degree);
  CHECK(audit.violations[0].node == 3);
  CHECK(audit.violations[0].value == 2);

  const TextGraph many = inject(g, {"x", "y"}, {{0, 0}, {1, 1}});
  const BudgetAudit a2 = validate_budget(many, b);
  CHECK_FALSE(a2.pass);
  CHECK(a2.violations[0].kind == BudgetViolation::Kind::NodeCount);
}

TEST_CASE("Cora-scale budget: 60 injected nodes of degree 20 pass") {
  std::vector<std::string> texts(200, "t");
  std::vector<int> labels(200, 0);
  Splits s;
  for (NodeId i = 0; i < 200; ++i) s.test.push_back(i);
  const TextGraph g(texts, labels, {}, s);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId i = 0; i < 60; ++i) {
    for (NodeId j = 0; j < 20; ++j) edges.push_back({i, (i * 3 + j) % 200});
  }
  const TextGraph a = inject(g, std::vector<std::string>(60, "x"), edges);
  const BudgetAudit audit = validate_budget(a, AttackBudget{60, 20, 0.06, {}});
  CHECK(audit.pass);
  CHECK(audit.violations.empty());
}

TEST_CASE("budget field domains") {
  const TextGraph g = tiny();
  CHECK_THROWS_AS((AttackBudget{-1, 1, 0.5, {}}).validate(g), ValidationError);
  CHECK_THROWS_AS((AttackBudget{1, 0, 0.5, {}}).validate(g), ValidationError);
  CHECK_THROWS_AS((AttackBudget{1, 1, 0.0, {}}).validate(g), ValidationError);
  CHECK_THROWS_AS((AttackBudget{1, 1, 1.5, {}}).validate(g), ValidationError);
  CHECK_THROWS_AS((AttackBudget{1, 1, 0.5, {0}}).validate(g), ValidationError);
  CHECK_NOTHROW((AttackBudget{0, 1, 1.0, {2}}).validate(g));
}

TEST_CASE("property: inject then strip is the identity") {
  Rng rng(101);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<NodeId>(3 + uniform_index(rng, 20));
    const TextGraph g = testing::random_graph(n, static_cast<int>(uniform_index(rng, 30)), rng);
    const auto k = static_cast<NodeId>(uniform_index(rng, 5));
    std::vector<std::string> texts(k, "inj");
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId i = 0; i < k; ++i) {
      const auto d = uniform_index(rng, 4);
      for (std::size_t e = 0; e < d; ++e) edges.push_back({i, static_cast<NodeId>(uniform_index(rng, n))});
    }
    const TextGraph a = inject(g, texts, edges);
    CHECK(strip_injected(a) == g);
  }
}

TEST_CASE("property: adjacency lists are symmetric and match edges") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const TextGraph g = testing::random_graph(static_cast<NodeId>(2 + uniform_index(rng, 25)), 40, rng);
    const auto adj = g.adjacency_lists();
    std::size_t half_edges = 0;
    for (NodeId u = 0; u < g.node_count(); ++u) {
      for (NodeId v : adj[u]) {
        ++half_edges;
        const auto& back = adj[v];
        CHECK(std::find(back.begin(), back.end(), u) != back.end());
        CHECK(g.has_edge(u, v));
        CHECK(g.has_edge(v, u));
      }
    }
    CHECK(half_edges == 2 * g.edges().size());
  }
}

TEST_CASE("save and reload an attacked graph") {
  TempDir dir;
  const TextGraph a = inject(tiny(), {"first", "second"}, {{0, 0}, {1, 2}, {1, 1}});
  save_graph(a, dir.path());
  save_manifest({3, 2, 42, "fgsm"}, dir / "manifest.json");
  const TextGraph back = load_graph_dir(dir.path());
  CHECK(back == a);
  const AttackManifest m = load_manifest(dir / "manifest.json");
  CHECK(m.original_n == 3);
  CHECK(m.injected_n == 2);
  CHECK(m.seed == 42);
  CHECK(m.attack_name == "fgsm");
}

TEST_CASE("self-loops in the edge file are dropped") {
  TempDir dir;
  write_three_node_files(dir, "src,dst\n1,1\n0,2\n");
  const TextGraph g = load3(dir);
  CHECK(g.edges() == std::vector<Edge>{Edge(0, 2)});
}

TEST_CASE("induced subgraph relabels densely and remaps splits") {
  const TextGraph g({"a", "b", "c", "d"}, {0, 1, 0, 1}, {Edge(0, 1), Edge(1, 2), Edge(2, 3)},
                    Splits{{0, 2}, {1}, {3}});
  const TextGraph s = induced_subgraph(g, {2, 1, 0});
  CHECK(s.node_count() == 3);
  CHECK(s.texts() == std::vector<std::string>{"c", "b", "a"});
  CHECK(s.has_edge(0, 1));  // 2-1
  CHECK(s.has_edge(1, 2));  // 1-0
  CHECK(s.edges().size() == 2);
  CHECK(s.splits().train == std::vector<NodeId>{2, 0});
  CHECK(s.splits().test.empty());
}
