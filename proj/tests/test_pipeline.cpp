#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <set>

#include "support.hpp"
#include "tgia/pipeline.hpp"

using namespace tgia;
using testing::TempDir;

namespace {

Dataset small_data(NodeId n = 60) {
  SynthParams p;
  p.nodes = n;
  return gen_synth(p);
}

// Short training so every run below stays well under a second.
RunConfig quick_config(AttackKind kind) {
  RunConfig c;
  c.attack = kind;
  c.vocab_size = 150;
  c.gcn.hidden = 16;
  c.gcn.epochs = 60;
  c.pgd_epochs = 30;
  c.degree_cap = 4;
  c.sparsity = 0.1;
  c.n_inject = 4;
  c.sequential_step = 0.5;
  return c;
}

}  // namespace

TEST_CASE("attack kind names round-trip") {
  for (AttackKind k : all_attack_kinds()) CHECK(parse_attack_kind(to_string(k)) == k);
  CHECK(all_attack_kinds().size() == 8);
  CHECK(to_string(AttackKind::PgdHao) == "pgd_hao");
  CHECK_THROWS_AS(parse_attack_kind("metagia"), ValidationError);
}

TEST_CASE("config keys set, render and hash") {
  RunConfig c;
  c.set("attack", "wtgia_topic");
  c.set("gcn_hidden", "32");
  c.set("hao_weight", "2.5");
  c.set("pgd_normalize", "false");
  c.set("edge_strategy", "weighted");
  CHECK(c.attack == AttackKind::WtgiaTopic);
  CHECK(c.gcn.hidden == 32);
  CHECK(c.hao_weight == 2.5);
  CHECK_FALSE(c.pgd_normalize);
  CHECK(c.edge_strategy == EdgeStrategy::Weighted);

  const auto e = c.entries();
  CHECK(std::is_sorted(e.begin(), e.end()));
  std::map<std::string, std::string> m(e.begin(), e.end());
  CHECK(m.at("hao_weight") == "2.5");
  CHECK(m.at("pgd_normalize") == "false");

  // rendering then re-parsing every entry reproduces the hash
  RunConfig back;
  for (const auto& [k, v] : e) back.set(k, v);
  CHECK(back.hash() == c.hash());
  CHECK(back.hash().size() == 16);

  RunConfig other = c;
  other.set("seed", "1");
  CHECK(other.hash() != c.hash());

  CHECK_THROWS_AS(c.set("no_such_key", "1"), ValidationError);
  CHECK_THROWS_AS(c.set("gcn_hidden", "big"), ValidationError);
  CHECK_THROWS_AS(c.set("gcn_hidden", "3x"), ValidationError);
  CHECK_THROWS_AS(c.set("pgd_normalize", "maybe"), ValidationError);
  CHECK_THROWS_AS(c.set("attack", "none"), ValidationError);
}

TEST_CASE("config file parsing") {
  TempDir dir;
  testing::write_file(dir / "run.cfg", "# comment\nattack = pgd_hao\n\nhao_weight=4 # trailing\nseed = 9\n");
  RunConfig c;
  c.load_file(dir / "run.cfg");
  CHECK(c.attack == AttackKind::PgdHao);
  CHECK(c.hao_weight == 4.0);
  CHECK(c.seed == 9);

  testing::write_file(dir / "bad.cfg", "seed = 1\nnonsense line\n");
  try {
    c.load_file(dir / "bad.cfg");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
  }
  testing::write_file(dir / "badval.cfg", "seed = 1\n\ngcn_epochs = ten\n");
  try {
    c.load_file(dir / "badval.cfg");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);
  }
}

TEST_CASE("synthetic generator shape and determinism") {
  const Dataset a = gen_synth(SynthParams{});
  CHECK(a.graph.node_count() == 200);
  CHECK(a.graph.edges().size() == 400);
  CHECK(a.graph.num_classes() == 2);
  CHECK(a.graph.splits().train.size() == 60);
  CHECK(a.graph.splits().val.size() == 40);
  CHECK(a.graph.splits().test.size() == 100);
  CHECK(a.class_names.size() == 2);
  const Dataset b = gen_synth(SynthParams{});
  CHECK(a.graph == b.graph);
  SynthParams other;
  other.seed = 8;
  CHECK_FALSE(gen_synth(other).graph == a.graph);

  std::size_t intra = 0;
  for (const auto& e : a.graph.edges()) intra += a.graph.labels()[e.u] == a.graph.labels()[e.v];
  CHECK(static_cast<double>(intra) / 400.0 == doctest::Approx(0.9).epsilon(0.05));

  SynthParams bad;
  bad.classes = 1;
  CHECK_THROWS_AS(gen_synth(bad), ValidationError);
  bad = SynthParams{};
  bad.homophily = 1.5;
  CHECK_THROWS_AS(gen_synth(bad), ValidationError);
}

TEST_CASE("dataset directory round-trip") {
  TempDir dir;
  const Dataset d = small_data();
  save_dataset(d, dir.path());
  const Dataset back = load_dataset(dir.path());
  CHECK(back.graph == d.graph);
  CHECK(back.class_names == d.class_names);
}

TEST_CASE("parallel_for visits each index once") {
  for (int workers : {1, 3, 16}) {
    std::vector<std::atomic<int>> hits(50);
    parallel_for(hits.size(), workers, [&](std::size_t i) { hits[i]++; });
    for (const auto& h : hits) CHECK(h.load() == 1);
  }
  parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
}

TEST_CASE("zero budget leaves the graph and accuracy untouched") {
  const Dataset d = small_data();
  RunConfig c = quick_config(AttackKind::Fgsm);
  c.n_inject = 0;
  const AttackRun run = run_attack(d, c);
  CHECK(run.attacked == d.graph);
  REQUIRE(run.report.defenders.size() == 2);
  for (const auto& def : run.report.defenders) CHECK(def.clean_accuracy == def.attacked_accuracy);
  CHECK_FALSE(run.report.has_unnoticeability);
  CHECK(run.report.status == "ok");
}

TEST_CASE("every attack kind passes its own audit") {
  const Dataset d = small_data();
  for (AttackKind k : all_attack_kinds()) {
    CAPTURE(to_string(k));
    const AttackRun run = run_attack(d, quick_config(k));
    CHECK(run.report.audit.pass);
    CHECK(run.attacked.injected_count() == 4);
    CHECK(run.injected_features.rows() == 4);
    CHECK(run.report.attack == to_string(k));
  }
}

TEST_CASE("deterministic vanilla texts embed to all-zero rows") {
  const Dataset d = small_data();
  const AttackRun run = run_attack(d, quick_config(AttackKind::VanillaRandom));
  CHECK(run.injected_features.isZero());
  for (NodeId v = run.attacked.injected_from(); v < run.attacked.node_count(); ++v) {
    CHECK_FALSE(run.attacked.texts()[v].empty());
  }
}

TEST_CASE("wtgia texts re-embed to the optimized rows") {
  const Dataset d = small_data();
  const AttackRun run = run_attack(d, quick_config(AttackKind::Wtgia));
  CHECK(run.injected_features == run.optimized_features);
  CHECK(run.report.use_rate.violations == 0);
  if (run.report.use_rate.count > 0) CHECK(run.report.use_rate.min == 1.0);
}

TEST_CASE("continuous attacks inject unit rows") {
  const Dataset d = small_data();
  const AttackRun run = run_attack(d, quick_config(AttackKind::PgdHao));
  for (Eigen::Index r = 0; r < run.injected_features.rows(); ++r) {
    CHECK(std::abs(run.injected_features.row(r).norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("outputs are written and reproducible") {
  const Dataset d = small_data();
  const RunConfig c = quick_config(AttackKind::Fgsm);
  TempDir a, b;
  write_attack_outputs(run_attack(d, c), c, a.path());
  write_attack_outputs(run_attack(d, c), c, b.path());
  for (const char* f : {"nodes.jsonl", "edges.csv", "splits.json", "manifest.json", "vocab.txt",
                        "report.json", "report.csv", "plan.json", "injected_features.bin", "generated.jsonl"}) {
    CAPTURE(f);
    REQUIRE(std::filesystem::exists(a / f));
    CHECK(testing::read_file(a / f) == testing::read_file(b / f));
  }
  CHECK_FALSE(std::filesystem::exists(a / "FAILED"));
  const AttackManifest m = load_manifest(a / "manifest.json");
  CHECK(m.attack_name == "fgsm");
  CHECK(m.injected_n == 4);
}

TEST_CASE("targets_sample restricts the victim pool") {
  const Dataset d = small_data();
  RunConfig c = quick_config(AttackKind::Fgsm);
  c.targets_sample = 10;
  const AttackRun run = run_attack(d, c);
  CHECK(run.budget.targets.size() == 10);
  const std::set<NodeId> pool(run.budget.targets.begin(), run.budget.targets.end());
  for (const auto& round : run.plan.rounds) {
    for (NodeId v : round.victims) CHECK(pool.contains(v));
  }
}

TEST_CASE("invalid budgets are reported before any work") {
  const Dataset d = small_data();
  RunConfig c = quick_config(AttackKind::Fgsm);
  c.sparsity = 0.001;  // floor(S * F) = 0
  CHECK_THROWS_AS(run_attack(d, c), ValidationError);
  c = quick_config(AttackKind::Fgsm);
  c.degree_cap = 0;
  CHECK_THROWS_AS(run_attack(d, c), ValidationError);
}
