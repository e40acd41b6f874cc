// tgia: text-level graph injection attacks from the command line.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tgia/pipeline.hpp"
#include "tgia/random.hpp"

namespace fs = std::filesystem;
using namespace tgia;

namespace {

// "1..5" or "1,3,7".
std::vector<std::uint64_t> parse_seed_list(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  const auto dots = spec.find("..");
  if (dots != std::string::npos) {
    const auto lo = std::stoull(spec.substr(0, dots));
    const auto hi = std::stoull(spec.substr(dots + 2));
    if (hi < lo) throw ValidationError("empty seed range '" + spec + "'");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) throw ValidationError("no seeds in '" + spec + "'");
  return seeds;
}

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (auto& ch : f) {
    if (ch == '_') ch = '-';
  }
  return "--" + f;
}

// Registers one string flag per RunConfig key plus --config and --set.
struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key = value config file");
    app->add_option("--set", sets, "key=value override (repeatable)");
    for (const auto& [key, def] : RunConfig().entries()) {
      app->add_option(flag_name(key), values[key], key + " (default: " + (def.empty() ? "\"\"" : def) + ")");
    }
  }

  RunConfig resolve(CLI::App* app) const {
    RunConfig cfg;
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [key, value] : values) {
      if (app->count(flag_name(key)) > 0) cfg.set(key, value);
    }
    return cfg;
  }
};

void write_failure(const fs::path& dir, const RunConfig& cfg, const std::string& message) {
  fs::create_directories(dir);
  AttackReport rep;
  rep.attack = to_string(cfg.attack);
  rep.status = "failed: " + message;
  rep.seed = cfg.seed;
  rep.config = cfg.entries();
  rep.config_hash = cfg.hash();
  std::ofstream(dir / "report.json", std::ios::binary) << rep.to_json().dump(2) << '\n';
  std::ofstream(dir / "FAILED", std::ios::binary) << message << '\n';
}

// Returns 0 on success, 2 on a budget violation, 1 on error.
int attack_one(const Dataset& data, const RunConfig& cfg, const fs::path& out, std::string* csv) {
  try {
    const AttackRun run = run_attack(data, cfg);
    write_attack_outputs(run, cfg, out);
    if (csv != nullptr) *csv = run.report.csv_rows();
    return run.report.audit.pass ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "attack " << to_string(cfg.attack) << " seed " << cfg.seed << ": " << e.what() << '\n';
    try {
      write_failure(out, cfg, e.what());
    } catch (const std::exception& inner) {
      std::cerr << "could not write failure report: " << inner.what() << '\n';
    }
    return 1;
  }
}

Matrix attacked_features_from_dir(const fs::path& dir, AttackKind kind, const Vocabulary& vocab,
                                  const TextGraph& attacked, const Matrix& clean_x) {
  Matrix inj;
  if (fs::exists(dir / "injected_features.bin")) {
    inj = read_dense_bin(dir / "injected_features.bin");
  } else {
    std::vector<std::string> texts(attacked.texts().begin() + attacked.injected_from(), attacked.texts().end());
    const FeatureMatrix fm = embed_all(texts, vocab);
    inj = kind == AttackKind::Pgd || kind == AttackKind::PgdHao ? normalize_rows(fm.rows) : fm.rows;
  }
  if (inj.rows() != attacked.injected_count() || inj.cols() != clean_x.cols()) {
    throw ValidationError("injected features do not match the attacked graph");
  }
  return inj;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Text-level graph injection attacks"};
  app.require_subcommand(1);

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "Write a planted-partition text graph");
  SynthParams sp;
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--nodes", sp.nodes, "node count")->capture_default_str();
  gen->add_option("--classes", sp.classes, "class count")->capture_default_str();
  gen->add_option("--keywords", sp.keywords_per_class, "keywords per class")->capture_default_str();
  gen->add_option("--homophily", sp.homophily, "intra-class edge fraction")->capture_default_str();
  gen->add_option("--avg-degree", sp.avg_degree, "mean degree")->capture_default_str();
  gen->add_option("--noise-words", sp.noise_vocabulary, "shared noise vocabulary size")->capture_default_str();
  gen->add_option("--seed", sp.seed, "generator seed")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a defender on train+val and report test accuracy");
  ConfigFlags train_flags;
  train_flags.attach(tr);
  std::string train_defender_name = "gcn";
  std::string checkpoint;
  tr->add_option("--defender", train_defender_name, "gcn or guard")->capture_default_str();
  tr->add_option("--checkpoint", checkpoint, "write the trained parameters here");

  // attack
  auto* at = app.add_subcommand("attack", "Run an injection attack and evaluate it");
  ConfigFlags attack_flags;
  attack_flags.attach(at);
  std::string attack_out;
  std::string seeds_spec;
  int workers = 1;
  at->add_option("--out", attack_out, "output directory")->required();
  at->add_option("--seeds", seeds_spec, "seed sweep, e.g. 1..5 (one subdirectory per seed)");
  at->add_option("--workers", workers, "concurrent runs in a sweep")->capture_default_str();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate defenders on a saved attacked graph");
  ConfigFlags eval_flags;
  eval_flags.attach(ev);
  std::string eval_attacked;
  ev->add_option("--attacked", eval_attacked, "directory written by attack")->required();

  // theory
  auto* th = app.add_subcommand("theory", "Largest off-target word count b for one injected row");
  TheoremInstance ti;
  th->add_option("--m", ti.m, "word budget")->required();
  th->add_option("--k", ti.k, "target word count")->required();
  th->add_option("--c", ti.c, "cosine threshold")->required();

  // metrics
  auto* me = app.add_subcommand("metrics", "Diversity and indistinguishability of injected rows");
  ConfigFlags metric_flags;
  metric_flags.attach(me);
  std::string metric_attacked;
  me->add_option("--attacked", metric_attacked, "directory written by attack")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (gen->parsed()) {
    const Dataset d = gen_synth(sp);
    save_dataset(d, gen_out);
    std::cout << "wrote " << d.graph.node_count() << " nodes, " << d.graph.edges().size() << " edges to "
              << gen_out << '\n';
    return 0;
  }

  if (th->parsed()) {
    const int closed = max_b(ti);
    const int brute = brute_force_max_b(ti);
    nlohmann::json j{{"m", ti.m}, {"k", ti.k}, {"c", ti.c}, {"max_b", closed}, {"brute_force_max_b", brute},
                     {"agree_within_1", std::abs(closed - brute) <= 1}};
    std::cout << j.dump(2) << '\n';
    return 0;
  }

  if (tr->parsed()) {
    const RunConfig cfg = train_flags.resolve(tr);
    if (cfg.data.empty()) throw ValidationError("--data is required");
    const Dataset d = load_dataset(cfg.data);
    const Vocabulary vocab = build_vocabulary(d.graph.texts(), static_cast<std::size_t>(cfg.vocab_size),
                                              cfg.stopwords.empty() ? default_stopwords() : load_stopwords(cfg.stopwords));
    const Matrix x = attack_feature_space(cfg.attack, vocab, d.graph, cfg.embeddings);
    DefenderConfig dc;
    dc.kind = parse_defender(train_defender_name);
    dc.gcn = cfg.gcn;
    dc.gcn.seed = cfg.seed;
    dc.guard_threshold = cfg.guard_threshold;
    TrainReport rep;
    const GcnModel model = train_defender(dc, d.graph, x, &rep);
    const auto pred = defender_predict(dc, model, d.graph, x);
    if (!checkpoint.empty()) save_checkpoint(model, checkpoint, cfg.hash());
    nlohmann::json j{{"defender", to_string(dc.kind)},
                     {"best_epoch", rep.best_epoch},
                     {"best_val_accuracy", rep.best_val_accuracy},
                     {"epochs_run", rep.epochs_run},
                     {"test_accuracy", accuracy(pred, d.graph.labels(), d.graph.splits().test)},
                     {"config_hash", cfg.hash()}};
    std::cout << j.dump(2) << '\n';
    return 0;
  }

  if (at->parsed()) {
    const RunConfig base = attack_flags.resolve(at);
    if (base.data.empty()) throw ValidationError("--data is required");
    const Dataset d = load_dataset(base.data);
    if (seeds_spec.empty()) return attack_one(d, base, attack_out, nullptr);
    const auto seeds = parse_seed_list(seeds_spec);
    std::vector<int> codes(seeds.size(), 0);
    std::vector<std::string> rows(seeds.size());
    parallel_for(seeds.size(), workers, [&](std::size_t i) {
      RunConfig cfg = base;
      cfg.seed = seeds[i];
      codes[i] = attack_one(d, cfg, fs::path(attack_out) / ("seed_" + std::to_string(seeds[i])), &rows[i]);
    });
    fs::create_directories(attack_out);
    std::ofstream agg(fs::path(attack_out) / "aggregate.csv", std::ios::binary);
    agg << AttackReport::csv_header();
    for (const auto& r : rows) agg << r;
    int code = 0;
    for (int c : codes) code = std::max(code, c);
    return code == 2 ? 2 : code;
  }

  if (ev->parsed() || me->parsed()) {
    const bool is_eval = ev->parsed();
    const RunConfig cfg = is_eval ? eval_flags.resolve(ev) : metric_flags.resolve(me);
    const fs::path attacked_dir = is_eval ? eval_attacked : metric_attacked;
    const TextGraph attacked = load_graph_dir(attacked_dir);
    // without --data the clean graph is the attacked one minus its injected block
    Dataset d;
    if (cfg.data.empty()) {
      d.graph = strip_injected(attacked);
    } else {
      d = load_dataset(cfg.data);
    }
    AttackKind kind = cfg.attack;
    if (fs::exists(attacked_dir / "manifest.json")) kind = parse_attack_kind(load_manifest(attacked_dir / "manifest.json").attack_name);
    const auto stop = cfg.stopwords.empty() ? default_stopwords() : load_stopwords(cfg.stopwords);
    const Vocabulary vocab = fs::exists(attacked_dir / "vocab.txt")
                                 ? load_vocabulary(attacked_dir / "vocab.txt", stop)
                                 : build_vocabulary(d.graph.texts(), static_cast<std::size_t>(cfg.vocab_size), stop);
    const Matrix x = attack_feature_space(kind, vocab, d.graph, cfg.embeddings);
    const Matrix inj = attacked_features_from_dir(attacked_dir, kind, vocab, attacked, x);
    if (!is_eval) {
      const auto u = unnoticeability(inj, x, cfg.projector);
      nlohmann::json j{{"diversity", u.diversity}, {"indistinguishability", u.indistinguishability},
                       {"projector", to_string(u.projector)}};
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    Matrix x_att(x.rows() + inj.rows(), x.cols());
    x_att << x, inj;
    AttackBudget budget;
    budget.n_inject = cfg.n_inject < 0 ? static_cast<NodeId>(std::floor(0.05 * d.graph.node_count())) : cfg.n_inject;
    budget.degree_cap = cfg.degree_cap;
    budget.sparsity = cfg.sparsity;
    budget.targets = d.graph.splits().test;
    const BudgetAudit audit = validate_budget(attacked, budget);
    nlohmann::json j;
    nlohmann::json viol = nlohmann::json::array();
    for (const auto& v : audit.violations) viol.push_back({{"kind", to_string(v.kind)}, {"node", v.node}, {"value", v.value}});
    j["budget_audit"] = {{"pass", audit.pass}, {"violations", viol}};
    if (!audit.pass) {
      std::cout << j.dump(2) << '\n';
      return 2;
    }
    j["defenders"] = nlohmann::json::array();
    for (DefenderKind dk : {DefenderKind::Gcn, DefenderKind::Guard}) {
      DefenderConfig dc;
      dc.kind = dk;
      dc.gcn = cfg.gcn;
      dc.gcn.seed = derive_seed(cfg.seed, 2);
      dc.guard_threshold = cfg.guard_threshold;
      const DefenderResult r = evaluate(dc, d.graph, x, attacked, x_att, budget);
      j["defenders"].push_back({{"name", r.name}, {"clean_accuracy", r.clean_accuracy},
                                {"attacked_accuracy", r.attacked_accuracy}});
    }
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "tgia: " << e.what() << '\n';
    return 1;
  }
}
