#include "tgia/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "tgia/random.hpp"

namespace tgia {

namespace fs = std::filesystem;

namespace {

struct KindName {
  AttackKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {AttackKind::Fgsm, "fgsm"},
    {AttackKind::Pgd, "pgd"},
    {AttackKind::PgdHao, "pgd_hao"},
    {AttackKind::VanillaHeterophily, "vanilla_heterophily"},
    {AttackKind::VanillaRandom, "vanilla_random"},
    {AttackKind::VanillaMixing, "vanilla_mixing"},
    {AttackKind::Wtgia, "wtgia"},
    {AttackKind::WtgiaTopic, "wtgia_topic"},
};

bool is_continuous(AttackKind k) { return k == AttackKind::Pgd || k == AttackKind::PgdHao; }
bool is_vanilla(AttackKind k) {
  return k == AttackKind::VanillaHeterophily || k == AttackKind::VanillaRandom ||
         k == AttackKind::VanillaMixing;
}
bool is_word_task(AttackKind k) { return k == AttackKind::Wtgia || k == AttackKind::WtgiaTopic; }

}  // namespace

AttackKind parse_attack_kind(const std::string& name) {
  for (const auto& kn : kKindNames) {
    if (name == kn.name) return kn.kind;
  }
  throw ValidationError("unknown attack kind '" + name + "'");
}

std::string to_string(AttackKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "?";
}

const std::vector<AttackKind>& all_attack_kinds() {
  static const std::vector<AttackKind> kinds = [] {
    std::vector<AttackKind> v;
    for (const auto& kn : kKindNames) v.push_back(kn.kind);
    return v;
  }();
  return kinds;
}

// ---------------------------------------------------------------------------
// Synthetic dataset
// ---------------------------------------------------------------------------

namespace {

const char* const kSyllables[] = {"ba", "ce", "di", "fo", "gu", "ka", "le", "mi",
                                  "no", "pu", "ra", "se", "ti", "vo", "zu", "xe"};
constexpr int kSyllableCount = 16;

std::string pseudo_word(int index) {
  std::string w;
  for (int s = 0; s < 3; ++s) {
    w += kSyllables[index % kSyllableCount];
    index /= kSyllableCount;
  }
  return w;
}

const char* const kClassNames[] = {"Neural Networks", "Probabilistic Methods", "Genetic Algorithms",
                                   "Theory", "Case Based", "Reinforcement Learning",
                                   "Rule Learning"};

const char* const kFillers[] = {"the", "of", "and", "with", "on", "for", "in"};

std::vector<std::string> default_class_names(int classes) {
  std::vector<std::string> names;
  for (int c = 0; c < classes; ++c) {
    names.push_back(c < 7 ? std::string(kClassNames[c]) : "Class " + std::to_string(c + 1));
  }
  return names;
}

}  // namespace

Dataset gen_synth(const SynthParams& p) {
  if (p.classes < 2) throw ValidationError("gen_synth: need at least 2 classes");
  if (p.nodes < 5 * p.classes) throw ValidationError("gen_synth: need at least 5 nodes per class");
  if (p.keywords_per_class < 1) throw ValidationError("gen_synth: keywords_per_class must be >= 1");
  if (!(p.homophily >= 0.0 && p.homophily <= 1.0)) throw ValidationError("gen_synth: homophily must lie in [0, 1]");
  if (!(p.avg_degree > 0.0) || p.avg_degree >= p.nodes - 1) throw ValidationError("gen_synth: avg_degree out of range");
  if (p.noise_vocabulary < 0) throw ValidationError("gen_synth: noise_vocabulary must be >= 0");
  const int words_needed = p.classes * p.keywords_per_class + p.noise_vocabulary;
  const int pool_size = kSyllableCount * kSyllableCount * kSyllableCount;
  if (words_needed > pool_size) throw ValidationError("gen_synth: too many words requested");

  Rng rng(derive_seed(p.seed, 0));
  std::vector<int> pool(pool_size);
  std::iota(pool.begin(), pool.end(), 0);
  shuffle(pool, rng);
  const auto& stop = default_stopwords();
  std::vector<std::string> words;
  for (int idx : pool) {
    if (static_cast<int>(words.size()) == words_needed) break;
    std::string w = pseudo_word(idx);
    if (!stop.contains(w)) words.push_back(std::move(w));
  }
  auto keyword = [&](int c, int j) -> const std::string& { return words[c * p.keywords_per_class + j]; };
  const int noise_base = p.classes * p.keywords_per_class;

  const NodeId n = p.nodes;
  std::vector<int> labels(n);
  for (NodeId i = 0; i < n; ++i) labels[i] = i % p.classes;
  shuffle(labels, rng);

  std::vector<std::string> texts(n);
  for (NodeId i = 0; i < n; ++i) {
    std::vector<std::string> toks;
    const int own = 3 + static_cast<int>(uniform_index(rng, 4));
    for (int t = 0; t < own; ++t) toks.push_back(keyword(labels[i], static_cast<int>(uniform_index(rng, p.keywords_per_class))));
    if (uniform01(rng) < 0.1) {
      int other = static_cast<int>(uniform_index(rng, p.classes - 1));
      if (other >= labels[i]) ++other;
      toks.push_back(keyword(other, static_cast<int>(uniform_index(rng, p.keywords_per_class))));
    }
    if (p.noise_vocabulary > 0) {
      const int noise = 6 + static_cast<int>(uniform_index(rng, 9));
      for (int t = 0; t < noise; ++t) toks.push_back(words[noise_base + uniform_index(rng, p.noise_vocabulary)]);
    }
    shuffle(toks, rng);
    std::string text;
    for (std::size_t t = 0; t < toks.size(); ++t) {
      if (t > 0) {
        text += ' ';
        if (uniform01(rng) < 0.3) {
          text += kFillers[uniform_index(rng, 7)];
          text += ' ';
        }
      }
      text += toks[t];
    }
    texts[i] = std::move(text);
  }

  std::vector<std::vector<NodeId>> by_class(p.classes);
  for (NodeId i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  const auto target_edges = static_cast<std::size_t>(std::llround(n * p.avg_degree / 2.0));
  std::set<Edge> edges;
  while (edges.size() < target_edges) {
    const auto u = static_cast<NodeId>(uniform_index(rng, n));
    const bool intra = uniform01(rng) < p.homophily;
    int cls = labels[u];
    if (!intra) {
      cls = static_cast<int>(uniform_index(rng, p.classes - 1));
      if (cls >= labels[u]) ++cls;
    }
    const auto& members = by_class[cls];
    const NodeId v = members[uniform_index(rng, members.size())];
    if (u != v) edges.insert(Edge(u, v));
  }

  std::vector<NodeId> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  shuffle(perm, rng);
  const auto n_train = static_cast<std::size_t>(n * 3 / 10);
  const auto n_val = static_cast<std::size_t>(n * 2 / 10);
  Splits splits;
  splits.train.assign(perm.begin(), perm.begin() + n_train);
  splits.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  splits.test.assign(perm.begin() + n_train + n_val, perm.end());
  std::sort(splits.train.begin(), splits.train.end());
  std::sort(splits.val.begin(), splits.val.end());
  std::sort(splits.test.begin(), splits.test.end());

  Dataset d;
  d.graph = TextGraph(std::move(texts), std::move(labels),
                      std::vector<Edge>(edges.begin(), edges.end()), std::move(splits));
  d.class_names = default_class_names(p.classes);
  return d;
}

void save_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  save_graph(data.graph, dir);
  std::ofstream out(dir / "classes.txt", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "classes.txt").string());
  for (const auto& c : data.class_names) out << c << '\n';
}

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.graph = load_graph_dir(dir);
  std::ifstream in(dir / "classes.txt");
  std::string line;
  while (in && std::getline(in, line)) {
    if (!line.empty()) d.class_names.push_back(line);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ValidationError("config " + key + ": expected a number, got '" + s + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& s) {
  Int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError("config " + key + ": expected an integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ValidationError("config " + key + ": expected true/false, got '" + s + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field int_field(T RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& v) { c.*member = parse_int<T>("value", v); },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field double_field(double RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& v) { c.*member = parse_double("value", v); },
          [member](const RunConfig& c) { return fmt_double(c.*member); }};
}

Field string_field(std::string RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["data"] = string_field(&RunConfig::data);
    f["attack"] = {[](RunConfig& c, const std::string& v) { c.attack = parse_attack_kind(v); },
                   [](const RunConfig& c) { return to_string(c.attack); }};
    f["n_inject"] = int_field(&RunConfig::n_inject);
    f["degree_cap"] = int_field(&RunConfig::degree_cap);
    f["sparsity"] = double_field(&RunConfig::sparsity);
    f["targets_sample"] = int_field(&RunConfig::targets_sample);
    f["vocab_size"] = int_field(&RunConfig::vocab_size);
    f["stopwords"] = string_field(&RunConfig::stopwords);
    f["embeddings"] = string_field(&RunConfig::embeddings);
    f["import_texts"] = string_field(&RunConfig::import_texts);
    f["gcn_hidden"] = {[](RunConfig& c, const std::string& v) { c.gcn.hidden = parse_int<int>("gcn_hidden", v); },
                       [](const RunConfig& c) { return std::to_string(c.gcn.hidden); }};
    f["gcn_lr"] = {[](RunConfig& c, const std::string& v) { c.gcn.learning_rate = parse_double("gcn_lr", v); },
                   [](const RunConfig& c) { return fmt_double(c.gcn.learning_rate); }};
    f["gcn_epochs"] = {[](RunConfig& c, const std::string& v) { c.gcn.epochs = parse_int<int>("gcn_epochs", v); },
                       [](const RunConfig& c) { return std::to_string(c.gcn.epochs); }};
    f["gcn_patience"] = {[](RunConfig& c, const std::string& v) { c.gcn.patience = parse_int<int>("gcn_patience", v); },
                         [](const RunConfig& c) { return std::to_string(c.gcn.patience); }};
    f["gcn_dropout"] = {[](RunConfig& c, const std::string& v) { c.gcn.dropout = parse_double("gcn_dropout", v); },
                        [](const RunConfig& c) { return fmt_double(c.gcn.dropout); }};
    f["gcn_weight_decay"] = {[](RunConfig& c, const std::string& v) { c.gcn.weight_decay = parse_double("gcn_weight_decay", v); },
                             [](const RunConfig& c) { return fmt_double(c.gcn.weight_decay); }};
    f["guard_threshold"] = double_field(&RunConfig::guard_threshold);
    f["fgsm_batch"] = int_field(&RunConfig::fgsm_batch);
    f["pgd_lr"] = double_field(&RunConfig::pgd_lr);
    f["pgd_epochs"] = int_field(&RunConfig::pgd_epochs);
    f["pgd_patience"] = int_field(&RunConfig::pgd_patience);
    f["hao_weight"] = double_field(&RunConfig::hao_weight);
    f["pgd_normalize"] = {[](RunConfig& c, const std::string& v) { c.pgd_normalize = parse_bool("pgd_normalize", v); },
                          [](const RunConfig& c) { return std::string(c.pgd_normalize ? "true" : "false"); }};
    f["pgd_mode"] = {[](RunConfig& c, const std::string& v) {
                       if (v == "projected") c.pgd_mode = PgdMode::Projected;
                       else if (v == "riemannian") c.pgd_mode = PgdMode::Riemannian;
                       else throw ValidationError("config pgd_mode: expected projected or riemannian");
                     },
                     [](const RunConfig& c) {
                       return std::string(c.pgd_mode == PgdMode::Projected ? "projected" : "riemannian");
                     }};
    f["sequential_step"] = double_field(&RunConfig::sequential_step);
    f["gamma_select"] = double_field(&RunConfig::gamma_select);
    f["edge_strategy"] = {[](RunConfig& c, const std::string& v) { c.edge_strategy = parse_edge_strategy(v); },
                          [](const RunConfig& c) { return to_string(c.edge_strategy); }};
    f["backend"] = {[](RunConfig& c, const std::string& v) {
                      if (v != "deterministic" && v != "remote") {
                        throw ValidationError("config backend: expected deterministic or remote");
                      }
                      c.backend = v;
                    },
                    [](const RunConfig& c) { return c.backend; }};
    f["llm_model"] = string_field(&RunConfig::llm_model);
    f["temperature"] = double_field(&RunConfig::temperature);
    f["max_rounds"] = int_field(&RunConfig::max_rounds);
    f["max_words"] = int_field(&RunConfig::max_words);
    f["min_words"] = int_field(&RunConfig::min_words);
    f["parallelism"] = int_field(&RunConfig::parallelism);
    f["timeout_ms"] = int_field(&RunConfig::timeout_ms);
    f["projector"] = {[](RunConfig& c, const std::string& v) { c.projector = parse_projector(v); },
                      [](const RunConfig& c) { return to_string(c.projector); }};
    f["seed"] = int_field(&RunConfig::seed);
    return f;
  }();
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& table = fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ValidationError("unknown config key '" + key + "'");
  try {
    it->second.set(*this, value);
  } catch (const ValidationError& e) {
    throw ValidationError("config " + key + ": " + e.what());
  }
}

void RunConfig::load_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.resize(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), lineno, "expected key = value");
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, f] : fields()) out.emplace_back(k, f.get(*this));
  return out;
}

std::string RunConfig::hash() const {
  std::string canon;
  for (const auto& [k, v] : entries()) canon += k + "=" + v + "\n";
  return fnv1a_hex(canon);
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t n_threads = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

Matrix attack_feature_space(AttackKind kind, const Vocabulary& vocab, const TextGraph& graph,
                            const std::string& embeddings) {
  if (is_continuous(kind)) {
    if (!embeddings.empty()) {
      Matrix x = read_dense(embeddings);
      if (x.rows() != graph.injected_from()) {
        throw ValidationError("embeddings have " + std::to_string(x.rows()) + " rows, graph has " +
                              std::to_string(graph.injected_from()) + " original nodes");
      }
      return x;
    }
    std::vector<std::string> texts(graph.texts().begin(), graph.texts().begin() + graph.injected_from());
    return normalize_rows(embed_all(texts, vocab).rows);
  }
  std::vector<std::string> texts(graph.texts().begin(), graph.texts().begin() + graph.injected_from());
  return embed_all(texts, vocab).rows;
}

std::unique_ptr<GenerationBackend> make_backend(const RunConfig& config) {
  if (config.backend == "deterministic") return std::make_unique<DeterministicBackend>();
  if (config.backend == "remote") {
    RemoteConfig rc = RemoteConfig::from_env();
    rc.model = config.llm_model;
    rc.temperature = config.temperature;
    rc.timeout = std::chrono::milliseconds(config.timeout_ms);
    return std::make_unique<RemoteChatBackend>(rc);
  }
  throw ValidationError("unknown backend '" + config.backend + "'");
}

std::vector<NodeId> select_example_nodes(const TextGraph& graph, const Matrix& probs) {
  const NodeId n = graph.injected_from();
  if (n == 0) return {};
  const auto deg = graph.degrees();
  double mean_deg = 0.0;
  std::vector<std::size_t> lengths(n);
  for (NodeId v = 0; v < n; ++v) {
    mean_deg += deg[v];
    lengths[v] = tokenize(graph.texts()[v]).size();
  }
  mean_deg /= n;
  std::vector<std::size_t> sorted = lengths;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t q25 = sorted[(sorted.size() - 1) / 4];
  const std::size_t q75 = sorted[(3 * (sorted.size() - 1)) / 4];
  const auto pred = argmax_rows(probs);
  std::vector<NodeId> out;
  for (NodeId v : graph.splits().train) {
    if (pred[v] != graph.labels()[v]) continue;
    if (deg[v] > mean_deg) continue;
    if (lengths[v] < q25 || lengths[v] > q75) continue;
    out.push_back(v);
  }
  std::stable_sort(out.begin(), out.end(), [&](NodeId a, NodeId b) {
    return probs.row(a).maxCoeff() > probs.row(b).maxCoeff();
  });
  return out;
}

namespace {

std::vector<NodeId> choose_targets(const TextGraph& graph, int sample, std::uint64_t seed) {
  std::vector<NodeId> targets = graph.splits().test;
  if (sample > 0 && static_cast<std::size_t>(sample) < targets.size()) {
    Rng rng(derive_seed(seed, 3));
    shuffle(targets, rng);
    targets.resize(static_cast<std::size_t>(sample));
    std::sort(targets.begin(), targets.end());
  }
  return targets;
}

std::string words_of_row(const Eigen::RowVectorXd& row, const Vocabulary& vocab) {
  std::string text;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (row[j] == 0.0) continue;
    if (!text.empty()) text += ' ';
    text += vocab.word(static_cast<std::size_t>(j));
  }
  return text;
}

Matrix embed_texts(const std::vector<std::string>& texts, const Vocabulary& vocab) {
  Matrix m(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t i = 0; i < texts.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = embed_bow(texts[i], vocab).transpose();
  }
  return m;
}

PromptKind vanilla_prompt(AttackKind k) {
  switch (k) {
    case AttackKind::VanillaHeterophily: return PromptKind::Heterophily;
    case AttackKind::VanillaRandom: return PromptKind::Random;
    default: return PromptKind::Mixing;
  }
}

// Prompt inputs for the text-first kinds. Positive/mixing examples come from
// the example-node pool; heterophily negatives are target texts.
PromptTemplate vanilla_template(AttackKind kind, const Dataset& data, const std::vector<NodeId>& pool,
                                std::span<const NodeId> targets, const RunConfig& cfg, NodeId inj_id,
                                std::uint64_t seed) {
  const TextGraph& g = data.graph;
  PromptTemplate t;
  t.kind = vanilla_prompt(kind);
  t.class_names = data.class_names;
  t.min_words = cfg.min_words;
  t.max_words = cfg.max_words;
  t.inj_node = "P" + std::to_string(inj_id);
  Rng rng(seed);
  const std::vector<NodeId>& source = pool.empty() ? g.splits().train : pool;
  if (t.kind == PromptKind::Heterophily) {
    std::vector<NodeId> pos = source;
    shuffle(pos, rng);
    pos.resize(std::min<std::size_t>(5, pos.size()));
    for (NodeId v : pos) {
      t.positive_examples.push_back({g.texts()[v], data.class_names[g.labels()[v]]});
    }
    std::vector<NodeId> neg(targets.begin(), targets.end());
    shuffle(neg, rng);
    neg.resize(std::min<std::size_t>(3, neg.size()));
    for (NodeId v : neg) t.examples.push_back(g.texts()[v]);
  } else if (t.kind == PromptKind::Mixing) {
    for (int c = 0; c < g.num_classes(); ++c) {
      for (NodeId v : source) {
        if (g.labels()[v] == c) {
          t.examples.push_back(g.texts()[v]);
          break;
        }
      }
    }
  }
  return t;
}

void record_generation(UseRateStats& stats, const GenerationResult& r) {
  if (stats.count == 0) {
    stats.min = stats.max = r.use_rate;
  } else {
    stats.min = std::min(stats.min, r.use_rate);
    stats.max = std::max(stats.max, r.use_rate);
  }
  stats.mean += r.use_rate;
  ++stats.count;
  if (!r.prohibited_violations.empty()) ++stats.violations;
}

}  // namespace

AttackRun run_attack(const Dataset& input, const RunConfig& cfg, GenerationBackend* backend_override) {
  Dataset data = input;
  const TextGraph& clean = data.graph;
  if (clean.injected_count() != 0) throw ValidationError("run_attack expects a clean graph");
  if (data.class_names.empty()) data.class_names = default_class_names(clean.num_classes());
  if (static_cast<int>(data.class_names.size()) < clean.num_classes()) {
    throw ValidationError("fewer class names than classes");
  }
  if (cfg.vocab_size < 1) throw ValidationError("vocab_size must be >= 1");
  if (cfg.max_rounds < 1) throw ValidationError("max_rounds must be >= 1");

  const AttackKind kind = cfg.attack;
  const std::set<std::string> stop = cfg.stopwords.empty() ? default_stopwords() : load_stopwords(cfg.stopwords);

  AttackRun run;
  run.vocab = build_vocabulary(clean.texts(), static_cast<std::size_t>(cfg.vocab_size), stop);
  if (run.vocab.size() == 0) throw ValidationError("vocabulary is empty");
  run.clean_features = attack_feature_space(kind, run.vocab, clean, cfg.embeddings);
  const Matrix& X = run.clean_features;

  run.budget.n_inject = cfg.n_inject < 0 ? static_cast<NodeId>(std::floor(0.05 * clean.node_count()))
                                         : cfg.n_inject;
  run.budget.degree_cap = cfg.degree_cap;
  run.budget.sparsity = cfg.sparsity;
  run.budget.targets = choose_targets(clean, cfg.targets_sample, cfg.seed);
  run.budget.validate(clean);
  const auto& targets = run.budget.targets;
  const NodeId delta = run.budget.n_inject;

  DefenderConfig surrogate_cfg;
  surrogate_cfg.gcn = cfg.gcn;
  surrogate_cfg.gcn.seed = derive_seed(cfg.seed, 1);
  const GcnModel surrogate = train_defender(surrogate_cfg, clean, X);

  std::unique_ptr<GenerationBackend> owned;
  GenerationBackend* backend = backend_override;
  if (backend == nullptr && (is_vanilla(kind) || is_word_task(kind))) {
    owned = make_backend(cfg);
    backend = owned.get();
  }

  SequentialAttackConfig seq;
  seq.strategy = cfg.edge_strategy;
  seq.sequential_step = cfg.sequential_step;
  seq.gamma_select = cfg.gamma_select;
  seq.init = is_continuous(kind) ? InitKind::UnitSphere : InitKind::Zero;
  seq.seed = derive_seed(cfg.seed, 4);

  FeatureUpdater updater;
  std::vector<std::string> inj_texts(static_cast<std::size_t>(delta));
  Matrix precomputed;
  NodeId consumed = 0;
  const NodeId n = clean.node_count();

  if (kind == AttackKind::Fgsm || is_word_task(kind)) {
    FgsmConfig fc;
    fc.sparsity = cfg.sparsity;
    fc.batch = cfg.fgsm_batch;
    updater = [fc](const AttackProblem& p, Matrix batch, int) { return fgsm_binary(p, std::move(batch), fc); };
  } else if (is_continuous(kind)) {
    PgdConfig pc;
    pc.learning_rate = cfg.pgd_lr;
    pc.epochs = cfg.pgd_epochs;
    pc.patience = cfg.pgd_patience;
    pc.hao_weight = kind == AttackKind::PgdHao ? cfg.hao_weight : 0.0;
    pc.normalize = cfg.pgd_normalize;
    pc.mode = cfg.pgd_mode;
    updater = [pc](const AttackProblem& p, Matrix batch, int) { return pgd_continuous(p, std::move(batch), pc); };
  } else {
    // Text first: generate every injected text, embed, then refine structure.
    const Matrix probs = forward(surrogate, X, normalize_adjacency(clean));
    const auto pool = select_example_nodes(clean, probs);
    std::vector<GenerationResult> results(static_cast<std::size_t>(delta));
    parallel_for(static_cast<std::size_t>(delta), cfg.parallelism, [&](std::size_t i) {
      const NodeId id = n + static_cast<NodeId>(i);
      const PromptTemplate t = vanilla_template(kind, data, pool, targets, cfg, id,
                                                derive_seed(cfg.seed, 1000 + i));
      GenerationResult r;
      r.text = generate_vanilla(t, *backend, derive_seed(cfg.seed, 2000 + i));
      r.rounds_used = 1;
      r.selected_round = 1;
      results[i] = std::move(r);
    });
    for (std::size_t i = 0; i < results.size(); ++i) {
      inj_texts[i] = results[i].text;
      run.generated.push_back({static_cast<long long>(n) + static_cast<long long>(i), results[i]});
    }
    precomputed = embed_texts(inj_texts, run.vocab);
    updater = [&precomputed, &consumed](const AttackProblem&, Matrix batch, int) {
      Matrix rows = precomputed.middleRows(consumed, batch.rows());
      consumed += static_cast<NodeId>(batch.rows());
      return rows;
    };
  }

  AttackResult res = run_sequential_attack(clean, X, run.budget, surrogate, updater, seq);
  run.plan = res.plan;
  run.optimized_features = res.injected_features;
  run.report.attack = to_string(kind);

  if (kind == AttackKind::Fgsm) {
    for (NodeId i = 0; i < delta; ++i) inj_texts[i] = words_of_row(res.injected_features.row(i), run.vocab);
    run.injected_features = res.injected_features;
  } else if (is_word_task(kind)) {
    std::vector<std::optional<GenerationResult>> results(static_cast<std::size_t>(delta));
    parallel_for(static_cast<std::size_t>(delta), cfg.parallelism, [&](std::size_t i) {
      const Vector row = res.injected_features.row(static_cast<Eigen::Index>(i)).transpose();
      if (row.sum() == 0.0) return;  // nothing to say: leave the text empty
      const auto topic = kind == AttackKind::WtgiaTopic
                             ? std::optional<std::vector<std::string>>(data.class_names)
                             : std::nullopt;
      const WordTask task = derive_word_task(row, run.vocab, cfg.max_words, topic);
      PromptTemplate t;
      t.kind = kind == AttackKind::Wtgia ? PromptKind::Wtgia : PromptKind::WtgiaTopic;
      t.class_names = data.class_names;
      t.inj_node = "P" + std::to_string(n + static_cast<NodeId>(i));
      try {
        results[i] = generate_with_correction(task, t, *backend, cfg.max_rounds,
                                              derive_seed(cfg.seed, 2000 + i));
      } catch (const GenerationError& e) {
        throw GenerationError("injected node " + std::to_string(n + static_cast<NodeId>(i)) + ": " + e.what(),
                              e.partial);
      }
    });
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (!results[i]) continue;
      inj_texts[i] = results[i]->text;
      record_generation(run.report.use_rate, *results[i]);
      run.generated.push_back({static_cast<long long>(n) + static_cast<long long>(i), *results[i]});
    }
    if (run.report.use_rate.count > 0) run.report.use_rate.mean /= static_cast<double>(run.report.use_rate.count);
    run.injected_features = embed_texts(inj_texts, run.vocab);
  } else if (is_continuous(kind)) {
    run.injected_features = res.injected_features;
    if (!cfg.import_texts.empty()) {
      if (!cfg.embeddings.empty()) {
        throw ValidationError("import_texts re-embeds with the bag-of-words space; drop embeddings");
      }
      const auto records = read_generated(cfg.import_texts);
      std::vector<bool> seen(static_cast<std::size_t>(delta), false);
      for (const auto& rec : records) {
        const long long idx = rec.injected_id - n;
        if (idx < 0 || idx >= delta) throw ValidationError("imported text for unknown node " + std::to_string(rec.injected_id));
        inj_texts[static_cast<std::size_t>(idx)] = rec.result.text;
        seen[static_cast<std::size_t>(idx)] = true;
      }
      if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
        throw ValidationError("imported texts do not cover every injected node");
      }
      run.injected_features = normalize_rows(embed_texts(inj_texts, run.vocab));
      for (const auto& rec : records) run.generated.push_back(rec);
    }
  } else {
    run.injected_features = precomputed;
  }

  run.attacked = with_injected_texts(res.graph, inj_texts);
  Matrix x_att(X.rows() + run.injected_features.rows(), X.cols());
  x_att << X, run.injected_features;

  run.report.audit = validate_budget(run.attacked, run.budget);
  if (!run.report.audit.pass) run.report.status = "budget_violation";
  for (DefenderKind dk : {DefenderKind::Gcn, DefenderKind::Guard}) {
    if (!run.report.audit.pass) break;
    DefenderConfig dc;
    dc.kind = dk;
    dc.gcn = cfg.gcn;
    dc.gcn.seed = derive_seed(cfg.seed, 2);
    dc.guard_threshold = cfg.guard_threshold;
    run.report.defenders.push_back(evaluate(dc, clean, X, run.attacked, x_att, run.budget));
  }
  if (delta >= 2) {
    run.report.unnoticeability = unnoticeability(run.injected_features, X, cfg.projector);
    run.report.has_unnoticeability = true;
  }
  run.report.seed = cfg.seed;
  run.report.config = cfg.entries();
  run.report.config_hash = cfg.hash();
  return run;
}

void write_attack_outputs(const AttackRun& run, const RunConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  save_graph(run.attacked, dir);
  AttackManifest m;
  m.original_n = run.attacked.injected_from();
  m.injected_n = run.attacked.injected_count();
  m.seed = config.seed;
  m.attack_name = to_string(config.attack);
  save_manifest(m, dir / "manifest.json");
  save_vocabulary(run.vocab, dir / "vocab.txt");
  write_generated(run.generated, dir / "generated.jsonl");
  write_dense_bin(run.injected_features, dir / "injected_features.bin");
  if (is_continuous(config.attack)) write_dense_bin(run.optimized_features, dir / "optimized_features.bin");
  {
    std::ofstream out(dir / "plan.json", std::ios::binary);
    out << run.plan.to_json().dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "report.json", std::ios::binary);
    out << run.report.to_json().dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "report.csv", std::ios::binary);
    out << AttackReport::csv_header() << run.report.csv_rows();
  }
  if (!run.report.audit.pass) {
    std::ofstream(dir / "FAILED", std::ios::binary) << "budget audit failed\n";
  }
}

}  // namespace tgia
