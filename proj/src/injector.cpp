#include "tgia/injector.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tgia/random.hpp"

namespace tgia {

std::vector<NodeId> batch_schedule(NodeId n_inject, double step) {
  if (!(step > 0.0 && step <= 1.0)) throw ValidationError("sequential step must be in (0, 1]");
  if (n_inject < 0) throw ValidationError("n_inject must be >= 0");
  std::vector<NodeId> out;
  if (n_inject == 0) return out;
  const auto per_round =
      static_cast<NodeId>(std::floor(static_cast<double>(n_inject) * step + 1e-9));
  if (per_round == 0) {
    throw ValidationError("sequential step too small: floor(n_inject * st) = 0");
  }
  for (NodeId done = 0; done < n_inject;) {
    const NodeId n = std::min(n_inject - done, per_round);
    out.push_back(n);
    done += n;
  }
  return out;
}

std::vector<double> vulnerable_scores(const Matrix& probs, const TextGraph& graph,
                                      std::span<const NodeId> targets) {
  std::vector<double> scores(static_cast<std::size_t>(graph.node_count()), 0.0);
  const auto deg = graph.degrees();
  for (NodeId v : targets) {
    const double conf = probs.row(v).maxCoeff();
    scores[static_cast<std::size_t>(v)] =
        std::max(0.0, 1.0 - conf) / (1.0 + deg[static_cast<std::size_t>(v)]);
  }
  return scores;
}

namespace {

// Score descending, node id ascending.
void rank_by_score(std::vector<NodeId>& nodes, std::span<const double> scores) {
  std::sort(nodes.begin(), nodes.end(), [&](NodeId a, NodeId b) {
    const double sa = scores[static_cast<std::size_t>(a)];
    const double sb = scores[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    return a < b;
  });
}

}  // namespace

VictimSelection select_victims(std::span<const double> scores, std::span<const NodeId> targets,
                               NodeId batch, double gamma, std::span<const int> predicted) {
  if (gamma < 1.0) throw ValidationError("gamma_select must be >= 1");
  const auto wanted = static_cast<std::size_t>(std::floor(static_cast<double>(batch) * gamma + 1e-9));
  if (wanted == 0) throw ValidationError("victim count floor(n * gamma) is zero");
  if (wanted > targets.size()) {
    throw ValidationError("victim count " + std::to_string(wanted) + " exceeds " +
                          std::to_string(targets.size()) + " targets");
  }
  int classes = 0;
  for (NodeId t : targets) classes = std::max(classes, predicted[static_cast<std::size_t>(t)] + 1);

  VictimSelection best;
  double best_mean = -1.0;
  for (int c = 0; c < classes; ++c) {
    std::vector<NodeId> members;
    for (NodeId t : targets) {
      if (predicted[static_cast<std::size_t>(t)] == c) members.push_back(t);
    }
    if (members.size() < wanted) continue;
    rank_by_score(members, scores);
    members.resize(wanted);
    double sum = 0.0;
    for (NodeId v : members) sum += scores[static_cast<std::size_t>(v)];
    const double mean = sum / static_cast<double>(wanted);
    if (mean > best_mean) {
      best_mean = mean;
      best.target_class = c;
      best.victims = std::move(members);
    }
  }
  if (best.target_class < 0) {
    std::vector<NodeId> all(targets.begin(), targets.end());
    rank_by_score(all, scores);
    all.resize(wanted);
    best.victims = std::move(all);
  }
  return best;
}

std::vector<std::pair<NodeId, NodeId>> form_edges(NodeId inj_count, std::span<const NodeId> victims,
                                                  std::span<const double> scores, int degree_cap,
                                                  EdgeStrategy strategy, std::uint64_t seed) {
  if (victims.empty()) throw ValidationError("form_edges needs at least one victim");
  if (degree_cap < 1) throw ValidationError("degree_cap must be >= 1");
  const std::size_t degree = std::min<std::size_t>(static_cast<std::size_t>(degree_cap), victims.size());

  std::vector<double> weight(victims.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < victims.size(); ++i) {
    weight[i] = std::max(0.0, scores[static_cast<std::size_t>(victims[i])]);
    total += weight[i];
  }
  if (strategy == EdgeStrategy::Weighted && !(total > 0.0)) strategy = EdgeStrategy::Uniform;

  Rng rng(seed);
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(static_cast<std::size_t>(inj_count) * degree);
  for (NodeId k = 0; k < inj_count; ++k) {
    std::vector<std::size_t> pool(victims.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t d = 0; d < degree; ++d) {
      const std::size_t remaining = pool.size() - d;
      std::size_t pick = d + uniform_index(rng, remaining);
      if (strategy == EdgeStrategy::Weighted) {
        double mass = 0.0;
        for (std::size_t i = d; i < pool.size(); ++i) mass += weight[pool[i]];
        if (mass > 0.0) {
          double u = uniform01(rng) * mass;
          pick = pool.size() - 1;
          for (std::size_t i = d; i < pool.size(); ++i) {
            if (weight[pool[i]] <= 0.0) continue;
            u -= weight[pool[i]];
            if (u < 0.0) {
              pick = i;
              break;
            }
          }
          // Guard against rounding landing on a zero-weight tail entry.
          while (weight[pool[pick]] <= 0.0 && pick > d) --pick;
        }
      }
      std::swap(pool[d], pool[pick]);
      edges.emplace_back(k, victims[pool[d]]);
    }
  }
  return edges;
}

nlohmann::json InjectionPlan::to_json() const {
  nlohmann::json out;
  out["sequential_step"] = sequential_step;
  out["gamma_select"] = gamma_select;
  out["rounds"] = nlohmann::json::array();
  for (const auto& r : rounds) {
    nlohmann::json jr;
    jr["batch"] = r.batch;
    jr["target_class"] = r.target_class;
    jr["victims"] = r.victims;
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : r.edges) edges.push_back({e.u, e.v});
    jr["edges"] = std::move(edges);
    out["rounds"].push_back(std::move(jr));
  }
  return out;
}

AttackResult run_sequential_attack(const TextGraph& graph, const Matrix& features,
                                   const AttackBudget& budget, const GcnModel& surrogate,
                                   const FeatureUpdater& updater,
                                   const SequentialAttackConfig& config) {
  budget.validate(graph);
  if (graph.injected_count() != 0) throw ValidationError("attack expects a clean graph");
  if (features.rows() != graph.node_count()) throw ValidationError("feature rows != node count");
  if (config.gamma_select < 1.0) throw ValidationError("gamma_select must be >= 1");

  AttackResult result;
  result.plan.sequential_step = config.sequential_step;
  result.plan.gamma_select = config.gamma_select;
  const auto schedule = batch_schedule(budget.n_inject, config.sequential_step);
  if (!schedule.empty() && budget.targets.empty()) {
    throw ValidationError("cannot inject without target nodes");
  }

  const std::vector<int> y_orig =
      argmax_rows(forward(surrogate, features, normalize_adjacency(graph)));

  TextGraph current = graph;
  Matrix current_x = features;
  const std::span<const NodeId> targets(budget.targets);
  int round = 0;
  for (NodeId n : schedule) {
    const PropagationCache cache = normalize_adjacency(current);
    const Matrix probs = forward(surrogate, current_x, cache);
    const auto scores = vulnerable_scores(probs, current, targets);
    const auto predicted = argmax_rows(probs);

    // Enough victims for every injected node to use its full degree cap.
    const std::size_t want = std::min(
        targets.size(),
        std::max(static_cast<std::size_t>(std::floor(static_cast<double>(n) * config.gamma_select + 1e-9)),
                 static_cast<std::size_t>(budget.degree_cap)));
    VictimSelection sel =
        select_victims(scores, targets, static_cast<NodeId>(want), 1.0, predicted);

    const auto inj_edges = form_edges(n, sel.victims, scores, budget.degree_cap, config.strategy,
                                      derive_seed(config.seed, 100 + static_cast<std::uint64_t>(round)));

    Matrix batch = Matrix::Zero(n, features.cols());
    if (config.init == InitKind::UnitSphere) {
      Rng rng(derive_seed(config.seed, 10000 + static_cast<std::uint64_t>(round)));
      for (Eigen::Index j = 0; j < batch.cols(); ++j) {
        for (Eigen::Index i = 0; i < batch.rows(); ++i) batch(i, j) = standard_normal(rng);
      }
      project_unit_sphere(batch);
    }

    const NodeId base = current.node_count();
    current = inject(current, std::vector<std::string>(static_cast<std::size_t>(n)), inj_edges);
    const PropagationCache attacked_cache = normalize_adjacency(current);
    const AttackProblem problem{surrogate, current, attacked_cache, current_x, targets, y_orig};
    Matrix updated = updater(problem, std::move(batch), round);
    if (updated.rows() != n || updated.cols() != features.cols()) {
      throw ValidationError("feature updater returned a matrix of the wrong shape");
    }
    Matrix next(current_x.rows() + n, current_x.cols());
    next.topRows(current_x.rows()) = current_x;
    next.bottomRows(n) = updated;
    current_x = std::move(next);

    InjectionRound rec;
    rec.batch = n;
    rec.target_class = sel.target_class;
    rec.victims = std::move(sel.victims);
    for (const auto& [idx, v] : inj_edges) rec.edges.emplace_back(base + idx, v);
    result.plan.rounds.push_back(std::move(rec));
    ++round;
  }

  const BudgetAudit audit = validate_budget(current, budget);
  if (!audit.pass) throw std::logic_error("sequential attack violated its own budget");
  result.injected_features = current_x.bottomRows(current.injected_count());
  result.graph = std::move(current);
  return result;
}

EdgeStrategy parse_edge_strategy(const std::string& name) {
  if (name == "uniform") return EdgeStrategy::Uniform;
  if (name == "weighted") return EdgeStrategy::Weighted;
  throw ValidationError("unknown edge strategy '" + name + "'");
}

std::string to_string(EdgeStrategy s) {
  return s == EdgeStrategy::Uniform ? "uniform" : "weighted";
}

}  // namespace tgia
