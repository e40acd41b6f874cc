#include "tgia/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace tgia {

int max_b(const TheoremInstance& inst) {
  const double bound = inst.m - inst.c * std::sqrt(static_cast<double>(inst.m) * inst.k);
  return std::max(static_cast<int>(std::floor(bound + 1e-9)), 0);
}

int brute_force_max_b(const TheoremInstance& inst) {
  if (inst.m > 10000) throw ValidationError("brute_force_max_b: m exceeds 10000");
  if (inst.m < 0 || inst.k < 1) throw ValidationError("brute_force_max_b: need m >= 0, k >= 1");
  const double c2k = inst.c * inst.c * inst.k;
  for (int b = inst.m; b > 0; --b) {
    for (int a = 1; a + b <= inst.m; ++a) {
      // a / (sqrt(k) sqrt(a+b)) >= c  <=>  a^2 >= c^2 k (a+b)   (a > 0); exact ties on
      // decimal thresholds must not be lost to rounding
      if (static_cast<double>(a) * a * (1.0 + 1e-12) >= c2k * (a + b)) return b;
    }
  }
  return 0;
}

Projector parse_projector(const std::string& name) {
  if (name == "none") return Projector::None;
  if (name == "pca2") return Projector::Pca2;
  throw ValidationError("unknown projector '" + name + "'");
}

std::string to_string(Projector p) { return p == Projector::None ? "none" : "pca2"; }

Matrix pca2_project(const Matrix& fit, const Matrix& rows) {
  if (fit.rows() < 1) throw ValidationError("pca2 needs at least one row to fit");
  if (fit.cols() != rows.cols()) throw ValidationError("pca2: width mismatch");
  const Eigen::RowVectorXd mean = fit.colwise().mean();
  const Matrix centered = fit.rowwise() - mean;
  const Matrix cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(fit.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Eigen::Index dims = std::min<Eigen::Index>(2, fit.cols());
  // Eigenvalues come in ascending order.
  Matrix basis = eig.eigenvectors().rightCols(dims).rowwise().reverse();
  for (Eigen::Index j = 0; j < basis.cols(); ++j) {
    Eigen::Index arg = 0;
    basis.col(j).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, j) < 0) basis.col(j) *= -1.0;
  }
  return (rows.rowwise() - mean) * basis;
}

namespace {

double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double diversity_raw(const Matrix& x) {
  if (x.rows() < 2) throw ValidationError("diversity_score needs at least two injected rows");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) sum += cosine(x.row(i), x.row(j));
  }
  const double pairs = static_cast<double>(x.rows()) * static_cast<double>(x.rows() - 1) / 2.0;
  return sum / pairs;
}

double indist_raw(const Matrix& inj, const Matrix& orig) {
  if (inj.rows() == 0 || orig.rows() == 0) throw ValidationError("indistinguishability needs non-empty inputs");
  if (inj.cols() != orig.cols()) throw ValidationError("indistinguishability: width mismatch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < inj.rows(); ++i) {
    const double d2 = (orig.rowwise() - inj.row(i)).rowwise().squaredNorm().minCoeff();
    sum += std::sqrt(d2);
  }
  return sum / static_cast<double>(inj.rows());
}

Matrix stack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

}  // namespace

double diversity_score(const Matrix& injected, Projector projector) {
  if (projector == Projector::Pca2) return diversity_raw(pca2_project(injected, injected));
  return diversity_raw(injected);
}

double indistinguishability_score(const Matrix& injected, const Matrix& original, Projector projector) {
  if (injected.cols() != original.cols()) throw ValidationError("indistinguishability: width mismatch");
  if (projector == Projector::Pca2) {
    const Matrix all = stack(original, injected);
    return indist_raw(pca2_project(all, injected), pca2_project(all, original));
  }
  return indist_raw(injected, original);
}

Unnoticeability unnoticeability(const Matrix& injected, const Matrix& original, Projector projector) {
  Unnoticeability u;
  u.projector = projector;
  if (projector == Projector::Pca2) {
    const Matrix all = stack(original, injected);
    const Matrix pi = pca2_project(all, injected);
    const Matrix po = pca2_project(all, original);
    u.diversity = diversity_raw(pi);
    u.indistinguishability = indist_raw(pi, po);
  } else {
    u.diversity = diversity_raw(injected);
    u.indistinguishability = indist_raw(injected, original);
  }
  return u;
}

DefenderKind parse_defender(const std::string& name) {
  if (name == "gcn") return DefenderKind::Gcn;
  if (name == "guard") return DefenderKind::Guard;
  throw ValidationError("unknown defender '" + name + "'");
}

std::string to_string(DefenderKind d) { return d == DefenderKind::Gcn ? "gcn" : "guard"; }

namespace {

PropagationCache defender_cache(const DefenderConfig& defender, const TextGraph& graph,
                                const Matrix& features) {
  if (defender.kind == DefenderKind::Guard) {
    return normalize_adjacency(graph, guard_filter(features, graph, defender.guard_threshold));
  }
  return normalize_adjacency(graph);
}

}  // namespace

GcnModel train_defender(const DefenderConfig& defender, const TextGraph& clean,
                        const Matrix& clean_features, TrainReport* report) {
  std::vector<NodeId> nodes = clean.splits().train;
  nodes.insert(nodes.end(), clean.splits().val.begin(), clean.splits().val.end());
  const TextGraph sub = induced_subgraph(clean, nodes);
  Matrix x(static_cast<Eigen::Index>(nodes.size()), clean_features.cols());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = clean_features.row(nodes[i]);
  }
  return train(sub, x, defender_cache(defender, sub, x), defender.gcn, report);
}

std::vector<int> defender_predict(const DefenderConfig& defender, const GcnModel& model,
                                  const TextGraph& graph, const Matrix& features) {
  return argmax_rows(forward_logits(model, features, defender_cache(defender, graph, features)));
}

DefenderResult evaluate(const DefenderConfig& defender, const TextGraph& clean,
                        const Matrix& clean_features, const TextGraph& attacked,
                        const Matrix& attacked_features, const AttackBudget& budget) {
  const BudgetAudit audit = validate_budget(attacked, budget);
  if (!audit.pass) throw ValidationError("attacked graph fails the budget audit; evaluation blocked");
  if (attacked.injected_from() != clean.node_count()) {
    throw ValidationError("attacked graph does not extend the clean graph");
  }
  DefenderResult r;
  r.name = to_string(defender.kind);
  const GcnModel model = train_defender(defender, clean, clean_features, &r.training);
  const std::vector<NodeId>& targets = budget.targets.empty() ? clean.splits().test : budget.targets;
  const auto clean_pred = defender_predict(defender, model, clean, clean_features);
  const auto att_pred = defender_predict(defender, model, attacked, attacked_features);
  r.clean_accuracy = accuracy(clean_pred, clean.labels(), targets);
  r.attacked_accuracy = accuracy(att_pred, clean.labels(), targets);
  return r;
}

nlohmann::json AttackReport::to_json() const {
  nlohmann::json j;
  j["attack"] = attack;
  j["status"] = status;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = std::move(cfg);
  j["defenders"] = nlohmann::json::array();
  for (const auto& d : defenders) {
    j["defenders"].push_back({{"name", d.name},
                              {"clean_accuracy", d.clean_accuracy},
                              {"attacked_accuracy", d.attacked_accuracy},
                              {"best_epoch", d.training.best_epoch},
                              {"best_val_accuracy", d.training.best_val_accuracy}});
  }
  j["use_rate"] = {{"count", use_rate.count},
                   {"mean", use_rate.mean},
                   {"min", use_rate.min},
                   {"max", use_rate.max},
                   {"texts_with_violations", use_rate.violations}};
  if (has_unnoticeability) {
    j["unnoticeability"] = {{"diversity", unnoticeability.diversity},
                            {"indistinguishability", unnoticeability.indistinguishability},
                            {"projector", to_string(unnoticeability.projector)}};
  } else {
    j["unnoticeability"] = nullptr;
  }
  nlohmann::json viol = nlohmann::json::array();
  for (const auto& v : audit.violations) {
    viol.push_back({{"kind", to_string(v.kind)}, {"node", v.node}, {"value", v.value}});
  }
  j["budget_audit"] = {{"pass", audit.pass}, {"violations", std::move(viol)}};
  return j;
}

std::string AttackReport::csv_header() {
  return "attack,seed,config_hash,status,defender,clean_accuracy,attacked_accuracy,use_rate_mean,"
         "diversity,indistinguishability,budget_pass\n";
}

std::string AttackReport::csv_rows() const {
  std::ostringstream os;
  os.precision(17);
  for (const auto& d : defenders) {
    os << attack << ',' << seed << ',' << config_hash << ',' << status << ',' << d.name << ','
       << d.clean_accuracy << ',' << d.attacked_accuracy << ',' << use_rate.mean << ',';
    if (has_unnoticeability) {
      os << unnoticeability.diversity << ',' << unnoticeability.indistinguishability;
    } else {
      os << ',';
    }
    os << ',' << (audit.pass ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tgia
