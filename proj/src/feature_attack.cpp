#include "tgia/feature_attack.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace tgia {

namespace {

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), bottom.cols());
  if (top.rows() > 0) out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

void check_problem(const AttackProblem& p, const Matrix& inj) {
  if (p.fixed.rows() + inj.rows() != p.graph.node_count()) {
    throw ValidationError("fixed rows + injected rows must equal the attacked node count");
  }
  if (p.fixed.rows() > 0 && p.fixed.cols() != inj.cols()) {
    throw ValidationError("fixed and injected feature widths differ");
  }
}

double target_agreement(const AttackProblem& p, const Matrix& full) {
  if (p.targets.empty()) return 0.0;
  const auto pred = argmax_rows(forward_logits(p.model, full, p.cache));
  std::size_t hit = 0;
  for (NodeId t : p.targets) {
    if (pred[static_cast<std::size_t>(t)] == p.y_orig[static_cast<std::size_t>(t)]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(p.targets.size());
}

}  // namespace

int FgsmConfig::word_budget(Eigen::Index num_features) const {
  if (!(sparsity > 0.0 && sparsity <= 1.0)) throw ValidationError("sparsity must be in (0, 1]");
  if (batch < 1) throw ValidationError("FGSM batch size must be >= 1");
  // The small epsilon keeps products such as 0.06 * 500 from flooring to 29.
  const auto budget = static_cast<int>(std::floor(sparsity * static_cast<double>(num_features) + 1e-9));
  if (budget < 1) throw ValidationError("sparsity budget underflows: floor(S*F) = 0");
  return budget;
}

Matrix fgsm_binary(const AttackProblem& problem, Matrix inj, const FgsmConfig& cfg,
                   FgsmStats* stats) {
  check_problem(problem, inj);
  const int cap = cfg.word_budget(inj.cols());
  const Eigen::Index n = inj.rows();
  const auto first = static_cast<NodeId>(problem.fixed.rows());

  std::vector<int> ones(static_cast<std::size_t>(n), 0);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < inj.cols(); ++c) {
      if (inj(r, c) != 0.0 && inj(r, c) != 1.0) throw ValidationError("FGSM input must be binary");
    }
    ones[static_cast<std::size_t>(r)] = static_cast<int>(inj.row(r).sum());
    if (ones[static_cast<std::size_t>(r)] > cap) {
      throw ValidationError("injected row " + std::to_string(r) + " already exceeds the word budget");
    }
  }
  std::vector<int> flips(static_cast<std::size_t>(n), 0);
  Matrix full = stack_rows(problem.fixed, inj);

  FgsmStats st;
  using Candidate = std::tuple<double, Eigen::Index, Eigen::Index>;
  std::vector<Candidate> cand;
  while (st.steps < cfg.max_steps) {
    const Matrix grad = grad_features(problem.model, full, problem.cache, problem.targets,
                                      problem.y_orig, first);
    if (!grad.allFinite()) throw NumericError("non-finite feature gradient in FGSM");
    cand.clear();
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto ri = static_cast<std::size_t>(r);
      if (flips[ri] >= cap) continue;
      for (Eigen::Index c = 0; c < inj.cols(); ++c) {
        const bool is_one = full(first + r, c) != 0.0;
        if (!is_one && ones[ri] >= cap) continue;
        const double benefit = is_one ? -grad(r, c) : grad(r, c);
        if (benefit > 0.0) cand.emplace_back(benefit, r, c);
      }
    }
    if (cand.empty()) break;
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), cand.size());
    auto better = [](const Candidate& a, const Candidate& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
      return std::make_pair(std::get<1>(a), std::get<2>(a)) < std::make_pair(std::get<1>(b), std::get<2>(b));
    };
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(), better);
    for (std::size_t k = 0; k < take; ++k) {
      const auto [benefit, r, c] = cand[k];
      const auto ri = static_cast<std::size_t>(r);
      const bool is_one = full(first + r, c) != 0.0;
      if (flips[ri] >= cap || (!is_one && ones[ri] >= cap)) continue;
      full(first + r, c) = is_one ? 0.0 : 1.0;
      ones[ri] += is_one ? -1 : 1;
      ++flips[ri];
      ++st.flips;
    }
    ++st.steps;
  }
  if (stats != nullptr) *stats = st;
  return full.bottomRows(n);
}

void project_unit_sphere(Matrix& rows) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (norm > 0.0) rows.row(i) /= norm;
  }
}

Matrix pgd_continuous(const AttackProblem& problem, Matrix inj, const PgdConfig& cfg) {
  check_problem(problem, inj);
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("PGD learning rate must be > 0");
  if (cfg.epochs < 0) throw ValidationError("PGD epochs must be >= 0");
  if (cfg.hao_weight < 0.0) throw ValidationError("HAO weight must be >= 0");
  const bool on_sphere = cfg.normalize || cfg.mode == PgdMode::Riemannian;
  if (on_sphere) project_unit_sphere(inj);

  const auto first = static_cast<NodeId>(problem.fixed.rows());
  Matrix full = stack_rows(problem.fixed, inj);
  double best = target_agreement(problem, full);
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Matrix grad = grad_features(problem.model, full, problem.cache, problem.targets,
                                problem.y_orig, first);
    if (cfg.hao_weight > 0.0) grad += cfg.hao_weight * hao_gradient(full, problem.cache.adj, first);
    if (!grad.allFinite()) {
      throw NumericError("non-finite gradient in PGD at epoch " + std::to_string(epoch));
    }
    auto rows = full.bottomRows(inj.rows());
    if (cfg.mode == PgdMode::Projected) {
      rows += cfg.learning_rate * grad;
      if (on_sphere) {
        Matrix tmp = rows;
        project_unit_sphere(tmp);
        rows = tmp;
      }
    } else {
      for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        // Ascent on J is descent on -J.
        const Vector x = rows.row(r).transpose();
        const Vector g = -grad.row(r).transpose();
        rows.row(r) = riemannian_step(x, g, cfg.learning_rate).transpose();
      }
    }
    const double acc = target_agreement(problem, full);
    if (acc < best) {
      best = acc;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return full.bottomRows(inj.rows());
}

double hao_term(const Matrix& features, const SparseMatrix& adj, NodeId first_row) {
  const Eigen::Index n = features.rows() - first_row;
  if (n <= 0) return 0.0;
  const Matrix prop = adj * features;
  double sum = 0.0;
  for (Eigen::Index i = first_row; i < features.rows(); ++i) {
    const double nx = features.row(i).norm();
    const double np = prop.row(i).norm();
    if (nx > 0.0 && np > 0.0) sum += features.row(i).dot(prop.row(i)) / (nx * np);
  }
  return sum / static_cast<double>(n);
}

Matrix hao_gradient(const Matrix& features, const SparseMatrix& adj, NodeId first_row) {
  const Eigen::Index n = features.rows() - first_row;
  if (n <= 0) return Matrix::Zero(0, features.cols());
  const Matrix prop = adj * features;
  Matrix dx = Matrix::Zero(features.rows(), features.cols());
  Matrix dp = Matrix::Zero(features.rows(), features.cols());
  const double w = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = first_row; i < features.rows(); ++i) {
    const double nx = features.row(i).norm();
    const double np = prop.row(i).norm();
    if (nx == 0.0 || np == 0.0) continue;
    const double cos = features.row(i).dot(prop.row(i)) / (nx * np);
    dx.row(i) += w * (prop.row(i) / (nx * np) - cos * features.row(i) / (nx * nx));
    dp.row(i) += w * (features.row(i) / (nx * np) - cos * prop.row(i) / (np * np));
  }
  dx += SparseMatrix(adj.transpose()) * dp;
  return dx.bottomRows(n);
}

Vector riemannian_step(const Vector& x, const Vector& g, double step) {
  if (x.size() != g.size()) throw ValidationError("riemannian_step: size mismatch");
  if (std::abs(x.norm() - 1.0) > 1e-9) throw ValidationError("riemannian_step: x must be unit norm");
  const Vector tangent = g - g.dot(x) * x;
  const Vector y = x - step * tangent;
  const double norm = y.norm();
  if (!std::isfinite(norm) || norm == 0.0) throw NumericError("degenerate retraction");
  return y / norm;
}

}  // namespace tgia
