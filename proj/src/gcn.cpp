#include "tgia/gcn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tgia/random.hpp"

namespace tgia {

namespace {

constexpr int kLayers = 3;

// Activations recorded by a forward pass, enough to run the backward pass.
struct Trace {
  std::vector<Matrix> inputs;    // layer inputs A_l, after dropout for l > 0
  std::vector<Matrix> pre;       // pre-activations Â A_l W_l + b_l
  std::vector<Matrix> dropout;   // scale masks applied to inputs[l], l > 0 (empty if none)
};

Trace run_forward(const GcnModel& model, const Matrix& features, const PropagationCache& cache,
                  Rng* dropout_rng) {
  if (features.cols() != model.input_dim()) {
    throw ValidationError("feature width " + std::to_string(features.cols()) +
                          " does not match model input " + std::to_string(model.input_dim()));
  }
  if (features.rows() != cache.adj.rows()) {
    throw ValidationError("feature rows " + std::to_string(features.rows()) +
                          " do not match adjacency size " + std::to_string(cache.adj.rows()));
  }
  Trace t;
  t.inputs.reserve(kLayers);
  t.pre.reserve(kLayers);
  t.dropout.resize(kLayers);
  t.inputs.push_back(features);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const DenseLayer& layer = model.layers[l];
    Matrix pre = cache.adj * (t.inputs.back() * layer.weight);
    pre.rowwise() += layer.bias.transpose();
    t.pre.push_back(std::move(pre));
    if (l + 1 == model.layers.size()) break;
    Matrix act = t.pre.back().cwiseMax(0.0);
    if (dropout_rng != nullptr && model.config.dropout > 0.0) {
      const double p = model.config.dropout;
      Matrix mask(act.rows(), act.cols());
      for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        for (Eigen::Index i = 0; i < mask.rows(); ++i) {
          mask(i, j) = uniform01(*dropout_rng) < p ? 0.0 : 1.0 / (1.0 - p);
        }
      }
      act.array() *= mask.array();
      t.dropout[l + 1] = std::move(mask);
    }
    t.inputs.push_back(std::move(act));
  }
  return t;
}

// Backpropagates dL/dlogits through every layer.
Gradients run_backward(const GcnModel& model, const PropagationCache& cache, const Trace& t,
                       Matrix dpre) {
  Gradients g;
  g.weight.resize(model.layers.size());
  g.bias.resize(model.layers.size());
  const SparseMatrix adj_t = cache.adj.transpose();
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const DenseLayer& layer = model.layers[l];
    g.bias[l] = dpre.colwise().sum().transpose();
    const Matrix msg = adj_t * dpre;
    g.weight[l] = t.inputs[l].transpose() * msg;
    Matrix dinput = msg * layer.weight.transpose();
    if (l == 0) {
      g.features = std::move(dinput);
      break;
    }
    if (t.dropout[l].size() > 0) dinput.array() *= t.dropout[l].array();
    dpre = (t.pre[l - 1].array() > 0.0).select(dinput, 0.0);
  }
  return g;
}

// Gradient of mean CE over `nodes` with respect to logits.
Matrix ce_logit_grad(const Matrix& probs, std::span<const NodeId> nodes, std::span<const int> labels) {
  Matrix d = Matrix::Zero(probs.rows(), probs.cols());
  if (nodes.empty()) return d;
  const double w = 1.0 / static_cast<double>(nodes.size());
  for (NodeId v : nodes) {
    const auto r = static_cast<Eigen::Index>(v);
    d.row(r) += w * probs.row(r);
    d(r, labels[static_cast<std::size_t>(v)]) -= w;
  }
  return d;
}

void glorot(Matrix& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = (2.0 * uniform01(rng) - 1.0) * limit;
  }
}

PropagationCache build_cache(NodeId n, const std::vector<Edge>& edges, const EdgeMask* keep) {
  std::vector<double> deg(static_cast<std::size_t>(n), 1.0);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (keep != nullptr && !(*keep)[k]) continue;
    deg[static_cast<std::size_t>(edges[k].u)] += 1.0;
    deg[static_cast<std::size_t>(edges[k].v)] += 1.0;
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) + 2 * edges.size());
  for (NodeId i = 0; i < n; ++i) trip.emplace_back(i, i, 1.0 / deg[static_cast<std::size_t>(i)]);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (keep != nullptr && !(*keep)[k]) continue;
    const auto u = static_cast<std::size_t>(edges[k].u);
    const auto v = static_cast<std::size_t>(edges[k].v);
    const double w = 1.0 / std::sqrt(deg[u] * deg[v]);
    trip.emplace_back(edges[k].u, edges[k].v, w);
    trip.emplace_back(edges[k].v, edges[k].u, w);
  }
  PropagationCache cache;
  cache.adj.resize(n, n);
  cache.adj.setFromTriplets(trip.begin(), trip.end());
  cache.adj.makeCompressed();
  return cache;
}

}  // namespace

PropagationCache normalize_adjacency(const TextGraph& graph) {
  return build_cache(graph.node_count(), graph.edges(), nullptr);
}

PropagationCache normalize_adjacency(const TextGraph& graph, const EdgeMask& keep) {
  if (keep.size() != graph.edges().size()) throw ValidationError("edge mask size mismatch");
  return build_cache(graph.node_count(), graph.edges(), &keep);
}

EdgeMask guard_filter(const Matrix& features, const TextGraph& graph, double tau) {
  if (!(tau >= -1.0 && tau <= 1.0)) throw ValidationError("guard threshold must be in [-1, 1]");
  if (features.rows() != graph.node_count()) throw ValidationError("feature rows != node count");
  const Vector norms = features.rowwise().norm();
  EdgeMask keep(graph.edges().size(), 1);
  for (std::size_t k = 0; k < graph.edges().size(); ++k) {
    const auto u = static_cast<Eigen::Index>(graph.edges()[k].u);
    const auto v = static_cast<Eigen::Index>(graph.edges()[k].v);
    double sim = 0.0;
    if (norms(u) > 0.0 && norms(v) > 0.0) {
      sim = std::clamp(features.row(u).dot(features.row(v)) / (norms(u) * norms(v)), -1.0, 1.0);
    }
    keep[k] = sim >= tau ? 1 : 0;
  }
  return keep;
}

std::size_t GcnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

GcnModel init_model(Eigen::Index input_dim, Eigen::Index num_classes, const GcnConfig& config) {
  if (input_dim < 1 || num_classes < 1 || config.hidden < 1) {
    throw ValidationError("model dimensions must be positive");
  }
  GcnModel model;
  model.config = config;
  Rng rng(derive_seed(config.seed, 1));
  const Eigen::Index dims[] = {input_dim, config.hidden, config.hidden, num_classes};
  for (int l = 0; l < kLayers; ++l) {
    DenseLayer layer;
    layer.weight.resize(dims[l], dims[l + 1]);
    glorot(layer.weight, rng);
    layer.bias = Vector::Zero(dims[l + 1]);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index j = 0;
    probs.row(i).maxCoeff(&j);
    out[static_cast<std::size_t>(i)] = static_cast<int>(j);
  }
  return out;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels,
                std::span<const NodeId> nodes) {
  if (nodes.empty()) return 0.0;
  std::size_t hit = 0;
  for (NodeId v : nodes) {
    if (predicted[static_cast<std::size_t>(v)] == labels[static_cast<std::size_t>(v)]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(nodes.size());
}

double cross_entropy(const Matrix& probs, std::span<const NodeId> nodes, std::span<const int> labels) {
  if (nodes.empty()) return 0.0;
  double sum = 0.0;
  for (NodeId v : nodes) {
    sum -= std::log(probs(v, labels[static_cast<std::size_t>(v)]));
  }
  return sum / static_cast<double>(nodes.size());
}

Matrix forward_logits(const GcnModel& model, const Matrix& features, const PropagationCache& cache) {
  return run_forward(model, features, cache, nullptr).pre.back();
}

Matrix forward(const GcnModel& model, const Matrix& features, const PropagationCache& cache) {
  return softmax_rows(forward_logits(model, features, cache));
}

Gradients loss_gradients(const GcnModel& model, const Matrix& features,
                         const PropagationCache& cache, std::span<const NodeId> nodes,
                         std::span<const int> labels) {
  const Trace t = run_forward(model, features, cache, nullptr);
  const Matrix probs = softmax_rows(t.pre.back());
  Gradients g = run_backward(model, cache, t, ce_logit_grad(probs, nodes, labels));
  g.loss = cross_entropy(probs, nodes, labels);
  return g;
}

Matrix grad_features(const GcnModel& model, const Matrix& features, const PropagationCache& cache,
                     std::span<const NodeId> targets, std::span<const int> y_orig,
                     NodeId first_row) {
  const Eigen::Index rows = features.rows() - first_row;
  if (first_row < 0 || rows < 0) throw ValidationError("first_row out of range");
  if (targets.empty()) return Matrix::Zero(rows, features.cols());
  const Gradients g = loss_gradients(model, features, cache, targets, y_orig);
  return g.features.bottomRows(rows);
}

GcnModel train(const TextGraph& graph, const Matrix& features, const PropagationCache& cache,
               const GcnConfig& config, TrainReport* report) {
  const std::vector<NodeId>& train_nodes = graph.splits().train;
  if (train_nodes.empty()) throw ValidationError("training split is empty");
  const auto classes = std::max<Eigen::Index>(graph.num_classes(), 1);
  GcnModel model = init_model(features.cols(), classes, config);

  std::vector<int> labels(static_cast<std::size_t>(graph.node_count()), 0);
  std::copy(graph.labels().begin(), graph.labels().end(), labels.begin());
  const std::vector<NodeId>& val_nodes = graph.splits().val.empty() ? train_nodes : graph.splits().val;

  // Adam moments, one per parameter block.
  const std::size_t blocks = model.layers.size();
  std::vector<Matrix> mw(blocks), vw(blocks);
  std::vector<Vector> mb(blocks), vb(blocks);
  for (std::size_t l = 0; l < blocks; ++l) {
    mw[l] = vw[l] = Matrix::Zero(model.layers[l].weight.rows(), model.layers[l].weight.cols());
    mb[l] = vb[l] = Vector::Zero(model.layers[l].bias.size());
  }
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;

  Rng dropout_rng(derive_seed(config.seed, 2));
  GcnModel best = model;
  TrainReport rep;
  int since_best = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const Trace t = run_forward(model, features, cache, &dropout_rng);
    const Matrix probs = softmax_rows(t.pre.back());
    const double loss = cross_entropy(probs, train_nodes, labels);
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
    }
    Gradients g = run_backward(model, cache, t, ce_logit_grad(probs, train_nodes, labels));
    const double step = static_cast<double>(epoch + 1);
    const double c1 = 1.0 - std::pow(beta1, step);
    const double c2 = 1.0 - std::pow(beta2, step);
    for (std::size_t l = 0; l < blocks; ++l) {
      DenseLayer& layer = model.layers[l];
      if (config.weight_decay > 0.0) g.weight[l] += config.weight_decay * layer.weight;
      mw[l] = beta1 * mw[l] + (1.0 - beta1) * g.weight[l];
      vw[l] = beta2 * vw[l] + (1.0 - beta2) * g.weight[l].cwiseProduct(g.weight[l]);
      mb[l] = beta1 * mb[l] + (1.0 - beta1) * g.bias[l];
      vb[l] = beta2 * vb[l] + (1.0 - beta2) * g.bias[l].cwiseProduct(g.bias[l]);
      layer.weight.array() -= config.learning_rate * (mw[l].array() / c1) /
                              ((vw[l].array() / c2).sqrt() + eps);
      layer.bias.array() -= config.learning_rate * (mb[l].array() / c1) /
                            ((vb[l].array() / c2).sqrt() + eps);
    }
    rep.epochs_run = epoch + 1;

    const double val_acc = accuracy(argmax_rows(forward_logits(model, features, cache)), labels, val_nodes);
    if (rep.best_epoch < 0 || val_acc > rep.best_val_accuracy) {
      rep.best_epoch = epoch;
      rep.best_val_accuracy = val_acc;
      best = model;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  if (rep.best_epoch < 0) {
    rep.best_val_accuracy = accuracy(argmax_rows(forward_logits(model, features, cache)), labels, val_nodes);
  }
  if (report != nullptr) *report = rep;
  return best;
}

void save_checkpoint(const GcnModel& model, const std::filesystem::path& path,
                     const std::string& config_hash) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "tgia-gcn v1 dims=" << model.input_dim();
  for (const auto& l : model.layers) out << ',' << l.weight.cols();
  out << " seed=" << model.config.seed << " config=" << config_hash << '\n';
  auto put = [&](double x) {
    const auto f = static_cast<float>(x);
    out.write(reinterpret_cast<const char*>(&f), sizeof f);
  };
  for (const auto& l : model.layers) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) put(l.weight(i, j));
    }
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) put(l.bias(j));
  }
}

GcnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, version, dims_field, seed_field;
  hs >> magic >> version >> dims_field >> seed_field;
  if (magic != "tgia-gcn" || version != "v1" || dims_field.rfind("dims=", 0) != 0 ||
      seed_field.rfind("seed=", 0) != 0) {
    throw ParseError(path.string(), 1, "not a tgia-gcn v1 checkpoint");
  }
  std::vector<Eigen::Index> dims;
  std::stringstream ds(dims_field.substr(5));
  std::string cell;
  while (std::getline(ds, cell, ',')) dims.push_back(std::stoll(cell));
  if (dims.size() != kLayers + 1) throw ParseError(path.string(), 1, "expected four layer sizes");
  GcnModel model;
  model.config.seed = std::stoull(seed_field.substr(5));
  model.config.hidden = static_cast<int>(dims[1]);
  auto get = [&]() {
    float f = 0;
    in.read(reinterpret_cast<char*>(&f), sizeof f);
    if (!in) throw ParseError(path.string(), 1, "truncated parameter blob");
    return static_cast<double>(f);
  };
  for (int l = 0; l < kLayers; ++l) {
    DenseLayer layer;
    layer.weight.resize(dims[l], dims[l + 1]);
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = get();
    }
    layer.bias.resize(dims[l + 1]);
    for (Eigen::Index j = 0; j < layer.bias.size(); ++j) layer.bias(j) = get();
    model.layers.push_back(std::move(layer));
  }
  return model;
}

}  // namespace tgia
