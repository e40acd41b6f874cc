#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "tgia/graph.hpp"
#include "tgia/random.hpp"
#include "tgia/text.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tgia_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Random connected-ish graph: a path plus extra random edges, two classes,
// train/val/test split round-robin.
inline tgia::TextGraph random_graph(tgia::NodeId n, int extra_edges, tgia::Rng& rng, int classes = 2) {
  std::vector<std::string> texts(n);
  std::vector<int> labels(n);
  for (tgia::NodeId i = 0; i < n; ++i) {
    texts[i] = "node " + std::to_string(i);
    labels[i] = static_cast<int>(i % classes);
  }
  std::vector<tgia::Edge> edges;
  for (tgia::NodeId i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  for (int e = 0; e < extra_edges; ++e) {
    const auto a = static_cast<tgia::NodeId>(tgia::uniform_index(rng, n));
    const auto b = static_cast<tgia::NodeId>(tgia::uniform_index(rng, n));
    if (a != b) edges.emplace_back(a, b);
  }
  tgia::Splits s;
  for (tgia::NodeId i = 0; i < n; ++i) {
    (i % 3 == 0 ? s.train : i % 3 == 1 ? s.val : s.test).push_back(i);
  }
  return tgia::TextGraph(std::move(texts), std::move(labels), std::move(edges), std::move(s));
}

inline tgia::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, tgia::Rng& rng, double scale = 1.0) {
  tgia::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * tgia::standard_normal(rng);
  }
  return m;
}

inline tgia::Matrix random_binary(Eigen::Index rows, Eigen::Index cols, tgia::Rng& rng, double p = 0.3) {
  tgia::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = tgia::uniform01(rng) < p ? 1.0 : 0.0;
  }
  return m;
}

}  // namespace testing
