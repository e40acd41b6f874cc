#include "tgia/text.hpp"

#include <algorithm>
#include <cctype>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace tgia {

namespace fs = std::filesystem;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (current.size() >= 2) tokens.push_back(current);
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
      "are", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
      "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few",
      "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
      "herself", "him", "himself", "his", "how", "if", "in", "into", "is", "it", "its", "itself",
      "just", "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on",
      "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same",
      "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
      "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
      "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
      "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
      "yourselves", "none", "neither", "nothing", "article", "studies", "combination", "paper",
      "title", "abstract", "et", "al", "via", "using", "based", "we", "our", "use", "used"};
  return words;
}

std::set<std::string> load_stopwords(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (auto& tok : tokenize(line)) out.insert(std::move(tok));
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words, std::set<std::string> stopwords)
    : words_(std::move(words)), stopwords_(std::move(stopwords)) {
  for (std::size_t j = 0; j < words_.size(); ++j) {
    if (stopwords_.contains(words_[j])) {
      throw ValidationError("vocabulary word '" + words_[j] + "' is a stopword");
    }
    if (!index_.emplace(words_[j], j).second) {
      throw ValidationError("duplicate vocabulary word '" + words_[j] + "'");
    }
  }
}

std::optional<std::size_t> Vocabulary::index_of(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vocabulary build_vocabulary(const std::vector<std::string>& texts, std::size_t size,
                            const std::set<std::string>& stopwords) {
  if (size < 1) throw ValidationError("vocabulary size must be >= 1");
  if (texts.empty()) throw ValidationError("empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& text : texts) {
    for (auto& tok : tokenize(text)) {
      if (!stopwords.contains(tok)) ++freq[tok];
    }
  }
  if (freq.empty()) throw ValidationError("empty corpus after stopword removal");
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > size) ranked.resize(size);
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [w, _] : ranked) words.push_back(w);
  return Vocabulary(std::move(words), stopwords);
}

void save_vocabulary(const Vocabulary& vocab, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& w : vocab.words()) out << w << '\n';
}

Vocabulary load_vocabulary(const fs::path& path, const std::set<std::string>& stopwords) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return Vocabulary(std::move(words), stopwords);
}

void FeatureMatrix::validate() const {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      const double x = rows(i, j);
      if (kind == FeatureKind::Binary && x != 0.0 && x != 1.0) {
        throw ValidationError("binary feature matrix has entry " + std::to_string(x) + " at (" +
                              std::to_string(i) + "," + std::to_string(j) + ")");
      }
      if (!std::isfinite(x)) {
        throw ValidationError("non-finite feature at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
      }
    }
  }
}

Vector embed_bow(std::string_view text, const Vocabulary& vocab) {
  Vector row = Vector::Zero(static_cast<Eigen::Index>(vocab.size()));
  for (const auto& tok : tokenize(text)) {
    if (auto j = vocab.index_of(tok)) row(static_cast<Eigen::Index>(*j)) = 1.0;
  }
  return row;
}

FeatureMatrix embed_all(const std::vector<std::string>& texts, const Vocabulary& vocab) {
  FeatureMatrix fm;
  fm.kind = FeatureKind::Binary;
  fm.rows.resize(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t i = 0; i < texts.size(); ++i) {
    fm.rows.row(static_cast<Eigen::Index>(i)) = embed_bow(texts[i], vocab).transpose();
  }
  return fm;
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

Cooccurrence cooccurrence(const Matrix& binary) {
  const Matrix gram = binary.transpose() * binary;
  Cooccurrence c;
  c.matrix = gram.array() > 0.0;
  const auto f = static_cast<double>(binary.cols());
  c.sparsity = f > 0 ? static_cast<double>(c.matrix.count()) / (f * f) : 0.0;
  return c;
}

WordTask derive_word_task(const Vector& row, const Vocabulary& vocab, int max_words,
                          std::optional<std::vector<std::string>> topic) {
  if (static_cast<std::size_t>(row.size()) != vocab.size()) {
    throw ValidationError("row length " + std::to_string(row.size()) +
                          " does not match vocabulary size " + std::to_string(vocab.size()));
  }
  WordTask task;
  task.max_words = max_words;
  task.topic = std::move(topic);
  for (std::size_t j = 0; j < vocab.size(); ++j) {
    if (row(static_cast<Eigen::Index>(j)) != 0.0) {
      task.specified.push_back(vocab.word(j));
    } else {
      task.prohibited.push_back(vocab.word(j));
    }
  }
  if (task.specified.empty()) throw ValidationError("empty generation task");
  return task;
}

Matrix read_dense_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
        if (cell.find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw ParseError(path.string(), lineno, "non-numeric cell '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(path.string(), lineno, "ragged row");
    }
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto f = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  Matrix m(n, f);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < f; ++j) {
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return m;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "packed matrix I/O assumes a little-endian host");

template <typename T>
T read_pod(std::istream& in, const fs::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError(path.string(), 0, "truncated packed matrix");
  return value;
}

}  // namespace

Matrix read_dense_bin(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const auto n = read_pod<std::uint32_t>(in, path);
  const auto f = read_pod<std::uint32_t>(in, path);
  Matrix m(n, f);
  std::vector<float> buf(f);
  for (std::uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(f * sizeof(float)));
    if (!in) throw ParseError(path.string(), 0, "truncated packed matrix");
    for (std::uint32_t j = 0; j < f; ++j) m(i, j) = buf[j];
  }
  return m;
}

void write_dense_bin(const Matrix& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const auto n = static_cast<std::uint32_t>(m.rows());
  const auto f = static_cast<std::uint32_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&f), sizeof f);
  std::vector<float> buf(f);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < f; ++j) buf[j] = static_cast<float>(m(i, j));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(f * sizeof(float)));
  }
}

void write_dense_csv(const Matrix& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
}

Matrix read_dense(const fs::path& path) {
  return path.extension() == ".csv" ? read_dense_csv(path) : read_dense_bin(path);
}

}  // namespace tgia
