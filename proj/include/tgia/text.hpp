#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "tgia/error.hpp"

namespace tgia {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Lowercases ASCII, splits on every non-alphanumeric byte and drops tokens
/// shorter than two characters. Shared by embedding and use-rate scoring.
std::vector<std::string> tokenize(std::string_view text);

/// Built-in English stopword list. Includes the connective words used by the
/// deterministic generation backend, so they never enter a vocabulary.
const std::set<std::string>& default_stopwords();

/// One token per line; blank lines and lines starting with '#' are skipped.
std::set<std::string> load_stopwords(const std::filesystem::path& path);

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> words, std::set<std::string> stopwords);

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::set<std::string>& stopwords() const { return stopwords_; }
  const std::string& word(std::size_t j) const { return words_[j]; }
  std::optional<std::size_t> index_of(const std::string& token) const;

 private:
  std::vector<std::string> words_;
  std::set<std::string> stopwords_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Tokens ranked by corpus frequency (ties lexicographic), stopwords removed,
/// truncated to `size`.
Vocabulary build_vocabulary(const std::vector<std::string>& texts, std::size_t size,
                            const std::set<std::string>& stopwords = default_stopwords());

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path,
                           const std::set<std::string>& stopwords = default_stopwords());

enum class FeatureKind { Binary, Dense };

struct FeatureMatrix {
  Matrix rows;
  FeatureKind kind = FeatureKind::Binary;

  /// Throws ValidationError when entries violate the kind.
  void validate() const;
};

/// Presence bag-of-words row: entry j is 1 iff vocabulary word j occurs.
Vector embed_bow(std::string_view text, const Vocabulary& vocab);
FeatureMatrix embed_all(const std::vector<std::string>& texts, const Vocabulary& vocab);

/// Unit-normalizes each nonzero row; zero rows stay zero.
Matrix normalize_rows(const Matrix& m);

struct Cooccurrence {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> matrix;
  double sparsity = 0.0;  // fraction of true entries
};

Cooccurrence cooccurrence(const Matrix& binary);

struct WordTask {
  std::vector<std::string> specified;
  std::vector<std::string> prohibited;
  int max_words = 300;
  std::optional<std::vector<std::string>> topic;
};

/// Splits the vocabulary into the words of the 1-entries and the 0-entries.
/// Throws ValidationError if the row has no 1-entries.
WordTask derive_word_task(const Vector& row, const Vocabulary& vocab, int max_words,
                          std::optional<std::vector<std::string>> topic = std::nullopt);

// Dense matrix exchange. Binary layout: uint32 N, uint32 F, then N*F float32,
// all little-endian, row-major.
Matrix read_dense_csv(const std::filesystem::path& path);
Matrix read_dense_bin(const std::filesystem::path& path);
void write_dense_bin(const Matrix& m, const std::filesystem::path& path);
void write_dense_csv(const Matrix& m, const std::filesystem::path& path);
/// Dispatches on extension: ".csv" is text, anything else is the packed format.
Matrix read_dense(const std::filesystem::path& path);

}  // namespace tgia
