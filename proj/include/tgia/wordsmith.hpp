#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tgia/error.hpp"
#include "tgia/text.hpp"

namespace tgia {

enum class PromptKind { Heterophily, Random, Mixing, Wtgia, WtgiaTopic };

PromptKind parse_prompt_kind(const std::string& name);
std::string to_string(PromptKind kind);

struct LabelledExample {
  std::string content;
  std::string label;
};

struct PromptTemplate {
  PromptKind kind = PromptKind::Wtgia;
  std::vector<std::string> class_names;
  int min_words = 0;   // LMIN, vanilla kinds
  int max_words = 0;   // LMAX for vanilla kinds; word-task kinds use the task's limit
  std::vector<LabelledExample> positive_examples;  // heterophily
  std::vector<std::string> examples;               // mixing, and heterophily negatives
  std::string inj_node;                            // identifier for the generated paper
};

/// Renders the template for `kind`. Throws ValidationError when a slot the kind
/// needs is empty.
std::string build_prompt(const PromptTemplate& tmpl, const std::optional<WordTask>& task = std::nullopt);

/// Fraction of `specified` words occurring as tokens of `text`.
double use_rate(std::string_view text, const std::vector<std::string>& specified);

/// Prohibited words present in `text`, each listed once, in `prohibited` order.
std::vector<std::string> enforce_prohibited(std::string_view text,
                                            const std::vector<std::string>& prohibited);

/// Keeps the first `max_words` whitespace-separated words.
std::string truncate_words(const std::string& text, int max_words);

struct ChatMessage {
  std::string role;
  std::string content;
};

struct GenerationRequest {
  std::vector<ChatMessage> messages;
  const WordTask* task = nullptr;  // set for word-to-text generation
  std::uint64_t seed = 0;
  int max_tokens = 500;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual std::string name() const = 0;
  /// True when the backend guarantees no prohibited word reaches the output.
  virtual bool supports_masking() const = 0;
  virtual std::string complete(const GenerationRequest& request) = 0;
};

/// Builds text directly from the specified words inside a fixed connective
/// skeleton whose words are all default stopwords. Pure and thread-safe.
class DeterministicBackend final : public GenerationBackend {
 public:
  std::string name() const override { return "deterministic"; }
  bool supports_masking() const override { return true; }
  std::string complete(const GenerationRequest& request) override;
};

struct RemoteConfig {
  std::string endpoint;  // e.g. http://host:8080/v1/chat/completions
  std::string model = "gpt-3.5-turbo-1106";
  std::string token;
  double temperature = 0.7;
  int max_retries = 3;
  std::chrono::milliseconds timeout{60000};
  std::chrono::milliseconds backoff{500};

  /// Reads GIA_LLM_ENDPOINT and GIA_LLM_TOKEN.
  static RemoteConfig from_env();
};

/// Chat-completion HTTP client. Retries transport failures, 429 and 5xx.
class RemoteChatBackend final : public GenerationBackend {
 public:
  explicit RemoteChatBackend(RemoteConfig config);
  std::string name() const override { return "remote:" + config_.model; }
  bool supports_masking() const override { return false; }
  std::string complete(const GenerationRequest& request) override;

 private:
  RemoteConfig config_;
  std::string origin_;
  std::string path_;
};

struct GenerationResult {
  std::string text;
  double use_rate = 0.0;
  std::vector<std::string> prohibited_violations;
  int rounds_used = 0;     // dialog rounds executed
  int selected_round = 0;  // 1-based round the text came from
};

/// Raised when the backend fails; carries the best result seen so far.
struct GenerationError : Error {
  GenerationError(const std::string& what, std::optional<GenerationResult> partial)
      : Error(what), partial(std::move(partial)) {}
  std::optional<GenerationResult> partial;
};

/// Up to `max_rounds` dialog rounds; each retry re-sends the instruction with
/// the omitted words appended. Returns the round with the highest use rate
/// (earliest on ties).
GenerationResult generate_with_correction(const WordTask& task, const PromptTemplate& tmpl,
                                          GenerationBackend& backend, int max_rounds = 3,
                                          std::uint64_t seed = 0);

/// Single-round generation for the vanilla prompt kinds, truncated to LMAX.
std::string generate_vanilla(const PromptTemplate& tmpl, GenerationBackend& backend,
                             std::uint64_t seed = 0);

struct GeneratedRecord {
  long long injected_id = 0;
  GenerationResult result;
};

/// Line-delimited {injected_id, text, use_rate, violations, rounds_used}.
void write_generated(const std::vector<GeneratedRecord>& records, const std::filesystem::path& path);
std::vector<GeneratedRecord> read_generated(const std::filesystem::path& path);

}  // namespace tgia
