#include "tgia/wordsmith.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace tgia {

using nlohmann::json;

PromptKind parse_prompt_kind(const std::string& name) {
  if (name == "heterophily") return PromptKind::Heterophily;
  if (name == "random") return PromptKind::Random;
  if (name == "mixing") return PromptKind::Mixing;
  if (name == "wtgia") return PromptKind::Wtgia;
  if (name == "wtgia_topic") return PromptKind::WtgiaTopic;
  throw ValidationError("unknown prompt kind '" + name + "'");
}

std::string to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::Heterophily: return "heterophily";
    case PromptKind::Random: return "random";
    case PromptKind::Mixing: return "mixing";
    case PromptKind::Wtgia: return "wtgia";
    case PromptKind::WtgiaTopic: return "wtgia_topic";
  }
  return "unknown";
}

namespace {

std::string join(const std::vector<std::string>& words, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

void require(bool ok, const char* slot) {
  if (!ok) throw ValidationError(std::string("prompt slot missing: ") + slot);
}

void class_header(std::ostringstream& os, const std::vector<std::string>& names) {
  os << "There are " << names.size() << " types of paper, which are " << join(names, ", ") << ".\n";
}

void length_limit(std::ostringstream& os, const PromptTemplate& t) {
  os << "Length limit: Min: " << t.min_words << " words, Max: " << t.max_words << " words.\n";
}

void word_instructions(std::ostringstream& os, const WordTask& task) {
  os << "Ensure the generated content explicitly contains the following words: "
     << join(task.specified, ", ") << ".\n"
     << "These words should appear as specified, without using synonyms, plural forms, or other "
        "variants.\n"
     << "Length limit: " << task.max_words << " words.\n"
     << "Output the TITLE and ABSTRACT without explanation.\n"
     << "TITLE:...\n"
     << "ABSTRACT:...";
}

}  // namespace

std::string build_prompt(const PromptTemplate& t, const std::optional<WordTask>& task) {
  std::ostringstream os;
  const bool vanilla = t.kind == PromptKind::Heterophily || t.kind == PromptKind::Random ||
                       t.kind == PromptKind::Mixing;
  if (vanilla) {
    require(!t.class_names.empty(), "category_names");
    require(t.max_words > 0 && t.min_words >= 0 && t.min_words <= t.max_words, "LMIN/LMAX");
    require(!t.inj_node.empty(), "inj_node");
  }
  switch (t.kind) {
    case PromptKind::Heterophily:
      require(!t.positive_examples.empty(), "positive example_paper_content");
      require(!t.examples.empty(), "negative example_paper_content");
      os << "Task: Paper Generation.\n";
      class_header(os, t.class_names);
      os << "Positive Examples of the papers are:\n";
      for (const auto& ex : t.positive_examples) {
        os << "Content: " << ex.content << "\nType: " << ex.label << "\n";
      }
      os << "Negative Examples of the papers are:\n";
      for (const auto& ex : t.examples) os << "Content: " << ex << "\n";
      os << "Generate a title and an abstract for paper " << t.inj_node
         << " which is dissimilar to the negative examples, but belongs to at least one of the "
            "types in "
         << join(t.class_names, ", ") << " similar to positive examples.\n";
      length_limit(os, t);
      os << "Title: ..., Abstract: ...";
      break;
    case PromptKind::Mixing:
      require(!t.examples.empty(), "example_paper_content");
      os << "Task: Paper Generation.\n";
      class_header(os, t.class_names);
      os << "Examples of the papers are:\n";
      for (const auto& ex : t.examples) os << "Content: " << ex << "\n";
      os << "Generate a title and an abstract for paper " << t.inj_node
         << " that belong to all the above paper types.\n"
         << "The generated content should be able to be classified into any type of paper.\n";
      length_limit(os, t);
      os << "Title: ..., Abstract: ...";
      break;
    case PromptKind::Random:
      os << "Task: Paper Generation.\n";
      class_header(os, t.class_names);
      os << "Generate a title and an abstract for paper " << t.inj_node
         << " that does not belong to any one of the paper types.\n"
         << "For example, the paper could belong to ['history', 'art', 'philosophy', 'sports', "
            "'music'] and types like that.\n";
      length_limit(os, t);
      os << "Title: ..., Abstract: ...";
      break;
    case PromptKind::Wtgia:
      require(task.has_value() && !task->specified.empty(), "use_words");
      os << "Generate a title and an abstract for an academic article.\n";
      word_instructions(os, *task);
      break;
    case PromptKind::WtgiaTopic: {
      require(task.has_value() && !task->specified.empty(), "use_words");
      const auto& names = task->topic.has_value() && !task->topic->empty() ? *task->topic : t.class_names;
      require(!names.empty(), "category_names");
      class_header(os, names);
      os << "Generate a title and an abstract for paper belongs to one of the given categories.\n";
      word_instructions(os, *task);
      break;
    }
  }
  return os.str();
}

double use_rate(std::string_view text, const std::vector<std::string>& specified) {
  if (specified.empty()) throw ValidationError("use_rate needs at least one specified word");
  const auto tokens = tokenize(text);
  const std::set<std::string> present(tokens.begin(), tokens.end());
  std::size_t used = 0;
  for (const auto& w : specified) used += present.contains(w) ? 1 : 0;
  return static_cast<double>(used) / static_cast<double>(specified.size());
}

std::vector<std::string> enforce_prohibited(std::string_view text,
                                            const std::vector<std::string>& prohibited) {
  const auto tokens = tokenize(text);
  const std::set<std::string> present(tokens.begin(), tokens.end());
  std::vector<std::string> out;
  std::set<std::string> listed;
  for (const auto& w : prohibited) {
    if (present.contains(w) && listed.insert(w).second) out.push_back(w);
  }
  return out;
}

std::string truncate_words(const std::string& text, int max_words) {
  if (max_words <= 0) return text;
  std::istringstream is(text);
  std::vector<std::string> words;
  std::string w;
  while (is >> w) words.push_back(w);
  if (words.size() <= static_cast<std::size_t>(max_words)) return text;
  words.resize(static_cast<std::size_t>(max_words));
  return join(words, " ");
}

std::string DeterministicBackend::complete(const GenerationRequest& request) {
  if (request.task == nullptr || request.task->specified.empty()) {
    return "This article studies none of these in combination.";
  }
  const auto& w = request.task->specified;
  std::string body;
  if (w.size() == 1) {
    body = w[0];
  } else {
    for (std::size_t i = 0; i + 1 < w.size(); ++i) body += w[i] + (w.size() > 2 ? ", " : " ");
    body += "and " + w.back();
  }
  return "This article studies " + body + " in combination.";
}

RemoteConfig RemoteConfig::from_env() {
  RemoteConfig c;
  if (const char* e = std::getenv("GIA_LLM_ENDPOINT")) c.endpoint = e;
  if (const char* t = std::getenv("GIA_LLM_TOKEN")) c.token = t;
  return c;
}

RemoteChatBackend::RemoteChatBackend(RemoteConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw ValidationError("remote backend needs an endpoint (GIA_LLM_ENDPOINT)");
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint must include a scheme");
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  origin_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
}

std::string RemoteChatBackend::complete(const GenerationRequest& request) {
  json body;
  body["model"] = config_.model;
  body["temperature"] = config_.temperature;
  body["max_tokens"] = request.max_tokens;
  body["messages"] = json::array();
  for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.backoff * (1 << (attempt - 1)));
    httplib::Client client(origin_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);
    auto res = client.Post(path_, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error("chat completion rejected with HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      const json reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(std::string("malformed chat completion response: ") + e.what());
    }
  }
  throw Error("chat completion failed after " + std::to_string(config_.max_retries + 1) +
              " attempts: " + last_error);
}

GenerationResult generate_with_correction(const WordTask& task, const PromptTemplate& tmpl,
                                          GenerationBackend& backend, int max_rounds,
                                          std::uint64_t seed) {
  if (max_rounds < 1) throw ValidationError("max_rounds must be >= 1");
  const std::string prompt = build_prompt(tmpl, task);
  GenerationRequest req;
  req.task = &task;
  req.max_tokens = std::max(1, task.max_words * 4 / 3 + 1);
  req.messages.push_back({"user", prompt});

  std::optional<GenerationResult> best;
  int rounds = 0;
  for (int r = 0; r < max_rounds; ++r) {
    req.seed = seed + static_cast<std::uint64_t>(r);
    std::string text;
    try {
      text = backend.complete(req);
    } catch (const Error& e) {
      if (best) best->rounds_used = rounds;
      throw GenerationError(e.what(), best);
    }
    text = truncate_words(text, task.max_words);
    const double rate = use_rate(text, task.specified);
    ++rounds;
    if (!best || rate > best->use_rate) {
      best = GenerationResult{text, rate, {}, 0, r + 1};
    }
    if (rate >= 1.0) break;
    std::vector<std::string> missing;
    const auto tokens = tokenize(text);
    const std::set<std::string> present(tokens.begin(), tokens.end());
    for (const auto& w : task.specified) {
      if (!present.contains(w)) missing.push_back(w);
    }
    req.messages.push_back({"assistant", text});
    req.messages.push_back({"user", prompt + "\nYou omitted: " + join(missing, ", ")});
  }
  best->rounds_used = rounds;
  best->prohibited_violations = enforce_prohibited(best->text, task.prohibited);
  return *best;
}

std::string generate_vanilla(const PromptTemplate& tmpl, GenerationBackend& backend,
                             std::uint64_t seed) {
  GenerationRequest req;
  req.seed = seed;
  req.max_tokens = std::max(1, tmpl.max_words * 4 / 3 + 1);
  req.messages.push_back({"user", build_prompt(tmpl)});
  return truncate_words(backend.complete(req), tmpl.max_words);
}

void write_generated(const std::vector<GeneratedRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& rec : records) {
    json obj;
    obj["injected_id"] = rec.injected_id;
    obj["text"] = rec.result.text;
    obj["use_rate"] = rec.result.use_rate;
    obj["violations"] = rec.result.prohibited_violations;
    obj["rounds_used"] = rec.result.rounds_used;
    out << obj.dump() << '\n';
  }
}

std::vector<GeneratedRecord> read_generated(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<GeneratedRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json obj = json::parse(line);
      GeneratedRecord rec;
      rec.injected_id = obj.at("injected_id").get<long long>();
      rec.result.text = obj.at("text").get<std::string>();
      rec.result.use_rate = obj.value("use_rate", 0.0);
      rec.result.prohibited_violations = obj.value("violations", std::vector<std::string>{});
      rec.result.rounds_used = obj.value("rounds_used", 0);
      out.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return out;
}

}  // namespace tgia
