#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <thread>

#include "support.hpp"
#include "tgia/wordsmith.hpp"

// after Eigen: resolv.h defines a `_res` macro that collides with Eigen parameter names
#include "httplib.h"
#include "json.hpp"

using namespace tgia;
using testing::TempDir;

namespace {

Vocabulary vocab_of(std::vector<std::string> words) { return Vocabulary(std::move(words), {}); }

WordTask task_of(std::vector<std::string> specified, std::vector<std::string> prohibited = {}, int max_words = 300) {
  WordTask t;
  t.specified = std::move(specified);
  t.prohibited = std::move(prohibited);
  t.max_words = max_words;
  return t;
}

PromptTemplate vanilla(PromptKind kind) {
  PromptTemplate t;
  t.kind = kind;
  t.class_names = {"Theory", "Rule_Learning", "Neural_Networks"};
  t.min_words = 50;
  t.max_words = 300;
  t.inj_node = "inj_0";
  return t;
}

// Replies with pre-scripted texts in order; records every request.
class ScriptedBackend final : public GenerationBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> replies, bool fail_after = false)
      : replies_(std::move(replies)), fail_after_(fail_after) {}
  std::string name() const override { return "scripted"; }
  bool supports_masking() const override { return false; }
  std::string complete(const GenerationRequest& request) override {
    requests.push_back(request);
    if (next_ >= replies_.size()) {
      if (fail_after_) throw Error("backend down");
      return replies_.back();
    }
    return replies_[next_++];
  }
  std::vector<GenerationRequest> requests;

 private:
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
  bool fail_after_;
};

// Local chat-completion endpoint answering with scripted HTTP statuses.
class MockServer {
 public:
  explicit MockServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const std::size_t i = hits_++;
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      const int status = i < statuses_.size() ? statuses_[i] : 200;
      res.status = status;
      if (status == 200) {
        const auto body = nlohmann::json::parse(req.body);
        nlohmann::json reply;
        reply["choices"] = {{{"message", {{"role", "assistant"},
                                          {"content", "echo " + body["messages"].back()["content"].get<std::string>().substr(0, 20)}}}}};
        res.set_content(reply.dump(), "application/json");
      } else {
        res.set_content("{\"error\":\"nope\"}", "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  std::size_t hits() const { return hits_; }
  std::string last_body;
  std::string last_auth;

 private:
  httplib::Server server_;
  std::vector<int> statuses_;
  std::atomic<std::size_t> hits_{0};
  int port_ = 0;
  std::thread thread_;
};

RemoteConfig fast_config(const std::string& endpoint) {
  RemoteConfig c;
  c.endpoint = endpoint;
  c.token = "secret";
  c.max_retries = 3;
  c.backoff = std::chrono::milliseconds(1);
  c.timeout = std::chrono::milliseconds(2000);
  return c;
}

GenerationRequest simple_request() {
  GenerationRequest r;
  r.messages.push_back({"user", "Generate a title"});
  return r;
}

}  // namespace

TEST_CASE("wtgia prompt carries the word instruction") {
  PromptTemplate t;
  t.kind = PromptKind::Wtgia;
  const std::string p = build_prompt(t, task_of({"neural", "tree"}));
  CHECK(p.find("Ensure the generated content explicitly contains the following words: neural, tree.") !=
        std::string::npos);
  CHECK(p.find("These words should appear as specified, without using synonyms, plural forms, or other variants.") !=
        std::string::npos);
  CHECK(build_prompt(t, task_of({"neural", "tree"})) == p);
  CHECK_THROWS_AS(build_prompt(t), ValidationError);
}

TEST_CASE("topic prompt lists the categories") {
  PromptTemplate t;
  t.kind = PromptKind::WtgiaTopic;
  WordTask task = task_of({"neural"});
  task.topic = std::vector<std::string>{"Theory", "Case_Based"};
  const std::string p = build_prompt(t, task);
  CHECK(p.find("There are 2 types of paper, which are Theory, Case_Based.") != std::string::npos);
  CHECK(p.find("belongs to one of the given categories") != std::string::npos);
  CHECK_THROWS_AS(build_prompt(t, task_of({"neural"})), ValidationError);  // no categories anywhere
}

TEST_CASE("vanilla prompts") {
  PromptTemplate mix = vanilla(PromptKind::Mixing);
  mix.examples = {"a", "b", "c"};
  const std::string m = build_prompt(mix);
  CHECK(m.find("Theory, Rule_Learning, Neural_Networks") != std::string::npos);
  CHECK(m.find("The generated content should be able to be classified into any type of paper.") != std::string::npos);
  CHECK(m.find("Length limit: Min: 50 words, Max: 300 words.") != std::string::npos);
  CHECK(build_prompt(mix) == m);

  PromptTemplate het = vanilla(PromptKind::Heterophily);
  CHECK_THROWS_AS(build_prompt(het), ValidationError);
  het.positive_examples = {{"pos text", "Theory"}};
  het.examples = {"neg text"};
  const std::string h = build_prompt(het);
  CHECK(h.find("Content: pos text\nType: Theory") != std::string::npos);
  CHECK(h.find("Negative Examples") != std::string::npos);

  const std::string r = build_prompt(vanilla(PromptKind::Random));
  CHECK(r.find("does not belong to any one of the paper types") != std::string::npos);
  PromptTemplate nameless = vanilla(PromptKind::Random);
  nameless.class_names.clear();
  CHECK_THROWS_AS(build_prompt(nameless), ValidationError);
  CHECK(parse_prompt_kind("mixing") == PromptKind::Mixing);
  CHECK(to_string(PromptKind::WtgiaTopic) == "wtgia_topic");
  CHECK_THROWS_AS(parse_prompt_kind("gpt"), ValidationError);
}

TEST_CASE("use rate") {
  CHECK(use_rate("a b c", {"aa", "bb", "cc", "dd"}) == 0.0);
  CHECK(use_rate("aa bb, cc!", {"aa", "bb", "cc", "dd"}) == 0.75);
  CHECK(use_rate("aa bb cc dd", {"aa", "bb", "cc", "dd"}) == 1.0);
  CHECK(use_rate("graph networks", {"network"}) == 0.0);
  CHECK(use_rate("net net net", {"net", "gain"}) == 0.5);
  CHECK_THROWS_AS(use_rate("x", {}), ValidationError);
}

TEST_CASE("property: use rate is monotone under appending specified words") {
  Rng rng(8);
  std::vector<std::string> pool;
  for (int i = 0; i < 15; ++i) pool.push_back("w" + std::to_string(i));
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> spec;
    for (const auto& w : pool) {
      if (uniform01(rng) < 0.4) spec.push_back(w);
    }
    if (spec.empty()) spec.push_back(pool[0]);
    std::string text;
    for (int i = 0; i < 5; ++i) text += pool[uniform_index(rng, pool.size())] + " ";
    const double before = use_rate(text, spec);
    const std::string more = text + " " + spec[uniform_index(rng, spec.size())];
    CHECK(use_rate(more, spec) >= before);
  }
}

TEST_CASE("prohibited words") {
  CHECK(enforce_prohibited("graph neural", {"tree", "forest"}).empty());
  CHECK(enforce_prohibited("tree and tree again", {"tree", "forest"}) == std::vector<std::string>{"tree"});
  CHECK(enforce_prohibited("forest tree", {"tree", "forest"}) == std::vector<std::string>{"tree", "forest"});
}

TEST_CASE("truncation") {
  CHECK(truncate_words("a b c d", 2) == "a b");
  CHECK(truncate_words("a  b", 5) == "a  b");
  CHECK(truncate_words("a b", 0) == "a b");
}

TEST_CASE("deterministic backend") {
  DeterministicBackend be;
  CHECK(be.supports_masking());
  const WordTask t = task_of({"neural", "tree", "graph"}, {"forest"});
  PromptTemplate tmpl;
  const GenerationResult r = generate_with_correction(t, tmpl, be);
  CHECK(r.text == "This article studies neural, tree, and graph in combination.");
  CHECK(r.use_rate == 1.0);
  CHECK(r.prohibited_violations.empty());
  CHECK(r.rounds_used == 1);
  CHECK(r.selected_round == 1);
  CHECK(generate_with_correction(task_of({"solo"}), tmpl, be).text == "This article studies solo in combination.");
  CHECK(generate_with_correction(task_of({"aa", "bb"}), tmpl, be).text == "This article studies aa and bb in combination.");
  // skeleton words are stopwords
  for (const auto& tok : tokenize(be.complete(GenerationRequest{}))) CHECK(default_stopwords().contains(tok));
}

TEST_CASE("property: deterministic round-trip restores the binary row") {
  Rng rng(31);
  std::vector<std::string> words;
  for (int j = 0; j < 40; ++j) words.push_back("token" + std::to_string(j));
  const Vocabulary v = vocab_of(words);
  DeterministicBackend be;
  for (int trial = 0; trial < 100; ++trial) {
    Vector row = testing::random_binary(40, 1, rng, 0.15).col(0);
    row(static_cast<Eigen::Index>(uniform_index(rng, 40))) = 1.0;
    const WordTask t = derive_word_task(row, v, 300);
    const GenerationResult r = generate_with_correction(t, PromptTemplate{}, be, 3, trial);
    CHECK(embed_bow(r.text, v) == row);
    CHECK(r.use_rate == 1.0);
    CHECK(r.prohibited_violations.empty());
    CHECK(generate_with_correction(t, PromptTemplate{}, be, 3, trial).text == r.text);
  }
}

TEST_CASE("thirty specified words stay inside the 300-word limit") {
  std::vector<std::string> spec;
  for (int i = 0; i < 30; ++i) spec.push_back("word" + std::to_string(i));
  DeterministicBackend be;
  const GenerationResult r = generate_with_correction(task_of(spec, {}, 300), PromptTemplate{}, be);
  CHECK(tokenize(r.text).size() <= 300);
  CHECK(r.use_rate == 1.0);

  std::string flood;
  for (int i = 0; i < 400; ++i) flood += "filler ";
  ScriptedBackend chatty({flood});
  const GenerationResult t = generate_with_correction(task_of({"filler"}, {}, 300), PromptTemplate{}, chatty, 1);
  CHECK(tokenize(t.text).size() == 300);
}

TEST_CASE("correction keeps the best round and names the omitted words") {
  ScriptedBackend be({"aa bb cc dd ee", "aa bb cc dd ee ff gg hh", "aa"});
  const WordTask t = task_of({"aa", "bb", "cc", "dd", "ee", "ff", "gg", "hh", "ii", "jj"}, {"zz"});
  PromptTemplate tmpl;
  const GenerationResult r = generate_with_correction(t, tmpl, be, 2);
  CHECK(r.use_rate == doctest::Approx(0.8));
  CHECK(r.rounds_used == 2);
  CHECK(r.selected_round == 2);
  REQUIRE(be.requests.size() == 2);
  const std::string& retry = be.requests[1].messages.back().content;
  CHECK(retry.find("You omitted: ff, gg, hh, ii, jj") != std::string::npos);
  CHECK(be.requests[1].messages[1].role == "assistant");

  // a worse later round never replaces the best
  ScriptedBackend worse({"aa bb", "aa", "cc"});
  const GenerationResult w = generate_with_correction(task_of({"aa", "bb", "cc", "dd"}), tmpl, worse, 3);
  CHECK(w.use_rate == 0.5);
  CHECK(w.selected_round == 1);
  CHECK(w.rounds_used == 3);

  // violations are reported, not fixed, for a non-masking backend
  ScriptedBackend leaky({"aa zz"});
  const GenerationResult l = generate_with_correction(task_of({"aa"}, {"zz"}), tmpl, leaky, 3);
  CHECK(l.prohibited_violations == std::vector<std::string>{"zz"});
  CHECK(l.rounds_used == 1);
}

TEST_CASE("property: correction never returns less than any observed round") {
  Rng rng(90);
  const std::vector<std::string> spec = {"aa", "bb", "cc", "dd", "ee"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> replies;
    double best = 0.0;
    for (int r = 0; r < 3; ++r) {
      std::string text;
      for (const auto& w : spec) {
        if (uniform01(rng) < 0.5) text += w + " ";
      }
      text += "filler";
      best = std::max(best, use_rate(text, spec));
      replies.push_back(text);
      if (use_rate(text, spec) == 1.0) break;
    }
    ScriptedBackend be(replies);
    CHECK(generate_with_correction(task_of(spec), PromptTemplate{}, be, 3).use_rate == best);
  }
}

TEST_CASE("backend failure carries the partial result") {
  ScriptedBackend be({"aa"}, true);
  try {
    generate_with_correction(task_of({"aa", "bb"}), PromptTemplate{}, be, 3);
    FAIL("expected GenerationError");
  } catch (const GenerationError& e) {
    REQUIRE(e.partial.has_value());
    CHECK(e.partial->text == "aa");
    CHECK(e.partial->rounds_used == 1);
  }
  ScriptedBackend dead({}, true);
  try {
    generate_with_correction(task_of({"aa"}), PromptTemplate{}, dead, 3);
    FAIL("expected GenerationError");
  } catch (const GenerationError& e) {
    CHECK_FALSE(e.partial.has_value());
  }
}

TEST_CASE("remote backend retries 429 and 5xx") {
  MockServer server({429, 503});
  RemoteChatBackend be(fast_config(server.endpoint()));
  CHECK(be.complete(simple_request()) == "echo Generate a title");
  CHECK(server.hits() == 3);
  const auto body = nlohmann::json::parse(server.last_body);
  CHECK(body["model"] == "gpt-3.5-turbo-1106");
  CHECK(body["messages"][0]["role"] == "user");
  CHECK(body.contains("temperature"));
  CHECK(body.contains("max_tokens"));
  CHECK(server.last_auth == "Bearer secret");
  CHECK_FALSE(be.supports_masking());
}

TEST_CASE("remote backend gives up after bounded retries") {
  MockServer server({500, 500, 500, 500, 500});
  RemoteChatBackend be(fast_config(server.endpoint()));
  CHECK_THROWS_WITH_AS(be.complete(simple_request()), doctest::Contains("after 4 attempts"), Error);
  CHECK(server.hits() == 4);
}

TEST_CASE("remote backend does not retry client errors") {
  MockServer server({400});
  RemoteChatBackend be(fast_config(server.endpoint()));
  CHECK_THROWS_WITH_AS(be.complete(simple_request()), doctest::Contains("HTTP 400"), Error);
  CHECK(server.hits() == 1);
}

TEST_CASE("remote transport failure surfaces through correction") {
  std::string endpoint;
  {
    MockServer gone({});
    endpoint = gone.endpoint();
  }  // port now closed
  RemoteConfig cfg = fast_config(endpoint);
  cfg.max_retries = 1;
  RemoteChatBackend be(cfg);
  CHECK_THROWS_AS(generate_with_correction(task_of({"aa"}), PromptTemplate{}, be, 3), GenerationError);
  CHECK_THROWS_AS(RemoteChatBackend(RemoteConfig{}), ValidationError);
}

TEST_CASE("generated records round-trip") {
  TempDir dir;
  std::vector<GeneratedRecord> recs(2);
  recs[0].injected_id = 200;
  recs[0].result = {"text one", 0.5, {"bad"}, 2, 1};
  recs[1].injected_id = 201;
  recs[1].result = {"", 0.0, {}, 0, 0};
  write_generated(recs, dir / "g.jsonl");
  const auto back = read_generated(dir / "g.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].injected_id == 200);
  CHECK(back[0].result.text == "text one");
  CHECK(back[0].result.prohibited_violations == std::vector<std::string>{"bad"});
  CHECK(back[0].result.rounds_used == 2);
  testing::write_file(dir / "bad.jsonl", "{\"injected_id\":1,\"text\":\"a\"}\n{oops\n");
  try {
    read_generated(dir / "bad.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
  }
}
