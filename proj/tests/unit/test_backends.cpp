#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "crd/backends.hpp"
#include "crd/ingest.hpp"
#include "crd/metadata2crd.hpp"
#include "crd/sentinels.hpp"
#include "keyword_grep.hpp"
#include "support.hpp"

using namespace crd;
using namespace std::chrono_literals;

namespace {

GenerationRequest text_request(std::string text, std::optional<std::int64_t> seed = std::nullopt) {
  GenerationRequest r;
  r.user_parts.push_back(TextPart{std::move(text)});
  r.seed = seed;
  return r;
}

// Fails the first `failures` sends with the given error type, then answers.
template <typename Err>
class FlakyTransport : public Transport {
 public:
  explicit FlakyTransport(int failures) : failures_(failures) {}
  std::string id() const override { return "flaky"; }
  GenerationResponse send(const GenerationRequest&, std::span<const LoadedImage>) override {
    ++calls;
    if (calls <= failures_) throw Err("boom");
    return {"ok", FinishReason::stop, 0, ""};
  }
  int calls = 0;

 private:
  int failures_;
};

class SlowTransport : public Transport {
 public:
  std::string id() const override { return "slow"; }
  GenerationResponse send(const GenerationRequest&, std::span<const LoadedImage>) override {
    const auto now = ++inflight;
    auto prev = observed_peak.load();
    while (now > prev && !observed_peak.compare_exchange_weak(prev, now)) {}
    std::this_thread::sleep_for(2ms);
    --inflight;
    ++calls;
    return {"ok", FinishReason::stop, 0, ""};
  }
  std::atomic<int> inflight{0}, observed_peak{0}, calls{0};
};

class CountingTransport : public Transport {
 public:
  std::string id() const override { return "counting"; }
  GenerationResponse send(const GenerationRequest&, std::span<const LoadedImage> images) override {
    ++calls;
    seen_images = images.size();
    return {"ok", FinishReason::stop, 0, ""};
  }
  int calls = 0;
  std::size_t seen_images = 0;
};

ClientOptions recording_options(std::vector<std::chrono::milliseconds>& sleeps) {
  ClientOptions o;
  o.sleeper = [&sleeps](std::chrono::milliseconds d) { sleeps.push_back(d); };
  o.retry.base_delay = 100ms;
  o.retry.jitter = 0.1;
  return o;
}

const Taxonomy& tax() {
  static const Taxonomy t = load_taxonomy(testsupport::data("taxonomy.json"));
  return t;
}

struct EnvGuard {
  std::vector<std::string> names;
  void set(const std::string& n, const std::string& v) {
    ::setenv(n.c_str(), v.c_str(), 1);
    names.push_back(n);
  }
  ~EnvGuard() {
    for (const auto& n : names) ::unsetenv(n.c_str());
  }
};

}  // namespace

TEST_CASE("nominal backoff doubles") {
  RetryPolicy p;
  p.base_delay = 500ms;
  CHECK(p.nominal_delay(1) == 500ms);
  CHECK(p.nominal_delay(2) == 1000ms);
  CHECK(p.nominal_delay(4) == 4000ms);
}

TEST_CASE("transient failures are retried with jittered exponential backoff") {
  std::vector<std::chrono::milliseconds> sleeps;
  auto t = std::make_shared<FlakyTransport<TransientBackendError>>(3);
  Client client(t, recording_options(sleeps));
  const auto r = client.complete(text_request("hi"));
  CHECK(r.text == "ok");
  CHECK(r.backend_id == "flaky");
  CHECK(t->calls == 4);
  REQUIRE(sleeps.size() == 3);
  for (std::size_t i = 0; i < sleeps.size(); ++i) {
    const double nominal = 100.0 * static_cast<double>(1 << i);
    CHECK(static_cast<double>(sleeps[i].count()) >= nominal * 0.9 - 1);
    CHECK(static_cast<double>(sleeps[i].count()) <= nominal * 1.1 + 1);
  }
}

TEST_CASE("jitter sequence is reproducible for a fixed seed") {
  std::vector<std::chrono::milliseconds> a, b;
  Client ca(std::make_shared<FlakyTransport<TransientBackendError>>(4), recording_options(a));
  Client cb(std::make_shared<FlakyTransport<TransientBackendError>>(4), recording_options(b));
  ca.complete(text_request("x"));
  cb.complete(text_request("x"));
  CHECK(a == b);
}

TEST_CASE("retries are bounded") {
  std::vector<std::chrono::milliseconds> sleeps;
  auto t = std::make_shared<FlakyTransport<TransientBackendError>>(100);
  auto opts = recording_options(sleeps);
  opts.retry.max_attempts = 5;
  Client client(t, opts);
  CHECK_THROWS_AS(client.complete(text_request("x")), RetriesExhaustedError);
  CHECK(t->calls == 5);
  CHECK(sleeps.size() == 4);
}

TEST_CASE("permanent failures are not retried") {
  std::vector<std::chrono::milliseconds> sleeps;
  auto t = std::make_shared<FlakyTransport<PermanentBackendError>>(1);
  Client client(t, recording_options(sleeps));
  CHECK_THROWS_AS(client.complete(text_request("x")), PermanentBackendError);
  CHECK(t->calls == 1);
  CHECK(sleeps.empty());
}

TEST_CASE("unreadable image fails before any send") {
  auto t = std::make_shared<CountingTransport>();
  ClientOptions o;
  o.asset_root = testsupport::data("fixtures");
  Client client(t, o);
  GenerationRequest r = text_request("x");
  r.user_parts.push_back(ImagePart{"screenshots/does-not-exist.png"});
  CHECK_THROWS_AS(client.complete(r), ImageResolutionError);
  CHECK(t->calls == 0);

  GenerationRequest ok = text_request("x");
  ok.user_parts.push_back(ImagePart{"screenshots/app-001_1.png"});
  client.complete(ok);
  CHECK(t->calls == 1);
  CHECK(t->seen_images == 1);
}

TEST_CASE("request validation") {
  Client client(std::make_shared<CountingTransport>());
  CHECK_THROWS_AS(client.complete(GenerationRequest{}), PreconditionError);
  auto r = text_request("x");
  r.temperature = -1;
  CHECK_THROWS_AS(client.complete(r), PreconditionError);
}

TEST_CASE("in-flight limit holds under concurrent load") {
  for (std::size_t cap : {1u, 3u, 8u}) {
    auto t = std::make_shared<SlowTransport>();
    ClientOptions o;
    o.limiter = std::make_shared<InflightLimiter>(cap);
    Client client(t, o);
    parallel_for(64, 16, [&](std::size_t i) { client.complete(text_request("r" + std::to_string(i))); });
    CHECK(t->calls == 64);
    CHECK(static_cast<std::size_t>(t->observed_peak.load()) <= cap);
    CHECK(o.limiter->peak() <= cap);
    CHECK(o.limiter->peak() >= 1);
  }
}

TEST_CASE("request log records every attempt") {
  testsupport::TempDir dir;
  auto log = std::make_shared<RequestLog>(dir.path() / "requests.jsonl");
  std::vector<std::chrono::milliseconds> sleeps;
  auto o = recording_options(sleeps);
  o.log = log;
  Client client(std::make_shared<FlakyTransport<TransientBackendError>>(2), o);
  const auto req = text_request("logged");
  client.complete(req);
  const auto rows = read_jsonl(dir.path() / "requests.jsonl");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0]["status"] == "transient_error");
  CHECK(rows[2]["status"] == "ok");
  for (const auto& r : rows) CHECK(r["request_hash"] == request_hash(req));
}

TEST_CASE("request hash covers every field") {
  auto a = text_request("x", 1);
  auto b = a;
  CHECK(request_hash(a) == request_hash(b));
  b.seed = 2;
  CHECK(request_hash(a) != request_hash(b));
  b = a;
  b.temperature = 0.5;
  CHECK(request_hash(a) != request_hash(b));
}

TEST_CASE("parallel_for visits every index once and propagates errors") {
  std::vector<std::atomic<int>> hits(500);
  parallel_for(500, 7, [&](std::size_t i) { ++hits[i]; });
  for (auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(parallel_for(100, 4,
                               [](std::size_t i) {
                                 if (i == 37) throw ValidationError("x");
                               }),
                  ValidationError);
}

TEST_CASE("section and field extraction") {
  const std::string text = "A: 1\nTARGET DESCRIPTOR: contests\nBEGIN APP DESCRIPTION\nline one\nline two\nEND APP DESCRIPTION\n";
  CHECK(extract_field(text, kTargetMarker) == "contests");
  CHECK(extract_section(text, kDescriptionBegin, kDescriptionEnd) == "line one\nline two");
  CHECK_FALSE(extract_section(text, kReferenceBegin, kReferenceEnd));
}

TEST_CASE("keyword matching is whole-word and case-insensitive") {
  CHECK(contains_keyword("Win the SWEEPSTAKES now", "sweepstakes"));
  CHECK_FALSE(contains_keyword("sweepstakesville", "sweepstakes"));
  CHECK(contains_keyword("blood-soaked", "blood"));
  CHECK_FALSE(contains_keyword("bloodhound", "blood"));
  CHECK(contains_keyword("a drug dealing plot", "drug dealing"));
}

TEST_CASE("mock rule engine agrees with a regex grep over every fixture task") {
  const auto script = load_mock_script(testsupport::data("mock/generator.json"));
  const auto keywords = oracle::load_keywords(read_json_file(testsupport::data("mock/keywords.json")));
  const auto apps = load_corpus(testsupport::data("fixtures/corpus32.jsonl"), tax());
  std::size_t checked = 0, positives = 0;
  for (const auto& app : apps)
    for (const auto& task : enumerate_tasks(app, tax(), 20.0, 1)) {
      // Variant 0 is a plain structured answer.
      const auto env = build_prompt(task, tax(), 0.0, 0);
      const auto out = parse_generation(mock_rule_engine(env.rendered, script, 0));
      REQUIRE(out);
      CHECK(out->path == ParsePath::strict);
      const auto it = keywords.find(task.target_descriptor);
      const int level = it == keywords.end() ? 0 : oracle::grep_level(task.description, it->second);
      CHECK(out->present == (level > 0));
      const Severity expected = level == 0 || !task.severity_supported ? Severity::none
                                : level == 2                          ? Severity::strong
                                                                      : Severity::mild;
      CHECK(out->severity == expected);
      ++checked;
      positives += level > 0;
    }
  CHECK(checked > 500);
  CHECK(positives > 50);
}

TEST_CASE("generator mock verdict is seed invariant; phrasing is not") {
  const auto script = load_mock_script(testsupport::data("mock/generator.json"));
  const auto apps = load_corpus(testsupport::data("fixtures/corpus32.jsonl"), tax());
  const auto tasks = enumerate_tasks(apps.at(12), tax(), 3.0, 4);
  for (const auto& task : tasks) {
    const auto env = build_prompt(task, tax());
    const auto base = parse_generation(mock_rule_engine(env.rendered, script, 0));
    std::set<std::string> texts;
    for (std::int64_t s = 0; s < 10; ++s) {
      const std::string raw = mock_rule_engine(env.rendered, script, s);
      CHECK(raw == mock_rule_engine(env.rendered, script, s));
      texts.insert(raw);
      const auto out = parse_generation(raw);
      REQUIRE(out);
      CHECK(out->present == base->present);
      CHECK(out->severity == base->severity);
      CHECK(out->path == (s % 5 == 4 ? ParsePath::fallback : ParsePath::strict));
    }
    CHECK(texts.size() == 5);
  }
}

TEST_CASE("policy mock variants flip and shift as scripted") {
  const auto script = load_mock_script(testsupport::data("mock/policy.json"));
  REQUIRE(script.variants.size() == 7);
  CHECK(script.variants[2].flip_verdict);
  CHECK(script.variants[4].shift_severity);
  const std::string prompt =
      "TARGET DESCRIPTOR: realistic_violence\nDESCRIPTOR NAME: Realistic Violence\nSEVERITY SCALE: mild|strong\n"
      "BEGIN APP DESCRIPTION\nA gritty shooter with constant bloodshed.\nEND APP DESCRIPTION\n";
  const auto req = text_request(prompt);
  auto verdict = [&](std::int64_t s) {
    const std::string out = mock_rule_engine(req, script, s);
    return std::make_pair(last_sentinel(out, "PRESENT").value_or("?"), last_sentinel(out, "SEVERITY").value_or("?"));
  };
  const auto base = verdict(0);
  CHECK(base.first == "yes");
  CHECK(verdict(2).first == "no");
  CHECK(verdict(4).first == "yes");
  CHECK(verdict(4).second != base.second);
  CHECK(verdict(7) == base);
}

TEST_CASE("mock keyword scan is limited to the description section") {
  const auto script = load_mock_script(testsupport::data("mock/policy.json"));
  const std::string prompt =
      "TARGET DESCRIPTOR: contests\nSEVERITY SCALE: not applicable\nThis definition mentions sweepstakes.\n"
      "BEGIN APP DESCRIPTION\nA calm puzzle game.\nEND APP DESCRIPTION\n";
  CHECK(last_sentinel(mock_rule_engine(text_request(prompt), script, 0), "PRESENT") == "no");
}

TEST_CASE("mock without target line is a permanent error") {
  const auto script = load_mock_script(testsupport::data("mock/policy.json"));
  CHECK_THROWS_AS(mock_rule_engine(text_request("no markers"), script, 0), PermanentBackendError);
}

TEST_CASE("judge rubric") {
  const std::string ref = "The app shows bloodshed and gore. PRESENT: yes SEVERITY: strong";
  CHECK(mock_judge_rubric(ref, ref) == 5);
  CHECK(mock_judge_rubric(ref, "Nothing to see.") == 1);
  CHECK(mock_judge_rubric(ref, "Clean app. PRESENT: no SEVERITY: none") == 0);
  CHECK(mock_judge_rubric(ref, "The app shows bloodshed and gore. PRESENT: yes SEVERITY: mild") == 2);
  CHECK(mock_judge_rubric(ref, "The app shows bloodshed and gore! PRESENT: yes SEVERITY: strong") == 4);
  CHECK(mock_judge_rubric(ref, "Completely different wording entirely here. PRESENT: yes SEVERITY: strong") == 3);

  const auto script = load_mock_script(testsupport::data("mock/judge.json"));
  const std::string prompt = std::string(kReferenceBegin) + "\n" + ref + "\n" + std::string(kReferenceEnd) + "\n" +
                             std::string(kCandidateBegin) + "\n" + ref + "\n" + std::string(kCandidateEnd) + "\n";
  CHECK(last_sentinel(mock_judge(text_request(prompt), script, 0), "SCORE") == "5");
  CHECK_FALSE(last_sentinel(mock_judge(text_request(prompt), script, 3), "SCORE"));
}

TEST_CASE("chat completions wire format") {
  GenerationRequest r;
  r.system_text = "sys";
  r.user_parts = {ImagePart{"a.png"}, TextPart{"hello"}};
  r.temperature = 0.7;
  r.seed = 42;
  const LoadedImage img{"a.png", "image/png", "abc"};
  const json body = chat_completions_body(r, std::span(&img, 1), "m1");
  CHECK(body["model"] == "m1");
  CHECK(body["seed"] == 42);
  CHECK(body["messages"][0]["role"] == "system");
  const auto& content = body["messages"][1]["content"];
  CHECK(content[0]["image_url"]["url"] == "data:image/png;base64,YWJj");
  CHECK(content[1]["text"] == "hello");

  const auto resp = parse_chat_completions_response(
      json::parse(R"({"choices":[{"message":{"content":"hi"},"finish_reason":"length"}]})"));
  CHECK(resp.text == "hi");
  CHECK(resp.finish_reason == FinishReason::length);
  CHECK_THROWS_AS(parse_chat_completions_response(json::parse(R"({"nope":1})")), PermanentBackendError);
}

TEST_CASE("http transport retries 503 and reads the completion") {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string auth, seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (++hits == 1) {
      res.status = 503;
      return;
    }
    auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content(R"({"choices":[{"message":{"content":"served"},"finish_reason":"stop"}]})", "application/json");
  });
  server.Post("/bad", [](const httplib::Request&, httplib::Response& res) { res.status = 400; });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  std::vector<std::chrono::milliseconds> sleeps;
  const std::string base = "http://127.0.0.1:" + std::to_string(port);
  Client client(std::make_shared<HttpTransport>(HttpEndpoint{base + "/v1/chat/completions", "k-test", "m"}),
                recording_options(sleeps));
  const auto resp = client.complete(text_request("ping", 3));
  CHECK(resp.text == "served");
  CHECK(hits == 2);
  CHECK(sleeps.size() == 1);
  CHECK(auth == "Bearer k-test");
  CHECK(json::parse(seen_body)["seed"] == 3);

  Client bad(std::make_shared<HttpTransport>(HttpEndpoint{base + "/bad", "", "m"}), recording_options(sleeps));
  CHECK_THROWS_AS(bad.complete(text_request("x")), PermanentBackendError);

  server.stop();
  th.join();
}

TEST_CASE("backend configuration") {
  testsupport::TempDir dir;
  std::ofstream(dir.path() / "s.json") << R"({"kind":"judge","variants":[{"phrasing":"x"}]})";

  SUBCASE("mock script resolves relative to the config") {
    const auto c = backend_config_from_json("judge", json{{"kind", "mock"}, {"script", "s.json"}}, dir.path());
    CHECK(c.script == dir.path() / "s.json");
    CHECK(make_transport(c)->id() == "mock:judge");
  }
  SUBCASE("credentials in config are rejected") {
    CHECK_THROWS_AS(backend_config_from_json("judge", json{{"kind", "http"}, {"endpoint", "http://x"}, {"api_key", "k"}},
                                             dir.path()),
                    ValidationError);
  }
  SUBCASE("environment overrides") {
    EnvGuard env;
    env.set("CRD_POLICY_ENDPOINT", "http://localhost:1/v1/chat/completions");
    env.set("CRD_POLICY_API_KEY", "from-env");
    env.set("CRD_POLICY_MODEL", "tiny");
    const auto c = backend_config_from_json("policy", json{{"kind", "mock"}, {"script", "s.json"}}, dir.path());
    CHECK(c.kind == "http");
    CHECK(c.api_key == "from-env");
    CHECK(c.model == "tiny");
    CHECK(make_transport(c)->id() == "http:tiny");
  }
  SUBCASE("missing script") {
    CHECK_THROWS_AS(backend_config_from_json("judge", json{{"kind", "mock"}, {"script", "nope.json"}}, dir.path()),
                    ValidationError);
  }
  SUBCASE("unknown kind") {
    CHECK_THROWS_AS(backend_config_from_json("judge", json{{"kind", "carrier-pigeon"}}, dir.path()), ValidationError);
  }
}
