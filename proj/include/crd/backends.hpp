#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "crd/errors.hpp"
#include "crd/io.hpp"

namespace crd {

struct TextPart {
  std::string text;
  bool operator==(const TextPart&) const = default;
};

// Local file reference, inlined as base64 on the wire.
struct ImagePart {
  std::string ref;
  bool operator==(const ImagePart&) const = default;
};

using UserPart = std::variant<TextPart, ImagePart>;

struct GenerationRequest {
  std::string system_text;
  std::vector<UserPart> user_parts;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;
  int max_tokens = 1024;

  // Concatenation of the text parts, newline separated.
  std::string text() const;
  std::vector<std::string> image_refs() const;
  bool operator==(const GenerationRequest&) const = default;
};

json to_json(const GenerationRequest& request);
std::string request_hash(const GenerationRequest& request);

enum class FinishReason { stop, length, error };
std::string_view to_string(FinishReason reason);

struct GenerationResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  double latency_ms = 0.0;
  std::string backend_id;
};

struct LoadedImage {
  std::string ref;
  std::string mime;
  std::string bytes;
};

class BackendError : public Error {
 public:
  using Error::Error;
};
// 429, 5xx, connection failures: retried.
class TransientBackendError : public BackendError {
 public:
  using BackendError::BackendError;
};
class PermanentBackendError : public BackendError {
 public:
  using BackendError::BackendError;
};
class RetriesExhaustedError : public BackendError {
 public:
  using BackendError::BackendError;
};
class ImageResolutionError : public BackendError {
 public:
  using BackendError::BackendError;
};

// One wire-level attempt. Implementations throw TransientBackendError or
// PermanentBackendError; retry and admission live in Client.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string id() const = 0;
  virtual GenerationResponse send(const GenerationRequest& request, std::span<const LoadedImage> images) = 0;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{500};
  double jitter = 0.1;  // fraction of the nominal delay

  // Nominal delay after failed attempt `attempt` (1-based): base * 2^(attempt-1).
  std::chrono::milliseconds nominal_delay(int attempt) const;
};

// Caps the number of requests awaiting any backend. Shared by every Client
// that should be coordinated.
class InflightLimiter {
 public:
  explicit InflightLimiter(std::size_t max_inflight);

  class Permit {
   public:
    explicit Permit(InflightLimiter& owner);
    ~Permit();
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    InflightLimiter& owner_;
  };

  std::size_t capacity() const { return capacity_; }
  std::size_t peak() const { return peak_.load(); }

 private:
  std::size_t capacity_;
  std::counting_semaphore<> slots_;
  std::atomic<std::size_t> current_{0};
  std::atomic<std::size_t> peak_{0};
};

// Line-delimited record of every attempt, keyed by request hash for replay.
class RequestLog {
 public:
  explicit RequestLog(std::filesystem::path path);
  void append(const json& record);

 private:
  std::mutex mutex_;
  std::filesystem::path path_;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

struct ClientOptions {
  RetryPolicy retry;
  std::shared_ptr<InflightLimiter> limiter;  // created with capacity 8 when null
  std::filesystem::path asset_root;           // base for relative image refs
  Sleeper sleeper;                            // defaults to this_thread::sleep_for
  std::uint64_t jitter_seed = 0;
  std::shared_ptr<RequestLog> log;
};

class Client {
 public:
  Client(std::shared_ptr<Transport> transport, ClientOptions options = {});

  // Resolves image parts before any transport call, then sends with
  // exponential backoff on transient failures.
  GenerationResponse complete(const GenerationRequest& request);

  std::string id() const { return transport_->id(); }
  const ClientOptions& options() const { return options_; }

 private:
  std::vector<LoadedImage> resolve_images(const GenerationRequest& request) const;
  std::chrono::milliseconds backoff(int attempt);

  std::shared_ptr<Transport> transport_;
  ClientOptions options_;
  std::mutex rng_mutex_;
  std::uint64_t jitter_state_;
};

GenerationResponse complete(Client& client, const GenerationRequest& request);

// --- deterministic mock -----------------------------------------------------

struct KeywordTriggers {
  std::vector<std::string> mild;
  std::vector<std::string> strong;
};
using KeywordTable = std::map<std::string, KeywordTriggers>;

KeywordTable keyword_table_from_json(const json& j);

// One scripted behaviour; the variant used for a request is seed % n.
struct MockVariant {
  std::string phrasing;
  bool flip_verdict = false;    // report the opposite presence verdict
  bool shift_severity = false;  // swap mild and strong
  bool malformed = false;       // free text with only the PRESENT sentinel
};

enum class MockKind { rule_engine, judge };

struct MockScript {
  MockKind kind = MockKind::rule_engine;
  KeywordTable keywords;
  std::vector<MockVariant> variants;
};

MockScript mock_script_from_json(const json& j, const std::filesystem::path& base_dir = {});
MockScript load_mock_script(const std::filesystem::path& path);
const MockVariant& select_variant(const MockScript& script, std::optional<std::int64_t> seed);

// Section markers shared by prompt builders and the mock.
inline constexpr std::string_view kTargetMarker = "TARGET DESCRIPTOR:";
inline constexpr std::string_view kNameMarker = "DESCRIPTOR NAME:";
inline constexpr std::string_view kSeverityScaleMarker = "SEVERITY SCALE:";
inline constexpr std::string_view kDescriptionBegin = "BEGIN APP DESCRIPTION";
inline constexpr std::string_view kDescriptionEnd = "END APP DESCRIPTION";
inline constexpr std::string_view kScaffoldMarker = "STEP 1: VISUAL UNDERSTANDING";
inline constexpr std::string_view kReferenceBegin = "BEGIN REFERENCE ANSWER";
inline constexpr std::string_view kReferenceEnd = "END REFERENCE ANSWER";
inline constexpr std::string_view kCandidateBegin = "BEGIN CANDIDATE ANSWER";
inline constexpr std::string_view kCandidateEnd = "END CANDIDATE ANSWER";

// Text between `begin` and `end` marker lines, or nullopt.
std::optional<std::string> extract_section(std::string_view text, std::string_view begin, std::string_view end);
// Value following `marker` up to end of line, or nullopt.
std::optional<std::string> extract_field(std::string_view text, std::string_view marker);

// Whole-word, case-insensitive occurrence of `keyword` in `text`.
bool contains_keyword(std::string_view text, std::string_view keyword);

struct KeywordVerdict {
  bool present = false;
  bool strong = false;
  std::vector<std::string> hits;
};
KeywordVerdict keyword_verdict(std::string_view text, const KeywordTriggers& triggers);

/// Rule-based stand-in for the generator / policy model. Presence is decided
/// by trigger keywords of the target descriptor inside the app-description
/// section (the whole text when that section is absent). The seed picks a
/// phrasing variant; only variants scripted with flip/shift change the
/// verdict. Prompts carrying the four-step scaffold get the full structured
/// contract, anything else gets a single answer.
std::string mock_rule_engine(const GenerationRequest& request, const MockScript& script,
                             std::optional<std::int64_t> seed);

// Rubric-following stand-in for the judge: 5 identical, 0 verdict mismatch,
// 1 candidate without verdict, 2 severity mismatch, 4/3 by token overlap.
int mock_judge_rubric(std::string_view reference, std::string_view candidate);
std::string mock_judge(const GenerationRequest& request, const MockScript& script, std::optional<std::int64_t> seed);

class MockTransport : public Transport {
 public:
  explicit MockTransport(MockScript script, std::string id = "mock");
  std::string id() const override { return id_; }
  GenerationResponse send(const GenerationRequest& request, std::span<const LoadedImage> images) override;

 private:
  MockScript script_;
  std::string id_;
};

// --- remote chat-completions endpoint ----------------------------------------

struct HttpEndpoint {
  std::string url;  // full URL of the chat-completions route
  std::string api_key;
  std::string model;
  std::chrono::seconds timeout{120};
};

json chat_completions_body(const GenerationRequest& request, std::span<const LoadedImage> images,
                           const std::string& model);
GenerationResponse parse_chat_completions_response(const json& body);

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(HttpEndpoint endpoint);
  std::string id() const override;
  GenerationResponse send(const GenerationRequest& request, std::span<const LoadedImage> images) override;

 private:
  HttpEndpoint endpoint_;
  std::string scheme_host_port_;
  std::string path_;
};

// --- configuration ------------------------------------------------------------

struct BackendConfig {
  std::string role;
  std::string kind = "mock";  // "mock" | "http"
  std::filesystem::path script;
  std::string endpoint;
  std::string model;
  std::string api_key;
};

// Environment overrides: CRD_<ROLE>_ENDPOINT, CRD_<ROLE>_API_KEY, CRD_<ROLE>_MODEL.
// Credentials are accepted from the environment only.
BackendConfig backend_config_from_json(const std::string& role, const json& j, const std::filesystem::path& base_dir);
std::shared_ptr<Transport> make_transport(const BackendConfig& config);

// Runs fn(i) for i in [0, n) on `workers` threads. The first exception is
// rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace crd
