#include "crd/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "crd/ingest.hpp"
#include "crd/sentinels.hpp"

namespace crd {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// --- request -------------------------------------------------------------------

std::string GenerationRequest::text() const {
  std::string out;
  for (const auto& part : user_parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      if (!out.empty()) out.push_back('\n');
      out += t->text;
    }
  }
  return out;
}

std::vector<std::string> GenerationRequest::image_refs() const {
  std::vector<std::string> out;
  for (const auto& part : user_parts)
    if (const auto* i = std::get_if<ImagePart>(&part)) out.push_back(i->ref);
  return out;
}

json to_json(const GenerationRequest& request) {
  json parts = json::array();
  for (const auto& part : request.user_parts) {
    if (const auto* t = std::get_if<TextPart>(&part))
      parts.push_back({{"type", "text"}, {"text", t->text}});
    else
      parts.push_back({{"type", "image"}, {"ref", std::get<ImagePart>(part).ref}});
  }
  json j{{"system", request.system_text},
         {"user_parts", std::move(parts)},
         {"temperature", request.temperature},
         {"max_tokens", request.max_tokens}};
  j["seed"] = request.seed ? json(*request.seed) : json(nullptr);
  return j;
}

std::string request_hash(const GenerationRequest& request) { return sha256_hex(to_json(request).dump()); }

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

// --- retry / admission -----------------------------------------------------------

std::chrono::milliseconds RetryPolicy::nominal_delay(int attempt) const {
  const int shift = std::clamp(attempt - 1, 0, 30);
  return base_delay * (std::int64_t{1} << shift);
}

InflightLimiter::InflightLimiter(std::size_t max_inflight)
    : capacity_(max_inflight == 0 ? 1 : max_inflight),
      slots_(static_cast<std::ptrdiff_t>(max_inflight == 0 ? 1 : max_inflight)) {}

InflightLimiter::Permit::Permit(InflightLimiter& owner) : owner_(owner) {
  owner_.slots_.acquire();
  const std::size_t now = ++owner_.current_;
  std::size_t peak = owner_.peak_.load();
  while (now > peak && !owner_.peak_.compare_exchange_weak(peak, now)) {
  }
}

InflightLimiter::Permit::~Permit() {
  --owner_.current_;
  owner_.slots_.release();
}

RequestLog::RequestLog(fs::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
}

void RequestLog::append(const json& record) {
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app);
  out << record.dump() << '\n';
}

Client::Client(std::shared_ptr<Transport> transport, ClientOptions options)
    : transport_(std::move(transport)), options_(std::move(options)), jitter_state_(options_.jitter_seed) {
  if (!transport_) throw PreconditionError("Client: null transport");
  if (!options_.limiter) options_.limiter = std::make_shared<InflightLimiter>(8);
  if (!options_.sleeper) options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (options_.retry.max_attempts < 1) options_.retry.max_attempts = 1;
}

std::vector<LoadedImage> Client::resolve_images(const GenerationRequest& request) const {
  std::vector<LoadedImage> out;
  for (const auto& ref : request.image_refs()) {
    fs::path p(ref);
    if (p.is_relative() && !options_.asset_root.empty()) p = options_.asset_root / p;
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ImageResolutionError("cannot read image '" + ref + "' (" + p.string() + ")");
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string ext = to_lower_ascii(p.extension().string());
    std::string mime = "application/octet-stream";
    if (ext == ".png") mime = "image/png";
    else if (ext == ".jpg" || ext == ".jpeg") mime = "image/jpeg";
    else if (ext == ".webp") mime = "image/webp";
    else if (ext == ".gif") mime = "image/gif";
    out.push_back({ref, std::move(mime), buf.str()});
  }
  return out;
}

std::chrono::milliseconds Client::backoff(int attempt) {
  const auto nominal = options_.retry.nominal_delay(attempt);
  double u;
  {
    std::lock_guard lock(rng_mutex_);
    jitter_state_ = splitmix64(jitter_state_);
    u = static_cast<double>(jitter_state_ >> 11) * 0x1.0p-53 * 2.0 - 1.0;  // [-1, 1)
  }
  const double scaled = static_cast<double>(nominal.count()) * (1.0 + options_.retry.jitter * u);
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(std::max(0.0, scaled))));
}

GenerationResponse Client::complete(const GenerationRequest& request) {
  if (request.user_parts.empty()) throw PreconditionError("GenerationRequest needs at least one user part");
  if (request.temperature < 0) throw PreconditionError("GenerationRequest temperature must be >= 0");
  if (request.max_tokens <= 0) throw PreconditionError("GenerationRequest max_tokens must be positive");

  const auto images = resolve_images(request);
  const std::string hash = options_.log ? request_hash(request) : std::string();

  std::string last_error;
  for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
    const auto started = Clock::now();
    try {
      GenerationResponse response;
      {
        InflightLimiter::Permit permit(*options_.limiter);
        response = transport_->send(request, images);
      }
      if (response.finish_reason == FinishReason::stop && response.text.empty())
        throw TransientBackendError("empty completion");
      response.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - started).count();
      response.backend_id = transport_->id();
      if (options_.log)
        options_.log->append({{"request_hash", hash},
                              {"backend", response.backend_id},
                              {"attempt", attempt},
                              {"status", "ok"},
                              {"finish_reason", to_string(response.finish_reason)},
                              {"request", to_json(request)},
                              {"response", response.text}});
      return response;
    } catch (const TransientBackendError& e) {
      last_error = e.what();
      if (options_.log)
        options_.log->append({{"request_hash", hash}, {"backend", transport_->id()}, {"attempt", attempt},
                              {"status", "transient_error"}, {"error", last_error}});
    } catch (const PermanentBackendError& e) {
      if (options_.log)
        options_.log->append({{"request_hash", hash}, {"backend", transport_->id()}, {"attempt", attempt},
                              {"status", "permanent_error"}, {"error", std::string(e.what())}});
      throw;
    }
    if (attempt < options_.retry.max_attempts) options_.sleeper(backoff(attempt));
  }
  throw RetriesExhaustedError(transport_->id() + ": gave up after " + std::to_string(options_.retry.max_attempts) +
                              " attempts: " + last_error);
}

GenerationResponse complete(Client& client, const GenerationRequest& request) { return client.complete(request); }

// --- mock -------------------------------------------------------------------------

namespace {

std::vector<std::string> string_list(const json& j) {
  std::vector<std::string> out;
  for (const auto& s : j) out.push_back(s.get<std::string>());
  return out;
}

std::string basename_of(const std::string& ref) { return fs::path(ref).filename().string(); }

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::set<std::string> tokens(std::string_view text) {
  std::set<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.insert(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(cur);
  return out;
}

struct MockVerdict {
  bool present = false;
  Severity severity = Severity::none;
  std::vector<std::string> hits;
};

std::string answer_text(const std::string& name, const MockVerdict& v, const std::string& phrasing) {
  std::string out;
  if (v.present) {
    out = "Yes. " + phrasing + (phrasing.empty() ? "" : " ");
    if (v.hits.empty())
      out += "The app appears to include content that meets the definition of " + name + ".";
    else
      out += "The description mentions " + join(v.hits, ", ") + ", which meets the definition of " + name + ".";
  } else {
    out = "No. " + phrasing + (phrasing.empty() ? "" : " ") +
          "Neither the screenshot nor the description shows cues matching the definition of " + name + ".";
  }
  out += " PRESENT: ";
  out += v.present ? "yes" : "no";
  out += " SEVERITY: ";
  out += to_string(v.severity);
  return out;
}

}  // namespace

KeywordTable keyword_table_from_json(const json& j) {
  KeywordTable table;
  for (const auto& [descriptor, entry] : j.items()) {
    KeywordTriggers t;
    if (entry.is_array()) {
      t.mild = string_list(entry);
    } else if (entry.is_object()) {
      if (entry.contains("mild")) t.mild = string_list(entry.at("mild"));
      if (entry.contains("strong")) t.strong = string_list(entry.at("strong"));
    } else {
      throw ParseError("keyword table entry for " + descriptor + " must be a list or {mild, strong}");
    }
    table[descriptor] = std::move(t);
  }
  return table;
}

MockScript mock_script_from_json(const json& j, const fs::path& base_dir) {
  MockScript script;
  const std::string kind = j.value("kind", std::string("rule_engine"));
  if (kind == "rule_engine") script.kind = MockKind::rule_engine;
  else if (kind == "judge") script.kind = MockKind::judge;
  else throw ParseError("unknown mock kind '" + kind + "'");

  if (auto it = j.find("keywords"); it != j.end()) {
    if (it->is_string()) {
      fs::path p = it->get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      script.keywords = keyword_table_from_json(read_json_file(p));
    } else {
      script.keywords = keyword_table_from_json(*it);
    }
  }
  if (auto it = j.find("variants"); it != j.end()) {
    for (const auto& v : *it) {
      script.variants.push_back({v.value("phrasing", std::string()), v.value("flip_verdict", false),
                                 v.value("shift_severity", false), v.value("malformed", false)});
    }
  }
  if (script.variants.empty()) script.variants.push_back({});
  return script;
}

MockScript load_mock_script(const fs::path& path) {
  return mock_script_from_json(read_json_file(path), path.parent_path());
}

const MockVariant& select_variant(const MockScript& script, std::optional<std::int64_t> seed) {
  const std::uint64_t s = seed ? static_cast<std::uint64_t>(*seed) : 0;
  return script.variants[s % script.variants.size()];
}

std::optional<std::string> extract_section(std::string_view text, std::string_view begin, std::string_view end) {
  const auto b = text.find(begin);
  if (b == std::string_view::npos) return std::nullopt;
  auto start = text.find('\n', b);
  if (start == std::string_view::npos) return std::nullopt;
  ++start;
  const auto e = text.find(end, start);
  if (e == std::string_view::npos) return std::nullopt;
  std::string_view body = text.substr(start, e - start);
  if (!body.empty() && body.back() == '\n') body.remove_suffix(1);
  return std::string(body);
}

std::optional<std::string> extract_field(std::string_view text, std::string_view marker) {
  const auto b = text.find(marker);
  if (b == std::string_view::npos) return std::nullopt;
  auto start = b + marker.size();
  auto e = text.find('\n', start);
  if (e == std::string_view::npos) e = text.size();
  return trim(text.substr(start, e - start));
}

bool contains_keyword(std::string_view text, std::string_view keyword) {
  if (keyword.empty()) return false;
  const std::string hay = to_lower_ascii(text);
  const std::string needle = to_lower_ascii(keyword);
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
    const bool left_ok = pos == 0 || !is_word(hay[pos - 1]);
    const std::size_t end = pos + needle.size();
    const bool right_ok = end >= hay.size() || !is_word(hay[end]);
    if (left_ok && right_ok) return true;
  }
  return false;
}

KeywordVerdict keyword_verdict(std::string_view text, const KeywordTriggers& triggers) {
  KeywordVerdict v;
  for (const auto& k : triggers.strong)
    if (contains_keyword(text, k)) {
      v.strong = true;
      v.hits.push_back(k);
    }
  for (const auto& k : triggers.mild)
    if (contains_keyword(text, k)) v.hits.push_back(k);
  v.present = !v.hits.empty();
  return v;
}

std::string mock_rule_engine(const GenerationRequest& request, const MockScript& script,
                             std::optional<std::int64_t> seed) {
  const std::string text = request.text();
  const auto descriptor = extract_field(text, kTargetMarker);
  if (!descriptor || descriptor->empty())
    throw PermanentBackendError("mock: request has no '" + std::string(kTargetMarker) + "' line");
  const std::string name = extract_field(text, kNameMarker).value_or(*descriptor);
  const bool severity_supported = extract_field(text, kSeverityScaleMarker).value_or("mild|strong") != "not applicable";
  const std::string scope = extract_section(text, kDescriptionBegin, kDescriptionEnd).value_or(text);

  KeywordVerdict kv;
  if (auto it = script.keywords.find(*descriptor); it != script.keywords.end()) kv = keyword_verdict(scope, it->second);

  MockVerdict v{kv.present, Severity::none, kv.hits};
  if (v.present && severity_supported) v.severity = kv.strong ? Severity::strong : Severity::mild;

  const MockVariant& variant = select_variant(script, seed);
  if (variant.flip_verdict) {
    v.present = !v.present;
    v.severity = v.present && severity_supported ? Severity::mild : Severity::none;
    if (!v.present) v.hits.clear();
  }
  if (variant.shift_severity && v.present && severity_supported)
    v.severity = v.severity == Severity::strong ? Severity::mild : Severity::strong;

  const auto images = request.image_refs();
  const std::string shot = images.empty() ? std::string("no screenshot") : basename_of(images.front());

  if (variant.malformed) {
    std::string out = variant.phrasing + (variant.phrasing.empty() ? "" : " ");
    out += "Reviewed " + shot + " for " + name + ". ";
    out += v.present ? "Relevant cues were found." : "No relevant cues were found.";
    out += "\nSEVERITY: " + std::string(to_string(v.severity));
    out += std::string("\nPRESENT: ") + (v.present ? "yes" : "no") + "\n";
    return out;
  }

  const std::string answer = answer_text(name, v, variant.phrasing);
  if (text.find(kScaffoldMarker) == std::string::npos) return answer;

  json block;
  block["visual_cues"] = json::array({"screenshot " + shot + " shows the app interface"});
  json textual = json::array();
  for (const auto& h : v.hits) textual.push_back("description mentions '" + h + "'");
  block["textual_cues"] = std::move(textual);
  block["match"] = v.present;
  block["justification"] = v.present ? "The combined evidence satisfies the definition of " + name + "."
                                     : "The combined evidence does not satisfy the definition of " + name + ".";
  std::string cue_answer = v.hits.empty() ? std::string("No matching cues were found")
                                          : "Cues: " + join(v.hits, ", ");
  cue_answer += "; screenshot " + shot + " was reviewed.";
  cue_answer += std::string(" PRESENT: ") + (v.present ? "yes" : "no") + " SEVERITY: " + std::string(to_string(v.severity));
  block["qa"] = json::array({
      {{"question", "Does this app contain " + name + "?"}, {"answer", answer}},
      {{"question", "Which cues support the decision about " + name + "?"}, {"answer", cue_answer}},
  });
  block["present"] = v.present;
  block["severity"] = to_string(v.severity);

  std::string out = "Four-step analysis for " + name + ".\n```json\n" + block.dump(2) + "\n```\n";
  out += std::string("PRESENT: ") + (v.present ? "yes" : "no") + "\n";
  return out;
}

int mock_judge_rubric(std::string_view reference, std::string_view candidate) {
  if (reference == candidate) return 5;
  const auto ref_present = last_sentinel(reference, "PRESENT");
  const auto cand_present = last_sentinel(candidate, "PRESENT");
  if (!ref_present || !cand_present) return 1;
  if (*ref_present != *cand_present) return 0;
  const std::string ref_sev = last_sentinel(reference, "SEVERITY").value_or("none");
  const std::string cand_sev = last_sentinel(candidate, "SEVERITY").value_or("none");
  if (ref_sev != cand_sev) return 2;
  const auto a = tokens(reference);
  const auto b = tokens(candidate);
  std::size_t inter = 0;
  for (const auto& t : a) inter += b.count(t);
  const std::size_t uni = a.size() + b.size() - inter;
  const double jaccard = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  return jaccard >= 0.5 ? 4 : 3;
}

std::string mock_judge(const GenerationRequest& request, const MockScript& script, std::optional<std::int64_t> seed) {
  const std::string text = request.text();
  const auto reference = extract_section(text, kReferenceBegin, kReferenceEnd);
  const auto candidate = extract_section(text, kCandidateBegin, kCandidateEnd);
  if (!reference || !candidate) throw PermanentBackendError("mock judge: request lacks reference/candidate sections");
  const MockVariant& variant = select_variant(script, seed);
  if (variant.malformed) return "The candidate seems broadly reasonable.";
  const int score = mock_judge_rubric(*reference, *candidate);
  std::string out = variant.phrasing.empty() ? std::string("Compared the candidate with the reference.") : variant.phrasing;
  out += "\nSCORE: " + std::to_string(score) + "\n";
  return out;
}

MockTransport::MockTransport(MockScript script, std::string id) : script_(std::move(script)), id_(std::move(id)) {}

GenerationResponse MockTransport::send(const GenerationRequest& request, std::span<const LoadedImage>) {
  GenerationResponse r;
  r.text = script_.kind == MockKind::judge ? mock_judge(request, script_, request.seed)
                                           : mock_rule_engine(request, script_, request.seed);
  r.finish_reason = FinishReason::stop;
  return r;
}

// --- HTTP -------------------------------------------------------------------------

json chat_completions_body(const GenerationRequest& request, std::span<const LoadedImage> images,
                           const std::string& model) {
  json content = json::array();
  std::size_t image_index = 0;
  for (const auto& part : request.user_parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      content.push_back({{"type", "text"}, {"text", t->text}});
    } else {
      const auto& img = images[image_index++];
      content.push_back({{"type", "image_url"},
                         {"image_url", {{"url", "data:" + img.mime + ";base64," + base64_encode(img.bytes)}}}});
    }
  }
  json messages = json::array();
  if (!request.system_text.empty())
    messages.push_back({{"role", "system"}, {"content", json::array({{{"type", "text"}, {"text", request.system_text}}})}});
  messages.push_back({{"role", "user"}, {"content", std::move(content)}});
  json body{{"model", model},
            {"messages", std::move(messages)},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

GenerationResponse parse_chat_completions_response(const json& body) {
  GenerationResponse r;
  try {
    const auto& choice = body.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    if (content.is_string()) {
      r.text = content.get<std::string>();
    } else if (content.is_array()) {
      for (const auto& p : content)
        if (p.value("type", std::string()) == "text") r.text += p.value("text", std::string());
    } else if (!content.is_null()) {
      throw PermanentBackendError("unexpected message content type");
    }
    const std::string reason = choice.value("finish_reason", std::string("stop"));
    r.finish_reason = reason == "stop" ? FinishReason::stop : reason == "length" ? FinishReason::length : FinishReason::error;
  } catch (const json::exception& e) {
    throw PermanentBackendError(std::string("malformed chat-completions response: ") + e.what());
  }
  return r;
}

HttpTransport::HttpTransport(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  const std::string& url = endpoint_.url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::string HttpTransport::id() const {
  return "http:" + (endpoint_.model.empty() ? scheme_host_port_ : endpoint_.model);
}

GenerationResponse HttpTransport::send(const GenerationRequest& request, std::span<const LoadedImage> images) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(endpoint_.timeout);
  client.set_write_timeout(endpoint_.timeout);
  httplib::Headers headers;
  if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);
  const std::string body = chat_completions_body(request, images, endpoint_.model).dump();
  auto res = client.Post(path_, headers, body, "application/json");
  if (!res) throw TransientBackendError("connection error: " + httplib::to_string(res.error()));
  const int status = res->status;
  if (status == 408 || status == 409 || status == 429 || status >= 500)
    throw TransientBackendError("HTTP " + std::to_string(status));
  if (status < 200 || status >= 300)
    throw PermanentBackendError("HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200));
  json parsed;
  try {
    parsed = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw PermanentBackendError(std::string("response is not JSON: ") + e.what());
  }
  return parse_chat_completions_response(parsed);
}

// --- configuration ------------------------------------------------------------------

namespace {

std::optional<std::string> env(const std::string& role, const char* suffix) {
  std::string name = "CRD_" + to_lower_ascii(role) + "_" + suffix;
  for (char& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (const char* v = std::getenv(name.c_str()); v && *v) return std::string(v);
  return std::nullopt;
}

}  // namespace

BackendConfig backend_config_from_json(const std::string& role, const json& j, const fs::path& base_dir) {
  BackendConfig c;
  c.role = role;
  if (j.is_object()) {
    if (j.contains("api_key"))
      throw ValidationError("backend '" + role + "': credentials must come from the environment (CRD_" + role + "_API_KEY)");
    c.kind = j.value("kind", std::string("mock"));
    if (j.contains("script")) {
      c.script = j.at("script").get<std::string>();
      if (c.script.is_relative()) c.script = base_dir / c.script;
    }
    c.endpoint = j.value("endpoint", std::string());
    c.model = j.value("model", std::string());
  }
  if (auto v = env(role, "ENDPOINT")) {
    c.endpoint = *v;
    c.kind = "http";
  }
  if (auto v = env(role, "MODEL")) c.model = *v;
  if (auto v = env(role, "API_KEY")) c.api_key = *v;

  if (c.kind == "mock") {
    if (c.script.empty()) throw ValidationError("backend '" + role + "': mock backend needs a 'script'");
    if (!fs::exists(c.script)) throw ValidationError("backend '" + role + "': script not found: " + c.script.string());
  } else if (c.kind == "http") {
    if (c.endpoint.empty()) throw ValidationError("backend '" + role + "': http backend needs an endpoint");
  } else {
    throw ValidationError("backend '" + role + "': unknown kind '" + c.kind + "'");
  }
  return c;
}

std::shared_ptr<Transport> make_transport(const BackendConfig& config) {
  if (config.kind == "mock") return std::make_shared<MockTransport>(load_mock_script(config.script), "mock:" + config.role);
  return std::make_shared<HttpTransport>(HttpEndpoint{config.endpoint, config.api_key, config.model});
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (!failed.load()) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first) first = std::current_exception();
          failed = true;
        }
      }
    });
  }
  pool.clear();
  if (first) std::rethrow_exception(first);
}

}  // namespace crd
