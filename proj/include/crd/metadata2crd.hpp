#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crd/backends.hpp"
#include "crd/ingest.hpp"
#include "crd/taxonomy.hpp"

namespace crd {

inline constexpr std::string_view kDefinitionBegin = "BEGIN DESCRIPTOR DEFINITION";
inline constexpr std::string_view kDefinitionEnd = "END DESCRIPTOR DEFINITION";

// Step headers, in the order they appear in every rendered prompt.
inline constexpr std::array<std::string_view, 4> kStepHeaders{
    "STEP 1: VISUAL UNDERSTANDING", "STEP 2: TEXTUAL UNDERSTANDING", "STEP 3: DESCRIPTOR-DEFINITION MATCHING",
    "STEP 4: Q&A GENERATION"};

struct PromptEnvelope {
  GenerationTask task;
  GenerationRequest rendered;
};

// Deterministic: identical tasks render identical requests. The task's
// definition bundle is used verbatim; an empty one is resolved from the
// taxonomy and NotFoundError is thrown when nothing resolves.
PromptEnvelope build_prompt(const GenerationTask& task, const Taxonomy& taxonomy, double temperature = 0.0,
                            std::optional<std::int64_t> seed = std::nullopt);

struct QaPair {
  std::string question;
  std::string answer;
  bool operator==(const QaPair&) const = default;
};

enum class ParsePath { strict, fallback };
std::string_view to_string(ParsePath path);

// Parsed form of the output contract. On the fallback path only `present`,
// `match` and `severity` carry information.
struct StructuredOutput {
  std::vector<std::string> visual_cues;
  std::vector<std::string> textual_cues;
  bool match = false;
  std::string justification;
  std::vector<QaPair> qa;
  bool present = false;
  Severity severity = Severity::none;
  ParsePath path = ParsePath::strict;

  bool operator==(const StructuredOutput&) const = default;
};

json to_json(const StructuredOutput& output);
StructuredOutput structured_output_from_json(const json& j);

// Strict: the last fenced ```json block must satisfy the contract
// (present == match, non-empty qa). Fallback: the last `PRESENT: yes|no`
// sentinel, with an optional `SEVERITY:` sentinel. nullopt when neither
// applies. Severity is forced to none when not present.
std::optional<StructuredOutput> parse_generation(std::string_view text);

// Canonical text form of a strict record; parse_generation inverts it.
std::string render_structured(const StructuredOutput& output);

struct GenerationRecord {
  GenerationTask task;
  StructuredOutput output;
  std::string raw_text;
};

// Applies task-level constraints: severity is none for severity-unsupported
// descriptors.
GenerationRecord make_record(GenerationTask task, StructuredOutput output, std::string raw_text);

json to_json(const GenerationRecord& record);
GenerationRecord generation_record_from_json(const json& j);

struct FilterCounts {
  std::size_t kept = 0;
  std::size_t dropped = 0;
};

struct FilterResult {
  std::vector<GenerationRecord> kept;
  std::vector<GenerationRecord> dropped;
  std::map<std::string, FilterCounts> per_descriptor;
};

// kept iff predicted presence equals the developer-declared label; input
// order is preserved within each side.
FilterResult consistency_filter(std::vector<GenerationRecord> records);

// User turn of an SFT conversation: the question followed by the target
// descriptor, app description and definition blocks.
std::string sft_user_text(const GenerationTask& task, const std::string& question);

json sft_line(const GenerationRecord& record, const QaPair& qa);

// One line per Q&A pair of every kept record. Throws PreconditionError on
// an empty input.
std::size_t export_sft(std::span<const GenerationRecord> kept, const std::filesystem::path& path);

struct GenerateOptions {
  std::uint64_t seed = 0;
  double temperature = 0.0;
  std::size_t workers = 8;
  int reparse_retries = 0;
};

struct GenerationOutcome {
  GenerationTask task;
  std::optional<GenerationRecord> record;  // nullopt: unparseable or failed
  std::string raw_text;
  std::string error;  // backend failure message, empty otherwise
};

// Per-task request seed, independent of scheduling order.
std::int64_t task_seed(std::uint64_t seed, const GenerationTask& task);

// Outcomes are returned in (app_id, screenshot index, descriptor id) order.
std::vector<GenerationOutcome> generate_records(Client& client, std::span<const GenerationTask> tasks,
                                                const Taxonomy& taxonomy, const GenerateOptions& options);

}  // namespace crd
