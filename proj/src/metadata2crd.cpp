#include "crd/metadata2crd.hpp"

#include <algorithm>
#include <tuple>

#include "crd/sentinels.hpp"

namespace crd {

namespace {

constexpr std::string_view kSystemText =
    "You are a content-rating analyst. You decide whether a mobile app contains one target content "
    "rating descriptor, using one screenshot and the developer description. Follow the four steps in "
    "order and answer strictly in the requested output format.";

constexpr std::string_view kContract =
    "OUTPUT FORMAT:\n"
    "Return one fenced ```json block with the keys visual_cues (list of strings), textual_cues (list of "
    "strings), match (true or false), justification (string), qa (list of {\"question\", \"answer\"} "
    "objects; each answer states the decision and justifies it by citing the relevant cues), present "
    "(true or false, equal to match) and severity (\"mild\", \"strong\" or \"none\").\n"
    "After the block write a final line `PRESENT: yes` or `PRESENT: no`.";

std::string scale_text(bool severity_supported) { return severity_supported ? "mild|strong" : "not applicable"; }

std::vector<std::string> strings_of(const json& j, const char* key) {
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw ParseError(std::string(key) + " must be a list");
  std::vector<std::string> out;
  for (const auto& s : arr) out.push_back(s.get<std::string>());
  return out;
}

std::optional<StructuredOutput> parse_strict(std::string_view text) {
  const auto fence = text.rfind("```json");
  if (fence == std::string_view::npos) return std::nullopt;
  const auto body_start = text.find('\n', fence);
  if (body_start == std::string_view::npos) return std::nullopt;
  const auto body_end = text.find("```", body_start);
  if (body_end == std::string_view::npos) return std::nullopt;
  try {
    const json j = json::parse(text.substr(body_start + 1, body_end - body_start - 1));
    StructuredOutput out;
    out.visual_cues = strings_of(j, "visual_cues");
    out.textual_cues = strings_of(j, "textual_cues");
    out.match = j.at("match").get<bool>();
    out.justification = j.at("justification").get<std::string>();
    for (const auto& qa : j.at("qa")) {
      out.qa.push_back({qa.at("question").get<std::string>(), qa.at("answer").get<std::string>()});
    }
    out.present = j.at("present").get<bool>();
    if (out.qa.empty() || out.present != out.match) return std::nullopt;
    if (auto it = j.find("severity"); it != j.end() && !it->is_null()) out.severity = parse_severity(it->get<std::string>());
    if (!out.present) out.severity = Severity::none;
    out.path = ParsePath::strict;
    return out;
  } catch (const json::exception&) {
    return std::nullopt;
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

PromptEnvelope build_prompt(const GenerationTask& task, const Taxonomy& taxonomy, double temperature,
                            std::optional<std::int64_t> seed) {
  const AppleDescriptor& descriptor = taxonomy.apple(task.target_descriptor);
  std::string definition = task.definition.empty() ? definition_bundle(taxonomy, descriptor.id) : task.definition;
  if (trim(definition).empty()) throw NotFoundError("no definition for descriptor " + descriptor.id);
  if (task.screenshot_ref.empty()) throw PreconditionError("task for " + task.app_id + " has no screenshot");

  std::string text;
  text += std::string(kTargetMarker) + " " + descriptor.id + "\n";
  text += std::string(kNameMarker) + " " + descriptor.name + "\n";
  text += std::string(kSeverityScaleMarker) + " " + scale_text(descriptor.severity_supported) + "\n";
  text += std::string(kDefinitionBegin) + "\n" + definition + "\n" + std::string(kDefinitionEnd) + "\n";
  text += "APP NAME: " + task.app_name + "\n";
  text += std::string(kDescriptionBegin) + "\n" + task.description + "\n" + std::string(kDescriptionEnd) + "\n\n";
  text += std::string(kStepHeaders[0]) +
          "\nDescribe the visual elements of the screenshot that relate to the target descriptor.\n\n";
  text += std::string(kStepHeaders[1]) +
          "\nExtract the parts of the app description that relate to the target descriptor.\n\n";
  text += std::string(kStepHeaders[2]) +
          "\nCompare the visual and textual cues with the definition and decide whether the descriptor is "
          "present. Justify the decision.\n\n";
  text += std::string(kStepHeaders[3]) +
          "\nWrite question-answer pairs about the descriptor. Each answer states whether the descriptor is "
          "present and justifies the decision by citing the relevant cues.\n\n";
  text += kContract;

  PromptEnvelope env;
  env.task = task;
  env.task.definition = definition;
  env.rendered.system_text = std::string(kSystemText);
  env.rendered.user_parts = {ImagePart{task.screenshot_ref}, TextPart{std::move(text)}};
  env.rendered.temperature = temperature;
  env.rendered.seed = seed;
  return env;
}

std::string_view to_string(ParsePath path) { return path == ParsePath::strict ? "strict" : "fallback"; }

json to_json(const StructuredOutput& o) {
  json qa = json::array();
  for (const auto& p : o.qa) qa.push_back({{"question", p.question}, {"answer", p.answer}});
  return {{"visual_cues", o.visual_cues}, {"textual_cues", o.textual_cues}, {"match", o.match},
          {"justification", o.justification}, {"qa", std::move(qa)}, {"present", o.present},
          {"severity", to_string(o.severity)}, {"parse_path", to_string(o.path)}};
}

StructuredOutput structured_output_from_json(const json& j) {
  StructuredOutput o;
  o.visual_cues = strings_of(j, "visual_cues");
  o.textual_cues = strings_of(j, "textual_cues");
  o.match = j.at("match").get<bool>();
  o.justification = j.at("justification").get<std::string>();
  for (const auto& p : j.at("qa")) o.qa.push_back({p.at("question"), p.at("answer")});
  o.present = j.at("present").get<bool>();
  o.severity = parse_severity(j.at("severity").get<std::string>());
  const std::string path = j.value("parse_path", std::string("strict"));
  if (path == "strict") o.path = ParsePath::strict;
  else if (path == "fallback") o.path = ParsePath::fallback;
  else throw ParseError("unknown parse_path '" + path + "'");
  return o;
}

std::optional<StructuredOutput> parse_generation(std::string_view text) {
  if (auto strict = parse_strict(text)) return strict;
  const auto present = last_sentinel(text, "PRESENT");
  if (!present || (*present != "yes" && *present != "no")) return std::nullopt;
  StructuredOutput out;
  out.path = ParsePath::fallback;
  out.present = out.match = *present == "yes";
  if (out.present) {
    if (auto sev = last_sentinel(text, "SEVERITY")) {
      try {
        out.severity = parse_severity(*sev);
      } catch (const Error&) {
        out.severity = Severity::none;
      }
    }
  }
  return out;
}

std::string render_structured(const StructuredOutput& o) {
  json block = to_json(o);
  block.erase("parse_path");
  std::string out = "```json\n" + block.dump(2) + "\n```\n";
  out += std::string("PRESENT: ") + (o.present ? "yes" : "no") + "\n";
  return out;
}

GenerationRecord make_record(GenerationTask task, StructuredOutput output, std::string raw_text) {
  if (!task.severity_supported || !output.present) output.severity = Severity::none;
  return {std::move(task), std::move(output), std::move(raw_text)};
}

json to_json(const GenerationRecord& r) {
  return {{"task", to_json(r.task)}, {"output", to_json(r.output)}, {"raw_text", r.raw_text}};
}

GenerationRecord generation_record_from_json(const json& j) {
  return {task_from_json(j.at("task")), structured_output_from_json(j.at("output")),
          j.value("raw_text", std::string())};
}

FilterResult consistency_filter(std::vector<GenerationRecord> records) {
  FilterResult result;
  for (auto& r : records) {
    auto& counts = result.per_descriptor[r.task.target_descriptor];
    if (r.output.present == r.task.expected_present) {
      ++counts.kept;
      result.kept.push_back(std::move(r));
    } else {
      ++counts.dropped;
      result.dropped.push_back(std::move(r));
    }
  }
  return result;
}

std::string sft_user_text(const GenerationTask& task, const std::string& question) {
  std::string text = question + "\n";
  text += std::string(kTargetMarker) + " " + task.target_descriptor + "\n";
  text += std::string(kNameMarker) + " " + task.descriptor_name + "\n";
  text += std::string(kSeverityScaleMarker) + " " + scale_text(task.severity_supported) + "\n";
  text += std::string(kDescriptionBegin) + "\n" + task.description + "\n" + std::string(kDescriptionEnd) + "\n";
  text += std::string(kDefinitionBegin) + "\n" + task.definition + "\n" + std::string(kDefinitionEnd);
  return text;
}

json sft_line(const GenerationRecord& r, const QaPair& qa) {
  return {{"image", r.task.screenshot_ref},
          {"conversations", json::array({{{"role", "user"}, {"text", sft_user_text(r.task, qa.question)}},
                                         {{"role", "assistant"}, {"text", qa.answer}}})},
          {"descriptor", r.task.target_descriptor},
          {"app_id", r.task.app_id},
          {"severity", to_string(r.output.severity)}};
}

std::size_t export_sft(std::span<const GenerationRecord> kept, const std::filesystem::path& path) {
  if (kept.empty()) throw PreconditionError("export_sft: no kept records");
  AtomicFileWriter out(path);
  for (const auto& r : kept)
    for (const auto& qa : r.output.qa) out.write_line(sft_line(r, qa));
  out.commit();
  return out.lines();
}

std::int64_t task_seed(std::uint64_t seed, const GenerationTask& task) {
  const std::string key = task.app_id + '\x1f' + std::to_string(task.screenshot_index) + '\x1f' + task.target_descriptor;
  return static_cast<std::int64_t>(mix_seed(seed, key) >> 1);
}

std::vector<GenerationOutcome> generate_records(Client& client, std::span<const GenerationTask> tasks,
                                                const Taxonomy& taxonomy, const GenerateOptions& options) {
  std::vector<GenerationTask> ordered(tasks.begin(), tasks.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const GenerationTask& a, const GenerationTask& b) {
    return std::tie(a.app_id, a.screenshot_index, a.target_descriptor) <
           std::tie(b.app_id, b.screenshot_index, b.target_descriptor);
  });
  std::vector<GenerationOutcome> outcomes(ordered.size());
  parallel_for(ordered.size(), options.workers, [&](std::size_t i) {
    GenerationOutcome& out = outcomes[i];
    out.task = ordered[i];
    std::int64_t seed = task_seed(options.seed, out.task);
    for (int attempt = 0; attempt <= options.reparse_retries; ++attempt, ++seed) {
      const PromptEnvelope env = build_prompt(out.task, taxonomy, options.temperature, seed);
      try {
        out.raw_text = client.complete(env.rendered).text;
      } catch (const BackendError& e) {
        out.error = e.what();
        return;
      }
      if (auto parsed = parse_generation(out.raw_text)) {
        out.record = make_record(env.task, std::move(*parsed), out.raw_text);
        return;
      }
    }
  });
  return outcomes;
}

}  // namespace crd
