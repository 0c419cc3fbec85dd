#include "crd/mistakeminer.hpp"

#include <map>
#include <set>

#include "crd/sentinels.hpp"

namespace crd {

namespace {

constexpr std::string_view kPolicySystem =
    "You are a content-rating analyst. Answer the question about the target content rating descriptor. "
    "State the decision, cite the cues, and end with `PRESENT: yes|no` and `SEVERITY: mild|strong|none`.";

constexpr std::string_view kJudgeSystem =
    "You compare a candidate answer with a reference answer about one app content rating descriptor.";

constexpr std::string_view kRubric =
    "Rate how well the candidate agrees with the reference on a scale from 0 to 5.\n"
    "0: complete disagreement (opposite presence decision).\n"
    "1: the candidate gives no usable decision.\n"
    "2: same presence decision, different severity.\n"
    "3: same decision and severity, weakly supported by different cues.\n"
    "4: same decision and severity, largely the same cues.\n"
    "5: perfect agreement.\n"
    "Finish with a line `SCORE: k`.";

}  // namespace

MiningInput mining_input_from_sft(const json& line, std::size_t line_index) {
  MiningInput in;
  in.input_id = "sft:" + std::to_string(line_index);
  in.image = line.at("image").get<std::string>();
  for (const auto& turn : line.at("conversations")) {
    const std::string role = turn.at("role").get<std::string>();
    if (role == "user" && in.prompt.empty()) in.prompt = turn.at("text").get<std::string>();
    else if (role == "assistant" && in.reference.empty()) in.reference = turn.at("text").get<std::string>();
  }
  if (in.prompt.empty() || in.reference.empty())
    throw ParseError("SFT line " + std::to_string(line_index) + " lacks a user or assistant turn");
  in.app_id = line.value("app_id", std::string());
  in.descriptor = line.value("descriptor", std::string());
  return in;
}

std::vector<MiningInput> load_mining_inputs(const std::filesystem::path& sft_path) {
  std::vector<MiningInput> out;
  const auto lines = read_jsonl(sft_path);
  for (std::size_t i = 0; i < lines.size(); ++i) out.push_back(mining_input_from_sft(lines[i], i));
  return out;
}

json to_json(const CandidateResponse& c) {
  json j{{"input_id", c.input_id}, {"pass_index", c.pass_index}, {"text", c.text}};
  j["judge_score"] = c.judge_score ? json(*c.judge_score) : json(nullptr);
  if (!c.error.empty()) j["error"] = c.error;
  return j;
}

CandidateResponse candidate_from_json(const json& j) {
  CandidateResponse c;
  c.input_id = j.at("input_id").get<std::string>();
  c.pass_index = j.at("pass_index").get<int>();
  c.text = j.at("text").get<std::string>();
  if (const auto it = j.find("judge_score"); it != j.end() && !it->is_null()) c.judge_score = it->get<int>();
  c.error = j.value("error", std::string());
  return c;
}

GenerationRequest policy_request(const MiningInput& input, double temperature, std::int64_t seed) {
  GenerationRequest r;
  r.system_text = std::string(kPolicySystem);
  r.user_parts = {ImagePart{input.image}, TextPart{input.prompt}};
  r.temperature = temperature;
  r.seed = seed;
  return r;
}

std::vector<CandidateResponse> sample_candidates(Client& policy, const MiningInput& input, int n_passes,
                                                 double temperature, std::int64_t base_seed) {
  if (n_passes < 1) throw PreconditionError("n_passes must be >= 1");
  std::vector<CandidateResponse> out;
  for (int i = 1; i <= n_passes; ++i) {
    CandidateResponse c;
    c.input_id = input.input_id;
    c.pass_index = i;
    try {
      c.text = policy.complete(policy_request(input, temperature, base_seed + i)).text;
    } catch (const BackendError& e) {
      c.error = e.what();
    }
    out.push_back(std::move(c));
  }
  return out;
}

GenerationRequest judge_request(std::string_view reference, std::string_view candidate, std::int64_t seed) {
  std::string text(kRubric);
  text += "\n\n" + std::string(kReferenceBegin) + "\n" + std::string(reference) + "\n" + std::string(kReferenceEnd);
  text += "\n" + std::string(kCandidateBegin) + "\n" + std::string(candidate) + "\n" + std::string(kCandidateEnd);
  GenerationRequest r;
  r.system_text = std::string(kJudgeSystem);
  r.user_parts = {TextPart{std::move(text)}};
  r.temperature = 0.0;
  r.seed = seed;
  return r;
}

std::optional<int> parse_score(std::string_view text) {
  const auto v = last_sentinel(text, "SCORE");
  if (!v || v->size() != 1 || (*v)[0] < '0' || (*v)[0] > '5') return std::nullopt;
  return (*v)[0] - '0';
}

std::optional<int> score_alignment(Client& judge, std::string_view reference, std::string_view candidate) {
  if (reference.empty() || candidate.empty()) throw PreconditionError("score_alignment needs non-empty texts");
  const std::string key = std::string(reference) + '\x1f' + std::string(candidate);
  const auto seed = static_cast<std::int64_t>(fnv1a64(key) >> 1);
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (auto s = parse_score(judge.complete(judge_request(reference, candidate, seed + attempt)).text)) return s;
  }
  return std::nullopt;
}

json to_json(const PreferencePair& p) {
  return {{"input_id", p.input_id}, {"image", p.image},           {"prompt", p.prompt},
          {"chosen", p.chosen},     {"rejected", p.rejected},     {"judge_score", p.judge_score},
          {"pass_index", p.pass_index}, {"app_id", p.app_id},     {"descriptor", p.descriptor}};
}

PreferencePair preference_pair_from_json(const json& j) {
  return {j.at("input_id"), j.at("image"),     j.at("prompt"),
          j.at("chosen"),   j.at("rejected"),  j.at("judge_score").get<int>(),
          j.value("pass_index", 0), j.value("app_id", std::string()), j.value("descriptor", std::string())};
}

MiningResult mine_pairs(std::span<const CandidateResponse> candidates, std::span<const MiningInput> inputs,
                        int threshold) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < inputs.size(); ++i) index.emplace(inputs[i].input_id, i);
  std::vector<std::vector<const CandidateResponse*>> grouped(inputs.size());
  MiningResult result;
  for (const auto& c : candidates) {
    const auto it = index.find(c.input_id);
    if (it == index.end()) throw ValidationError("candidate references unknown input " + c.input_id);
    grouped[it->second].push_back(&c);
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const MiningInput& in = inputs[i];
    std::set<std::string> seen;
    for (const CandidateResponse* c : grouped[i]) {
      ++result.stats.candidates;
      if (!c->judge_score) {
        ++result.stats.unscored;
        continue;
      }
      if (*c->judge_score >= threshold) continue;
      ++result.stats.below_threshold;
      if (c->text == in.reference) {
        ++result.stats.identical_guard;
        continue;
      }
      if (!seen.insert(c->text).second) {
        ++result.stats.duplicates;
        continue;
      }
      result.pairs.push_back({in.input_id, in.image, in.prompt, in.reference, c->text, *c->judge_score, c->pass_index,
                              in.app_id, in.descriptor});
    }
  }
  return result;
}

json to_json(const DpoRow& r) {
  return {{"image", r.image}, {"prompt", r.prompt}, {"chosen", r.chosen}, {"rejected", r.rejected},
          {"judge_score", r.judge_score}};
}

DpoRow dpo_row_from_json(const json& j) {
  return {j.at("image"), j.at("prompt"), j.at("chosen"), j.at("rejected"), j.at("judge_score").get<int>()};
}

DpoRow to_dpo_row(const PreferencePair& p) { return {p.image, p.prompt, p.chosen, p.rejected, p.judge_score}; }

std::size_t export_dpo(std::span<const PreferencePair> pairs, const std::filesystem::path& path) {
  if (pairs.empty()) throw PreconditionError("export_dpo: no preference pairs");
  AtomicFileWriter out(path);
  for (const auto& p : pairs) out.write_line(to_json(to_dpo_row(p)));
  out.commit();
  return out.lines();
}

std::vector<DpoRow> import_dpo(const std::filesystem::path& path) {
  std::vector<DpoRow> rows;
  for (const auto& j : read_jsonl(path)) rows.push_back(dpo_row_from_json(j));
  return rows;
}

std::vector<CandidateResponse> sample_and_score(Client& policy, Client& judge, std::span<const MiningInput> inputs,
                                                const MineOptions& options) {
  if (options.n_passes < 1) throw PreconditionError("n_passes must be >= 1");
  const auto passes = static_cast<std::size_t>(options.n_passes);
  std::vector<CandidateResponse> out(inputs.size() * passes);
  parallel_for(inputs.size(), options.workers, [&](std::size_t i) {
    const std::int64_t base = options.seed + static_cast<std::int64_t>(i * passes);
    auto cands = sample_candidates(policy, inputs[i], options.n_passes, options.temperature, base);
    for (std::size_t p = 0; p < passes; ++p) {
      auto& c = cands[p];
      if (c.error.empty()) {
        if (c.text.empty()) {
          c.error = "empty candidate";
        } else {
          try {
            c.judge_score = score_alignment(judge, inputs[i].reference, c.text);
            if (!c.judge_score) c.error = "judge output unparseable after re-ask";
          } catch (const BackendError& e) {
            c.error = std::string("judge: ") + e.what();
          }
        }
      }
      out[i * passes + p] = std::move(c);
    }
  });
  return out;
}

}  // namespace crd
