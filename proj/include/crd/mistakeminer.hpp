#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crd/backends.hpp"

namespace crd {

inline constexpr int kDefaultThreshold = 3;
inline constexpr int kDefaultPasses = 3;

// One SFT conversation viewed as a mining input.
struct MiningInput {
  std::string input_id;  // "sft:<0-based line>"
  std::string image;
  std::string prompt;
  std::string reference;  // the SFT assistant answer
  std::string app_id;
  std::string descriptor;
};

MiningInput mining_input_from_sft(const json& sft_line, std::size_t line_index);
std::vector<MiningInput> load_mining_inputs(const std::filesystem::path& sft_path);

struct CandidateResponse {
  std::string input_id;
  int pass_index = 1;  // 1..n_passes
  std::string text;
  std::optional<int> judge_score;
  std::string error;  // non-empty when the pass failed or judging was discarded
};

json to_json(const CandidateResponse& c);
CandidateResponse candidate_from_json(const json& j);

GenerationRequest policy_request(const MiningInput& input, double temperature, std::int64_t seed);

// Pass i (1-based) is issued with seed base_seed + i. Failed passes keep
// their slot with an error marker.
std::vector<CandidateResponse> sample_candidates(Client& policy, const MiningInput& input, int n_passes,
                                                 double temperature, std::int64_t base_seed);

GenerationRequest judge_request(std::string_view reference, std::string_view candidate, std::int64_t seed);

// Integer of the last `SCORE: k` sentinel with k in 0..5.
std::optional<int> parse_score(std::string_view text);

// nullopt after one unparseable re-ask. Throws PreconditionError on empty
// texts.
std::optional<int> score_alignment(Client& judge, std::string_view reference, std::string_view candidate);

struct PreferencePair {
  std::string input_id;
  std::string image;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  int judge_score = 0;
  int pass_index = 0;
  std::string app_id;
  std::string descriptor;
  bool operator==(const PreferencePair&) const = default;
};

json to_json(const PreferencePair& p);
PreferencePair preference_pair_from_json(const json& j);

struct MiningStats {
  std::size_t candidates = 0;
  std::size_t unscored = 0;
  std::size_t below_threshold = 0;
  std::size_t duplicates = 0;       // rejected text repeated within one input
  std::size_t identical_guard = 0;  // rejected byte-equal to the reference
};

struct MiningResult {
  std::vector<PreferencePair> pairs;
  MiningStats stats;
};

// One pair per scored candidate with score < threshold, first occurrence
// kept per (input, rejected text), candidates equal to the reference
// excluded. Pair order follows input order, then candidate order.
MiningResult mine_pairs(std::span<const CandidateResponse> candidates, std::span<const MiningInput> inputs,
                        int threshold = kDefaultThreshold);

// DPO rows carry exactly image, prompt, chosen, rejected, judge_score.
struct DpoRow {
  std::string image;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  int judge_score = 0;
  bool operator==(const DpoRow&) const = default;
};

json to_json(const DpoRow& row);
DpoRow dpo_row_from_json(const json& j);
DpoRow to_dpo_row(const PreferencePair& p);

// Throws PreconditionError on an empty input.
std::size_t export_dpo(std::span<const PreferencePair> pairs, const std::filesystem::path& path);
std::vector<DpoRow> import_dpo(const std::filesystem::path& path);

struct MineOptions {
  int n_passes = kDefaultPasses;
  double temperature = 0.8;
  std::int64_t seed = 0;
  std::size_t workers = 8;
};

// Samples and judges every input; candidates come back ordered by input,
// then pass.
std::vector<CandidateResponse> sample_and_score(Client& policy, Client& judge, std::span<const MiningInput> inputs,
                                                const MineOptions& options);

}  // namespace crd
