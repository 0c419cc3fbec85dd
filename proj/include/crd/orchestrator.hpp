#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "crd/io.hpp"

namespace crd {

enum class Stage { ingest, generate, filter, sft_export, mine, dpo_export, eval, audit, loss_check, predict };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);
// The stages of a full `run`, in dependency order.
const std::vector<Stage>& pipeline_stages();

struct PipelineConfig {
  std::filesystem::path config_dir;  // base for relative paths
  std::filesystem::path corpus;
  std::filesystem::path taxonomy;
  std::filesystem::path rules;
  std::filesystem::path output_dir;
  std::filesystem::path asset_root;  // base for screenshot refs; corpus directory by default
  std::filesystem::path predictions;  // output_dir/predictions.jsonl when empty
  std::filesystem::path labels;
  std::filesystem::path loss_fixture;

  std::uint64_t seed = 0;
  double negative_ratio = 1.0;
  std::size_t k_per_criterion = 10;
  std::size_t max_screenshots = 0;
  bool include_4plus = false;
  double generation_temperature = 0.0;
  int n_passes = 3;
  int threshold = 3;
  double temperature = 0.8;
  double beta = 0.1;
  int reparse_retries = 0;
  std::size_t max_inflight = 8;

  json backends = json::object();  // role -> backend config object
};

// Relative paths resolve against the config file's directory. Throws
// ValidationError for out-of-range values and missing referenced files.
PipelineConfig pipeline_config_from_json(const json& j, const std::filesystem::path& config_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
void validate_config(const PipelineConfig& config);

struct ArtifactInfo {
  std::string path;
  std::size_t lines = 0;
  std::string sha256;
};

struct StageSummary {
  std::string stage;
  bool dry_run = false;
  std::map<std::string, std::int64_t> counts;
  std::map<std::string, ArtifactInfo> inputs;
  std::map<std::string, ArtifactInfo> outputs;
  json details = json::object();
};

json to_json(const StageSummary& summary);

// Line-delimited structured events, one JSON object per line.
class EventLog {
 public:
  explicit EventLog(std::ostream* sink = nullptr) : sink_(sink) {}
  void emit(std::string_view event, json fields = json::object());

 private:
  std::ostream* sink_;
  std::mutex mutex_;
};

struct RunOptions {
  bool dry_run = false;
  EventLog* log = nullptr;
};

// Runs one stage. Outputs are written atomically under output_dir and the
// summary goes to output_dir/summaries/<stage>.json. Throws
// PreconditionError when an upstream artifact is missing.
StageSummary run_stage(const PipelineConfig& config, Stage stage, const RunOptions& options = {});

// ingest through dpo-export.
std::vector<StageSummary> run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

}  // namespace crd
