#include "crd/orchestrator.hpp"

#include <chrono>
#include <fstream>
#include <ostream>

#include "crd/audit.hpp"
#include "crd/backends.hpp"
#include "crd/evalharness.hpp"
#include "crd/ingest.hpp"
#include "crd/losses.hpp"
#include "crd/metadata2crd.hpp"
#include "crd/mistakeminer.hpp"
#include "crd/taxonomy.hpp"

namespace crd {

namespace fs = std::filesystem;

namespace {

struct StageName {
  Stage stage;
  std::string_view name;
};

constexpr StageName kStageNames[] = {
    {Stage::ingest, "ingest"},         {Stage::generate, "generate"}, {Stage::filter, "filter"},
    {Stage::sft_export, "sft-export"}, {Stage::mine, "mine"},         {Stage::dpo_export, "dpo-export"},
    {Stage::eval, "eval"},             {Stage::audit, "audit"},       {Stage::loss_check, "loss-check"},
    {Stage::predict, "predict"},
};

// Artifact file names under output_dir.
constexpr const char* kSelection = "selection.jsonl";
constexpr const char* kTasks = "tasks.jsonl";
constexpr const char* kGenerations = "generations.jsonl";
constexpr const char* kKept = "kept.jsonl";
constexpr const char* kDropped = "dropped.jsonl";
constexpr const char* kSft = "sft.jsonl";
constexpr const char* kCandidates = "candidates.jsonl";
constexpr const char* kPairs = "pairs.jsonl";
constexpr const char* kDpo = "dpo.jsonl";
constexpr const char* kPredictions = "predictions.jsonl";
constexpr const char* kEvalJson = "eval_report.json";
constexpr const char* kEvalText = "eval_report.txt";
constexpr const char* kAuditJson = "audit_report.json";
constexpr const char* kAuditText = "audit_report.txt";
constexpr const char* kLossCheck = "loss_check.jsonl";

fs::path resolve(const fs::path& base, const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  fs::path p = j.at(key).get<std::string>();
  if (p.empty()) return {};
  return p.is_relative() ? (base / p).lexically_normal() : p;
}

std::size_t count_lines(const std::string& bytes) {
  std::size_t n = 0;
  for (char c : bytes) n += c == '\n';
  if (!bytes.empty() && bytes.back() != '\n') ++n;
  return n;
}

ArtifactInfo describe(const fs::path& path, const fs::path& out_dir) {
  ArtifactInfo info;
  const fs::path rel = path.lexically_relative(out_dir);
  info.path = !rel.empty() && *rel.begin() != ".." ? rel.generic_string() : path.generic_string();
  if (fs::exists(path)) {
    const std::string bytes = read_file(path);
    info.lines = count_lines(bytes);
    info.sha256 = sha256_hex(bytes);
  }
  return info;
}

void require_upstream(const fs::path& path, std::string_view producer) {
  if (!fs::exists(path))
    throw PreconditionError("missing upstream artifact " + path.string() + "; run `" + std::string(producer) +
                            "` first");
}

void require_input(const fs::path& path, const char* what) {
  if (path.empty()) throw ValidationError(std::string("config does not set '") + what + "'");
  if (!fs::exists(path)) throw ValidationError(std::string(what) + " not found: " + path.string());
}

void write_records(const fs::path& path, const std::vector<json>& records) { write_jsonl_atomic(path, records); }

class StageContext {
 public:
  StageContext(const PipelineConfig& config, Stage stage, const RunOptions& options)
      : config_(config), options_(options) {
    summary.stage = std::string(to_string(stage));
    summary.dry_run = options.dry_run;
    limiter_ = std::make_shared<InflightLimiter>(config.max_inflight);
  }

  const PipelineConfig& config() const { return config_; }
  fs::path out(const char* name) const { return config_.output_dir / name; }
  bool dry_run() const { return options_.dry_run; }

  void input(const std::string& key, const fs::path& path) { summary.inputs[key] = describe(path, config_.output_dir); }
  void output(const std::string& key, const fs::path& path) { summary.outputs[key] = describe(path, config_.output_dir); }

  Client client(const std::string& role) {
    const json cfg = config_.backends.contains(role) ? config_.backends.at(role) : json::object();
    const BackendConfig bc = backend_config_from_json(role, cfg, config_.config_dir);
    ClientOptions opts;
    opts.limiter = limiter_;
    opts.asset_root = config_.asset_root;
    opts.jitter_seed = mix_seed(config_.seed, role);
    const fs::path log_path = config_.output_dir / "logs" / (summary.stage + "." + role + ".jsonl");
    fs::create_directories(log_path.parent_path());
    std::ofstream(log_path, std::ios::trunc).close();
    opts.log = std::make_shared<RequestLog>(log_path);
    return Client(make_transport(bc), std::move(opts));
  }

  std::size_t workers() const { return config_.max_inflight; }
  std::size_t peak_inflight() const { return limiter_->peak(); }

  StageSummary summary;

 private:
  const PipelineConfig& config_;
  const RunOptions& options_;
  std::shared_ptr<InflightLimiter> limiter_;
};

fs::path predictions_path(const PipelineConfig& c) {
  return c.predictions.empty() ? c.output_dir / kPredictions : c.predictions;
}

// --- stages -------------------------------------------------------------------

void stage_ingest(StageContext& ctx) {
  const auto& c = ctx.config();
  ctx.input("corpus", c.corpus);
  ctx.input("taxonomy", c.taxonomy);
  const Taxonomy tax = load_taxonomy(c.taxonomy);
  const auto records = load_corpus(c.corpus, tax);
  ctx.summary.counts["corpus_records"] = static_cast<std::int64_t>(records.size());

  const CorpusSelection selection = curate_corpus(records, c.k_per_criterion, {}, {});
  std::vector<json> selection_lines;
  for (const auto& cell : selection.cells) {
    for (const auto& app : cell.apps) {
      json criteria = json::array();
      for (auto k : app.criteria) criteria.push_back(to_string(k));
      selection_lines.push_back(
          {{"app_id", app.app_id}, {"rating", to_string(cell.rating)}, {"genre", cell.genre}, {"criteria", criteria}});
    }
  }
  const auto selected = selection.app_ids();

  std::vector<json> task_lines;
  std::int64_t excluded_4plus = 0, no_screenshots = 0, apps_with_tasks = 0, positives = 0;
  std::vector<const AppRecord*> ordered;
  for (const auto& r : records)
    if (selected.count(r.app_id)) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->app_id < b->app_id; });
  for (const AppRecord* app : ordered) {
    if (app->declared_rating == RatingClass::r4 && !c.include_4plus) {
      ++excluded_4plus;
      continue;
    }
    if (app->screenshot_refs.empty()) {
      ++no_screenshots;
      continue;
    }
    ++apps_with_tasks;
    for (const auto& t : enumerate_tasks(*app, tax, c.negative_ratio, c.seed, c.max_screenshots)) {
      positives += t.expected_present;
      task_lines.push_back(to_json(t));
    }
  }
  auto& n = ctx.summary.counts;
  n["selected_apps"] = static_cast<std::int64_t>(selected.size());
  n["excluded_4plus"] = excluded_4plus;
  n["skipped_no_screenshots"] = no_screenshots;
  n["apps_with_tasks"] = apps_with_tasks;
  n["tasks"] = static_cast<std::int64_t>(task_lines.size());
  n["positive_tasks"] = positives;
  n["negative_tasks"] = static_cast<std::int64_t>(task_lines.size()) - positives;
  // Ingest is pure, so a dry run still reports the planned counts.
  if (ctx.dry_run()) return;
  write_records(ctx.out(kSelection), selection_lines);
  write_records(ctx.out(kTasks), task_lines);
  ctx.output("selection", ctx.out(kSelection));
  ctx.output("tasks", ctx.out(kTasks));
}

void stage_generate(StageContext& ctx) {
  const auto& c = ctx.config();
  require_upstream(ctx.out(kTasks), "ingest");
  ctx.input("tasks", ctx.out(kTasks));
  if (ctx.dry_run()) return;
  const Taxonomy tax = load_taxonomy(c.taxonomy);
  std::vector<GenerationTask> tasks;
  for (const auto& j : read_jsonl(ctx.out(kTasks))) tasks.push_back(task_from_json(j));

  Client client = ctx.client("generator");
  const auto outcomes =
      generate_records(client, tasks, tax, {c.seed, c.generation_temperature, ctx.workers(), c.reparse_retries});
  std::vector<json> lines;
  std::int64_t strict = 0, fallback = 0, unparseable = 0, failed = 0;
  for (const auto& o : outcomes) {
    json j{{"task", to_json(o.task)}, {"raw_text", o.raw_text}};
    if (o.record) {
      j["status"] = "parsed";
      j["output"] = to_json(o.record->output);
      (o.record->output.path == ParsePath::strict ? strict : fallback)++;
    } else if (!o.error.empty()) {
      j["status"] = "failed";
      j["error"] = o.error;
      ++failed;
    } else {
      j["status"] = "unparseable";
      ++unparseable;
    }
    lines.push_back(std::move(j));
  }
  write_records(ctx.out(kGenerations), lines);
  auto& n = ctx.summary.counts;
  n["tasks"] = static_cast<std::int64_t>(tasks.size());
  n["parsed_strict"] = strict;
  n["parsed_fallback"] = fallback;
  n["unparseable"] = unparseable;
  n["failed"] = failed;
  n["peak_inflight"] = static_cast<std::int64_t>(ctx.peak_inflight());
  ctx.output("generations", ctx.out(kGenerations));
}

void stage_filter(StageContext& ctx) {
  require_upstream(ctx.out(kGenerations), "generate");
  ctx.input("generations", ctx.out(kGenerations));
  if (ctx.dry_run()) return;
  std::vector<GenerationRecord> records;
  std::int64_t skipped = 0;
  for (const auto& j : read_jsonl(ctx.out(kGenerations))) {
    if (j.value("status", std::string()) != "parsed") {
      ++skipped;
      continue;
    }
    records.push_back({task_from_json(j.at("task")), structured_output_from_json(j.at("output")),
                       j.value("raw_text", std::string())});
  }
  const std::size_t total = records.size();
  FilterResult result = consistency_filter(std::move(records));
  std::vector<json> kept, dropped;
  for (const auto& r : result.kept) kept.push_back(to_json(r));
  for (const auto& r : result.dropped) dropped.push_back(to_json(r));
  write_records(ctx.out(kKept), kept);
  write_records(ctx.out(kDropped), dropped);
  auto& n = ctx.summary.counts;
  n["records"] = static_cast<std::int64_t>(total);
  n["kept"] = static_cast<std::int64_t>(kept.size());
  n["dropped"] = static_cast<std::int64_t>(dropped.size());
  n["skipped_unparsed"] = skipped;
  json per = json::object();
  for (const auto& [d, fc] : result.per_descriptor) per[d] = {{"kept", fc.kept}, {"dropped", fc.dropped}};
  ctx.summary.details["per_descriptor"] = std::move(per);
  ctx.output("kept", ctx.out(kKept));
  ctx.output("dropped", ctx.out(kDropped));
}

void stage_sft_export(StageContext& ctx) {
  require_upstream(ctx.out(kKept), "filter");
  ctx.input("kept", ctx.out(kKept));
  if (ctx.dry_run()) return;
  std::vector<GenerationRecord> kept;
  for (const auto& j : read_jsonl(ctx.out(kKept))) kept.push_back(generation_record_from_json(j));
  const std::size_t lines = export_sft(kept, ctx.out(kSft));
  std::int64_t fallback = 0;
  for (const auto& r : kept) fallback += r.output.path == ParsePath::fallback;
  ctx.summary.counts["kept_records"] = static_cast<std::int64_t>(kept.size());
  ctx.summary.counts["fallback_records_without_qa"] = fallback;
  ctx.summary.counts["sft_lines"] = static_cast<std::int64_t>(lines);
  ctx.output("sft", ctx.out(kSft));
}

void stage_mine(StageContext& ctx) {
  const auto& c = ctx.config();
  require_upstream(ctx.out(kSft), "sft-export");
  ctx.input("sft", ctx.out(kSft));
  if (ctx.dry_run()) return;
  const auto inputs = load_mining_inputs(ctx.out(kSft));
  Client policy = ctx.client("policy");
  Client judge = ctx.client("judge");
  const auto candidates = sample_and_score(policy, judge, inputs,
                                           {c.n_passes, c.temperature, static_cast<std::int64_t>(c.seed >> 1), ctx.workers()});
  std::vector<json> cand_lines;
  for (const auto& cand : candidates) cand_lines.push_back(to_json(cand));
  const MiningResult mined = mine_pairs(candidates, inputs, c.threshold);
  std::vector<json> pair_lines;
  for (const auto& p : mined.pairs) pair_lines.push_back(to_json(p));
  write_records(ctx.out(kCandidates), cand_lines);
  write_records(ctx.out(kPairs), pair_lines);
  auto& n = ctx.summary.counts;
  n["inputs"] = static_cast<std::int64_t>(inputs.size());
  n["candidates"] = static_cast<std::int64_t>(mined.stats.candidates);
  n["unscored"] = static_cast<std::int64_t>(mined.stats.unscored);
  n["below_threshold"] = static_cast<std::int64_t>(mined.stats.below_threshold);
  n["duplicates"] = static_cast<std::int64_t>(mined.stats.duplicates);
  n["identical_guard"] = static_cast<std::int64_t>(mined.stats.identical_guard);
  n["pairs"] = static_cast<std::int64_t>(mined.pairs.size());
  n["peak_inflight"] = static_cast<std::int64_t>(ctx.peak_inflight());
  json hist = json::object();
  for (int s = 0; s <= 5; ++s) hist[std::to_string(s)] = 0;
  for (const auto& cand : candidates)
    if (cand.judge_score) hist[std::to_string(*cand.judge_score)] = hist[std::to_string(*cand.judge_score)].get<int>() + 1;
  ctx.summary.details["score_histogram"] = std::move(hist);
  ctx.output("candidates", ctx.out(kCandidates));
  ctx.output("pairs", ctx.out(kPairs));
}

void stage_dpo_export(StageContext& ctx) {
  require_upstream(ctx.out(kPairs), "mine");
  ctx.input("pairs", ctx.out(kPairs));
  if (ctx.dry_run()) return;
  std::vector<PreferencePair> pairs;
  for (const auto& j : read_jsonl(ctx.out(kPairs))) pairs.push_back(preference_pair_from_json(j));
  ctx.summary.counts["dpo_rows"] = static_cast<std::int64_t>(export_dpo(pairs, ctx.out(kDpo)));
  ctx.output("dpo", ctx.out(kDpo));
}

void stage_predict(StageContext& ctx) {
  const auto& c = ctx.config();
  ctx.input("corpus", c.corpus);
  if (ctx.dry_run()) return;
  const Taxonomy tax = load_taxonomy(c.taxonomy);
  const auto apps = load_corpus(c.corpus, tax);
  std::vector<GenerationTask> tasks;
  for (const auto& app : apps) {
    const std::size_t shots =
        c.max_screenshots ? std::min(c.max_screenshots, app.screenshot_refs.size()) : app.screenshot_refs.size();
    for (std::size_t s = 0; s < shots; ++s) {
      for (const auto& d : tax.apple_descriptors()) {
        GenerationTask t;
        t.app_id = app.app_id;
        t.app_name = app.name;
        t.description = app.description();
        t.screenshot_ref = app.screenshot_refs[s];
        t.screenshot_index = s;
        t.target_descriptor = d.id;
        t.descriptor_name = d.name;
        t.severity_supported = d.severity_supported;
        t.definition = definition_bundle(tax, d.id);
        tasks.push_back(std::move(t));
      }
    }
  }
  std::sort(tasks.begin(), tasks.end(), [](const GenerationTask& a, const GenerationTask& b) {
    return std::tie(a.app_id, a.screenshot_index, a.target_descriptor) <
           std::tie(b.app_id, b.screenshot_index, b.target_descriptor);
  });
  Client policy = ctx.client("policy");
  std::vector<json> lines(tasks.size());
  std::atomic<std::int64_t> unparsed{0};
  parallel_for(tasks.size(), ctx.workers(), [&](std::size_t i) {
    const auto& t = tasks[i];
    MiningInput in{"", t.screenshot_ref, sft_user_text(t, "Does this app contain " + t.descriptor_name + "?"), "", t.app_id,
                   t.target_descriptor};
    const std::string text = policy.complete(policy_request(in, 0.0, task_seed(c.seed, t))).text;
    const Prediction p = parse_prediction(text, t.app_id, tax.apple(t.target_descriptor));
    unparsed += p.unparsed;
    lines[i] = {{"app_id", t.app_id},          {"descriptor", t.target_descriptor}, {"screenshot_index", t.screenshot_index},
                {"text", text},                {"present", p.present},             {"severity", to_string(p.severity)},
                {"unparsed", p.unparsed}};
  });
  write_records(ctx.out(kPredictions), lines);
  ctx.summary.counts["apps"] = static_cast<std::int64_t>(apps.size());
  ctx.summary.counts["prediction_rows"] = static_cast<std::int64_t>(lines.size());
  ctx.summary.counts["unparsed"] = unparsed.load();
  ctx.output("predictions", ctx.out(kPredictions));
}

void stage_eval(StageContext& ctx) {
  const auto& c = ctx.config();
  const fs::path preds = predictions_path(c);
  if (c.predictions.empty()) require_upstream(preds, "predict");
  require_input(preds, "predictions");
  require_input(c.labels, "labels");
  ctx.input("predictions", preds);
  ctx.input("labels", c.labels);
  if (ctx.dry_run()) return;
  const Taxonomy tax = load_taxonomy(c.taxonomy);
  const LoadedPredictions loaded = load_predictions(preds, tax);
  EvalReport report = evaluate(loaded.matrix, load_labels(c.labels, tax), tax);
  report.prediction_rows = loaded.rows;
  report.unparsed = loaded.unparsed;
  write_text_atomic(ctx.out(kEvalJson), to_json(report).dump(2) + "\n");
  write_text_atomic(ctx.out(kEvalText), render_eval_report(report, tax));
  ctx.summary.counts["descriptors"] = static_cast<std::int64_t>(report.descriptors.size());
  ctx.summary.counts["prediction_rows"] = static_cast<std::int64_t>(report.prediction_rows);
  ctx.summary.counts["unparsed"] = static_cast<std::int64_t>(report.unparsed);
  json averages = json::object();
  for (const auto& [k, a] : report.averages) averages[k] = to_percent_2dp(a.mean);
  ctx.summary.details["averages_percent"] = std::move(averages);
  ctx.output("report_json", ctx.out(kEvalJson));
  ctx.output("report_text", ctx.out(kEvalText));
}

void stage_audit(StageContext& ctx) {
  const auto& c = ctx.config();
  const fs::path preds = predictions_path(c);
  if (c.predictions.empty()) require_upstream(preds, "predict");
  require_input(preds, "predictions");
  require_input(c.rules, "rules");
  ctx.input("predictions", preds);
  ctx.input("corpus", c.corpus);
  ctx.input("rules", c.rules);
  if (ctx.dry_run()) return;
  const Taxonomy tax = load_taxonomy(c.taxonomy);
  const auto apps = load_corpus(c.corpus, tax);
  const auto rules = load_policy_rules(c.rules, tax);
  const AuditReport report = audit_report(apps, load_predictions(preds, tax).matrix, rules, tax);
  write_text_atomic(ctx.out(kAuditJson), to_json(report, tax).dump(2) + "\n");
  write_text_atomic(ctx.out(kAuditText), render_audit_report(report, tax));
  auto& n = ctx.summary.counts;
  n["apps_evaluated"] = static_cast<std::int64_t>(report.apps_evaluated);
  n["apps_flagged"] = static_cast<std::int64_t>(report.apps_flagged);
  n["non_disclosures"] = static_cast<std::int64_t>(report.non_disclosures.size());
  n["apps_with_violations"] = static_cast<std::int64_t>(report.apps_with_violations);
  n["violations"] = static_cast<std::int64_t>(report.violations.size());
  ctx.summary.details["flagged_rate"] = report.flagged_rate;
  ctx.output("report_json", ctx.out(kAuditJson));
  ctx.output("report_text", ctx.out(kAuditText));
}

void stage_loss_check(StageContext& ctx) {
  const auto& c = ctx.config();
  require_input(c.loss_fixture, "loss_fixture");
  ctx.input("fixture", c.loss_fixture);
  if (ctx.dry_run()) return;
  const auto rows = load_loss_fixture(c.loss_fixture, c.beta);
  std::vector<json> out;
  std::vector<double> dpo_losses;
  std::int64_t sft_rows = 0;
  for (const auto& r : rows) {
    out.push_back(loss_check_record(r));
    if (r.kind == "dpo") dpo_losses.push_back(out.back().at("loss").get<double>());
    else ++sft_rows;
  }
  write_records(ctx.out(kLossCheck), out);
  ctx.summary.counts["rows"] = static_cast<std::int64_t>(rows.size());
  ctx.summary.counts["dpo_rows"] = static_cast<std::int64_t>(dpo_losses.size());
  ctx.summary.counts["sft_rows"] = sft_rows;
  if (!dpo_losses.empty()) ctx.summary.details["dpo_batch_mean_loss"] = batch_mean(dpo_losses);
  ctx.output("loss_check", ctx.out(kLossCheck));
}

}  // namespace

std::string_view to_string(Stage stage) {
  for (const auto& s : kStageNames)
    if (s.stage == stage) return s.name;
  return "unknown";
}

Stage parse_stage(std::string_view name) {
  for (const auto& s : kStageNames)
    if (s.name == name) return s.stage;
  throw ValidationError("unknown stage '" + std::string(name) + "'");
}

const std::vector<Stage>& pipeline_stages() {
  static const std::vector<Stage> stages{Stage::ingest, Stage::generate, Stage::filter,
                                         Stage::sft_export, Stage::mine,  Stage::dpo_export};
  return stages;
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& config_dir) {
  PipelineConfig c;
  try {
    c.config_dir = config_dir;
    c.corpus = resolve(config_dir, j, "corpus");
    c.taxonomy = resolve(config_dir, j, "taxonomy");
    c.rules = resolve(config_dir, j, "rules");
    c.output_dir = resolve(config_dir, j, "output_dir");
    c.asset_root = resolve(config_dir, j, "asset_root");
    c.predictions = resolve(config_dir, j, "predictions");
    c.labels = resolve(config_dir, j, "labels");
    c.loss_fixture = resolve(config_dir, j, "loss_fixture");
    if (c.asset_root.empty() && !c.corpus.empty()) c.asset_root = c.corpus.parent_path();
    c.seed = j.value("seed", std::uint64_t{0});
    c.negative_ratio = j.value("negative_ratio", 1.0);
    c.k_per_criterion = j.value("k_per_criterion", std::size_t{10});
    c.max_screenshots = j.value("max_screenshots", std::size_t{0});
    c.include_4plus = j.value("include_4plus", false);
    c.generation_temperature = j.value("generation_temperature", 0.0);
    c.n_passes = j.value("n_passes", 3);
    c.threshold = j.value("threshold", 3);
    c.temperature = j.value("temperature", 0.8);
    c.beta = j.value("beta", 0.1);
    c.reparse_retries = j.value("reparse_retries", 0);
    c.max_inflight = j.value("max_inflight", std::size_t{8});
    c.backends = j.value("backends", json::object());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid pipeline config: ") + e.what());
  }
  return c;
}

void validate_config(const PipelineConfig& c) {
  require_input(c.corpus, "corpus");
  require_input(c.taxonomy, "taxonomy");
  if (c.output_dir.empty()) throw ValidationError("config does not set 'output_dir'");
  for (const auto& [path, key] : {std::pair{c.rules, "rules"}, std::pair{c.labels, "labels"},
                                  std::pair{c.loss_fixture, "loss_fixture"}, std::pair{c.predictions, "predictions"}})
    if (!path.empty() && !fs::exists(path)) throw ValidationError(std::string(key) + " not found: " + path.string());
  if (c.threshold < 0 || c.threshold > 5) throw ValidationError("threshold must be in 0..5");
  if (c.n_passes < 1) throw ValidationError("n_passes must be >= 1");
  if (c.negative_ratio < 0) throw ValidationError("negative_ratio must be >= 0");
  if (c.k_per_criterion < 1) throw ValidationError("k_per_criterion must be >= 1");
  if (!(c.beta > 0)) throw ValidationError("beta must be > 0");
  if (c.temperature < 0 || c.generation_temperature < 0) throw ValidationError("temperatures must be >= 0");
  if (c.reparse_retries < 0) throw ValidationError("reparse_retries must be >= 0");
  if (c.max_inflight < 1) throw ValidationError("max_inflight must be >= 1");
  if (!c.backends.is_object()) throw ValidationError("backends must be an object keyed by role");
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  PipelineConfig c = pipeline_config_from_json(read_json_file(path), fs::absolute(path).parent_path());
  validate_config(c);
  return c;
}

json to_json(const StageSummary& s) {
  auto artifacts = [](const std::map<std::string, ArtifactInfo>& m) {
    json j = json::object();
    for (const auto& [k, a] : m) j[k] = {{"path", a.path}, {"lines", a.lines}, {"sha256", a.sha256}};
    return j;
  };
  return {{"stage", s.stage},
          {"dry_run", s.dry_run},
          {"counts", s.counts},
          {"inputs", artifacts(s.inputs)},
          {"outputs", artifacts(s.outputs)},
          {"details", s.details}};
}

void EventLog::emit(std::string_view event, json fields) {
  if (!sink_) return;
  fields["event"] = std::string(event);
  std::lock_guard lock(mutex_);
  *sink_ << fields.dump() << '\n';
  sink_->flush();
}

StageSummary run_stage(const PipelineConfig& config, Stage stage, const RunOptions& options) {
  validate_config(config);
  StageContext ctx(config, stage, options);
  EventLog silent;
  EventLog& log = options.log ? *options.log : silent;
  log.emit("stage_start", {{"stage", ctx.summary.stage}, {"dry_run", options.dry_run}});
  const auto started = std::chrono::steady_clock::now();
  if (!options.dry_run) fs::create_directories(config.output_dir);
  try {
    switch (stage) {
      case Stage::ingest: stage_ingest(ctx); break;
      case Stage::generate: stage_generate(ctx); break;
      case Stage::filter: stage_filter(ctx); break;
      case Stage::sft_export: stage_sft_export(ctx); break;
      case Stage::mine: stage_mine(ctx); break;
      case Stage::dpo_export: stage_dpo_export(ctx); break;
      case Stage::eval: stage_eval(ctx); break;
      case Stage::audit: stage_audit(ctx); break;
      case Stage::loss_check: stage_loss_check(ctx); break;
      case Stage::predict: stage_predict(ctx); break;
    }
  } catch (const std::exception& e) {
    log.emit("stage_error", {{"stage", ctx.summary.stage}, {"error", e.what()}});
    throw;
  }
  if (!options.dry_run)
    write_text_atomic(config.output_dir / "summaries" / (ctx.summary.stage + ".json"),
                      to_json(ctx.summary).dump(2) + "\n");
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  log.emit("stage_end", {{"stage", ctx.summary.stage}, {"counts", ctx.summary.counts}, {"elapsed_ms", ms}});
  return ctx.summary;
}

std::vector<StageSummary> run_pipeline(const PipelineConfig& config, const RunOptions& options) {
  std::vector<StageSummary> out;
  for (Stage s : pipeline_stages()) out.push_back(run_stage(config, s, options));
  return out;
}

}  // namespace crd
