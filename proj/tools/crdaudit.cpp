#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "crd/errors.hpp"
#include "crd/losses.hpp"
#include "crd/orchestrator.hpp"

namespace {

// Exit status when the audit finds rating-policy violations.
constexpr int kViolationsExit = 3;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> max_inflight;
  bool dry_run = false;

  std::optional<double> negative_ratio;
  std::optional<std::size_t> k_per_criterion;
  std::optional<std::size_t> max_screenshots;
  bool include_4plus = false;
  std::optional<int> reparse_retries;
  std::optional<int> passes;
  std::optional<int> threshold;
  std::optional<double> temperature;
  std::optional<double> beta;
  std::optional<std::string> predictions;
  std::optional<std::string> labels;
  std::optional<std::string> rules;
  std::optional<std::string> fixture;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Pipeline config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Override the pipeline seed");
  cmd->add_option("--out", o.out, "Override the output directory");
  cmd->add_option("--max-inflight", o.max_inflight, "Maximum concurrent backend requests");
  cmd->add_flag("--dry-run", o.dry_run, "Validate inputs and report the plan without writing");
}

crd::PipelineConfig apply(const Overrides& o) {
  namespace fs = std::filesystem;
  crd::PipelineConfig c = crd::load_pipeline_config(o.config);
  auto path = [](const std::string& p) { return fs::absolute(p).lexically_normal(); };
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = path(*o.out);
  if (o.max_inflight) c.max_inflight = *o.max_inflight;
  if (o.negative_ratio) c.negative_ratio = *o.negative_ratio;
  if (o.k_per_criterion) c.k_per_criterion = *o.k_per_criterion;
  if (o.max_screenshots) c.max_screenshots = *o.max_screenshots;
  if (o.include_4plus) c.include_4plus = true;
  if (o.reparse_retries) c.reparse_retries = *o.reparse_retries;
  if (o.passes) c.n_passes = *o.passes;
  if (o.threshold) c.threshold = *o.threshold;
  if (o.temperature) c.temperature = *o.temperature;
  if (o.beta) c.beta = *o.beta;
  if (o.predictions) c.predictions = path(*o.predictions);
  if (o.labels) c.labels = path(*o.labels);
  if (o.rules) c.rules = path(*o.rules);
  if (o.fixture) c.loss_fixture = path(*o.fixture);
  crd::validate_config(c);
  return c;
}

void print_report(const crd::PipelineConfig& c, crd::Stage stage) {
  const auto show = [&](const char* name) {
    const auto p = c.output_dir / name;
    if (std::filesystem::exists(p)) std::cout << crd::read_file(p);
  };
  if (stage == crd::Stage::eval) show("eval_report.txt");
  if (stage == crd::Stage::audit) show("audit_report.txt");
  if (stage == crd::Stage::loss_check) {
    const auto records = crd::read_jsonl(c.output_dir / "loss_check.jsonl");
    std::cout << crd::render_loss_table(records);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Content-rating-descriptor auditing pipeline"};
  app.require_subcommand(1);
  Overrides o;

  struct Command {
    const char* name;
    const char* help;
    std::optional<crd::Stage> stage;  // nullopt: full pipeline
  };
  const Command commands[] = {
      {"ingest", "Parse and curate the corpus, enumerate generation tasks", crd::Stage::ingest},
      {"generate", "Run the four-step generator over every task", crd::Stage::generate},
      {"filter", "Keep generations consistent with developer labels", crd::Stage::filter},
      {"sft-export", "Write the SFT conversation corpus", crd::Stage::sft_export},
      {"mine", "Sample policy answers, judge them and mine preference pairs", crd::Stage::mine},
      {"dpo-export", "Write the DPO preference corpus", crd::Stage::dpo_export},
      {"predict", "Query the policy backend for all descriptors of every app", crd::Stage::predict},
      {"eval", "Binary and multiclass metrics of predictions against labels", crd::Stage::eval},
      {"audit", "Non-disclosed descriptors and rating-policy violations", crd::Stage::audit},
      {"loss-check", "Evaluate SFT/DPO losses and gradients on a fixture", crd::Stage::loss_check},
      {"run", "ingest, generate, filter, sft-export, mine, dpo-export", std::nullopt},
  };

  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    add_common(sub, o);
    const std::string name = cmd.name;
    if (name == "ingest" || name == "run") {
      sub->add_option("--negative-ratio", o.negative_ratio, "Negative tasks per positive task");
      sub->add_option("--k-per-criterion", o.k_per_criterion, "Apps kept per ranking criterion and cell");
      sub->add_option("--max-screenshots", o.max_screenshots, "Screenshots per app (0 = all)");
      sub->add_flag("--include-4plus", o.include_4plus, "Enumerate tasks for 4+ apps as well");
    }
    if (name == "generate" || name == "run")
      sub->add_option("--reparse-retries", o.reparse_retries, "Extra generations for unparseable output");
    if (name == "mine" || name == "run") {
      sub->add_option("--passes", o.passes, "Policy samples per input");
      sub->add_option("--threshold", o.threshold, "Judge scores below this are mined")->check(CLI::Range(0, 5));
      sub->add_option("--temperature", o.temperature, "Policy sampling temperature");
    }
    if (name == "predict") sub->add_option("--max-screenshots", o.max_screenshots, "Screenshots per app (0 = all)");
    if (name == "eval" || name == "audit") sub->add_option("--predictions", o.predictions, "Predictions file");
    if (name == "eval") sub->add_option("--labels", o.labels, "Labels file");
    if (name == "audit") sub->add_option("--rules", o.rules, "Policy rules file");
    if (name == "loss-check") {
      sub->add_option("--fixture", o.fixture, "Loss fixture file");
      sub->add_option("--beta", o.beta, "Default beta for rows without one");
    }
    subs.emplace_back(sub, &cmd);
  }

  CLI11_PARSE(app, argc, argv);

  crd::EventLog log(&std::cerr);
  try {
    const crd::PipelineConfig config = apply(o);
    crd::RunOptions options{o.dry_run, &log};
    for (const auto& [sub, cmd] : subs) {
      if (!sub->parsed()) continue;
      if (!cmd->stage) {
        for (const auto& s : crd::run_pipeline(config, options)) std::cout << crd::to_json(s).dump(2) << "\n";
        return 0;
      }
      const crd::StageSummary summary = crd::run_stage(config, *cmd->stage, options);
      std::cout << crd::to_json(summary).dump(2) << "\n";
      if (!o.dry_run) print_report(config, *cmd->stage);
      if (*cmd->stage == crd::Stage::audit && summary.counts.count("violations") && summary.counts.at("violations") > 0)
        return kViolationsExit;
    }
  } catch (const crd::Error& e) {
    log.emit("error", {{"type", "crd"}, {"message", e.what()}});
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    log.emit("error", {{"type", "internal"}, {"message", e.what()}});
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
