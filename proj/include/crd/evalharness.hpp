#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crd/ingest.hpp"
#include "crd/taxonomy.hpp"

namespace crd {

struct Prediction {
  std::string app_id;
  std::string descriptor;  // Apple descriptor id
  bool present = false;
  Severity severity = Severity::none;
  std::string rationale;
  std::string source_id;
  bool unparsed = false;
  bool operator==(const Prediction&) const = default;
};

// Strict contract parse, then PRESENT / SEVERITY sentinels; anything else is
// negative with `unparsed` set. Never throws on model text.
Prediction parse_prediction(std::string_view model_text, const std::string& app_id, const AppleDescriptor& descriptor);

// OR over presence, max over severity. Throws PreconditionError when empty
// or when the predictions disagree on app or descriptor.
Prediction aggregate_app(std::span<const Prediction> predictions);

// Presence and severity of one (app, descriptor) cell.
struct Judgement {
  bool present = false;
  Severity severity = Severity::none;
  bool operator==(const Judgement&) const = default;
};

// app_id -> judgement for a single descriptor.
using DescriptorColumn = std::map<std::string, Judgement>;

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// nullopt marks an undefined ratio (zero denominator).
using Metric = std::optional<double>;
Metric ratio(std::uint64_t num, std::uint64_t den);

struct BinaryMetrics {
  Metric r_pos, p_pos, r_neg, p_neg;
};

struct MulticlassMetrics {
  Metric p_mild, r_mild, p_strong, r_strong;
};

// Throws ValidationError when the app sets differ.
std::pair<ConfusionCounts, BinaryMetrics> binary_metrics(const DescriptorColumn& preds, const DescriptorColumn& labels,
                                                         const std::string& descriptor);

// Three classes {none, mild, strong}, one-vs-rest for mild and strong.
// Throws ValidationError for severity-unsupported descriptors.
MulticlassMetrics multiclass_metrics(const DescriptorColumn& preds, const DescriptorColumn& labels,
                                     const AppleDescriptor& descriptor);

struct MacroAverage {
  double mean = 0.0;
  std::size_t included = 0;
  std::size_t excluded = 0;
};

// Unweighted mean over defined entries. Throws PreconditionError when no
// entry is defined.
MacroAverage macro_average(std::span<const Metric> values);

// floor(value * 10^d + 1/2), so ties round away from zero for positive
// values. A 1e-9 slack absorbs binary representation error of decimal ties.
double round_half_up(double value, int decimals);
// fraction in [0,1] -> percent with 2 decimals.
double to_percent_2dp(double fraction);

// --- files and reports ------------------------------------------------------

// (app_id, descriptor) -> judgement for every cell.
using PredictionMatrix = std::map<std::string, std::map<std::string, Judgement>>;

struct LoadedPredictions {
  PredictionMatrix matrix;   // aggregated per app
  std::size_t rows = 0;      // lines read
  std::size_t unparsed = 0;  // rows whose text could not be mapped
};

// Lines carry app_id, descriptor and either `text` (raw model output) or
// `present` [+ `severity`]. Several lines per cell are aggregated.
LoadedPredictions load_predictions(const std::filesystem::path& path, const Taxonomy& taxonomy);
// One line per cell: app_id, descriptor, present, severity?
PredictionMatrix load_labels(const std::filesystem::path& path, const Taxonomy& taxonomy);

struct DescriptorReport {
  std::string descriptor;
  ConfusionCounts counts;
  BinaryMetrics binary;
  std::optional<MulticlassMetrics> multiclass;
};

struct EvalReport {
  std::vector<DescriptorReport> descriptors;  // taxonomy order
  std::map<std::string, MacroAverage> averages;  // keys r_pos, p_neg, p_pos, r_neg, p_mild, r_mild, p_strong, r_strong
  std::size_t prediction_rows = 0;
  std::size_t unparsed = 0;
};

// Evaluates every descriptor present in the labels. Predictions must cover
// exactly the labelled apps for each evaluated descriptor.
EvalReport evaluate(const PredictionMatrix& predictions, const PredictionMatrix& labels, const Taxonomy& taxonomy);

json to_json(const EvalReport& report);
std::string render_eval_report(const EvalReport& report, const Taxonomy& taxonomy);

}  // namespace crd
