#include "crd/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "crd/metadata2crd.hpp"

namespace crd {

Prediction parse_prediction(std::string_view model_text, const std::string& app_id, const AppleDescriptor& descriptor) {
  Prediction p;
  p.app_id = app_id;
  p.descriptor = descriptor.id;
  p.rationale = std::string(model_text);
  if (const auto parsed = parse_generation(model_text)) {
    p.present = parsed->present;
    p.severity = parsed->severity;
    if (!parsed->justification.empty()) p.rationale = parsed->justification;
  } else {
    p.unparsed = true;
  }
  if (!p.present || !descriptor.severity_supported) p.severity = Severity::none;
  return p;
}

Prediction aggregate_app(std::span<const Prediction> predictions) {
  if (predictions.empty()) throw PreconditionError("aggregate_app needs at least one prediction");
  Prediction out = predictions.front();
  for (const auto& p : predictions.subspan(1)) {
    if (p.app_id != out.app_id || p.descriptor != out.descriptor)
      throw PreconditionError("aggregate_app: predictions for different cells");
    if (p.present && !out.present) {
      out.rationale = p.rationale;
      out.source_id = p.source_id;
    }
    out.present = out.present || p.present;
    out.severity = std::max(out.severity, p.severity);
    out.unparsed = out.unparsed && p.unparsed;
  }
  return out;
}

Metric ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

namespace {

void require_same_apps(const DescriptorColumn& preds, const DescriptorColumn& labels, const std::string& descriptor) {
  if (preds.size() == labels.size() &&
      std::equal(preds.begin(), preds.end(), labels.begin(), [](const auto& a, const auto& b) { return a.first == b.first; }))
    return;
  std::string missing;
  for (const auto& [app, _] : labels)
    if (!preds.count(app)) missing += " " + app;
  std::string extra;
  for (const auto& [app, _] : preds)
    if (!labels.count(app)) extra += " " + app;
  throw ValidationError("predictions and labels differ for " + descriptor + (missing.empty() ? "" : "; unpredicted:" + missing) +
                        (extra.empty() ? "" : "; unlabelled:" + extra));
}

}  // namespace

std::pair<ConfusionCounts, BinaryMetrics> binary_metrics(const DescriptorColumn& preds, const DescriptorColumn& labels,
                                                         const std::string& descriptor) {
  require_same_apps(preds, labels, descriptor);
  ConfusionCounts c;
  for (const auto& [app, label] : labels) {
    const bool p = preds.at(app).present;
    if (label.present) (p ? c.tp : c.fn)++;
    else (p ? c.fp : c.tn)++;
  }
  BinaryMetrics m{ratio(c.tp, c.tp + c.fn), ratio(c.tp, c.tp + c.fp), ratio(c.tn, c.tn + c.fp), ratio(c.tn, c.tn + c.fn)};
  return {c, m};
}

MulticlassMetrics multiclass_metrics(const DescriptorColumn& preds, const DescriptorColumn& labels,
                                     const AppleDescriptor& descriptor) {
  if (!descriptor.severity_supported)
    throw ValidationError(descriptor.name + " carries no severity levels; multiclass metrics are undefined");
  require_same_apps(preds, labels, descriptor.id);
  auto cls = [](const Judgement& j) { return j.present ? j.severity : Severity::none; };
  std::uint64_t tp[3] = {}, npred[3] = {}, nlabel[3] = {};
  for (const auto& [app, label] : labels) {
    const auto l = static_cast<int>(cls(label));
    const auto p = static_cast<int>(cls(preds.at(app)));
    ++npred[p];
    ++nlabel[l];
    if (p == l) ++tp[l];
  }
  constexpr int mild = static_cast<int>(Severity::mild);
  constexpr int strong = static_cast<int>(Severity::strong);
  return {ratio(tp[mild], npred[mild]), ratio(tp[mild], nlabel[mild]), ratio(tp[strong], npred[strong]),
          ratio(tp[strong], nlabel[strong])};
}

MacroAverage macro_average(std::span<const Metric> values) {
  MacroAverage out;
  std::vector<double> defined;
  for (const auto& v : values) {
    if (v) defined.push_back(*v);
    else ++out.excluded;
  }
  if (defined.empty()) throw PreconditionError("macro_average: no defined entries");
  out.included = defined.size();
  double sum = 0.0, carry = 0.0;
  for (double v : defined) {
    const double t = sum + v;
    carry += std::fabs(sum) >= std::fabs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  out.mean = (sum + carry) / static_cast<double>(defined.size());
  return out;
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

double to_percent_2dp(double fraction) { return round_half_up(fraction * 100.0, 2); }

LoadedPredictions load_predictions(const std::filesystem::path& path, const Taxonomy& taxonomy) {
  std::map<std::pair<std::string, std::string>, std::vector<Prediction>> cells;
  LoadedPredictions out;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line;
    try {
      const std::string app = j.at("app_id").get<std::string>();
      const AppleDescriptor& d = taxonomy.apple(j.at("descriptor").get<std::string>());
      Prediction p;
      if (j.contains("text")) {
        p = parse_prediction(j.at("text").get<std::string>(), app, d);
      } else {
        p.app_id = app;
        p.descriptor = d.id;
        p.present = j.at("present").get<bool>();
        p.severity = parse_severity(j.value("severity", std::string("none")));
        if (!p.present || !d.severity_supported) p.severity = Severity::none;
      }
      p.source_id = j.value("source_id", path.filename().string() + ":" + std::to_string(line));
      out.unparsed += p.unparsed;
      cells[{app, d.id}].push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
    ++out.rows;
  }
  for (const auto& [key, preds] : cells) {
    const Prediction agg = aggregate_app(preds);
    out.matrix[key.first][key.second] = {agg.present, agg.severity};
  }
  return out;
}

PredictionMatrix load_labels(const std::filesystem::path& path, const Taxonomy& taxonomy) {
  PredictionMatrix m;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line;
    try {
      const std::string app = j.at("app_id").get<std::string>();
      const AppleDescriptor& d = taxonomy.apple(j.at("descriptor").get<std::string>());
      Judgement jd{j.at("present").get<bool>(), parse_severity(j.value("severity", std::string("none")))};
      if (!jd.present || !d.severity_supported) jd.severity = Severity::none;
      if (!m[app].emplace(d.id, jd).second)
        throw ValidationError(path.string() + ":" + std::to_string(line) + ": duplicate label for " + app + "/" + d.id);
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  return m;
}

namespace {

DescriptorColumn column(const PredictionMatrix& m, const std::string& descriptor) {
  DescriptorColumn c;
  for (const auto& [app, row] : m)
    if (auto it = row.find(descriptor); it != row.end()) c.emplace(app, it->second);
  return c;
}

json metric_json(const Metric& m) { return m ? json(*m) : json(nullptr); }

std::string metric_text(const Metric& m) {
  if (!m) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", to_percent_2dp(*m));
  return buf;
}

}  // namespace

EvalReport evaluate(const PredictionMatrix& predictions, const PredictionMatrix& labels, const Taxonomy& taxonomy) {
  EvalReport report;
  std::map<std::string, std::vector<Metric>> columns;
  for (const auto& d : taxonomy.apple_descriptors()) {
    const DescriptorColumn l = column(labels, d.id);
    if (l.empty()) continue;
    const DescriptorColumn p = column(predictions, d.id);
    DescriptorReport dr;
    dr.descriptor = d.id;
    std::tie(dr.counts, dr.binary) = binary_metrics(p, l, d.id);
    columns["r_pos"].push_back(dr.binary.r_pos);
    columns["p_pos"].push_back(dr.binary.p_pos);
    columns["r_neg"].push_back(dr.binary.r_neg);
    columns["p_neg"].push_back(dr.binary.p_neg);
    if (d.severity_supported) {
      dr.multiclass = multiclass_metrics(p, l, d);
      columns["p_mild"].push_back(dr.multiclass->p_mild);
      columns["r_mild"].push_back(dr.multiclass->r_mild);
      columns["p_strong"].push_back(dr.multiclass->p_strong);
      columns["r_strong"].push_back(dr.multiclass->r_strong);
    }
    report.descriptors.push_back(std::move(dr));
  }
  if (report.descriptors.empty()) throw PreconditionError("evaluate: labels cover no known descriptor");
  for (const auto& [key, values] : columns) {
    if (std::any_of(values.begin(), values.end(), [](const Metric& m) { return m.has_value(); }))
      report.averages[key] = macro_average(values);
  }
  return report;
}

json to_json(const EvalReport& r) {
  json descriptors = json::array();
  for (const auto& d : r.descriptors) {
    json j{{"descriptor", d.descriptor},
           {"counts", {{"tp", d.counts.tp}, {"fp", d.counts.fp}, {"tn", d.counts.tn}, {"fn", d.counts.fn}}},
           {"binary",
            {{"r_pos", metric_json(d.binary.r_pos)}, {"p_pos", metric_json(d.binary.p_pos)},
             {"r_neg", metric_json(d.binary.r_neg)}, {"p_neg", metric_json(d.binary.p_neg)}}}};
    if (d.multiclass)
      j["multiclass"] = {{"p_mild", metric_json(d.multiclass->p_mild)}, {"r_mild", metric_json(d.multiclass->r_mild)},
                         {"p_strong", metric_json(d.multiclass->p_strong)},
                         {"r_strong", metric_json(d.multiclass->r_strong)}};
    else
      j["multiclass"] = nullptr;
    descriptors.push_back(std::move(j));
  }
  json averages = json::object();
  for (const auto& [k, a] : r.averages)
    averages[k] = {{"mean", a.mean}, {"percent", to_percent_2dp(a.mean)}, {"included", a.included},
                   {"excluded", a.excluded}};
  const double rate = r.prediction_rows ? static_cast<double>(r.unparsed) / static_cast<double>(r.prediction_rows) : 0.0;
  return {{"descriptors", std::move(descriptors)},
          {"averages", std::move(averages)},
          {"prediction_rows", r.prediction_rows},
          {"unparsed", r.unparsed},
          {"unparsed_rate", rate}};
}

std::string render_eval_report(const EvalReport& r, const Taxonomy& taxonomy) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-44s %7s %7s %7s %7s %7s %7s %7s %7s\n", "descriptor", "R+", "P+", "R-", "P-",
                "P_mild", "R_mild", "P_str", "R_str");
  out += buf;
  for (const auto& d : r.descriptors) {
    const auto& mc = d.multiclass;
    std::snprintf(buf, sizeof buf, "%-44.44s %7s %7s %7s %7s %7s %7s %7s %7s\n", taxonomy.apple(d.descriptor).name.c_str(),
                  metric_text(d.binary.r_pos).c_str(), metric_text(d.binary.p_pos).c_str(),
                  metric_text(d.binary.r_neg).c_str(), metric_text(d.binary.p_neg).c_str(),
                  metric_text(mc ? mc->p_mild : Metric{}).c_str(), metric_text(mc ? mc->r_mild : Metric{}).c_str(),
                  metric_text(mc ? mc->p_strong : Metric{}).c_str(), metric_text(mc ? mc->r_strong : Metric{}).c_str());
    out += buf;
  }
  auto avg = [&](const char* k) -> std::string {
    const auto it = r.averages.find(k);
    return it == r.averages.end() ? "-" : metric_text(it->second.mean);
  };
  std::snprintf(buf, sizeof buf, "%-44s %7s %7s %7s %7s %7s %7s %7s %7s\n", "Average", avg("r_pos").c_str(),
                avg("p_pos").c_str(), avg("r_neg").c_str(), avg("p_neg").c_str(), avg("p_mild").c_str(),
                avg("r_mild").c_str(), avg("p_strong").c_str(), avg("r_strong").c_str());
  out += buf;
  for (const auto& [k, a] : r.averages)
    if (a.excluded) out += "  " + k + ": " + std::to_string(a.excluded) + " undefined entries excluded\n";
  out += "unparsed predictions: " + std::to_string(r.unparsed) + " of " + std::to_string(r.prediction_rows) + "\n";
  return out;
}

}  // namespace crd
