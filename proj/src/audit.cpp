#include "crd/audit.hpp"

#include <algorithm>
#include <cstdio>

namespace crd {

std::vector<PolicyRule> policy_rules_from_json(const json& j, const Taxonomy& taxonomy) {
  const json& list = j.is_object() ? j.at("rules") : j;
  std::vector<PolicyRule> rules;
  std::set<std::string> ids;
  for (const auto& r : list) {
    PolicyRule rule;
    rule.rule_id = r.at("rule_id").get<std::string>();
    if (!ids.insert(rule.rule_id).second) throw ValidationError("duplicate rule_id " + rule.rule_id);
    for (const auto& d : r.value("descriptors", json::array()))
      rule.descriptors.insert(taxonomy.apple(d.get<std::string>()).id);
    rule.min_severity = parse_severity(r.value("min_severity", std::string("none")));
    rule.minimum_rating = parse_rating(r.at("minimum_rating").get<std::string>());
    rule.description = r.value("description", std::string());
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::vector<PolicyRule> load_policy_rules(const std::filesystem::path& path, const Taxonomy& taxonomy) {
  return policy_rules_from_json(read_json_file(path), taxonomy);
}

std::vector<NonDisclosure> non_disclosed(const AppPredictions& predictions, const AppRecord& app) {
  std::vector<NonDisclosure> out;
  for (const auto& [descriptor, j] : predictions)
    if (j.present && !app.declared(descriptor)) out.push_back({app.app_id, descriptor, j.severity, app.declared_rating});
  return out;
}

std::vector<Violation> policy_violations(const AppRecord& app, const AppPredictions& predictions,
                                         std::span<const PolicyRule> rules, const Taxonomy& taxonomy) {
  std::vector<Violation> out;
  for (const auto& rule : rules) {
    if (app.declared_rating >= rule.minimum_rating) continue;
    std::vector<std::string> matched;
    for (const auto& [descriptor, j] : predictions) {
      if (!j.present) continue;
      if (!rule.descriptors.empty() && !rule.descriptors.count(descriptor)) continue;
      const bool graded = taxonomy.apple(descriptor).severity_supported;
      if (graded && j.severity < rule.min_severity) continue;
      matched.push_back(descriptor);
    }
    if (!matched.empty())
      out.push_back({app.app_id, rule.rule_id, app.declared_rating, rule.minimum_rating, std::move(matched)});
  }
  return out;
}

AuditReport audit_report(std::span<const AppRecord> apps, const PredictionMatrix& predictions,
                         std::span<const PolicyRule> rules, const Taxonomy& taxonomy) {
  std::vector<std::string> missing;
  for (const auto& app : apps) {
    const auto row = predictions.find(app.app_id);
    for (const auto& d : taxonomy.apple_descriptors())
      if (row == predictions.end() || !row->second.count(d.id)) missing.push_back(app.app_id + "/" + d.id);
  }
  if (!missing.empty()) {
    std::string msg = "incomplete prediction coverage (" + std::to_string(missing.size()) + " cells):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw ValidationError(msg);
  }

  std::vector<const AppRecord*> ordered;
  for (const auto& a : apps) ordered.push_back(&a);
  std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->app_id < b->app_id; });

  AuditReport r;
  r.apps_evaluated = apps.size();
  for (RatingClass rc : kAllRatings)
    for (const auto& d : taxonomy.apple_descriptors()) r.counts[rc][d.id] = 0;
  for (const AppRecord* app : ordered) {
    AppPredictions row;
    for (const auto& [d, j] : predictions.at(app->app_id))
      if (taxonomy.find_apple(d)) row.emplace(d, j);
    auto nd = non_disclosed(row, *app);
    if (!nd.empty()) {
      ++r.apps_flagged;
      r.flagged_apps.push_back(app->app_id);
    }
    for (const auto& n : nd) ++r.counts[app->declared_rating][n.descriptor];
    r.non_disclosures.insert(r.non_disclosures.end(), nd.begin(), nd.end());
    auto v = policy_violations(*app, row, rules, taxonomy);
    if (!v.empty()) ++r.apps_with_violations;
    r.violations.insert(r.violations.end(), v.begin(), v.end());
  }
  if (r.apps_evaluated) {
    r.flagged_rate = static_cast<double>(r.apps_flagged) / static_cast<double>(r.apps_evaluated);
    r.violation_rate = static_cast<double>(r.apps_with_violations) / static_cast<double>(r.apps_evaluated);
  }
  return r;
}

json to_json(const AuditReport& r, const Taxonomy& taxonomy) {
  json counts = json::object();
  for (const auto& [rc, row] : r.counts) {
    json jr = json::object();
    for (const auto& [d, n] : row) jr[d] = n;
    counts[std::string(to_string(rc))] = std::move(jr);
  }
  json nd = json::array();
  for (const auto& n : r.non_disclosures)
    nd.push_back({{"app_id", n.app_id}, {"descriptor", n.descriptor},
                  {"descriptor_name", taxonomy.apple(n.descriptor).name},
                  {"predicted_severity", to_string(n.predicted_severity)},
                  {"declared_rating", to_string(n.declared_rating)}});
  json violations = json::array();
  for (const auto& v : r.violations)
    violations.push_back({{"app_id", v.app_id}, {"rule_id", v.rule_id}, {"declared_rating", to_string(v.declared_rating)},
                          {"minimum_rating", to_string(v.minimum_rating)}, {"descriptors", v.descriptors}});
  return {{"apps_evaluated", r.apps_evaluated},
          {"counts", std::move(counts)},
          {"apps_flagged", r.apps_flagged},
          {"flagged_rate", r.flagged_rate},
          {"flagged_apps", r.flagged_apps},
          {"apps_with_violations", r.apps_with_violations},
          {"violation_rate", r.violation_rate},
          {"non_disclosures", std::move(nd)},
          {"violations", std::move(violations)}};
}

std::string render_audit_report(const AuditReport& r, const Taxonomy& taxonomy) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-44s %5s %5s %5s %5s\n", "non-disclosed descriptor", "4+", "9+", "12+", "17+");
  out += buf;
  for (const auto& d : taxonomy.apple_descriptors()) {
    std::snprintf(buf, sizeof buf, "%-44.44s %5zu %5zu %5zu %5zu\n", d.name.c_str(), r.counts.at(RatingClass::r4).at(d.id),
                  r.counts.at(RatingClass::r9).at(d.id), r.counts.at(RatingClass::r12).at(d.id),
                  r.counts.at(RatingClass::r17).at(d.id));
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "apps with non-disclosed descriptors: %zu of %zu (%.3f%%)\n", r.apps_flagged,
                r.apps_evaluated, r.flagged_rate * 100.0);
  out += buf;
  std::snprintf(buf, sizeof buf, "apps with rating-policy violations: %zu of %zu (%.3f%%)\n", r.apps_with_violations,
                r.apps_evaluated, r.violation_rate * 100.0);
  out += buf;
  for (const auto& v : r.violations) {
    out += "  " + v.app_id + " [" + v.rule_id + "] declared " + std::string(to_string(v.declared_rating)) + ", requires " +
           std::string(to_string(v.minimum_rating)) + ":";
    for (const auto& d : v.descriptors) out += " " + d;
    out += "\n";
  }
  return out;
}

}  // namespace crd
