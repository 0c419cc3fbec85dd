#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "crd/evalharness.hpp"
#include "crd/ingest.hpp"
#include "crd/taxonomy.hpp"

namespace crd {

struct NonDisclosure {
  std::string app_id;
  std::string descriptor;
  Severity predicted_severity = Severity::none;
  RatingClass declared_rating = RatingClass::r4;
  bool operator==(const NonDisclosure&) const = default;
};

// Matches when any listed descriptor (any descriptor when the list is empty)
// is predicted present at or above `min_severity`. Severity thresholds apply
// only to descriptors that carry severity; for the others presence suffices.
struct PolicyRule {
  std::string rule_id;
  std::set<std::string> descriptors;
  Severity min_severity = Severity::none;
  RatingClass minimum_rating = RatingClass::r9;
  std::string description;
};

std::vector<PolicyRule> policy_rules_from_json(const json& j, const Taxonomy& taxonomy);
std::vector<PolicyRule> load_policy_rules(const std::filesystem::path& path, const Taxonomy& taxonomy);

struct Violation {
  std::string app_id;
  std::string rule_id;
  RatingClass declared_rating = RatingClass::r4;
  RatingClass minimum_rating = RatingClass::r9;
  std::vector<std::string> descriptors;  // predicted descriptors that matched
  bool operator==(const Violation&) const = default;
};

// descriptor id -> app-level judgement.
using AppPredictions = std::map<std::string, Judgement>;

// Predicted present and not declared; ordered by descriptor id.
std::vector<NonDisclosure> non_disclosed(const AppPredictions& predictions, const AppRecord& app);

std::vector<Violation> policy_violations(const AppRecord& app, const AppPredictions& predictions,
                                         std::span<const PolicyRule> rules, const Taxonomy& taxonomy);

struct AuditReport {
  std::size_t apps_evaluated = 0;
  // rating class -> descriptor -> apps with that non-disclosed descriptor
  std::map<RatingClass, std::map<std::string, std::size_t>> counts;
  std::size_t apps_flagged = 0;  // apps with at least one non-disclosure
  double flagged_rate = 0.0;
  std::size_t apps_with_violations = 0;
  double violation_rate = 0.0;
  std::vector<NonDisclosure> non_disclosures;  // app order, then descriptor
  std::vector<Violation> violations;
  std::vector<std::string> flagged_apps;
};

// Requires a prediction for all 12 descriptors of every app; otherwise
// throws ValidationError naming the missing cells.
AuditReport audit_report(std::span<const AppRecord> apps, const PredictionMatrix& predictions,
                         std::span<const PolicyRule> rules, const Taxonomy& taxonomy);

json to_json(const AuditReport& report, const Taxonomy& taxonomy);
std::string render_audit_report(const AuditReport& report, const Taxonomy& taxonomy);

}  // namespace crd
