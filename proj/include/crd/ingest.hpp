#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crd/errors.hpp"
#include "crd/io.hpp"
#include "crd/taxonomy.hpp"

namespace crd {

enum class Severity { none, mild, strong };

std::string_view to_string(Severity severity);
Severity parse_severity(std::string_view text);

// Apple's pre-iOS26 age classes, ordered.
enum class RatingClass { r4 = 0, r9 = 1, r12 = 2, r17 = 3 };

std::string_view to_string(RatingClass rating);
RatingClass parse_rating(std::string_view text);
inline constexpr std::array<RatingClass, 4> kAllRatings{RatingClass::r4, RatingClass::r9, RatingClass::r12,
                                                         RatingClass::r17};

const std::array<std::string_view, 26>& app_store_genres();

struct DeclaredDescriptor {
  std::string descriptor;  // Apple descriptor id
  Severity severity = Severity::none;
  bool operator==(const DeclaredDescriptor&) const = default;
};

struct AppRecord {
  std::string app_id;
  std::string name;
  std::string genre;
  std::string description_short;
  std::string description_long;
  std::vector<std::string> screenshot_refs;
  std::string icon_ref;
  RatingClass declared_rating = RatingClass::r4;
  std::vector<DeclaredDescriptor> declared_descriptors;
  std::uint64_t rating_count = 0;
  double avg_stars = 0.0;
  std::uint64_t popularity_rank = 1;

  const DeclaredDescriptor* declared(std::string_view descriptor_id) const;
  std::string description() const;
  bool operator==(const AppRecord&) const = default;
};

// Unknown extra fields are ignored. Descriptor names resolve through the
// taxonomy (display name or id) and are stored as Apple ids.
AppRecord parse_app_record(const json& record, const Taxonomy& taxonomy);
AppRecord parse_app_record(std::string_view line, const Taxonomy& taxonomy);
json to_json(const AppRecord& app, const Taxonomy& taxonomy);

// Parses every line and rejects duplicate app ids.
std::vector<AppRecord> load_corpus(const std::filesystem::path& path, const Taxonomy& taxonomy);

enum class Criterion { rating_count, avg_stars, popularity_rank };
std::string_view to_string(Criterion criterion);

struct SelectedApp {
  std::string app_id;
  std::vector<Criterion> criteria;  // which rankings put the app in the top-k
  bool operator==(const SelectedApp&) const = default;
};

struct CorpusCell {
  RatingClass rating;
  std::string genre;
  std::vector<SelectedApp> apps;  // ascending app_id
  bool operator==(const CorpusCell&) const = default;
};

struct CorpusSelection {
  std::vector<CorpusCell> cells;  // (rating, genre) order
  std::set<std::string> app_ids() const;
};

/// Per (rating class x genre) cell, the union of the top `k_per_criterion`
/// apps under three independent rankings: descending rating_count,
/// descending avg_stars, ascending popularity_rank. Ties break by ascending
/// app_id, which makes the result independent of input order.
///
/// Empty `rating_classes` / `genres` select every value present in `records`.
CorpusSelection curate_corpus(std::span<const AppRecord> records, std::size_t k_per_criterion,
                              std::span<const RatingClass> rating_classes, std::span<const std::string> genres);

struct GenerationTask {
  std::string app_id;
  std::string app_name;
  std::string description;
  std::string screenshot_ref;
  std::size_t screenshot_index = 0;
  std::string target_descriptor;  // Apple descriptor id
  std::string descriptor_name;
  bool severity_supported = true;
  bool expected_present = false;
  Severity expected_severity = Severity::none;
  std::string definition;  // Apple definition plus mapped fine-descriptor definitions
  bool operator==(const GenerationTask&) const = default;
};

json to_json(const GenerationTask& task);
GenerationTask task_from_json(const json& j);

std::string definition_bundle(const Taxonomy& taxonomy, std::string_view apple_id);

/// For every screenshot: one positive task per declared descriptor plus
/// ceil(negative_ratio * positives) negatives drawn without replacement from
/// the undeclared descriptors; an app with no declared descriptors gets one
/// negative per screenshot. Tasks are ordered by (screenshot index,
/// descriptor id). `max_screenshots` of 0 means all screenshots.
std::vector<GenerationTask> enumerate_tasks(const AppRecord& app, const Taxonomy& taxonomy, double negative_ratio,
                                            std::uint64_t seed, std::size_t max_screenshots = 0);

}  // namespace crd
