#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crd/io.hpp"

namespace crd {

inline constexpr std::size_t kPrimaryCategoryCount = 9;
inline constexpr std::size_t kFineDescriptorCount = 30;
inline constexpr std::size_t kAppleDescriptorCount = 12;
inline constexpr std::size_t kSeverityUnsupportedCount = 3;

enum class DefinitionSource { esrb, acb, apple };

std::string_view to_string(DefinitionSource source);
DefinitionSource parse_definition_source(std::string_view text);

struct PrimaryCategory {
  std::string id;
  std::string name;
  bool operator==(const PrimaryCategory&) const = default;
};

struct FineDescriptor {
  std::string id;
  std::string name;
  std::string primary_category;
  std::string definition_ref;
  bool operator==(const FineDescriptor&) const = default;
};

struct AppleDescriptor {
  std::string id;
  std::string name;
  bool severity_supported = true;
  bool operator==(const AppleDescriptor&) const = default;
};

struct DescriptorDefinition {
  std::string descriptor_id;
  DefinitionSource source = DefinitionSource::apple;
  std::string text;
  bool operator==(const DescriptorDefinition&) const = default;
};

/// Unified descriptor hierarchy: 9 primary categories, 30 fine descriptors,
/// Apple's 12 coarse descriptors and the definition corpus.
///
/// Instances are only produced by `Taxonomy::from_json` / `load_taxonomy`,
/// which enforce every cardinality and reference invariant, and are
/// immutable afterwards.
class Taxonomy {
 public:
  static Taxonomy from_json(const json& doc);

  const std::vector<PrimaryCategory>& categories() const { return categories_; }
  const std::vector<FineDescriptor>& fine_descriptors() const { return fine_; }
  const std::vector<AppleDescriptor>& apple_descriptors() const { return apple_; }
  const std::map<std::string, std::vector<std::string>>& apple_to_fine() const {
    return apple_to_fine_;
  }
  const std::vector<DescriptorDefinition>& definitions() const { return definitions_; }

  // Lookup by id; Apple descriptors also resolve by display name
  // (case-insensitive), since app metadata references them by name.
  const AppleDescriptor& apple(std::string_view id_or_name) const;
  const AppleDescriptor* find_apple(std::string_view id_or_name) const;
  const FineDescriptor& fine(std::string_view id) const;
  const FineDescriptor* find_fine(std::string_view id) const;
  std::vector<const FineDescriptor*> children_of(std::string_view category_id) const;

  bool operator==(const Taxonomy&) const = default;

 private:
  std::vector<PrimaryCategory> categories_;
  std::vector<FineDescriptor> fine_;
  std::vector<AppleDescriptor> apple_;
  std::map<std::string, std::vector<std::string>> apple_to_fine_;
  std::vector<DescriptorDefinition> definitions_;
};

Taxonomy load_taxonomy(const std::filesystem::path& path);

std::vector<FineDescriptor> expand_apple(const Taxonomy& taxonomy, std::string_view apple_id);

// Absent when the fine descriptor has no Apple counterpart.
std::optional<AppleDescriptor> parent_apple(const Taxonomy& taxonomy, std::string_view fine_id);

// Entry from `preferred` when present, otherwise the first of ESRB, ACB,
// Apple that exists.
DescriptorDefinition definition_of(const Taxonomy& taxonomy, std::string_view descriptor_id,
                                   DefinitionSource preferred);

}  // namespace crd
